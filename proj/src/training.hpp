#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "lstm_model.hpp"
#include "patient_matrix.hpp"

namespace romx {

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 128;
    int patience = 15;          // epochs without val-BCE improvement before an LR cut
    double lr_factor = 5.0;     // divide LR by this on each cut
    int max_lr_reductions = 2;  // training terminates when this many cuts happened
    int max_epochs = 100;
    double rmsprop_decay = 0.9;
    double rmsprop_epsilon = 1e-8;

    static TrainConfig paper();  // the full-scale schedule (also the defaults above)
    // Desk-scale profile: at a few hundred RMSProp updates the full-scale
    // learning rate cannot move the weights anywhere; see README.
    static TrainConfig desk();

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;  // BCE + L2 term
    double val_bce = 0.0;
    double val_auc = 0.0;  // NaN when the split is single-class
    bool improved = false;
};

struct TrainResult {
    ModelParams params;  // best-validation weights
    std::vector<EpochLog> history;
    int best_epoch = -1;
    double best_val_bce = 0.0;
    int lr_reductions = 0;
    std::string stopped_reason;

    nlohmann::json summary_json() const;
};

// Mean over timesteps of per-timestep binary cross-entropy against the
// broadcast encounter label, eval-mode trajectory.
double sequence_bce(const ModelParams& params, const DtPatientMatrix& x);

// RMSProp with the staged LR schedule; keeps the best-validation weights.
TrainResult train(const ModelParams& init, std::span<const DtPatientMatrix> train_set,
                  std::span<const DtPatientMatrix> val_set, const TrainConfig& cfg,
                  uint64_t seed);

}  // namespace romx
