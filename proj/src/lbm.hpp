#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "attribution.hpp"
#include "lstm_model.hpp"
#include "patient_matrix.hpp"

namespace romx {

struct LbmConfig {
    double lambda1_soft = 0.005;   // L1 pull toward an all-ones mask
    double lambda2_soft = 0.0005;  // binarization cross-entropy pressure
    double steepness = 5.0;        // mask = sigmoid(steepness * logits)
    double soft_lr = 0.1;
    double soft_lr_factor = 10.0;
    int soft_lr_patience = 5;
    int max_soft_iterations = 5000;
    int max_soft_lr_reductions = 2;
    double lambda1_thresh = 1e-4;
    double s_min = 0.05;  // converged when every masked prediction is below this
    int max_threshold_sweeps = 3;
    double rmsprop_decay = 0.9;
    double rmsprop_epsilon = 1e-8;

    static LbmConfig defaults();
    // Alternate published constants: heavier binarization pressure, one more
    // LR cut, one fewer sweep.
    static LbmConfig appendix_b();

    void validate() const;
    nlohmann::json to_json() const;
    static LbmConfig from_json(const nlohmann::json& j);  // honors "preset"
};

// Relaxed mask sigma(A*z) over the trainable positions (x != 0). Positions
// where the input is exactly zero are pinned to 1 and never optimized.
struct SoftMask {
    Eigen::MatrixXd logits;
    Eigen::MatrixXd mask;
    std::vector<double> loss_trace;  // objective at every iterate
    int iterations = 0;
    int lr_reductions = 0;
};

struct ThresholdMask {
    Eigen::VectorXd eta;  // one threshold per timestep, applied across features
};

struct BinaryMask {
    Eigen::MatrixXd mask;  // strictly {0,1}; 1 wherever x == 0
    Eigen::VectorXd masked_trajectory;
    bool converged = false;
    int sweeps_run = 0;
    std::vector<double> accepted_objectives;  // strictly decreasing
};

SoftMask optimize_soft_mask(const ModelParams& model, const Eigen::MatrixXd& x,
                            const LbmConfig& cfg);

std::pair<ThresholdMask, BinaryMask> binarize_mask(const ModelParams& model,
                                                   const Eigen::MatrixXd& x, const SoftMask& soft,
                                                   const LbmConfig& cfg);

// Binary attribution matrix 1 - M; zero wherever the input is zero.
AttributionMatrix explain_lbm(const ModelParams& model, const DtPatientMatrix& x,
                              const LbmConfig& cfg, const std::vector<std::string>& feature_order);

}  // namespace romx
