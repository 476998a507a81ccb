#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "attribution.hpp"
#include "lstm_model.hpp"
#include "patient_matrix.hpp"

namespace romx {

struct KshapConfig {
    int64_t total_budget = -1;  // model evaluations across all timesteps; -1 -> 2NT + 2048
    // enumerate every coalition of a timestep when 2^N fits both the
    // per-timestep budget and this cap; 0 forces sampling
    int64_t enum_cutoff = int64_t{1} << 24;
    uint64_t seed = 0;
    double ridge = 1e-8;  // fallback regularization on rank-deficient systems

    void validate() const;
    nlohmann::json to_json() const;
    static KshapConfig from_json(const nlohmann::json& j);
};

// Shapley kernel (N-1) / (C(N,s) * s * (N-s)); s in {0, N} is a constraint
// row, not a weighted sample, and is rejected here.
double shapley_kernel_weight(int n_features, int coalition_size);

// y_tau with history columns intact and column tau zeroed wherever the
// coalition toggle is 0. Columns after tau never matter.
double masked_forward(const ModelParams& model, const Eigen::MatrixXd& x, int tau,
                      std::span<const uint8_t> coalition);

// Classic permutation-average Shapley values over all 2^N coalition payouts.
Eigen::VectorXd exact_shapley_from_payouts(const std::function<double(uint32_t)>& payout, int n);
Eigen::VectorXd exact_shapley(const ModelParams& model, const Eigen::MatrixXd& x, int tau);

struct ShapTimestepInfo {
    double phi0 = 0.0;
    double residual = 0.0;
    int64_t samples_used = 0;
    bool enumerated = false;
    bool ridge_fallback = false;
};

struct ShapExplanation {
    std::vector<ShapTimestepInfo> per_timestep;
    int64_t budget_used = 0;
};

// Per-timestep Shapley-kernel weighted least squares with the additivity
// identity enforced exactly (phi0 fixed to the empty-coalition value, the
// last feature eliminated through the sum constraint).
AttributionMatrix explain_kshap(const ModelParams& model, const DtPatientMatrix& x,
                                const KshapConfig& cfg,
                                const std::vector<std::string>& feature_order,
                                ShapExplanation* explanation = nullptr);

}  // namespace romx
