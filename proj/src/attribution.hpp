#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace romx {

// N x T contribution matrix: {0,1} for the mask method, signed reals for the
// Shapley method. `extra` carries method-specific manifest fields (masked
// trajectory, phi0/residual vectors, iteration counts).
struct AttributionMatrix {
    std::string encounter_id;
    std::string method;  // "lbm" | "kshap"
    Eigen::MatrixXd values;
    std::vector<std::string> feature_order;
    bool converged = true;
    nlohmann::json config_echo;
    nlohmann::json extra;
    double wall_clock_seconds = 0.0;

    int n_features() const { return static_cast<int>(values.rows()); }
    int t_hours() const { return static_cast<int>(values.cols()); }
};

// JSON manifest + f64 payload. wall_clock_seconds lives under a "timing"
// sub-object: it is the one field allowed to differ between identical runs.
void save_attribution_archive(const std::filesystem::path& manifest_path,
                              const AttributionMatrix& a);
AttributionMatrix load_attribution_archive(const std::filesystem::path& manifest_path);

}  // namespace romx
