#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "events.hpp"
#include "feature_spec.hpp"
#include "normalization.hpp"

namespace romx {

// Hourly N x T state matrix. Physiologic rows are z-scores, exogenous rows
// live in [0, 1]. Column h covers minutes [60h, 60h + 59].
struct PatientMatrix {
    std::string encounter_id;
    Eigen::MatrixXd values;  // N x T
    bool label = false;      // died in ICU
    size_t n_forward_filled = 0;  // build metadata, not serialized

    int n_features() const { return static_cast<int>(values.rows()); }
    int t_hours() const { return static_cast<int>(values.cols()); }
};

// State-change transform of a PatientMatrix: column 0 is the initial state,
// column t (t >= 1) is the hour-over-hour delta. Zero means "no recorded
// change"; this is the model input representation.
struct DtPatientMatrix {
    std::string encounter_id;
    Eigen::MatrixXd values;  // N x T
    bool label = false;

    int n_features() const { return static_cast<int>(values.rows()); }
    int t_hours() const { return static_cast<int>(values.cols()); }
};

struct BuildCounters {
    size_t used = 0;
    size_t out_of_bounds = 0;
    size_t unknown_variable = 0;
};

PatientMatrix build_patient_matrix(std::span<const RawEvent> events,
                                   const NormalizationStats& stats, const FeatureSpec& spec,
                                   bool label, BuildCounters* counters = nullptr);

DtPatientMatrix to_dt_matrix(const PatientMatrix& pm);
PatientMatrix from_dt_matrix(const DtPatientMatrix& dt);

// JSON manifest + row-major f64 payload next to it.
struct MatrixArchive {
    std::string encounter_id;
    std::string kind;  // "patient_matrix" | "dt_patient_matrix"
    std::vector<std::string> feature_order;
    bool label = false;
    Eigen::MatrixXd values;
};

void save_matrix_archive(const std::filesystem::path& manifest_path, const MatrixArchive& a);
MatrixArchive load_matrix_archive(const std::filesystem::path& manifest_path);

}  // namespace romx
