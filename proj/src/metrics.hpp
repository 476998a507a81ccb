#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lstm_model.hpp"
#include "patient_matrix.hpp"

namespace romx {

// Rank-based AUC; tied scores contribute 1/2. Throws when only one class is
// present (undefined metric).
double compute_auc(std::span<const double> scores, std::span<const uint8_t> labels);

struct HourAuc {
    int hour = 0;  // positive: hours since admission; negative: hours before end
    double auc = 0.0;
    int n_encounters = 0;
};

// AUC of the prediction at a fixed hour against the final outcome. Hour h > 0
// scores y at column h-1 (inputs up to hour h-1); h < 0 scores column T+h-1.
// Encounters shorter than 24 hours are excluded.
std::vector<HourAuc> evaluate_at_hours(const ModelParams& params,
                                       std::span<const DtPatientMatrix> dataset,
                                       std::span<const int> hours);

// CSV `hour,auc,n_encounters`
void write_hour_auc_csv(const std::filesystem::path& path, std::span<const HourAuc> rows);

}  // namespace romx
