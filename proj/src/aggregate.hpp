#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "attribution.hpp"
#include "feature_spec.hpp"

namespace romx {

// Inclusive 0-based column window [t_i, t_f]; t_i < t_f <= T-1.
struct WindowSpec {
    int t_i = 0;
    int t_f = 0;
};

struct AggregateVector {
    Eigen::VectorXd values;
    std::string provenance;  // window | cohort | raf | population
    std::string method;
    int n_in = 0;   // n(S) where applicable
    int n_out = 0;  // n(S^c) for relative attribution
    bool zero_flagged = false;  // normalization skipped on an all-zero vector

    void save(const std::filesystem::path& path,
              const std::vector<std::string>& feature_order) const;
    static AggregateVector load(const std::filesystem::path& path,
                                std::vector<std::string>* feature_order = nullptr);
};

// Elementwise-|.| mean over the window with the verbatim 1/(t_f - t_i)
// divisor (one less than the number of summands); optional sup-norm scaling.
AggregateVector window_average(const AttributionMatrix& a, WindowSpec w, bool normalize);

// Full-stay temporal mean per encounter, then mean across encounters.
AggregateVector cohort_average(std::span<const AttributionMatrix* const> attrs);

// Difference of unit-L2-normalized cohort averages; elements in [-1, 1].
AggregateVector relative_attribution(std::span<const AttributionMatrix* const> in_cohort,
                                     std::span<const AttributionMatrix* const> out_cohort);

// Cohort average over everyone, sup-norm scaled so the top feature is 1.
AggregateVector population_importance(std::span<const AttributionMatrix* const> attrs);

struct RankedRow {
    int rank = 0;
    std::string feature;
    double value = 0.0;
    std::string kind;
};

// Descending by value, ties broken by feature order index.
std::vector<RankedRow> top_k_report(const AggregateVector& v, int k, const FeatureSpec& spec);

// CSV `rank,feature,value,kind,method`; one block per method.
void write_report_csv(const std::filesystem::path& path,
                      std::span<const std::pair<std::string, std::vector<RankedRow>>> blocks);

// Horizontal bar chart over the union of each method's top-k features.
void write_bar_chart_svg(const std::filesystem::path& path, const std::string& title,
                         std::span<const std::pair<std::string, AggregateVector>> methods,
                         const FeatureSpec& spec, int top_k);

}  // namespace romx
