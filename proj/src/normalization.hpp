#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "events.hpp"
#include "feature_spec.hpp"

namespace romx {

// Per-feature scaling parameters; which pair applies depends on the kind.
struct FeatureStats {
    double mu = 0.0;
    double sigma = 1.0;
    double min = 0.0;
    double max = 1.0;
    bool observed = false;
    bool guarded = false;  // sigma or range was degenerate and substituted
};

struct FitCounters {
    size_t used = 0;
    size_t out_of_bounds = 0;
    size_t unknown_variable = 0;
};

// Index-aligned with the FeatureSpec that produced it.
struct NormalizationStats {
    std::vector<FeatureStats> per_feature;

    nlohmann::json to_json(const FeatureSpec& spec) const;
    static NormalizationStats from_json(const nlohmann::json& j, const FeatureSpec& spec);
    void save(const std::filesystem::path& path, const FeatureSpec& spec) const;
    static NormalizationStats load(const std::filesystem::path& path, const FeatureSpec& spec);
};

// Fits mu/sigma (population std) for physiologic features and min/max for
// exogenous ones from training-split events. Out-of-bounds values are
// discarded before fitting; unseen features keep the declared defaults.
NormalizationStats fit_normalization(std::span<const RawEvent> events, const FeatureSpec& spec,
                                     FitCounters* counters = nullptr);

}  // namespace romx
