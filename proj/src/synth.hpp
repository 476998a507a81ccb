#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "events.hpp"
#include "feature_spec.hpp"

namespace romx {

struct SynthFeature {
    std::string name;
    FeatureKind kind = FeatureKind::physiologic;
    double mu = 0.0;        // raw-space location (physiologic)
    double sigma = 1.0;     // raw-space scale (physiologic)
    double max_dose = 1.0;  // raw-space ceiling (exogenous)
    int cadence_minutes = 60;
};

struct SynthCohortSpec {
    std::string name;
    double fraction = 0.0;      // share of encounters assigned to this cohort
    std::vector<int> drivers;   // cohort-specific driver feature indices
};

struct SynthConfig {
    int n_encounters = 1000;
    std::vector<SynthFeature> features;      // default 24-feature table when empty
    std::vector<int> drivers{0, 1, 2, 3};    // global planted drivers
    std::vector<double> hazard_weights;      // aligned with drivers; default 1.0
    std::vector<SynthCohortSpec> cohorts;    // default two cohorts with extra drivers
    int min_stay_hours = 36;
    int max_stay_hours = 96;
    double mortality_fraction = 0.04;
    double excursion_lo = 2.0;   // z-units, sustained step for non-survivors
    double excursion_hi = 3.0;
    double admission_shift = 0.8;  // initial driver offset for non-survivors
    bool suppress_driver_excursions = false;  // ablation: labels kept, signal removed
    uint64_t seed = 0;

    static SynthConfig defaults();
    void resolve();  // fill feature table / cohorts when empty, then validate
    nlohmann::json to_json() const;
    static SynthConfig from_json(const nlohmann::json& j);
};

struct EncounterTruth {
    std::string encounter_id;
    bool died = false;
    int stay_hours = 0;
    int window_start = -1;  // risk-rise window, non-survivors only
    int window_end = -1;
    std::string cohort;  // "" for the general pool
};

struct GroundTruth {
    std::vector<EncounterTruth> encounters;
    std::vector<int> drivers;
    std::map<std::string, std::vector<int>> cohort_drivers;

    nlohmann::json to_json(const FeatureSpec& spec) const;
    void save(const std::filesystem::path& path, const FeatureSpec& spec) const;
    static GroundTruth load(const std::filesystem::path& path);
};

struct SynthResult {
    std::vector<RawEvent> events;  // ordered by encounter, then time, then feature
    FeatureSpec spec;
    GroundTruth truth;
};

// Deterministic per seed. Non-survivors carry a sustained driver excursion
// over their risk-rise window; everything else is autocorrelated noise.
SynthResult generate_cohort(const SynthConfig& cfg);

struct SplitAssignment {
    std::vector<std::string> train, val, test;

    nlohmann::json to_json() const;
    void save(const std::filesystem::path& path) const;
    static SplitAssignment load(const std::filesystem::path& path);
};

// Label-stratified disjoint partition, largest-remainder allocation.
SplitAssignment split_cohort(const std::vector<std::pair<std::string, bool>>& encounters,
                             double f_train, double f_val, double f_test, uint64_t seed);

}  // namespace romx
