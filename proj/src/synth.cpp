#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "common.hpp"
#include "rng.hpp"

namespace romx {

namespace {

std::vector<SynthFeature> default_features() {
    auto physio = [](const char* name, double mu, double sigma, int cadence) {
        return SynthFeature{name, FeatureKind::physiologic, mu, sigma, 0.0, cadence};
    };
    auto exo = [](const char* name, double max_dose) {
        return SynthFeature{name, FeatureKind::exogenous, 0.0, 1.0, max_dose, 60};
    };
    return {
        physio("Heart Rate", 120, 25, 60),
        physio("Respiratory Rate", 28, 8, 60),
        physio("Mean Arterial Pressure", 65, 12, 60),
        physio("Pulse Oximetry", 97, 3, 60),
        physio("Systolic Blood Pressure", 100, 15, 60),
        physio("Diastolic Blood Pressure", 60, 10, 60),
        physio("Temperature", 37, 0.7, 120),
        physio("Glascow Coma Score", 12, 3, 240),
        physio("Lactate", 1.5, 1.0, 480),
        physio("Hemoglobin", 11, 2, 720),
        physio("Platelet Count", 250, 80, 720),
        physio("White Blood Cell Count", 9, 4, 720),
        physio("Creatinine", 0.6, 0.3, 720),
        physio("Bicarbonate Serum", 22, 4, 480),
        physio("Glucose", 110, 30, 480),
        physio("Potassium", 4.0, 0.6, 720),
        exo("Epinephrine cont", 1.0),
        exo("Vancomycin inter", 60.0),
        physio("Intracranial Pressure", 12, 5, 240),
        exo("Ventriculostomy Site", 1.0),
        exo("Dopamine cont", 10.0),
        exo("Furosemide inter", 40.0),
        physio("EtCO2", 38, 6, 240),
        exo("O2 Flow Rate", 15.0),
    };
}

constexpr double kLatentBias = -4.0;

double smoothstep(double u) {
    u = std::clamp(u, 0.0, 1.0);
    return u * u * (3.0 - 2.0 * u);
}

}  // namespace

SynthConfig SynthConfig::defaults() {
    SynthConfig cfg;
    cfg.resolve();
    return cfg;
}

void SynthConfig::resolve() {
    if (features.empty()) features = default_features();
    if (cohorts.empty()) {
        cohorts = {{"cohort_a", 0.25, {16, 17}}, {"cohort_b", 0.25, {18, 19}}};
    }
    if (hazard_weights.empty()) hazard_weights.assign(drivers.size(), 1.0);

    const int n = static_cast<int>(features.size());
    if (n_encounters < 1) throw Error("synth config: n_encounters must be >= 1");
    if (drivers.empty()) throw Error("synth config: driver set must be non-empty");
    if (hazard_weights.size() != drivers.size())
        throw Error("synth config: hazard_weights must align with drivers");
    std::set<int> seen;
    auto check_index = [&](int j) {
        if (j < 0 || j >= n) throw Error("synth config: driver index out of range");
    };
    for (int j : drivers) {
        check_index(j);
        if (!seen.insert(j).second) throw Error("synth config: duplicate driver index");
    }
    double frac_sum = 0.0;
    for (const auto& c : cohorts) {
        if (c.fraction < 0 || c.fraction > 1) throw Error("synth config: bad cohort fraction");
        frac_sum += c.fraction;
        for (int j : c.drivers) check_index(j);
    }
    if (frac_sum > 1.0 + 1e-9) throw Error("synth config: cohort fractions exceed 1");
    if (mortality_fraction <= 0.0 || mortality_fraction >= 1.0)
        throw Error("synth config: mortality fraction must lie in (0,1)");
    if (min_stay_hours < 24)
        throw Error("synth config: stays must be >= 24h for evaluation eligibility");
    if (max_stay_hours < min_stay_hours) throw Error("synth config: bad stay bounds");
    long died = std::lround(mortality_fraction * n_encounters);
    if (died < 1 || died >= n_encounters)
        throw Error("synth config: mortality fraction unreachable at this cohort size");
}

nlohmann::json SynthConfig::to_json() const {
    nlohmann::json feats = nlohmann::json::array();
    for (const auto& f : features)
        feats.push_back({{"name", f.name},
                         {"kind", to_string(f.kind)},
                         {"mu", f.mu},
                         {"sigma", f.sigma},
                         {"max_dose", f.max_dose},
                         {"cadence_minutes", f.cadence_minutes}});
    nlohmann::json cs = nlohmann::json::array();
    for (const auto& c : cohorts)
        cs.push_back({{"name", c.name}, {"fraction", c.fraction}, {"drivers", c.drivers}});
    return {{"n_encounters", n_encounters},
            {"features", feats},
            {"drivers", drivers},
            {"hazard_weights", hazard_weights},
            {"cohorts", cs},
            {"min_stay_hours", min_stay_hours},
            {"max_stay_hours", max_stay_hours},
            {"mortality_fraction", mortality_fraction},
            {"excursion_lo", excursion_lo},
            {"excursion_hi", excursion_hi},
            {"admission_shift", admission_shift},
            {"suppress_driver_excursions", suppress_driver_excursions},
            {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
    SynthConfig cfg;
    cfg.n_encounters = j.value("n_encounters", cfg.n_encounters);
    if (j.contains("features")) {
        for (const auto& e : j.at("features")) {
            SynthFeature f;
            f.name = e.at("name").get<std::string>();
            f.kind = feature_kind_from_string(e.at("kind").get<std::string>());
            f.mu = e.value("mu", 0.0);
            f.sigma = e.value("sigma", 1.0);
            f.max_dose = e.value("max_dose", 1.0);
            f.cadence_minutes = e.value("cadence_minutes", 60);
            cfg.features.push_back(std::move(f));
        }
    }
    if (j.contains("drivers")) cfg.drivers = j.at("drivers").get<std::vector<int>>();
    if (j.contains("hazard_weights"))
        cfg.hazard_weights = j.at("hazard_weights").get<std::vector<double>>();
    if (j.contains("cohorts")) {
        for (const auto& e : j.at("cohorts")) {
            SynthCohortSpec c;
            c.name = e.at("name").get<std::string>();
            c.fraction = e.at("fraction").get<double>();
            c.drivers = e.value("drivers", std::vector<int>{});
            cfg.cohorts.push_back(std::move(c));
        }
    }
    cfg.min_stay_hours = j.value("min_stay_hours", cfg.min_stay_hours);
    cfg.max_stay_hours = j.value("max_stay_hours", cfg.max_stay_hours);
    cfg.mortality_fraction = j.value("mortality_fraction", cfg.mortality_fraction);
    cfg.excursion_lo = j.value("excursion_lo", cfg.excursion_lo);
    cfg.excursion_hi = j.value("excursion_hi", cfg.excursion_hi);
    cfg.admission_shift = j.value("admission_shift", cfg.admission_shift);
    cfg.suppress_driver_excursions =
        j.value("suppress_driver_excursions", cfg.suppress_driver_excursions);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.resolve();
    return cfg;
}

SynthResult generate_cohort(const SynthConfig& raw_cfg) {
    SynthConfig cfg = raw_cfg;
    cfg.resolve();
    const int n_feat = static_cast<int>(cfg.features.size());
    const int n_enc = cfg.n_encounters;

    // feature spec with generous plausibility bounds
    std::vector<FeatureDesc> descs;
    for (const auto& f : cfg.features) {
        FeatureDesc d;
        d.name = f.name;
        d.kind = f.kind;
        if (f.kind == FeatureKind::physiologic) {
            d.lo = f.mu - 8.0 * f.sigma;
            d.hi = f.mu + 8.0 * f.sigma;
        } else {
            d.lo = 0.0;
            d.hi = f.max_dose;
        }
        descs.push_back(std::move(d));
    }
    FeatureSpec spec(std::move(descs));

    int id_width = std::max<int>(4, static_cast<int>(std::to_string(n_enc).size()));
    auto make_id = [&](int i) {
        std::string num = std::to_string(i + 1);
        return "E" + std::string(static_cast<size_t>(id_width) - num.size(), '0') + num;
    };

    // cohort and label assignment from a master stream, independent of
    // per-encounter generation order
    Rng master(derive_seed(cfg.seed, "synth-master"));
    std::vector<std::string> cohort_of(static_cast<size_t>(n_enc));
    {
        std::vector<int> idx(static_cast<size_t>(n_enc));
        for (int i = 0; i < n_enc; ++i) idx[static_cast<size_t>(i)] = i;
        master.shuffle(idx);
        size_t pos = 0;
        for (const auto& c : cfg.cohorts) {
            auto take = static_cast<size_t>(std::lround(c.fraction * n_enc));
            for (size_t k = 0; k < take && pos < idx.size(); ++k, ++pos)
                cohort_of[static_cast<size_t>(idx[pos])] = c.name;
        }
    }
    std::vector<bool> died(static_cast<size_t>(n_enc), false);
    {
        std::vector<int> idx(static_cast<size_t>(n_enc));
        for (int i = 0; i < n_enc; ++i) idx[static_cast<size_t>(i)] = i;
        master.shuffle(idx);
        auto n_died = static_cast<size_t>(std::lround(cfg.mortality_fraction * n_enc));
        for (size_t k = 0; k < n_died; ++k) died[static_cast<size_t>(idx[k])] = true;
    }

    std::map<std::string, std::vector<int>> cohort_drivers;
    for (const auto& c : cfg.cohorts) cohort_drivers[c.name] = c.drivers;

    SynthResult result{std::vector<RawEvent>{}, std::move(spec), GroundTruth{}};
    result.truth.drivers = cfg.drivers;
    result.truth.cohort_drivers = cohort_drivers;

    for (int enc = 0; enc < n_enc; ++enc) {
        std::string id = make_id(enc);
        Rng rng(derive_seed(cfg.seed, "synth-enc:" + id));
        const std::string& cohort = cohort_of[static_cast<size_t>(enc)];
        const bool is_dead = died[static_cast<size_t>(enc)];

        EncounterTruth truth;
        truth.encounter_id = id;
        truth.died = is_dead;
        truth.cohort = cohort;
        int stay = static_cast<int>(rng.uniform_int(cfg.min_stay_hours, cfg.max_stay_hours));
        truth.stay_hours = stay;

        // active drivers: global set plus this encounter's cohort extras
        std::vector<int> active = cfg.drivers;
        std::vector<double> weights = cfg.hazard_weights;
        if (auto it = cohort_drivers.find(cohort); it != cohort_drivers.end()) {
            for (int j : it->second) {
                active.push_back(j);
                weights.push_back(1.0);
            }
        }

        int w_start = -1, w_end = -1;
        if (is_dead) {
            int gap = static_cast<int>(rng.uniform_int(2, 5));
            int width = static_cast<int>(rng.uniform_int(10, 16));
            w_end = stay - 1 - gap;
            w_start = std::max(1, w_end - width + 1);
            truth.window_start = w_start;
            truth.window_end = w_end;
        }

        // latent z-trajectories per feature
        std::vector<std::vector<double>> z(static_cast<size_t>(n_feat),
                                           std::vector<double>(static_cast<size_t>(stay), 0.0));
        std::vector<double> excursion_mag(static_cast<size_t>(n_feat), 0.0);
        std::vector<double> excursion_sign(static_cast<size_t>(n_feat), 1.0);
        for (int j : active) {
            excursion_mag[static_cast<size_t>(j)] =
                rng.uniform(cfg.excursion_lo, cfg.excursion_hi);
            excursion_sign[static_cast<size_t>(j)] = rng.bernoulli(0.5) ? 1.0 : -1.0;
        }

        auto is_active = [&](int j) {
            return std::find(active.begin(), active.end(), j) != active.end();
        };
        auto is_global_driver = [&](int j) {
            return std::find(cfg.drivers.begin(), cfg.drivers.end(), j) != cfg.drivers.end();
        };
        auto is_cohort_driver = [&](int j) {
            for (const auto& [name, ds] : cohort_drivers)
                for (int d : ds)
                    if (d == j) return true;
            return false;
        };

        for (int j = 0; j < n_feat; ++j) {
            double baseline = rng.normal() * 0.4;
            if (is_dead && !cfg.suppress_driver_excursions && is_global_driver(j))
                baseline += cfg.admission_shift * excursion_sign[static_cast<size_t>(j)];
            double ar = 0.0;
            for (int h = 0; h < stay; ++h) {
                ar = 0.9 * ar + 0.3 * rng.normal();
                double e = 0.0;
                if (is_dead && !cfg.suppress_driver_excursions && is_active(j) && h >= w_start) {
                    double u = w_end > w_start
                                   ? static_cast<double>(h - w_start) / (w_end - w_start)
                                   : 1.0;
                    e = excursion_sign[static_cast<size_t>(j)] *
                        excursion_mag[static_cast<size_t>(j)] * smoothstep(u);
                }
                z[static_cast<size_t>(j)][static_cast<size_t>(h)] = baseline + ar + e;
            }
        }

        // emit events
        std::vector<RawEvent> enc_events;
        for (int j = 0; j < n_feat; ++j) {
            const auto& f = cfg.features[static_cast<size_t>(j)];
            // features tied to a named cohort only appear inside that cohort
            if (!is_global_driver(j) && is_cohort_driver(j) && !is_active(j)) continue;
            if (f.kind == FeatureKind::physiologic) {
                int64_t minute = rng.uniform_int(0, std::min(30, f.cadence_minutes));
                while (minute < static_cast<int64_t>(stay) * 60) {
                    int h = static_cast<int>(minute / 60);
                    double value =
                        f.mu + f.sigma * z[static_cast<size_t>(j)][static_cast<size_t>(h)];
                    value = std::clamp(value, f.mu - 8.0 * f.sigma, f.mu + 8.0 * f.sigma);
                    enc_events.push_back({id, minute, f.name, value});
                    minute += f.cadence_minutes +
                              rng.uniform_int(-f.cadence_minutes / 4, f.cadence_minutes / 4);
                }
            } else {
                // dose schedule: hourly levels, event on every change
                std::vector<double> dose(static_cast<size_t>(stay), 0.0);
                bool excursing = is_dead && !cfg.suppress_driver_excursions && is_active(j);
                if (excursing) {
                    for (int h = w_start; h < stay; ++h) {
                        double u = w_end > w_start
                                       ? static_cast<double>(h - w_start) / (w_end - w_start)
                                       : 1.0;
                        dose[static_cast<size_t>(h)] =
                            f.max_dose * (0.2 + 0.8 * smoothstep(u));
                    }
                } else if (is_active(j) || rng.bernoulli(0.25)) {
                    // benign episode: moderate dose for a bounded interval
                    if (rng.bernoulli(is_active(j) ? 0.6 : 0.5)) {
                        int start = static_cast<int>(rng.uniform_int(0, stay - 8));
                        int len = static_cast<int>(rng.uniform_int(4, 12));
                        double level = f.max_dose * rng.uniform(0.1, 0.35);
                        for (int h = start; h < std::min(stay, start + len); ++h)
                            dose[static_cast<size_t>(h)] = level;
                    }
                }
                double prev = 0.0;
                for (int h = 0; h < stay; ++h) {
                    double d = dose[static_cast<size_t>(h)];
                    // quantize so repeated hours forward-fill to zeros in dt
                    d = std::round(d * 100.0) / 100.0;
                    if (d != prev) {
                        enc_events.push_back(
                            {id, static_cast<int64_t>(h) * 60 + rng.uniform_int(0, 20), f.name,
                             d});
                        prev = d;
                    }
                }
            }
        }
        // pin the grid length with a final-hour vital
        {
            const auto& f0 = cfg.features[0];
            int64_t minute = static_cast<int64_t>(stay - 1) * 60 + 45;
            double value =
                f0.mu + f0.sigma * z[0][static_cast<size_t>(stay - 1)];
            value = std::clamp(value, f0.mu - 8.0 * f0.sigma, f0.mu + 8.0 * f0.sigma);
            enc_events.push_back({id, minute, f0.name, value});
        }

        std::stable_sort(enc_events.begin(), enc_events.end(),
                         [&](const RawEvent& a, const RawEvent& b) {
                             if (a.timestamp_minutes != b.timestamp_minutes)
                                 return a.timestamp_minutes < b.timestamp_minutes;
                             return *result.spec.index_of(a.variable) <
                                    *result.spec.index_of(b.variable);
                         });
        result.events.insert(result.events.end(), enc_events.begin(), enc_events.end());
        result.truth.encounters.push_back(std::move(truth));
    }
    return result;
}

nlohmann::json GroundTruth::to_json(const FeatureSpec& spec) const {
    nlohmann::json labels = nlohmann::json::object();
    nlohmann::json windows = nlohmann::json::object();
    nlohmann::json cohorts = nlohmann::json::object();
    nlohmann::json stays = nlohmann::json::object();
    for (const auto& e : encounters) {
        labels[e.encounter_id] = e.died;
        stays[e.encounter_id] = e.stay_hours;
        if (e.died) windows[e.encounter_id] = {e.window_start, e.window_end};
        if (!e.cohort.empty()) {
            if (!cohorts.contains(e.cohort)) cohorts[e.cohort] = nlohmann::json::array();
            cohorts[e.cohort].push_back(e.encounter_id);
        }
    }
    std::vector<std::string> driver_names;
    for (int j : drivers) driver_names.push_back(spec.at(j).name);
    nlohmann::json cd = nlohmann::json::object();
    nlohmann::json cdn = nlohmann::json::object();
    for (const auto& [name, ds] : cohort_drivers) {
        cd[name] = ds;
        std::vector<std::string> names;
        for (int j : ds) names.push_back(spec.at(j).name);
        cdn[name] = names;
    }
    return {{"labels", labels},
            {"stay_hours", stays},
            {"windows", windows},
            {"drivers", drivers},
            {"driver_names", driver_names},
            {"cohort_drivers", cd},
            {"cohort_driver_names", cdn},
            {"cohorts", cohorts}};
}

void GroundTruth::save(const std::filesystem::path& path, const FeatureSpec& spec) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write ground truth: " + path.string());
    out << to_json(spec).dump(2) << '\n';
}

GroundTruth GroundTruth::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read ground truth: " + path.string());
    nlohmann::json j;
    in >> j;
    GroundTruth t;
    t.drivers = j.value("drivers", std::vector<int>{});
    if (j.contains("cohort_drivers"))
        for (auto it = j.at("cohort_drivers").begin(); it != j.at("cohort_drivers").end(); ++it)
            t.cohort_drivers[it.key()] = it.value().get<std::vector<int>>();
    std::map<std::string, std::string> cohort_of;
    if (j.contains("cohorts"))
        for (auto it = j.at("cohorts").begin(); it != j.at("cohorts").end(); ++it)
            for (const auto& id : it.value()) cohort_of[id.get<std::string>()] = it.key();
    for (auto it = j.at("labels").begin(); it != j.at("labels").end(); ++it) {
        EncounterTruth e;
        e.encounter_id = it.key();
        e.died = it.value().get<bool>();
        if (j.contains("stay_hours") && j.at("stay_hours").contains(e.encounter_id))
            e.stay_hours = j.at("stay_hours").at(e.encounter_id).get<int>();
        if (j.contains("windows") && j.at("windows").contains(e.encounter_id)) {
            e.window_start = j.at("windows").at(e.encounter_id).at(0).get<int>();
            e.window_end = j.at("windows").at(e.encounter_id).at(1).get<int>();
        }
        if (auto c = cohort_of.find(e.encounter_id); c != cohort_of.end()) e.cohort = c->second;
        t.encounters.push_back(std::move(e));
    }
    return t;
}

nlohmann::json SplitAssignment::to_json() const {
    return {{"train", train}, {"val", val}, {"test", test}};
}

void SplitAssignment::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write splits: " + path.string());
    out << to_json().dump(2) << '\n';
}

SplitAssignment SplitAssignment::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read splits: " + path.string());
    nlohmann::json j;
    in >> j;
    SplitAssignment s;
    s.train = j.at("train").get<std::vector<std::string>>();
    s.val = j.at("val").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
    return s;
}

SplitAssignment split_cohort(const std::vector<std::pair<std::string, bool>>& encounters,
                             double f_train, double f_val, double f_test, uint64_t seed) {
    if (std::abs(f_train + f_val + f_test - 1.0) > 1e-9)
        throw Error("split_cohort: fractions must sum to 1", ErrorKind::usage);
    if (encounters.empty()) throw Error("split_cohort: no encounters");

    Rng rng(derive_seed(seed, "split"));
    SplitAssignment out;
    for (bool label : {false, true}) {
        std::vector<std::string> ids;
        for (const auto& [id, l] : encounters)
            if (l == label) ids.push_back(id);
        std::sort(ids.begin(), ids.end());
        rng.shuffle(ids);

        // largest-remainder allocation of this class across the three splits
        const double fracs[3] = {f_train, f_val, f_test};
        size_t counts[3];
        double rema[3];
        size_t assigned = 0;
        for (int k = 0; k < 3; ++k) {
            double exact = fracs[k] * static_cast<double>(ids.size());
            counts[k] = static_cast<size_t>(std::floor(exact));
            rema[k] = exact - std::floor(exact);
            assigned += counts[k];
        }
        while (assigned < ids.size()) {
            int best = 0;
            for (int k = 1; k < 3; ++k)
                if (rema[k] > rema[best]) best = k;
            ++counts[best];
            rema[best] = -1.0;
            ++assigned;
        }
        size_t pos = 0;
        for (int k = 0; k < 3; ++k) {
            auto* dst = k == 0 ? &out.train : (k == 1 ? &out.val : &out.test);
            for (size_t i = 0; i < counts[k]; ++i) dst->push_back(ids[pos++]);
        }
    }
    for (const auto* split : {&out.train, &out.val, &out.test}) {
        if (split->empty())
            throw Error("split_cohort: a split received no encounters");
    }
    // stratification contract: every split carries both classes
    std::map<std::string, bool> label_of(encounters.begin(), encounters.end());
    for (const auto* split : {&out.train, &out.val, &out.test}) {
        bool pos = false, neg = false;
        for (const auto& id : *split) (label_of.at(id) ? pos : neg) = true;
        if (!pos || !neg)
            throw Error("split_cohort: single-class split; cohort too small to stratify");
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

}  // namespace romx
