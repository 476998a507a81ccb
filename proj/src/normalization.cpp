#include "normalization.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "common.hpp"

namespace romx {

NormalizationStats fit_normalization(std::span<const RawEvent> events, const FeatureSpec& spec,
                                     FitCounters* counters) {
    if (events.empty()) throw Error("fit_normalization: empty event stream", ErrorKind::usage);

    const int n = spec.size();
    std::vector<double> sum(n, 0.0), sum_sq(n, 0.0);
    std::vector<double> lo(n, std::numeric_limits<double>::infinity());
    std::vector<double> hi(n, -std::numeric_limits<double>::infinity());
    std::vector<size_t> count(n, 0);
    FitCounters local;

    for (const auto& e : events) {
        auto idx = spec.index_of(e.variable);
        if (!idx) {
            ++local.unknown_variable;
            continue;
        }
        const auto& desc = spec.at(*idx);
        if (e.value < desc.lo || e.value > desc.hi) {
            ++local.out_of_bounds;
            continue;
        }
        ++local.used;
        ++count[*idx];
        sum[*idx] += e.value;
        sum_sq[*idx] += e.value * e.value;
        lo[*idx] = std::min(lo[*idx], e.value);
        hi[*idx] = std::max(hi[*idx], e.value);
    }

    NormalizationStats stats;
    stats.per_feature.resize(n);
    for (int i = 0; i < n; ++i) {
        auto& fs = stats.per_feature[i];
        if (count[i] == 0) continue;  // keep (mu=0, sigma=1) / (min=0, max=1) defaults
        fs.observed = true;
        if (spec.at(i).kind == FeatureKind::physiologic) {
            double mean = sum[i] / static_cast<double>(count[i]);
            double var = sum_sq[i] / static_cast<double>(count[i]) - mean * mean;
            double sigma = std::sqrt(std::max(var, 0.0));
            fs.mu = mean;
            if (sigma < 1e-12) {
                fs.sigma = 1.0;
                fs.guarded = true;
            } else {
                fs.sigma = sigma;
            }
        } else {
            fs.min = lo[i];
            fs.max = hi[i];
            if (fs.max - fs.min < 1e-12) {
                fs.max = fs.min + 1.0;
                fs.guarded = true;
            }
        }
    }
    if (counters) *counters = local;
    return stats;
}

nlohmann::json NormalizationStats::to_json(const FeatureSpec& spec) const {
    if (static_cast<int>(per_feature.size()) != spec.size())
        throw Error("normalization stats do not match feature spec size");
    nlohmann::json arr = nlohmann::json::array();
    for (int i = 0; i < spec.size(); ++i) {
        const auto& fs = per_feature[static_cast<size_t>(i)];
        nlohmann::json e{{"name", spec.at(i).name},
                         {"kind", to_string(spec.at(i).kind)},
                         {"observed", fs.observed},
                         {"guarded", fs.guarded}};
        if (spec.at(i).kind == FeatureKind::physiologic) {
            e["mu"] = fs.mu;
            e["sigma"] = fs.sigma;
        } else {
            e["min"] = fs.min;
            e["max"] = fs.max;
        }
        arr.push_back(std::move(e));
    }
    return nlohmann::json{{"features", arr}};
}

NormalizationStats NormalizationStats::from_json(const nlohmann::json& j, const FeatureSpec& spec) {
    NormalizationStats stats;
    stats.per_feature.resize(static_cast<size_t>(spec.size()));
    const auto& arr = j.at("features");
    if (static_cast<int>(arr.size()) != spec.size())
        throw Error("normalization stats feature count does not match spec");
    for (const auto& e : arr) {
        auto idx = spec.index_of(e.at("name").get<std::string>());
        if (!idx) throw Error("normalization stats name not in spec: " + e.at("name").dump());
        auto& fs = stats.per_feature[static_cast<size_t>(*idx)];
        fs.observed = e.value("observed", true);
        fs.guarded = e.value("guarded", false);
        if (spec.at(*idx).kind == FeatureKind::physiologic) {
            fs.mu = e.at("mu").get<double>();
            fs.sigma = e.at("sigma").get<double>();
            if (!(fs.sigma > 0)) throw Error("normalization stats: sigma must be positive");
        } else {
            fs.min = e.at("min").get<double>();
            fs.max = e.at("max").get<double>();
            if (!(fs.max > fs.min)) throw Error("normalization stats: max must exceed min");
        }
    }
    return stats;
}

void NormalizationStats::save(const std::filesystem::path& path, const FeatureSpec& spec) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write normalization stats: " + path.string());
    out << to_json(spec).dump(2) << '\n';
}

NormalizationStats NormalizationStats::load(const std::filesystem::path& path,
                                            const FeatureSpec& spec) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read normalization stats: " + path.string());
    nlohmann::json j;
    in >> j;
    return from_json(j, spec);
}

}  // namespace romx
