#include "feature_spec.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "common.hpp"

namespace romx {

std::string to_string(FeatureKind kind) {
    return kind == FeatureKind::physiologic ? "physiologic" : "exogenous";
}

FeatureKind feature_kind_from_string(const std::string& s) {
    if (s == "physiologic") return FeatureKind::physiologic;
    if (s == "exogenous") return FeatureKind::exogenous;
    throw Error("unknown feature kind: " + s);
}

FeatureSpec::FeatureSpec(std::vector<FeatureDesc> features) : features_(std::move(features)) {
    if (features_.empty()) throw Error("feature spec must name at least one feature");
    for (size_t i = 0; i < features_.size(); ++i) {
        const auto& f = features_[i];
        if (f.name.empty()) throw Error("feature name must be non-empty");
        if (!(f.lo < f.hi))
            throw Error("feature '" + f.name + "': plausibility bounds require lo < hi");
        if (!index_.emplace(f.name, static_cast<int>(i)).second)
            throw Error("duplicate feature name: " + f.name);
    }
}

std::optional<int> FeatureSpec::index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> FeatureSpec::names() const {
    std::vector<std::string> out;
    out.reserve(features_.size());
    for (const auto& f : features_) out.push_back(f.name);
    return out;
}

nlohmann::json FeatureSpec::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& f : features_) {
        arr.push_back({{"name", f.name},
                       {"kind", to_string(f.kind)},
                       {"lo", f.lo},
                       {"hi", f.hi}});
    }
    return nlohmann::json{{"features", arr}};
}

FeatureSpec FeatureSpec::from_json(const nlohmann::json& j) {
    std::vector<FeatureDesc> feats;
    for (const auto& e : j.at("features")) {
        FeatureDesc d;
        d.name = e.at("name").get<std::string>();
        d.kind = feature_kind_from_string(e.at("kind").get<std::string>());
        d.lo = e.at("lo").get<double>();
        d.hi = e.at("hi").get<double>();
        feats.push_back(std::move(d));
    }
    return FeatureSpec(std::move(feats));
}

void FeatureSpec::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write feature spec: " + path.string());
    out << to_json().dump(2) << '\n';
}

FeatureSpec FeatureSpec::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read feature spec: " + path.string());
    nlohmann::json j;
    in >> j;
    return from_json(j);
}

}  // namespace romx
