#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace romx {

enum class FeatureKind { physiologic, exogenous };

std::string to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(const std::string& s);

struct FeatureDesc {
    std::string name;
    FeatureKind kind = FeatureKind::physiologic;
    double lo = 0.0;  // plausibility bounds; raw values outside [lo, hi] are discarded
    double hi = 1.0;
};

// Fixed, ordered feature vocabulary shared by matrices, the model and
// every attribution artifact. Row i of any N x T matrix is features()[i].
class FeatureSpec {
public:
    explicit FeatureSpec(std::vector<FeatureDesc> features);

    int size() const { return static_cast<int>(features_.size()); }
    const FeatureDesc& at(int i) const { return features_.at(static_cast<size_t>(i)); }
    const std::vector<FeatureDesc>& features() const { return features_; }
    std::optional<int> index_of(const std::string& name) const;
    std::vector<std::string> names() const;

    nlohmann::json to_json() const;
    static FeatureSpec from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static FeatureSpec load(const std::filesystem::path& path);

private:
    std::vector<FeatureDesc> features_;
    std::unordered_map<std::string, int> index_;
};

}  // namespace romx
