#include "attribution.hpp"

#include <fstream>

#include "common.hpp"
#include "matrix_io.hpp"

namespace romx {

void save_attribution_archive(const std::filesystem::path& manifest_path,
                              const AttributionMatrix& a) {
    if (static_cast<Eigen::Index>(a.feature_order.size()) != a.values.rows())
        throw Error("attribution archive: feature order does not match row count");
    std::filesystem::path bin_path = manifest_path;
    bin_path.replace_extension(".bin");

    nlohmann::json manifest{{"encounter_id", a.encounter_id},
                            {"method", a.method},
                            {"n_features", a.values.rows()},
                            {"t_hours", a.values.cols()},
                            {"feature_order", a.feature_order},
                            {"converged", a.converged},
                            {"config", a.config_echo},
                            {"values_file", bin_path.filename().string()},
                            {"timing", {{"wall_clock_seconds", a.wall_clock_seconds}}}};
    for (auto it = a.extra.begin(); it != a.extra.end(); ++it) manifest[it.key()] = it.value();

    std::ofstream out(manifest_path);
    if (!out) throw Error("cannot write attribution manifest: " + manifest_path.string());
    out << manifest.dump(2) << '\n';
    write_f64_matrix(bin_path, a.values);
}

AttributionMatrix load_attribution_archive(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw Error("cannot read attribution manifest: " + manifest_path.string());
    nlohmann::json manifest;
    in >> manifest;

    AttributionMatrix a;
    a.encounter_id = manifest.at("encounter_id").get<std::string>();
    a.method = manifest.at("method").get<std::string>();
    a.feature_order = manifest.at("feature_order").get<std::vector<std::string>>();
    a.converged = manifest.at("converged").get<bool>();
    a.config_echo = manifest.value("config", nlohmann::json::object());
    a.wall_clock_seconds = manifest.at("timing").value("wall_clock_seconds", 0.0);
    int rows = manifest.at("n_features").get<int>();
    int cols = manifest.at("t_hours").get<int>();
    a.extra = nlohmann::json::object();
    static const char* kCore[] = {"encounter_id", "method",       "n_features",
                                  "t_hours",      "feature_order", "converged",
                                  "config",       "values_file",   "timing"};
    for (auto it = manifest.begin(); it != manifest.end(); ++it) {
        bool core = false;
        for (const char* k : kCore)
            if (it.key() == k) core = true;
        if (!core) a.extra[it.key()] = it.value();
    }
    auto bin_path = manifest_path.parent_path() / manifest.at("values_file").get<std::string>();
    a.values = read_f64_matrix(bin_path, rows, cols);
    return a;
}

}  // namespace romx
