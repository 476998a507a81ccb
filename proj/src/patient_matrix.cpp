#include "patient_matrix.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "common.hpp"
#include "matrix_io.hpp"

namespace romx {

PatientMatrix build_patient_matrix(std::span<const RawEvent> events,
                                   const NormalizationStats& stats, const FeatureSpec& spec,
                                   bool label, BuildCounters* counters) {
    if (events.empty()) throw Error("build_patient_matrix: no events for encounter");
    const std::string& id = events.front().encounter_id;
    for (const auto& e : events) {
        if (e.encounter_id != id)
            throw Error("build_patient_matrix: mixed encounter ids (" + id + " vs " +
                        e.encounter_id + ")");
        if (e.timestamp_minutes < 0) throw Error("build_patient_matrix: negative timestamp");
    }

    const int n = spec.size();
    BuildCounters local;

    // Pass 1: filter and find the grid extent.
    struct Cell {
        int64_t ts = -1;
        size_t order = 0;
        double value = 0.0;
    };
    int64_t last_minute = -1;
    std::vector<std::pair<int, const RawEvent*>> valid;
    valid.reserve(events.size());
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
        valid.emplace_back(*idx, &e);
        last_minute = std::max(last_minute, e.timestamp_minutes);
    }
    if (counters) *counters = local;
    if (valid.empty())
        throw Error("build_patient_matrix: all events for encounter '" + id +
                    "' were rejected; zero-length grid");

    const int t = static_cast<int>(last_minute / 60) + 1;

    // Keep the latest observation inside each hour bin (state at hour end);
    // equal timestamps resolve to stream order.
    std::vector<Cell> cells(static_cast<size_t>(n) * static_cast<size_t>(t));
    for (size_t k = 0; k < valid.size(); ++k) {
        const auto& [row, ev] = valid[k];
        int hour = static_cast<int>(ev->timestamp_minutes / 60);
        Cell& cell = cells[static_cast<size_t>(row) * t + hour];
        if (ev->timestamp_minutes > cell.ts ||
            (ev->timestamp_minutes == cell.ts && k >= cell.order)) {
            cell.ts = ev->timestamp_minutes;
            cell.order = k;
            cell.value = ev->value;
        }
    }

    PatientMatrix pm;
    pm.encounter_id = id;
    pm.label = label;
    pm.values.resize(n, t);

    for (int r = 0; r < n; ++r) {
        const auto& desc = spec.at(r);
        const auto& fs = stats.per_feature[static_cast<size_t>(r)];
        bool seen = false;
        double prev = 0.0;
        for (int h = 0; h < t; ++h) {
            const Cell& cell = cells[static_cast<size_t>(r) * t + h];
            double v;
            if (cell.ts >= 0) {
                if (desc.kind == FeatureKind::physiologic) {
                    v = (cell.value - fs.mu) / fs.sigma;
                } else {
                    v = (cell.value - fs.min) / (fs.max - fs.min);
                    v = std::clamp(v, 0.0, 1.0);
                }
                seen = true;
            } else if (seen) {
                v = prev;  // forward fill
                ++pm.n_forward_filled;
            } else {
                v = 0.0;  // physiologic: mean in z-space; exogenous: no therapy
            }
            pm.values(r, h) = v;
            prev = v;
        }
    }
    return pm;
}

DtPatientMatrix to_dt_matrix(const PatientMatrix& pm) {
    if (pm.t_hours() < 1) throw Error("to_dt_matrix: matrix has no columns");
    DtPatientMatrix dt;
    dt.encounter_id = pm.encounter_id;
    dt.label = pm.label;
    dt.values.resize(pm.values.rows(), pm.values.cols());
    dt.values.col(0) = pm.values.col(0);
    for (Eigen::Index c = 1; c < pm.values.cols(); ++c)
        dt.values.col(c) = pm.values.col(c) - pm.values.col(c - 1);
    return dt;
}

PatientMatrix from_dt_matrix(const DtPatientMatrix& dt) {
    PatientMatrix pm;
    pm.encounter_id = dt.encounter_id;
    pm.label = dt.label;
    pm.values.resize(dt.values.rows(), dt.values.cols());
    if (dt.values.cols() == 0) return pm;
    pm.values.col(0) = dt.values.col(0);
    for (Eigen::Index c = 1; c < dt.values.cols(); ++c)
        pm.values.col(c) = pm.values.col(c - 1) + dt.values.col(c);
    return pm;
}

void save_matrix_archive(const std::filesystem::path& manifest_path, const MatrixArchive& a) {
    if (static_cast<Eigen::Index>(a.feature_order.size()) != a.values.rows())
        throw Error("matrix archive: feature order does not match row count");
    std::filesystem::path bin_path = manifest_path;
    bin_path.replace_extension(".bin");

    nlohmann::json manifest{{"encounter_id", a.encounter_id},
                            {"kind", a.kind},
                            {"n_features", a.values.rows()},
                            {"t_hours", a.values.cols()},
                            {"feature_order", a.feature_order},
                            {"label", a.label},
                            {"values_file", bin_path.filename().string()}};
    std::ofstream out(manifest_path);
    if (!out) throw Error("cannot write matrix manifest: " + manifest_path.string());
    out << manifest.dump(2) << '\n';
    write_f64_matrix(bin_path, a.values);
}

MatrixArchive load_matrix_archive(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw Error("cannot read matrix manifest: " + manifest_path.string());
    nlohmann::json manifest;
    in >> manifest;

    MatrixArchive a;
    a.encounter_id = manifest.at("encounter_id").get<std::string>();
    a.kind = manifest.at("kind").get<std::string>();
    a.feature_order = manifest.at("feature_order").get<std::vector<std::string>>();
    a.label = manifest.at("label").get<bool>();
    int rows = manifest.at("n_features").get<int>();
    int cols = manifest.at("t_hours").get<int>();
    if (rows != static_cast<int>(a.feature_order.size()))
        throw Error("matrix manifest: n_features disagrees with feature_order");
    auto bin_path = manifest_path.parent_path() / manifest.at("values_file").get<std::string>();
    a.values = read_f64_matrix(bin_path, rows, cols);
    return a;
}

}  // namespace romx
