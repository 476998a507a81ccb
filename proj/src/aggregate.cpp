#include "aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "common.hpp"
#include "csv.hpp"

namespace romx {

namespace {

Eigen::VectorXd full_stay_mean(const AttributionMatrix& a) {
    const int t = a.t_hours();
    if (t < 1) throw Error("aggregate: attribution with no timesteps");
    // same form as the window average over [0, T-1]
    double denom = std::max(t - 1, 1);
    return a.values.cwiseAbs().rowwise().sum() / denom;
}

void check_consistent(std::span<const AttributionMatrix* const> attrs) {
    if (attrs.empty()) throw Error("aggregate: empty attribution list", ErrorKind::usage);
    const auto& order = attrs.front()->feature_order;
    for (const auto* a : attrs)
        if (a->feature_order != order)
            throw Error("aggregate: inconsistent feature order across attributions");
}

}  // namespace

AggregateVector window_average(const AttributionMatrix& a, WindowSpec w, bool normalize) {
    if (w.t_i < 0 || w.t_i >= w.t_f || w.t_f > a.t_hours() - 1)
        throw Error("window_average: need 0 <= t_i < t_f <= T-1", ErrorKind::usage);
    AggregateVector out;
    out.provenance = "window";
    out.method = a.method;
    out.n_in = 1;
    out.values = a.values.middleCols(w.t_i, w.t_f - w.t_i + 1).cwiseAbs().rowwise().sum() /
                 static_cast<double>(w.t_f - w.t_i);
    if (normalize) {
        double sup = out.values.maxCoeff();
        if (sup > 0.0)
            out.values /= sup;
        else
            out.zero_flagged = true;
    }
    return out;
}

AggregateVector cohort_average(std::span<const AttributionMatrix* const> attrs) {
    check_consistent(attrs);
    AggregateVector out;
    out.provenance = "cohort";
    out.method = attrs.front()->method;
    out.n_in = static_cast<int>(attrs.size());
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(attrs.front()->n_features());
    for (const auto* a : attrs) sum += full_stay_mean(*a);
    out.values = sum / static_cast<double>(attrs.size());
    return out;
}

AggregateVector relative_attribution(std::span<const AttributionMatrix* const> in_cohort,
                                     std::span<const AttributionMatrix* const> out_cohort) {
    AggregateVector a_in = cohort_average(in_cohort);
    AggregateVector a_out = cohort_average(out_cohort);
    double n_in = a_in.values.norm();
    double n_out = a_out.values.norm();
    if (n_in == 0.0 || n_out == 0.0)
        throw Error("relative_attribution: zero-norm cohort average");
    AggregateVector out;
    out.provenance = "raf";
    out.method = a_in.method;
    out.n_in = a_in.n_in;
    out.n_out = a_out.n_in;
    out.values = a_in.values / n_in - a_out.values / n_out;
    return out;
}

AggregateVector population_importance(std::span<const AttributionMatrix* const> attrs) {
    AggregateVector out = cohort_average(attrs);
    out.provenance = "population";
    double sup = out.values.maxCoeff();
    if (sup > 0.0)
        out.values /= sup;
    else
        out.zero_flagged = true;
    return out;
}

std::vector<RankedRow> top_k_report(const AggregateVector& v, int k, const FeatureSpec& spec) {
    if (k < 1) throw Error("top_k_report: k must be >= 1", ErrorKind::usage);
    if (spec.size() != static_cast<int>(v.values.size()))
        throw Error("top_k_report: vector length does not match feature spec");
    std::vector<int> idx(static_cast<size_t>(v.values.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (v.values[a] != v.values[b]) return v.values[a] > v.values[b];
        return a < b;
    });
    std::vector<RankedRow> rows;
    int take = std::min<int>(k, static_cast<int>(idx.size()));
    for (int r = 0; r < take; ++r) {
        RankedRow row;
        row.rank = r + 1;
        row.feature = spec.at(idx[static_cast<size_t>(r)]).name;
        row.value = v.values[idx[static_cast<size_t>(r)]];
        row.kind = to_string(spec.at(idx[static_cast<size_t>(r)]).kind);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_report_csv(const std::filesystem::path& path,
                      std::span<const std::pair<std::string, std::vector<RankedRow>>> blocks) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write report csv: " + path.string());
    out << "rank,feature,value,kind,method\n";
    for (const auto& [method, rows] : blocks)
        for (const auto& r : rows)
            out << r.rank << ',' << csv_escape(r.feature) << ',' << fmt_double(r.value) << ','
                << r.kind << ',' << method << '\n';
}

void AggregateVector::save(const std::filesystem::path& path,
                           const std::vector<std::string>& feature_order) const {
    if (static_cast<Eigen::Index>(feature_order.size()) != values.size())
        throw Error("aggregate save: feature order size mismatch");
    nlohmann::json j{{"provenance", provenance},
                     {"method", method},
                     {"n_in", n_in},
                     {"n_out", n_out},
                     {"zero_flagged", zero_flagged},
                     {"feature_order", feature_order},
                     {"values", std::vector<double>(values.data(), values.data() + values.size())}};
    std::ofstream out(path);
    if (!out) throw Error("cannot write aggregate vector: " + path.string());
    out << j.dump(2) << '\n';
}

AggregateVector AggregateVector::load(const std::filesystem::path& path,
                                      std::vector<std::string>* feature_order) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read aggregate vector: " + path.string());
    nlohmann::json j;
    in >> j;
    AggregateVector v;
    v.provenance = j.at("provenance").get<std::string>();
    v.method = j.at("method").get<std::string>();
    v.n_in = j.value("n_in", 0);
    v.n_out = j.value("n_out", 0);
    v.zero_flagged = j.value("zero_flagged", false);
    auto vals = j.at("values").get<std::vector<double>>();
    v.values = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    if (feature_order) *feature_order = j.at("feature_order").get<std::vector<std::string>>();
    return v;
}

namespace {

std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string fmt_svg(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

}  // namespace

void write_bar_chart_svg(const std::filesystem::path& path, const std::string& title,
                         std::span<const std::pair<std::string, AggregateVector>> methods,
                         const FeatureSpec& spec, int top_k) {
    if (methods.empty()) throw Error("bar chart: no method vectors", ErrorKind::usage);
    static const char* kColors[] = {"#4878cf", "#ee854a", "#6acc65"};

    // union of each method's top-k, ordered by the first method's values
    std::vector<int> selected;
    for (const auto& [name, vec] : methods) {
        auto rows = top_k_report(vec, top_k, spec);
        for (const auto& r : rows) {
            int idx = *spec.index_of(r.feature);
            if (std::find(selected.begin(), selected.end(), idx) == selected.end())
                selected.push_back(idx);
        }
    }
    const auto& primary = methods.front().second.values;
    std::stable_sort(selected.begin(), selected.end(), [&](int a, int b) {
        if (primary[a] != primary[b]) return primary[a] > primary[b];
        return a < b;
    });

    double vmax = 1e-12, vmin = 0.0;
    for (const auto& [name, vec] : methods)
        for (int idx : selected) {
            vmax = std::max(vmax, vec.values[idx]);
            vmin = std::min(vmin, vec.values[idx]);
        }

    const int bar_h = 14, group_gap = 8, label_w = 220, plot_w = 560, margin = 24;
    const int group_h = bar_h * static_cast<int>(methods.size()) + group_gap;
    const int height = margin * 2 + 30 + group_h * static_cast<int>(selected.size());
    const int width = label_w + plot_w + margin * 2;
    const double span = vmax - std::min(vmin, 0.0);
    const double x0 = label_w + margin + (vmin < 0 ? -vmin / span * plot_w : 0.0);
    auto xscale = [&](double v) { return v / span * plot_w; };

    std::ofstream out(path);
    if (!out) throw Error("cannot write svg: " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out << "<text x=\"" << margin << "\" y=\"" << margin << "\" font-size=\"14\">"
        << svg_escape(title) << "</text>\n";
    for (size_t m = 0; m < methods.size(); ++m) {
        int lx = margin + static_cast<int>(m) * 140;
        out << "<rect x=\"" << lx << "\" y=\"" << margin + 8 << "\" width=\"12\" height=\"12\" fill=\""
            << kColors[m % 3] << "\"/>\n";
        out << "<text x=\"" << lx + 16 << "\" y=\"" << margin + 18 << "\">"
            << svg_escape(methods[m].first) << "</text>\n";
    }
    int y = margin + 30;
    for (int idx : selected) {
        out << "<text x=\"" << label_w + margin - 6 << "\" y=\""
            << y + group_h / 2 << "\" text-anchor=\"end\">" << svg_escape(spec.at(idx).name)
            << "</text>\n";
        for (size_t m = 0; m < methods.size(); ++m) {
            double v = methods[m].second.values[idx];
            double w = xscale(std::abs(v));
            double x = v >= 0 ? x0 : x0 - w;
            out << "<rect x=\"" << fmt_svg(x) << "\" y=\"" << y + static_cast<int>(m) * bar_h
                << "\" width=\"" << fmt_svg(w) << "\" height=\"" << bar_h - 2 << "\" fill=\""
                << kColors[m % 3] << "\"/>\n";
        }
        y += group_h;
    }
    out << "<line x1=\"" << fmt_svg(x0) << "\" y1=\"" << margin + 26 << "\" x2=\"" << fmt_svg(x0)
        << "\" y2=\"" << height - margin << "\" stroke=\"#555\"/>\n";
    out << "</svg>\n";
}

}  // namespace romx
