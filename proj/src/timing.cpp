#include "timing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include "common.hpp"
#include "csv.hpp"

namespace romx {

std::vector<MethodTiming> timing_summary(std::span<const TimingRecord> records,
                                         std::span<const std::string> methods) {
    std::vector<MethodTiming> out;
    for (const auto& method : methods) {
        std::vector<double> seconds;
        for (const auto& r : records)
            if (r.method == method) seconds.push_back(r.seconds);
        if (seconds.empty()) {
            std::cerr << "warning: no timing records for method '" << method << "', omitted\n";
            continue;
        }
        MethodTiming m;
        m.method = method;
        m.n = seconds.size();
        m.median = quantile(seconds, 0.5);
        m.q1 = quantile(seconds, 0.25);
        m.q3 = quantile(seconds, 0.75);
        m.iqr = m.q3 - m.q1;
        m.min = *std::min_element(seconds.begin(), seconds.end());
        m.max = *std::max_element(seconds.begin(), seconds.end());
        out.push_back(std::move(m));
    }
    return out;
}

void write_timing_records_csv(const std::filesystem::path& path,
                              std::span<const TimingRecord> records) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write timing records: " + path.string());
    out << "encounter_id,method,seconds,t_hours,n_features,converged\n";
    for (const auto& r : records)
        out << csv_escape(r.encounter_id) << ',' << r.method << ',' << fmt_double(r.seconds)
            << ',' << r.t_hours << ',' << r.n_features << ',' << (r.converged ? 1 : 0) << '\n';
}

void write_timing_summary_csv(const std::filesystem::path& path,
                              std::span<const MethodTiming> rows) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write timing summary: " + path.string());
    out << "method,n,median_seconds,q1_seconds,q3_seconds,iqr_seconds,min_seconds,max_seconds\n";
    for (const auto& m : rows)
        out << m.method << ',' << m.n << ',' << fmt_double(m.median) << ',' << fmt_double(m.q1)
            << ',' << fmt_double(m.q3) << ',' << fmt_double(m.iqr) << ',' << fmt_double(m.min)
            << ',' << fmt_double(m.max) << '\n';
}

void write_timing_boxplot_svg(const std::filesystem::path& path,
                              std::span<const MethodTiming> rows) {
    if (rows.empty()) throw Error("timing box plot: nothing to plot");
    std::ofstream out(path);
    if (!out) throw Error("cannot write timing svg: " + path.string());

    const int margin = 48, box_w = 60, gap = 60, plot_h = 260;
    const int width = margin * 2 + static_cast<int>(rows.size()) * (box_w + gap);
    const int height = plot_h + margin * 2;
    double vmax = 1e-9;
    for (const auto& m : rows) vmax = std::max(vmax, m.max);
    auto yscale = [&](double v) { return margin + plot_h - v / vmax * plot_h; };
    auto f = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", v);
        return std::string(buf);
    };

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out << "<text x=\"" << margin << "\" y=\"20\" font-size=\"13\">seconds per encounter</text>\n";
    int x = margin;
    for (const auto& m : rows) {
        int cx = x + box_w / 2;
        out << "<line x1=\"" << cx << "\" y1=\"" << f(yscale(m.min)) << "\" x2=\"" << cx
            << "\" y2=\"" << f(yscale(m.max)) << "\" stroke=\"#555\"/>\n";
        out << "<rect x=\"" << x << "\" y=\"" << f(yscale(m.q3)) << "\" width=\"" << box_w
            << "\" height=\"" << f(std::max(1.0, yscale(m.q1) - yscale(m.q3)))
            << "\" fill=\"#9ecae1\" stroke=\"#3182bd\"/>\n";
        out << "<line x1=\"" << x << "\" y1=\"" << f(yscale(m.median)) << "\" x2=\"" << x + box_w
            << "\" y2=\"" << f(yscale(m.median)) << "\" stroke=\"#08519c\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << cx << "\" y=\"" << height - margin + 16
            << "\" text-anchor=\"middle\">" << m.method << "</text>\n";
        x += box_w + gap;
    }
    out << "</svg>\n";
}

}  // namespace romx
