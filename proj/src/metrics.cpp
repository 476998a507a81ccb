#include "metrics.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "common.hpp"
#include "csv.hpp"

namespace romx {

double compute_auc(std::span<const double> scores, std::span<const uint8_t> labels) {
    if (scores.size() != labels.size()) throw Error("compute_auc: size mismatch");
    size_t n_pos = 0, n_neg = 0;
    for (uint8_t l : labels) (l ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0)
        throw Error("compute_auc: undefined metric, both classes must be present");

    // Mann-Whitney with average ranks over ties.
    std::vector<size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < idx.size()) {
        size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));  // 1-based
        for (size_t k = i; k < j; ++k)
            if (labels[idx[k]]) rank_sum_pos += avg_rank;
        i = j;
    }
    double n_pos_d = static_cast<double>(n_pos);
    double n_neg_d = static_cast<double>(n_neg);
    return (rank_sum_pos - n_pos_d * (n_pos_d + 1.0) / 2.0) / (n_pos_d * n_neg_d);
}

std::vector<HourAuc> evaluate_at_hours(const ModelParams& params,
                                       std::span<const DtPatientMatrix> dataset,
                                       std::span<const int> hours) {
    struct Scored {
        Eigen::VectorXd y;
        bool label;
        int t;
    };
    std::vector<Scored> eligible;
    for (const auto& seq : dataset) {
        if (seq.t_hours() < 24) continue;
        Scored s;
        s.y = forward(params, seq.values, RunMode::eval);
        s.label = seq.label;
        s.t = seq.t_hours();
        eligible.push_back(std::move(s));
    }
    if (eligible.empty())
        throw Error("evaluate_at_hours: no eligible encounters (all shorter than 24h)");

    std::vector<HourAuc> out;
    for (int h : hours) {
        if (h == 0) throw Error("evaluate_at_hours: hour 0 is not defined", ErrorKind::usage);
        std::vector<double> scores;
        std::vector<uint8_t> labels;
        for (const auto& s : eligible) {
            int idx = h > 0 ? h - 1 : s.t + h - 1;
            if (idx < 0 || idx >= s.t) continue;
            scores.push_back(s.y[idx]);
            labels.push_back(s.label ? 1 : 0);
        }
        if (scores.empty())
            throw Error("evaluate_at_hours: no eligible encounters at hour " + std::to_string(h));
        HourAuc row;
        row.hour = h;
        row.auc = compute_auc(scores, labels);
        row.n_encounters = static_cast<int>(scores.size());
        out.push_back(row);
    }
    return out;
}

void write_hour_auc_csv(const std::filesystem::path& path, std::span<const HourAuc> rows) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write evaluation csv: " + path.string());
    out << "hour,auc,n_encounters\n";
    for (const auto& r : rows)
        out << r.hour << ',' << fmt_double(r.auc) << ',' << r.n_encounters << '\n';
}

}  // namespace romx
