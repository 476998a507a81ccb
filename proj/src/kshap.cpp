#include "kshap.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <unordered_map>

#include <Eigen/Cholesky>
#include <nlohmann/json.hpp>

#include "common.hpp"
#include "rng.hpp"

namespace romx {

void KshapConfig::validate() const {
    if (enum_cutoff < 0) throw Error("kshap config: enum_cutoff must be >= 0");
    if (ridge <= 0) throw Error("kshap config: ridge must be positive");
}

nlohmann::json KshapConfig::to_json() const {
    return {{"total_budget", total_budget},
            {"enum_cutoff", enum_cutoff},
            {"seed", seed},
            {"ridge", ridge}};
}

KshapConfig KshapConfig::from_json(const nlohmann::json& j) {
    KshapConfig cfg;
    cfg.total_budget = j.value("total_budget", cfg.total_budget);
    cfg.enum_cutoff = j.value("enum_cutoff", cfg.enum_cutoff);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.ridge = j.value("ridge", cfg.ridge);
    cfg.validate();
    return cfg;
}

double shapley_kernel_weight(int n_features, int coalition_size) {
    if (coalition_size <= 0 || coalition_size >= n_features)
        throw Error("shapley_kernel_weight: size " + std::to_string(coalition_size) +
                    " is a constraint row, not a weighted sample");
    double binom = 1.0;
    for (int i = 1; i <= coalition_size; ++i)
        binom *= static_cast<double>(n_features - i + 1) / static_cast<double>(i);
    return (n_features - 1.0) /
           (binom * static_cast<double>(coalition_size) *
            static_cast<double>(n_features - coalition_size));
}

double masked_forward(const ModelParams& model, const Eigen::MatrixXd& x, int tau,
                      std::span<const uint8_t> coalition) {
    if (tau < 0 || tau >= x.cols()) throw Error("masked_forward: timestep out of range");
    if (static_cast<Eigen::Index>(coalition.size()) != x.rows())
        throw Error("masked_forward: coalition size must equal feature count");
    LstmRunner runner(model);
    LstmState state = initial_state(model.config);
    for (int t = 0; t < tau; ++t) runner.step(state, x.col(t));
    Eigen::VectorXd col = x.col(tau);
    for (Eigen::Index j = 0; j < col.size(); ++j)
        if (!coalition[static_cast<size_t>(j)]) col[j] = 0.0;
    return runner.step(state, col);
}

Eigen::VectorXd exact_shapley_from_payouts(const std::function<double(uint32_t)>& payout, int n) {
    if (n < 1 || n > 20) throw Error("exact_shapley: feature count must lie in [1, 20]");
    const uint32_t full = (n == 32) ? ~0u : ((1u << n) - 1u);
    std::vector<double> v(static_cast<size_t>(full) + 1);
    for (uint32_t mask = 0; mask <= full; ++mask) v[mask] = payout(mask);

    std::vector<double> factorial(static_cast<size_t>(n) + 1, 1.0);
    for (int i = 1; i <= n; ++i) factorial[static_cast<size_t>(i)] = factorial[i - 1] * i;

    Eigen::VectorXd phi = Eigen::VectorXd::Zero(n);
    for (int j = 0; j < n; ++j) {
        const uint32_t bit = 1u << j;
        double sum = 0.0;
        for (uint32_t mask = 0; mask <= full; ++mask) {
            if (mask & bit) continue;
            int s = std::popcount(mask);
            double w = factorial[static_cast<size_t>(s)] *
                       factorial[static_cast<size_t>(n - 1 - s)] / factorial[static_cast<size_t>(n)];
            sum += w * (v[mask | bit] - v[mask]);
        }
        phi[j] = sum;
    }
    return phi;
}

Eigen::VectorXd exact_shapley(const ModelParams& model, const Eigen::MatrixXd& x, int tau) {
    const int n = static_cast<int>(x.rows());
    if (n > 20) throw Error("exact_shapley: enumeration guarded to N <= 20");
    if (tau < 0 || tau >= x.cols()) throw Error("exact_shapley: timestep out of range");

    // one state pass, then a single LSTM step per coalition
    LstmRunner runner(model);
    LstmState state = initial_state(model.config);
    for (int t = 0; t < tau; ++t) runner.step(state, x.col(t));

    Eigen::VectorXd col_full = x.col(tau);
    return exact_shapley_from_payouts(
        [&](uint32_t mask) {
            Eigen::VectorXd col = col_full;
            for (int j = 0; j < n; ++j)
                if (!(mask & (1u << j))) col[j] = 0.0;
            LstmState s = state;
            return runner.step(s, col);
        },
        n);
}

namespace {

struct CoalitionRows {
    // first-seen order keeps sampling deterministic
    std::vector<std::vector<uint8_t>> members;
    std::vector<double> weights;
    std::vector<double> payouts;
};

std::string key_of(const std::vector<uint8_t>& z) {
    return std::string(reinterpret_cast<const char*>(z.data()), z.size());
}

}  // namespace

AttributionMatrix explain_kshap(const ModelParams& model, const DtPatientMatrix& x,
                                const KshapConfig& cfg,
                                const std::vector<std::string>& feature_order,
                                ShapExplanation* explanation) {
    cfg.validate();
    auto t0 = std::chrono::steady_clock::now();
    const int n = static_cast<int>(x.values.rows());
    const int t_hours = static_cast<int>(x.values.cols());
    if (n != model.config.input_size) throw Error("explain_kshap: model/input size mismatch");

    const int64_t total_budget =
        cfg.total_budget >= 0 ? cfg.total_budget
                              : 2 * static_cast<int64_t>(n) * t_hours + 2048;
    const int64_t per_t_budget = std::max<int64_t>(n + 2, total_budget / t_hours);

    bool enumerate = false;
    if (n < 62) {
        int64_t n_coalitions = int64_t{1} << n;
        enumerate = n_coalitions <= per_t_budget && n_coalitions <= cfg.enum_cutoff;
    }

    LstmRunner runner(model);
    auto states = runner.states_before(x.values);

    ShapExplanation info;
    info.per_timestep.resize(static_cast<size_t>(t_hours));

    AttributionMatrix a;
    a.encounter_id = x.encounter_id;
    a.method = "kshap";
    a.feature_order = feature_order;
    a.config_echo = cfg.to_json();
    a.values.resize(n, t_hours);

    // size distribution for sampling: p(s) proportional to kernel mass
    // C(N,s) * pi(s) = (N-1)/(s(N-s))
    std::vector<double> size_cdf;
    if (!enumerate && n >= 2) {
        size_cdf.resize(static_cast<size_t>(n) - 1);
        double acc = 0.0;
        for (int s = 1; s < n; ++s) {
            acc += (n - 1.0) / (static_cast<double>(s) * static_cast<double>(n - s));
            size_cdf[static_cast<size_t>(s) - 1] = acc;
        }
        for (auto& v : size_cdf) v /= acc;
    }

    std::vector<int> index_pool(static_cast<size_t>(n));
    Eigen::VectorXd col(n);

    for (int tau = 0; tau < t_hours; ++tau) {
        auto& ti = info.per_timestep[static_cast<size_t>(tau)];
        const LstmState& state = states[static_cast<size_t>(tau)];

        auto payout = [&](const std::vector<uint8_t>& z) {
            for (int j = 0; j < n; ++j) col[j] = z[static_cast<size_t>(j)] ? x.values(j, tau) : 0.0;
            LstmState s = state;
            return runner.step(s, col);
        };

        std::vector<uint8_t> z_full(static_cast<size_t>(n), 1);
        std::vector<uint8_t> z_empty(static_cast<size_t>(n), 0);
        double f_full = payout(z_full);
        double phi0 = payout(z_empty);
        ti.phi0 = phi0;
        ti.samples_used = 2;
        double delta = f_full - phi0;

        Eigen::VectorXd phi = Eigen::VectorXd::Zero(n);
        if (n == 1) {
            phi[0] = delta;
        } else {
            CoalitionRows rows;
            if (enumerate) {
                ti.enumerated = true;
                const uint64_t full_mask = (uint64_t{1} << n) - 1;
                for (uint64_t mask = 1; mask < full_mask; ++mask) {
                    std::vector<uint8_t> z(static_cast<size_t>(n));
                    int s = 0;
                    for (int j = 0; j < n; ++j) {
                        z[static_cast<size_t>(j)] = (mask >> j) & 1u;
                        s += z[static_cast<size_t>(j)];
                    }
                    rows.members.push_back(std::move(z));
                    rows.weights.push_back(shapley_kernel_weight(n, s));
                }
                ti.samples_used += static_cast<int64_t>(rows.members.size());
            } else {
                Rng rng(mix64(derive_seed(cfg.seed, "kshap") ^ hash_str(x.encounter_id) ^
                              (0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(tau + 1))));
                std::unordered_map<std::string, size_t> seen;
                int64_t n_pairs = (per_t_budget - 2) / 2;
                auto add = [&](const std::vector<uint8_t>& z) {
                    auto [it, inserted] = seen.emplace(key_of(z), rows.members.size());
                    if (inserted) {
                        rows.members.push_back(z);
                        rows.weights.push_back(1.0);
                    } else {
                        rows.weights[it->second] += 1.0;
                    }
                };
                for (int64_t p = 0; p < n_pairs; ++p) {
                    double u = rng.uniform01();
                    int s = 1;
                    while (s < n - 1 && u > size_cdf[static_cast<size_t>(s) - 1]) ++s;
                    // partial Fisher-Yates draw of s distinct indices
                    for (int j = 0; j < n; ++j) index_pool[static_cast<size_t>(j)] = j;
                    std::vector<uint8_t> z(static_cast<size_t>(n), 0);
                    for (int k = 0; k < s; ++k) {
                        size_t pick = static_cast<size_t>(k) +
                                      rng.uniform_index(static_cast<uint64_t>(n - k));
                        std::swap(index_pool[static_cast<size_t>(k)], index_pool[pick]);
                        z[static_cast<size_t>(index_pool[static_cast<size_t>(k)])] = 1;
                    }
                    add(z);
                    std::vector<uint8_t> zc(static_cast<size_t>(n));
                    for (int j = 0; j < n; ++j) zc[static_cast<size_t>(j)] = 1 - z[static_cast<size_t>(j)];
                    add(zc);
                    ti.samples_used += 2;
                }
            }

            rows.payouts.resize(rows.members.size());
            for (size_t r = 0; r < rows.members.size(); ++r)
                rows.payouts[r] = payout(rows.members[r]);

            // eliminate the last feature through the additivity constraint
            const int free_n = n - 1;
            const auto n_rows = static_cast<Eigen::Index>(rows.members.size());
            Eigen::MatrixXd design(n_rows, free_n);
            Eigen::VectorXd target(n_rows);
            Eigen::VectorXd w(n_rows);
            for (Eigen::Index r = 0; r < n_rows; ++r) {
                const auto& z = rows.members[static_cast<size_t>(r)];
                double z_last = z[static_cast<size_t>(n - 1)];
                for (int j = 0; j < free_n; ++j)
                    design(r, j) = static_cast<double>(z[static_cast<size_t>(j)]) - z_last;
                target[r] = rows.payouts[static_cast<size_t>(r)] - phi0 - z_last * delta;
                w[r] = rows.weights[static_cast<size_t>(r)];
            }

            Eigen::MatrixXd ata = design.transpose() * w.asDiagonal() * design;
            Eigen::VectorXd atb = design.transpose() * w.asDiagonal() * target;
            Eigen::LDLT<Eigen::MatrixXd> solver(ata);
            Eigen::VectorXd phi_free;
            bool ok = solver.info() == Eigen::Success;
            if (ok) {
                phi_free = solver.solve(atb);
                ok = phi_free.allFinite();
                if (ok) {
                    // detect rank deficiency the factorization tolerated
                    double resid = (ata * phi_free - atb).norm();
                    ok = resid <= 1e-8 * (1.0 + atb.norm());
                }
            }
            if (!ok) {
                ti.ridge_fallback = true;
                Eigen::MatrixXd reg = ata;
                reg.diagonal().array() += cfg.ridge;
                phi_free = Eigen::LDLT<Eigen::MatrixXd>(reg).solve(atb);
                if (!phi_free.allFinite())
                    throw Error("explain_kshap: degenerate system at timestep " +
                                std::to_string(tau));
            }
            phi.head(free_n) = phi_free;
            phi[n - 1] = delta - phi_free.sum();
        }

        ti.residual = std::abs(phi0 + phi.sum() - f_full);
        a.values.col(tau) = phi;
        info.budget_used += ti.samples_used;
    }

    nlohmann::json phi0s = nlohmann::json::array();
    nlohmann::json residuals = nlohmann::json::array();
    nlohmann::json samples = nlohmann::json::array();
    int ridge_count = 0, enum_count = 0;
    for (const auto& ti : info.per_timestep) {
        phi0s.push_back(ti.phi0);
        residuals.push_back(ti.residual);
        samples.push_back(ti.samples_used);
        ridge_count += ti.ridge_fallback ? 1 : 0;
        enum_count += ti.enumerated ? 1 : 0;
    }
    a.extra = {{"phi0", phi0s},
               {"residuals", residuals},
               {"samples_per_timestep", samples},
               {"budget_used", info.budget_used},
               {"enumerated_timesteps", enum_count},
               {"ridge_fallback_timesteps", ridge_count}};
    a.converged = true;
    a.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (explanation) *explanation = std::move(info);
    return a;
}

}  // namespace romx
