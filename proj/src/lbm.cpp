#include "lbm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "common.hpp"

namespace romx {

LbmConfig LbmConfig::defaults() { return LbmConfig{}; }

LbmConfig LbmConfig::appendix_b() {
    LbmConfig cfg;
    cfg.lambda2_soft = 0.5;
    cfg.max_soft_lr_reductions = 3;
    cfg.max_threshold_sweeps = 2;
    return cfg;
}

void LbmConfig::validate() const {
    if (lambda1_soft <= 0 || lambda2_soft <= 0 || steepness <= 0 || soft_lr <= 0 ||
        soft_lr_factor <= 0 || soft_lr_patience < 1 || max_soft_iterations < 1 ||
        max_soft_lr_reductions < 0 || lambda1_thresh <= 0 || max_threshold_sweeps < 1)
        throw Error("lbm config: all fields must be positive");
    if (s_min <= 0 || s_min >= 1) throw Error("lbm config: s_min must lie in (0,1)");
}

nlohmann::json LbmConfig::to_json() const {
    return {{"lambda1_soft", lambda1_soft},
            {"lambda2_soft", lambda2_soft},
            {"steepness", steepness},
            {"soft_lr", soft_lr},
            {"soft_lr_factor", soft_lr_factor},
            {"soft_lr_patience", soft_lr_patience},
            {"max_soft_iterations", max_soft_iterations},
            {"max_soft_lr_reductions", max_soft_lr_reductions},
            {"lambda1_thresh", lambda1_thresh},
            {"s_min", s_min},
            {"max_threshold_sweeps", max_threshold_sweeps},
            {"rmsprop_decay", rmsprop_decay},
            {"rmsprop_epsilon", rmsprop_epsilon}};
}

LbmConfig LbmConfig::from_json(const nlohmann::json& j) {
    LbmConfig cfg;
    if (j.contains("preset")) {
        std::string p = j.at("preset").get<std::string>();
        if (p == "appendix_b")
            cfg = appendix_b();
        else if (p != "default")
            throw Error("lbm config: unknown preset '" + p + "'", ErrorKind::usage);
    }
    cfg.lambda1_soft = j.value("lambda1_soft", cfg.lambda1_soft);
    cfg.lambda2_soft = j.value("lambda2_soft", cfg.lambda2_soft);
    cfg.steepness = j.value("steepness", cfg.steepness);
    cfg.soft_lr = j.value("soft_lr", cfg.soft_lr);
    cfg.soft_lr_factor = j.value("soft_lr_factor", cfg.soft_lr_factor);
    cfg.soft_lr_patience = j.value("soft_lr_patience", cfg.soft_lr_patience);
    cfg.max_soft_iterations = j.value("max_soft_iterations", cfg.max_soft_iterations);
    cfg.max_soft_lr_reductions = j.value("max_soft_lr_reductions", cfg.max_soft_lr_reductions);
    cfg.lambda1_thresh = j.value("lambda1_thresh", cfg.lambda1_thresh);
    cfg.s_min = j.value("s_min", cfg.s_min);
    cfg.max_threshold_sweeps = j.value("max_threshold_sweeps", cfg.max_threshold_sweeps);
    cfg.rmsprop_decay = j.value("rmsprop_decay", cfg.rmsprop_decay);
    cfg.rmsprop_epsilon = j.value("rmsprop_epsilon", cfg.rmsprop_epsilon);
    cfg.validate();
    return cfg;
}

namespace {

inline double safe_log(double v) { return std::log(std::clamp(v, 1e-12, 1.0)); }

}  // namespace

SoftMask optimize_soft_mask(const ModelParams& model, const Eigen::MatrixXd& x,
                            const LbmConfig& cfg) {
    cfg.validate();
    if (x.cols() < 1) throw Error("optimize_soft_mask: empty encounter");
    const int n = static_cast<int>(x.rows());
    const int t = static_cast<int>(x.cols());
    const double a = cfg.steepness;

    SoftMask soft;
    soft.logits = Eigen::MatrixXd::Ones(n, t);
    soft.mask = Eigen::MatrixXd::Ones(n, t);

    Eigen::MatrixXd trainable = (x.array() != 0.0).cast<double>().matrix();
    const double n_trainable = trainable.sum();
    if (n_trainable == 0.0) return soft;  // nothing to mask; all-ones mask stands

    auto mask_from_logits = [&](const Eigen::MatrixXd& z) {
        Eigen::MatrixXd m = (1.0 / (1.0 + (-a * z.array()).exp())).matrix();
        // pinned positions stay exactly one
        return (trainable.array() * m.array() + (1.0 - trainable.array())).matrix();
    };

    const double t_inv = 1.0 / static_cast<double>(t);
    Eigen::VectorXd mean_grad = Eigen::VectorXd::Constant(t, t_inv);

    auto objective = [&](const Eigen::MatrixXd& m, Eigen::VectorXd& y_out) {
        Eigen::MatrixXd masked = x.cwiseProduct(m);
        LstmRunner runner(model);
        y_out = runner.forward(masked);
        double f_term = y_out.mean();
        double l1 = 0.0, h = 0.0;
        for (int c = 0; c < t; ++c) {
            for (int r = 0; r < n; ++r) {
                if (trainable(r, c) == 0.0) continue;
                double mv = m(r, c);
                l1 += 1.0 - mv;
                double target = mv > 0.5 ? 1.0 : 0.0;
                h += -(target * safe_log(mv) + (1.0 - target) * safe_log(1.0 - mv));
            }
        }
        return f_term + cfg.lambda1_soft * l1 + cfg.lambda2_soft * h;
    };

    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(n, t);
    double lr = cfg.soft_lr;
    double best = std::numeric_limits<double>::infinity();
    int stall = 0;

    Eigen::VectorXd y;
    for (int iter = 0; iter < cfg.max_soft_iterations; ++iter) {
        double loss = objective(soft.mask, y);
        if (!std::isfinite(loss)) throw Error("optimize_soft_mask: non-finite loss");
        soft.loss_trace.push_back(loss);
        soft.iterations = iter + 1;

        if (loss < best) {
            best = loss;
            stall = 0;
        } else {
            ++stall;
            if (stall >= cfg.soft_lr_patience) {
                lr /= cfg.soft_lr_factor;
                ++soft.lr_reductions;
                stall = 0;
                if (soft.lr_reductions >= cfg.max_soft_lr_reductions) break;
            }
        }

        // dL/dm = x .* d(mean f)/d(x.*m) - lambda1; the cross-entropy term
        // collapses to lambda2 * A * (m - [m > 0.5]) in logit space.
        Eigen::MatrixXd g_input = input_gradients(model, x.cwiseProduct(soft.mask), mean_grad);
        Eigen::MatrixXd dm = x.cwiseProduct(g_input).array() - cfg.lambda1_soft;
        Eigen::MatrixXd sig_prime =
            a * soft.mask.array() * (1.0 - soft.mask.array());
        Eigen::MatrixXd target = (soft.mask.array() > 0.5).cast<double>();
        Eigen::MatrixXd dz =
            (dm.array() * sig_prime.array() +
             cfg.lambda2_soft * a * (soft.mask.array() - target.array()))
                .matrix()
                .cwiseProduct(trainable);

        v = cfg.rmsprop_decay * v + (1.0 - cfg.rmsprop_decay) * dz.cwiseProduct(dz);
        soft.logits -=
            lr * dz.cwiseQuotient((v.cwiseSqrt().array() + cfg.rmsprop_epsilon).matrix());
        soft.mask = mask_from_logits(soft.logits);
    }
    return soft;
}

std::pair<ThresholdMask, BinaryMask> binarize_mask(const ModelParams& model,
                                                   const Eigen::MatrixXd& x, const SoftMask& soft,
                                                   const LbmConfig& cfg) {
    cfg.validate();
    const int n = static_cast<int>(x.rows());
    const int t = static_cast<int>(x.cols());
    Eigen::MatrixXd trainable = (x.array() != 0.0).cast<double>().matrix();

    ThresholdMask threshold;
    threshold.eta = Eigen::VectorXd::Constant(t, 0.5);
    BinaryMask binary;

    auto mask_at = [&](int r, int c, double eta_c) {
        if (trainable(r, c) == 0.0) return 1.0;
        return soft.mask(r, c) > eta_c ? 1.0 : 0.0;
    };

    // current masked input and bookkeeping under the working threshold vector
    Eigen::MatrixXd x_masked(n, t);
    double zero_count = 0.0;  // masked-out trainable positions
    for (int c = 0; c < t; ++c)
        for (int r = 0; r < n; ++r) {
            double m = mask_at(r, c, threshold.eta[c]);
            x_masked(r, c) = x(r, c) * m;
            if (trainable(r, c) != 0.0 && m == 0.0) zero_count += 1.0;
        }

    LstmRunner runner(model);
    Eigen::VectorXd y_cur = runner.forward(x_masked);
    const double t_inv = 1.0 / static_cast<double>(t);
    double obj_cur = y_cur.mean() + cfg.lambda1_thresh * zero_count;

    Eigen::VectorXd y_cand(t);
    Eigen::VectorXd col_backup(n);

    for (int sweep = 0; sweep < cfg.max_threshold_sweeps; ++sweep) {
        binary.sweeps_run = sweep + 1;
        auto states = runner.states_before(x_masked);

        // prefix_sum[k] = sum of y_cur[0..k-1]; columns below the sweep cursor
        // never change within a sweep, so these stay valid as t descends.
        std::vector<double> prefix_sum(static_cast<size_t>(t) + 1, 0.0);
        for (int k = 0; k < t; ++k) prefix_sum[static_cast<size_t>(k) + 1] = prefix_sum[k] + y_cur[k];

        for (int c = t - 1; c >= 0; --c) {
            // candidate thresholds: the unique relaxed-mask values at this column
            std::vector<double> candidates;
            for (int r = 0; r < n; ++r)
                if (trainable(r, c) != 0.0) candidates.push_back(soft.mask(r, c));
            std::sort(candidates.begin(), candidates.end());
            candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
            if (candidates.empty()) continue;

            for (double u : candidates) {
                if (u == threshold.eta[c]) continue;
                col_backup = x_masked.col(c);
                double zero_delta = 0.0;
                for (int r = 0; r < n; ++r) {
                    double m_old = mask_at(r, c, threshold.eta[c]);
                    double m_new = mask_at(r, c, u);
                    x_masked(r, c) = x(r, c) * m_new;
                    if (trainable(r, c) != 0.0) zero_delta += (m_new == 0.0) - (m_old == 0.0);
                }
                y_cand = y_cur;
                runner.forward_from(states[static_cast<size_t>(c)], x_masked, c, y_cand);
                double tail = 0.0;
                for (int k = c; k < t; ++k) tail += y_cand[k];
                double obj = (prefix_sum[static_cast<size_t>(c)] + tail) * t_inv +
                             cfg.lambda1_thresh * (zero_count + zero_delta);
                if (obj < obj_cur) {
                    obj_cur = obj;
                    threshold.eta[c] = u;
                    zero_count += zero_delta;
                    y_cur = y_cand;
                    binary.accepted_objectives.push_back(obj);
                } else {
                    x_masked.col(c) = col_backup;
                }
            }
        }

        y_cur = runner.forward(x_masked);
        if (y_cur.maxCoeff() < cfg.s_min) {
            binary.converged = true;
            break;
        }
    }

    binary.mask.resize(n, t);
    for (int c = 0; c < t; ++c)
        for (int r = 0; r < n; ++r) binary.mask(r, c) = mask_at(r, c, threshold.eta[c]);
    binary.masked_trajectory = y_cur;
    return {std::move(threshold), std::move(binary)};
}

AttributionMatrix explain_lbm(const ModelParams& model, const DtPatientMatrix& x,
                              const LbmConfig& cfg, const std::vector<std::string>& feature_order) {
    auto t0 = std::chrono::steady_clock::now();

    AttributionMatrix a;
    a.encounter_id = x.encounter_id;
    a.method = "lbm";
    a.feature_order = feature_order;
    a.config_echo = cfg.to_json();

    if (x.values.isZero(0.0)) {
        // nothing to mask and nothing to attribute
        a.values = Eigen::MatrixXd::Zero(x.values.rows(), x.values.cols());
        a.converged = true;
        LstmRunner runner(model);
        Eigen::VectorXd y = runner.forward(x.values);
        a.extra = {{"trivial", true},
                   {"soft_iterations", 0},
                   {"soft_lr_reductions", 0},
                   {"threshold_sweeps", 0},
                   {"masked_trajectory", std::vector<double>(y.data(), y.data() + y.size())}};
        a.wall_clock_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return a;
    }

    SoftMask soft = optimize_soft_mask(model, x.values, cfg);
    auto [threshold, binary] = binarize_mask(model, x.values, soft, cfg);

    a.values = Eigen::MatrixXd::Ones(x.values.rows(), x.values.cols()) - binary.mask;
    a.converged = binary.converged;
    const auto& y = binary.masked_trajectory;
    a.extra = {{"trivial", false},
               {"soft_iterations", soft.iterations},
               {"soft_lr_reductions", soft.lr_reductions},
               {"threshold_sweeps", binary.sweeps_run},
               {"masked_trajectory", std::vector<double>(y.data(), y.data() + y.size())}};
    a.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return a;
}

}  // namespace romx
