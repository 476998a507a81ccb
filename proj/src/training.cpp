#include "training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "common.hpp"
#include "metrics.hpp"

namespace romx {

TrainConfig TrainConfig::paper() { return TrainConfig{}; }

TrainConfig TrainConfig::desk() {
    TrainConfig cfg;
    cfg.learning_rate = 2e-3;
    cfg.batch_size = 32;
    return cfg;
}

void TrainConfig::validate() const {
    if (learning_rate <= 0 || batch_size < 1 || patience < 1 || lr_factor <= 0 ||
        max_lr_reductions < 0 || max_epochs < 1 || rmsprop_decay <= 0 || rmsprop_epsilon <= 0)
        throw Error("train config: all fields must be positive (patience >= 1)");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"learning_rate", learning_rate},
            {"batch_size", batch_size},
            {"patience", patience},
            {"lr_factor", lr_factor},
            {"max_lr_reductions", max_lr_reductions},
            {"max_epochs", max_epochs},
            {"rmsprop_decay", rmsprop_decay},
            {"rmsprop_epsilon", rmsprop_epsilon}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.patience = j.value("patience", cfg.patience);
    cfg.lr_factor = j.value("lr_factor", cfg.lr_factor);
    cfg.max_lr_reductions = j.value("max_lr_reductions", cfg.max_lr_reductions);
    cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
    cfg.rmsprop_decay = j.value("rmsprop_decay", cfg.rmsprop_decay);
    cfg.rmsprop_epsilon = j.value("rmsprop_epsilon", cfg.rmsprop_epsilon);
    cfg.validate();
    return cfg;
}

namespace {

double bce(double p, double label) {
    return -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
}

double trajectory_bce(const Eigen::VectorXd& y, bool label) {
    double target = label ? 1.0 : 0.0;
    double sum = 0.0;
    for (Eigen::Index t = 0; t < y.size(); ++t) sum += bce(y[t], target);
    return sum / static_cast<double>(y.size());
}

double l2_penalty(const ModelParams& p) {
    double sum = 0.0;
    for (const auto& l : p.layers) sum += l.w_in.squaredNorm() + l.w_rec.squaredNorm();
    sum += p.w_out.squaredNorm();
    return p.config.l2 * sum;
}

void add_l2_gradient(const ModelParams& p, Gradients& g) {
    double two_l2 = 2.0 * p.config.l2;
    if (two_l2 == 0.0) return;
    for (size_t l = 0; l < p.layers.size(); ++l) {
        g.layers[l].w_in += two_l2 * p.layers[l].w_in;
        g.layers[l].w_rec += two_l2 * p.layers[l].w_rec;
    }
    g.w_out += two_l2 * p.w_out;
}

Eigen::VectorXd flatten_grads(const ModelParams& shape, const Gradients& g) {
    ModelParams tmp;
    tmp.config = shape.config;
    tmp.layers = g.layers;
    tmp.w_out = g.w_out;
    tmp.b_out = g.b_out;
    return flatten_params(tmp);
}

}  // namespace

double sequence_bce(const ModelParams& params, const DtPatientMatrix& x) {
    Eigen::VectorXd y = forward(params, x.values, RunMode::eval);
    return trajectory_bce(y, x.label);
}

TrainResult train(const ModelParams& init, std::span<const DtPatientMatrix> train_set,
                  std::span<const DtPatientMatrix> val_set, const TrainConfig& cfg,
                  uint64_t seed) {
    cfg.validate();
    if (train_set.empty() || val_set.empty())
        throw Error("train: training and validation splits must be non-empty", ErrorKind::usage);
    for (const auto& m : train_set)
        if (m.values.rows() != init.config.input_size)
            throw Error("train: encounter " + m.encounter_id + " does not match model input size");

    Rng rng(derive_seed(seed, "train"));
    ModelParams params = init;

    // Batches of length-sorted encounters; the visit order is reshuffled each
    // epoch. Sequences are accumulated one at a time, which yields the same
    // gradients as zero-padding with the padded timesteps masked from the loss.
    std::vector<size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (train_set[a].t_hours() != train_set[b].t_hours())
            return train_set[a].t_hours() < train_set[b].t_hours();
        return train_set[a].encounter_id < train_set[b].encounter_id;
    });
    std::vector<std::vector<size_t>> batches;
    for (size_t i = 0; i < order.size(); i += static_cast<size_t>(cfg.batch_size)) {
        std::vector<size_t> b(order.begin() + static_cast<ptrdiff_t>(i),
                              order.begin() +
                                  static_cast<ptrdiff_t>(std::min(
                                      i + static_cast<size_t>(cfg.batch_size), order.size())));
        batches.push_back(std::move(b));
    }

    const Eigen::Index n_params = static_cast<Eigen::Index>(param_count(params.config));
    Eigen::VectorXd theta = flatten_params(params);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n_params);

    TrainResult result;
    result.best_val_bce = std::numeric_limits<double>::infinity();
    double lr = cfg.learning_rate;
    int stall = 0;

    std::vector<size_t> batch_order(batches.size());
    std::iota(batch_order.begin(), batch_order.end(), 0);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        rng.shuffle(batch_order);
        double epoch_loss = 0.0;
        size_t n_batches = 0;

        for (size_t bi : batch_order) {
            const auto& batch = batches[bi];
            Gradients grads = Gradients::zeros_like(params, false, 0);
            double batch_bce = 0.0;
            for (size_t si : batch) {
                const auto& seq = train_set[si];
                ForwardCache cache = forward_cached(params, seq.values, RunMode::train, &rng);
                double target = seq.label ? 1.0 : 0.0;
                const double t_inv = 1.0 / static_cast<double>(seq.t_hours());
                batch_bce += trajectory_bce(cache.y, seq.label);
                Eigen::VectorXd dlogit(seq.t_hours());
                for (int t = 0; t < seq.t_hours(); ++t)
                    dlogit[t] = (cache.y[t] - target) * t_inv;
                backward(params, cache, dlogit, false, grads);
            }
            const double b_inv = 1.0 / static_cast<double>(batch.size());
            for (auto& gl : grads.layers) {
                gl.w_in *= b_inv;
                gl.w_rec *= b_inv;
                gl.bias *= b_inv;
            }
            grads.w_out *= b_inv;
            grads.b_out *= b_inv;
            add_l2_gradient(params, grads);

            double loss = batch_bce * b_inv + l2_penalty(params);
            if (!std::isfinite(loss))
                throw Error("train: divergence (non-finite loss) at epoch " +
                            std::to_string(epoch));
            epoch_loss += loss;
            ++n_batches;

            Eigen::VectorXd g = flatten_grads(params, grads);
            v = cfg.rmsprop_decay * v + (1.0 - cfg.rmsprop_decay) * g.cwiseProduct(g);
            theta -= lr * g.cwiseQuotient(
                              v.cwiseSqrt() +
                              Eigen::VectorXd::Constant(n_params, cfg.rmsprop_epsilon));
            unflatten_params(params, theta);
        }

        // validation metrics on eval-mode trajectories
        double val_bce = 0.0;
        std::vector<double> scores;
        std::vector<uint8_t> labels;
        for (const auto& seq : val_set) {
            Eigen::VectorXd y = forward(params, seq.values, RunMode::eval);
            val_bce += trajectory_bce(y, seq.label);
            scores.push_back(y[y.size() - 1]);
            labels.push_back(seq.label ? 1 : 0);
        }
        val_bce /= static_cast<double>(val_set.size());

        bool has_pos = std::find(labels.begin(), labels.end(), uint8_t{1}) != labels.end();
        bool has_neg = std::find(labels.begin(), labels.end(), uint8_t{0}) != labels.end();
        double val_auc = std::numeric_limits<double>::quiet_NaN();
        if (has_pos && has_neg) val_auc = compute_auc(scores, labels);

        EpochLog log;
        log.epoch = epoch;
        log.lr = lr;
        log.train_loss = epoch_loss / static_cast<double>(n_batches);
        log.val_bce = val_bce;
        log.val_auc = val_auc;
        log.improved = val_bce < result.best_val_bce;
        result.history.push_back(log);

        if (log.improved) {
            result.best_val_bce = val_bce;
            result.best_epoch = epoch;
            result.params = params;
            stall = 0;
        } else {
            ++stall;
            if (stall >= cfg.patience) {
                lr /= cfg.lr_factor;
                ++result.lr_reductions;
                stall = 0;
                if (result.lr_reductions >= cfg.max_lr_reductions) {
                    result.stopped_reason = "lr_reductions_exhausted";
                    break;
                }
            }
        }
    }
    if (result.stopped_reason.empty()) result.stopped_reason = "max_epochs";
    if (result.best_epoch < 0) {
        result.params = params;  // never improved; keep the last weights
        result.best_epoch = static_cast<int>(result.history.size()) - 1;
    }
    return result;
}

nlohmann::json TrainResult::summary_json() const {
    nlohmann::json h = nlohmann::json::array();
    for (const auto& e : history) {
        h.push_back({{"epoch", e.epoch},
                     {"lr", e.lr},
                     {"train_loss", e.train_loss},
                     {"val_bce", e.val_bce},
                     {"val_auc", std::isnan(e.val_auc) ? nlohmann::json() : nlohmann::json(e.val_auc)},
                     {"improved", e.improved}});
    }
    return {{"epochs_run", history.size()},
            {"best_epoch", best_epoch},
            {"best_val_bce", best_val_bce},
            {"lr_reductions", lr_reductions},
            {"stopped_reason", stopped_reason},
            {"history", h}};
}

}  // namespace romx
