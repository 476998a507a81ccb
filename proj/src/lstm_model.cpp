#include "lstm_model.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "common.hpp"
#include "matrix_io.hpp"

namespace romx {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double clamp_prob(double p) { return std::clamp(p, 1e-12, 1.0 - 1e-12); }

void fill_glorot(Eigen::MatrixXd& m, double fan_in, double fan_out, Rng& rng) {
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
}

}  // namespace

ModelConfig ModelConfig::paper_scale(int input_size, uint64_t seed) {
    ModelConfig cfg;
    cfg.input_size = input_size;
    cfg.hidden_sizes = {128, 256, 128};
    cfg.seed = seed;
    return cfg;
}

ModelConfig ModelConfig::desk_scale(int input_size, uint64_t seed) {
    ModelConfig cfg;
    cfg.input_size = input_size;
    cfg.hidden_sizes = {16, 32, 16};
    cfg.seed = seed;
    return cfg;
}

void ModelConfig::validate() const {
    if (input_size < 1) throw Error("model config: input_size must be >= 1");
    if (hidden_sizes.empty()) throw Error("model config: at least one hidden layer");
    for (int h : hidden_sizes)
        if (h < 1) throw Error("model config: hidden sizes must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw Error("model config: dropout must be in [0,1)");
    if (l2 < 0.0) throw Error("model config: l2 must be >= 0");
}

nlohmann::json ModelConfig::to_json() const {
    return {{"input_size", input_size}, {"hidden_sizes", hidden_sizes},
            {"dropout", dropout},       {"l2", l2},
            {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.input_size = j.at("input_size").get<int>();
    cfg.hidden_sizes = j.at("hidden_sizes").get<std::vector<int>>();
    cfg.dropout = j.value("dropout", 0.2);
    cfg.l2 = j.value("l2", 1e-5);
    cfg.seed = j.value("seed", uint64_t{0});
    cfg.validate();
    return cfg;
}

ModelParams init_model(const ModelConfig& cfg) {
    cfg.validate();
    Rng rng(mix64(cfg.seed ^ 0x6d6f64656cULL));
    ModelParams p;
    p.config = cfg;
    int in = cfg.input_size;
    for (int h : cfg.hidden_sizes) {
        LstmLayerParams layer;
        layer.w_in.resize(4 * h, in);
        layer.w_rec.resize(4 * h, h);
        layer.bias = Eigen::VectorXd::Zero(4 * h);
        fill_glorot(layer.w_in, in, 4.0 * h, rng);
        fill_glorot(layer.w_rec, h, 4.0 * h, rng);
        p.layers.push_back(std::move(layer));
        in = h;
    }
    p.w_out.resize(in);
    {
        Eigen::MatrixXd head(in, 1);
        fill_glorot(head, in, 1.0, rng);
        p.w_out = head.col(0);
    }
    p.b_out = 0.0;
    return p;
}

size_t param_count(const ModelConfig& cfg) {
    size_t n = 0;
    int in = cfg.input_size;
    for (int h : cfg.hidden_sizes) {
        n += static_cast<size_t>(4 * h) * in + static_cast<size_t>(4 * h) * h + 4 * h;
        in = h;
    }
    return n + static_cast<size_t>(in) + 1;
}

// Flat order (shared with the archive payload): per layer w_in row-major,
// w_rec row-major, bias; then head weights, head bias.
Eigen::VectorXd flatten_params(const ModelParams& p) {
    Eigen::VectorXd flat(static_cast<Eigen::Index>(param_count(p.config)));
    Eigen::Index k = 0;
    for (const auto& l : p.layers) {
        for (Eigen::Index r = 0; r < l.w_in.rows(); ++r)
            for (Eigen::Index c = 0; c < l.w_in.cols(); ++c) flat[k++] = l.w_in(r, c);
        for (Eigen::Index r = 0; r < l.w_rec.rows(); ++r)
            for (Eigen::Index c = 0; c < l.w_rec.cols(); ++c) flat[k++] = l.w_rec(r, c);
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) flat[k++] = l.bias[r];
    }
    for (Eigen::Index r = 0; r < p.w_out.size(); ++r) flat[k++] = p.w_out[r];
    flat[k++] = p.b_out;
    return flat;
}

void unflatten_params(ModelParams& p, const Eigen::VectorXd& flat) {
    Eigen::Index k = 0;
    for (auto& l : p.layers) {
        for (Eigen::Index r = 0; r < l.w_in.rows(); ++r)
            for (Eigen::Index c = 0; c < l.w_in.cols(); ++c) l.w_in(r, c) = flat[k++];
        for (Eigen::Index r = 0; r < l.w_rec.rows(); ++r)
            for (Eigen::Index c = 0; c < l.w_rec.cols(); ++c) l.w_rec(r, c) = flat[k++];
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = flat[k++];
    }
    for (Eigen::Index r = 0; r < p.w_out.size(); ++r) p.w_out[r] = flat[k++];
    p.b_out = flat[k++];
    if (k != flat.size()) throw Error("unflatten_params: size mismatch");
}

LstmState initial_state(const ModelConfig& cfg) {
    LstmState s;
    for (int h : cfg.hidden_sizes) {
        s.h.push_back(Eigen::VectorXd::Zero(h));
        s.c.push_back(Eigen::VectorXd::Zero(h));
    }
    return s;
}

LstmRunner::LstmRunner(const ModelParams& params) : params_(&params) {
    for (const auto& l : params.layers) z_.emplace_back(l.bias.size());
}

double LstmRunner::step(LstmState& state, const Eigen::Ref<const Eigen::VectorXd>& col) {
    const auto& p = *params_;
    const Eigen::VectorXd* in = nullptr;
    for (size_t l = 0; l < p.layers.size(); ++l) {
        const auto& layer = p.layers[l];
        const int h = static_cast<int>(layer.w_rec.cols());
        auto& z = z_[l];
        if (l == 0) {
            z.noalias() = layer.w_in * col;
        } else {
            z.noalias() = layer.w_in * (*in);
        }
        z.noalias() += layer.w_rec * state.h[l];
        z += layer.bias;
        auto& hs = state.h[l];
        auto& cs = state.c[l];
        for (int u = 0; u < h; ++u) {
            double ig = sigmoid(z[u]);
            double fg = sigmoid(z[h + u]);
            double gg = std::tanh(z[2 * h + u]);
            double og = sigmoid(z[3 * h + u]);
            cs[u] = fg * cs[u] + ig * gg;
            hs[u] = og * std::tanh(cs[u]);
        }
        in = &state.h[l];
    }
    double logit = p.w_out.dot(*in) + p.b_out;
    return clamp_prob(sigmoid(logit));
}

Eigen::VectorXd LstmRunner::forward(const Eigen::MatrixXd& x) {
    if (x.rows() != params_->config.input_size)
        throw Error("forward: input has " + std::to_string(x.rows()) + " rows, model expects " +
                    std::to_string(params_->config.input_size));
    LstmState s = initial_state(params_->config);
    Eigen::VectorXd y(x.cols());
    for (Eigen::Index t = 0; t < x.cols(); ++t) y[t] = step(s, x.col(t));
    return y;
}

void LstmRunner::forward_from(const LstmState& s0, const Eigen::MatrixXd& x, int c0,
                              Eigen::VectorXd& y_out) {
    LstmState s = s0;
    for (Eigen::Index t = c0; t < x.cols(); ++t) y_out[t] = step(s, x.col(t));
}

std::vector<LstmState> LstmRunner::states_before(const Eigen::MatrixXd& x) {
    std::vector<LstmState> states;
    states.reserve(static_cast<size_t>(x.cols()) + 1);
    LstmState s = initial_state(params_->config);
    states.push_back(s);
    for (Eigen::Index t = 0; t < x.cols(); ++t) {
        step(s, x.col(t));
        states.push_back(s);
    }
    return states;
}

Eigen::VectorXd forward(const ModelParams& params, const Eigen::MatrixXd& x, RunMode mode,
                        Rng* rng) {
    if (mode == RunMode::eval) {
        LstmRunner runner(params);
        return runner.forward(x);
    }
    return forward_cached(params, x, mode, rng).y;
}

ForwardCache forward_cached(const ModelParams& params, const Eigen::MatrixXd& x, RunMode mode,
                            Rng* rng) {
    const auto& cfg = params.config;
    if (x.rows() != cfg.input_size)
        throw Error("forward: input has " + std::to_string(x.rows()) + " rows, model expects " +
                    std::to_string(cfg.input_size));
    const int T = static_cast<int>(x.cols());
    const bool train = mode == RunMode::train && cfg.dropout > 0.0;
    if (mode == RunMode::train && cfg.dropout > 0.0 && rng == nullptr)
        throw Error("forward: train mode with dropout requires an rng");

    const size_t L = params.layers.size();
    ForwardCache cache;
    cache.in.resize(L);
    cache.ig.resize(L);
    cache.fg.resize(L);
    cache.gg.resize(L);
    cache.og.resize(L);
    cache.c.resize(L);
    cache.tanh_c.resize(L);
    cache.h.resize(L);
    cache.dropped.resize(L);
    if (train) cache.drop_mask.resize(L);
    for (size_t l = 0; l < L; ++l) {
        int in_size = static_cast<int>(params.layers[l].w_in.cols());
        int h = static_cast<int>(params.layers[l].w_rec.cols());
        cache.in[l].resize(in_size, T);
        for (auto* m : {&cache.ig[l], &cache.fg[l], &cache.gg[l], &cache.og[l], &cache.c[l],
                        &cache.tanh_c[l], &cache.h[l], &cache.dropped[l]})
            m->resize(h, T);
        if (train) cache.drop_mask[l].resize(h, T);
    }
    cache.logits.resize(T);
    cache.y.resize(T);

    const double keep = 1.0 - cfg.dropout;
    LstmState state = initial_state(cfg);
    Eigen::VectorXd z;
    for (int t = 0; t < T; ++t) {
        for (size_t l = 0; l < L; ++l) {
            const auto& layer = params.layers[l];
            const int h = static_cast<int>(layer.w_rec.cols());
            if (l == 0)
                cache.in[l].col(t) = x.col(t);
            else
                cache.in[l].col(t) = cache.dropped[l - 1].col(t);
            z.noalias() = layer.w_in * cache.in[l].col(t);
            z.noalias() += layer.w_rec * state.h[l];
            z += layer.bias;
            for (int u = 0; u < h; ++u) {
                double ig = sigmoid(z[u]);
                double fg = sigmoid(z[h + u]);
                double gg = std::tanh(z[2 * h + u]);
                double og = sigmoid(z[3 * h + u]);
                double c_new = fg * state.c[l][u] + ig * gg;
                double tc = std::tanh(c_new);
                cache.ig[l](u, t) = ig;
                cache.fg[l](u, t) = fg;
                cache.gg[l](u, t) = gg;
                cache.og[l](u, t) = og;
                cache.c[l](u, t) = c_new;
                cache.tanh_c[l](u, t) = tc;
                state.c[l][u] = c_new;
                state.h[l][u] = og * tc;
                cache.h[l](u, t) = state.h[l][u];
            }
            if (train) {
                for (int u = 0; u < h; ++u)
                    cache.drop_mask[l](u, t) = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
                cache.dropped[l].col(t) =
                    cache.h[l].col(t).cwiseProduct(cache.drop_mask[l].col(t));
            } else {
                cache.dropped[l].col(t) = cache.h[l].col(t);
            }
        }
        cache.logits[t] = params.w_out.dot(cache.dropped[L - 1].col(t)) + params.b_out;
        cache.y[t] = clamp_prob(sigmoid(cache.logits[t]));
    }
    return cache;
}

Gradients Gradients::zeros_like(const ModelParams& p, bool with_input, int t_hours) {
    Gradients g;
    for (const auto& l : p.layers) {
        LstmLayerParams gl;
        gl.w_in = Eigen::MatrixXd::Zero(l.w_in.rows(), l.w_in.cols());
        gl.w_rec = Eigen::MatrixXd::Zero(l.w_rec.rows(), l.w_rec.cols());
        gl.bias = Eigen::VectorXd::Zero(l.bias.size());
        g.layers.push_back(std::move(gl));
    }
    g.w_out = Eigen::VectorXd::Zero(p.w_out.size());
    g.b_out = 0.0;
    if (with_input) g.input = Eigen::MatrixXd::Zero(p.config.input_size, t_hours);
    return g;
}

void backward(const ModelParams& params, const ForwardCache& cache, const Eigen::VectorXd& dlogit,
              bool want_input_grad, Gradients& grads) {
    const int T = static_cast<int>(cache.y.size());
    const size_t L = params.layers.size();
    const bool train = !cache.drop_mask.empty();

    // gradient w.r.t. each layer's post-dropout output
    std::vector<Eigen::MatrixXd> d_out(L);
    d_out[L - 1].noalias() = params.w_out * dlogit.transpose();  // H_last x T
    for (size_t l = 0; l + 1 < L; ++l)
        d_out[l] = Eigen::MatrixXd::Zero(params.layers[l].w_rec.cols(),
                                         T);  // filled by the layer above

    grads.w_out.noalias() += cache.dropped[L - 1] * dlogit;
    grads.b_out += dlogit.sum();

    for (size_t li = L; li-- > 0;) {
        const auto& layer = params.layers[li];
        const int h = static_cast<int>(layer.w_rec.cols());
        auto& gl = grads.layers[li];

        Eigen::VectorXd dh_carry = Eigen::VectorXd::Zero(h);
        Eigen::VectorXd dc_carry = Eigen::VectorXd::Zero(h);
        Eigen::VectorXd dz(4 * h);

        for (int t = T - 1; t >= 0; --t) {
            Eigen::VectorXd dh = d_out[li].col(t);
            if (train) dh = dh.cwiseProduct(cache.drop_mask[li].col(t));
            dh += dh_carry;

            for (int u = 0; u < h; ++u) {
                double ig = cache.ig[li](u, t);
                double fg = cache.fg[li](u, t);
                double gg = cache.gg[li](u, t);
                double og = cache.og[li](u, t);
                double tc = cache.tanh_c[li](u, t);
                double c_prev = t > 0 ? cache.c[li](u, t - 1) : 0.0;

                double do_ = dh[u] * tc;
                double dc = dh[u] * og * (1.0 - tc * tc) + dc_carry[u];
                double di = dc * gg;
                double dg = dc * ig;
                double df = dc * c_prev;
                dc_carry[u] = dc * fg;

                dz[u] = di * ig * (1.0 - ig);
                dz[h + u] = df * fg * (1.0 - fg);
                dz[2 * h + u] = dg * (1.0 - gg * gg);
                dz[3 * h + u] = do_ * og * (1.0 - og);
            }

            gl.w_in.noalias() += dz * cache.in[li].col(t).transpose();
            if (t > 0) gl.w_rec.noalias() += dz * cache.h[li].col(t - 1).transpose();
            gl.bias += dz;

            if (t > 0) dh_carry.noalias() = layer.w_rec.transpose() * dz;

            if (li > 0) {
                d_out[li - 1].col(t).noalias() += layer.w_in.transpose() * dz;
            } else if (want_input_grad) {
                grads.input.col(t).noalias() += layer.w_in.transpose() * dz;
            }
        }
    }
}

Eigen::MatrixXd input_gradients(const ModelParams& params, const Eigen::MatrixXd& x,
                                const Eigen::VectorXd& loss_grad) {
    if (loss_grad.size() != x.cols())
        throw Error("input_gradients: loss_grad length must equal T");
    ForwardCache cache = forward_cached(params, x, RunMode::eval);
    Eigen::VectorXd dlogit =
        loss_grad.cwiseProduct(cache.y.cwiseProduct(Eigen::VectorXd::Ones(cache.y.size()) - cache.y));
    Gradients grads = Gradients::zeros_like(params, true, static_cast<int>(x.cols()));
    backward(params, cache, dlogit, true, grads);
    if (!grads.input.allFinite()) throw Error("input_gradients: non-finite gradient");
    return grads.input;
}

void save_model_archive(const std::filesystem::path& manifest_path, const ModelParams& params,
                        const nlohmann::json& training_summary) {
    std::filesystem::path bin_path = manifest_path;
    bin_path.replace_extension(".bin");

    Eigen::VectorXd flat = flatten_params(params);
    std::vector<float> w(static_cast<size_t>(flat.size()));
    for (Eigen::Index i = 0; i < flat.size(); ++i) w[static_cast<size_t>(i)] = static_cast<float>(flat[i]);

    nlohmann::json shapes = nlohmann::json::array();
    for (const auto& l : params.layers) {
        shapes.push_back({{"w_in", {l.w_in.rows(), l.w_in.cols()}},
                          {"w_rec", {l.w_rec.rows(), l.w_rec.cols()}},
                          {"bias", {l.bias.size()}}});
    }
    nlohmann::json manifest{{"config", params.config.to_json()},
                            {"layer_shapes", shapes},
                            {"seed", params.config.seed},
                            {"weight_count", w.size()},
                            {"weights_file", bin_path.filename().string()},
                            {"training", training_summary}};
    std::ofstream out(manifest_path);
    if (!out) throw Error("cannot write model manifest: " + manifest_path.string());
    out << manifest.dump(2) << '\n';
    write_f32_blob(bin_path, w);
}

ModelParams load_model_archive(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw Error("cannot read model manifest: " + manifest_path.string());
    nlohmann::json manifest;
    in >> manifest;

    ModelConfig cfg = ModelConfig::from_json(manifest.at("config"));
    ModelParams p = init_model(cfg);  // shapes; weights replaced below
    size_t count = manifest.at("weight_count").get<size_t>();
    if (count != param_count(cfg)) throw Error("model manifest: weight count mismatch");
    auto bin_path = manifest_path.parent_path() / manifest.at("weights_file").get<std::string>();
    auto w = read_f32_blob(bin_path, count);
    Eigen::VectorXd flat(static_cast<Eigen::Index>(count));
    for (size_t i = 0; i < count; ++i) flat[static_cast<Eigen::Index>(i)] = w[i];
    unflatten_params(p, flat);
    return p;
}

}  // namespace romx
