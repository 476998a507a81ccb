#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "rng.hpp"

namespace romx {

struct ModelConfig {
    int input_size = 0;
    std::vector<int> hidden_sizes{16, 32, 16};
    double dropout = 0.2;
    double l2 = 1e-5;
    uint64_t seed = 0;

    // hidden sizes from the full-scale configuration
    static ModelConfig paper_scale(int input_size, uint64_t seed);
    static ModelConfig desk_scale(int input_size, uint64_t seed);

    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

// Gate order throughout: [input, forget, candidate, output].
struct LstmLayerParams {
    Eigen::MatrixXd w_in;   // 4H x in
    Eigen::MatrixXd w_rec;  // 4H x H
    Eigen::VectorXd bias;   // 4H
};

struct ModelParams {
    ModelConfig config;
    std::vector<LstmLayerParams> layers;
    Eigen::VectorXd w_out;  // H_last
    double b_out = 0.0;
};

// Glorot-uniform weights (per-matrix fan in/out), zero biases, deterministic
// in config.seed.
ModelParams init_model(const ModelConfig& cfg);

enum class RunMode { train, eval };

size_t param_count(const ModelConfig& cfg);
Eigen::VectorXd flatten_params(const ModelParams& p);
void unflatten_params(ModelParams& p, const Eigen::VectorXd& flat);

// Recurrent state after some prefix of columns.
struct LstmState {
    std::vector<Eigen::VectorXd> h, c;
};

LstmState initial_state(const ModelConfig& cfg);

// Reusable forward engine (eval semantics, no dropout). Owns scratch buffers
// so explainers can run many trajectories without reallocating.
class LstmRunner {
public:
    explicit LstmRunner(const ModelParams& params);

    // advance one column through the stack, return y_t
    double step(LstmState& state, const Eigen::Ref<const Eigen::VectorXd>& col);

    // y for all T columns
    Eigen::VectorXd forward(const Eigen::MatrixXd& x);

    // resume at column c0 with a saved state; fills y_out[c0..T-1]
    void forward_from(const LstmState& s0, const Eigen::MatrixXd& x, int c0,
                      Eigen::VectorXd& y_out);

    // states_before[t] = state after consuming columns 0..t-1 (size T+1)
    std::vector<LstmState> states_before(const Eigen::MatrixXd& x);

    const ModelParams& params() const { return *params_; }

private:
    const ModelParams* params_;
    std::vector<Eigen::VectorXd> z_;  // per-layer pre-activation scratch
};

// Per-timestep mortality probabilities. Train mode applies inverted dropout
// to each layer's output, resampled per timestep; rng is required then.
Eigen::VectorXd forward(const ModelParams& params, const Eigen::MatrixXd& x, RunMode mode,
                        Rng* rng = nullptr);

// Activations recorded for backpropagation.
struct ForwardCache {
    std::vector<Eigen::MatrixXd> in;                    // layer input a_t (post-dropout below)
    std::vector<Eigen::MatrixXd> ig, fg, gg, og;        // gate activations, H x T
    std::vector<Eigen::MatrixXd> c, tanh_c, h, dropped; // cell, tanh(cell), hidden, post-dropout
    std::vector<Eigen::MatrixXd> drop_mask;             // scaled masks (train mode only)
    Eigen::VectorXd logits;
    Eigen::VectorXd y;
};

ForwardCache forward_cached(const ModelParams& params, const Eigen::MatrixXd& x, RunMode mode,
                            Rng* rng = nullptr);

struct Gradients {
    std::vector<LstmLayerParams> layers;
    Eigen::VectorXd w_out;
    double b_out = 0.0;
    Eigen::MatrixXd input;  // N x T, filled when requested

    static Gradients zeros_like(const ModelParams& p, bool with_input, int t_hours);
};

// Reverse-mode pass. dlogit holds dLoss/dlogit_t; accumulates parameter
// gradients into `grads` and optionally writes input gradients.
void backward(const ModelParams& params, const ForwardCache& cache, const Eigen::VectorXd& dlogit,
              bool want_input_grad, Gradients& grads);

// d(sum_t loss_grad[t] * y_t) / dx with eval-mode semantics.
Eigen::MatrixXd input_gradients(const ModelParams& params, const Eigen::MatrixXd& x,
                                const Eigen::VectorXd& loss_grad);

// JSON manifest + float32 weight payload.
void save_model_archive(const std::filesystem::path& manifest_path, const ModelParams& params,
                        const nlohmann::json& training_summary);
ModelParams load_model_archive(const std::filesystem::path& manifest_path);

}  // namespace romx
