#pragma once

// Built-in decoder-only autoregressive model with exact hand-written
// gradients. Double precision throughout, fixed summation order, seeded
// initialization: two models built from equal configs are bit-identical.
//
// Architecture: token + learned positional embeddings, n_layers of
// (pre-norm causal multi-head attention + GELU feed-forward), final
// layer norm, untied output projection.
//
// Parameter layout (flat, in this order; weights row-major [out][in]):
//   wte [vocab, d]   wpe [ctx, d]
//   per layer: ln1_g ln1_b | w_q b_q w_k b_k w_v b_v | w_o b_o
//              ln2_g ln2_b | w_fc1 b_fc1 (4d) | w_fc2 b_fc2
//   ln_f_g ln_f_b | w_out [vocab, d]
//
// Total parameter count: 2*V*D + T*D + L*(12*D^2 + 13*D) + 2*D
// with V = vocab_size, D = d_model, T = context_len, L = n_layers.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "dualcut/core.hpp"

namespace dualcut {

struct ModelConfig {
    int vocab_size = 0;
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int context_len = 128;
    std::uint64_t seed = 42;

    void validate() const;  // throws std::invalid_argument naming the field
    std::size_t param_count() const;
};

// Flat gradient vector matching the parameter layout.
using GradStore = std::vector<double>;

class Model;
class ForwardPass;

// Adam with bias correction.
struct OptimizerState {
    std::vector<double> m;
    std::vector<double> v;
    double learning_rate = 1e-3;
    double beta_1 = 0.9;
    double beta_2 = 0.999;
    double epsilon_opt = 1e-8;
    std::uint64_t step = 0;

    static OptimizerState init(const Model& model, double learning_rate);
};

class Model {
public:
    // Seeded init; equal configs give bit-identical parameter stores.
    static Model init(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }
    std::span<const double> parameters() const { return params_; }
    std::span<double> parameters_mut() { return params_; }
    std::uint64_t step_count() const { return step_count_; }

    // Teacher-forced probability of each realized target token given
    // context ++ targets[..t]. Context must be non-empty, targets non-empty,
    // combined length <= context_len. Every value strictly inside (0, 1).
    std::vector<double> forward_probs(std::span<const TokenId> context,
                                      std::span<const TokenId> targets) const;

    // Full next-token distribution at every target position (row sums == 1
    // within rounding). Used by tests and greedy decoding.
    std::vector<std::vector<double>> forward_distributions(std::span<const TokenId> context,
                                                           std::span<const TokenId> targets) const;

    // Exact parameter gradients of a scalar loss whose derivative with
    // respect to the realized-token probability at each target position is
    // dL_dp. Layout matches parameters().
    GradStore backward(std::span<const TokenId> context,
                       std::span<const TokenId> targets,
                       std::span<const double> dL_dp) const;

    // As backward, but accumulates scale * grad into an existing store.
    void backward_accumulate(std::span<const TokenId> context,
                             std::span<const TokenId> targets,
                             std::span<const double> dL_dp,
                             double scale,
                             GradStore& into) const;

    // Runs the forward once and keeps the activations, so probabilities and
    // a later backward pass share one traversal. The pass references this
    // model; keep the model alive and unchanged while using it.
    ForwardPass forward_pass(std::span<const TokenId> context,
                             std::span<const TokenId> targets) const;

    // Adam step; throws "non-finite gradient" on bad input. Deterministic.
    void apply_update(const GradStore& grads, OptimizerState& opt);

    // Deep independent copy.
    Model snapshot() const { return *this; }

    // Binary format: "DCUTCKPT" magic, u32 version, config, step count,
    // parameters as little-endian f64 in layout order.
    void save_checkpoint(const std::filesystem::path& path) const;
    static Model load_checkpoint(const std::filesystem::path& path);

    // Argmax continuation of the context, for demos. Ties break to the
    // lowest token id.
    std::vector<TokenId> greedy_decode(std::span<const TokenId> context, int max_new) const;

private:
    Model() = default;

    ModelConfig config_;
    std::vector<double> params_;
    std::uint64_t step_count_ = 0;

    friend struct ParamLayout;
    friend class ForwardPass;
};

class ForwardPass {
public:
    ~ForwardPass();
    ForwardPass(ForwardPass&&) noexcept;
    ForwardPass& operator=(ForwardPass&&) noexcept;
    ForwardPass(const ForwardPass&) = delete;
    ForwardPass& operator=(const ForwardPass&) = delete;

    // Realized-token probabilities, clamped strictly inside (0, 1).
    std::vector<double> probs() const;

    // Backprop through the cached activations; accumulates scale * grad.
    void backward_accumulate(std::span<const double> dL_dp, double scale, GradStore& into) const;

private:
    friend class Model;
    struct Impl;
    explicit ForwardPass(std::unique_ptr<Impl> impl);
    std::unique_ptr<Impl> impl_;
};

inline constexpr char kCheckpointMagic[8] = {'D', 'C', 'U', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace dualcut
