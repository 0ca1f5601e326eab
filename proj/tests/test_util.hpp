#pragma once

// Shared helpers for the unit tests: deterministic generators and a small
// model overfit on a single sequence, reused as an oracle by several suites.

#include <random>
#include <vector>

#include "dualcut/rand.hpp"
#include "dualcut/tinylm.hpp"

namespace testutil {

struct MemorizedModel {
    dualcut::Model model;
    std::vector<dualcut::TokenId> context;
    std::vector<dualcut::TokenId> targets;
};

// Overfits a tiny model on one fixed sequence with plain Adam + MLE until the
// realized-token probabilities saturate. Cached across calls.
inline const MemorizedModel& memorized_model() {
    static const MemorizedModel cached = [] {
        dualcut::ModelConfig cfg;
        cfg.vocab_size = 16;
        cfg.d_model = 16;
        cfg.n_layers = 1;
        cfg.n_heads = 2;
        cfg.context_len = 24;
        cfg.seed = 7;

        MemorizedModel mm{dualcut::Model::init(cfg),
                          {1},  // <BOS>
                          {8, 9, 10, 11, 8, 9, 10, 11}};

        auto opt = dualcut::OptimizerState::init(mm.model, 0.01);
        const std::size_t n = mm.targets.size();
        for (int step = 0; step < 400; ++step) {
            auto probs = mm.model.forward_probs(mm.context, mm.targets);
            std::vector<double> dL_dp(n);
            for (std::size_t t = 0; t < n; ++t) dL_dp[t] = -1.0 / (static_cast<double>(n) * probs[t]);
            auto grads = mm.model.backward(mm.context, mm.targets, dL_dp);
            mm.model.apply_update(grads, opt);
        }
        return mm;
    }();
    return cached;
}

inline std::vector<double> random_probs(std::mt19937_64& rng, std::size_t n, double lo = 0.02,
                                        double hi = 0.98) {
    std::vector<double> v(n);
    for (auto& p : v) p = lo + (hi - lo) * dualcut::uniform01(rng);
    return v;
}

}  // namespace testutil
