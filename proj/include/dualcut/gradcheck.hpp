#pragma once

// Finite-difference verification of every loss gradient, end to end through
// the model backward pass, on a micro model small enough to difference every
// parameter. Used by the self-check command and the acceptance suite.

#include <cstdint>
#include <string>
#include <vector>

namespace dualcut {

struct GradCheckReport {
    std::string loss;        // mle, cut_l1, cut_l2, cut_total, dualcut
    double max_rel_err = 0.0;
    std::size_t n_params = 0;
};

inline constexpr double kGradCheckTolerance = 1e-4;
inline constexpr double kGradCheckStep = 1e-5;

// Central differences with h = kGradCheckStep over all parameters of a
// micro model (vocab 9, d_model 8, 1 layer, 2 heads, context 24), against
// the analytic gradients assembled from each loss's dL_dp and the model
// backward pass. Detection sets and scales are frozen at the base point,
// matching how training treats them. Deterministic for a fixed seed.
std::vector<GradCheckReport> run_gradcheck(std::uint64_t seed);

}  // namespace dualcut
