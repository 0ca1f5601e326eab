#pragma once

// Scalar losses over realized-token probabilities and their per-position
// derivatives, ready to feed Model::backward. Detection memberships and
// scales are constants with respect to optimization: they come from a
// DetectionResult computed on a frozen reference, and no gradient flows
// through them.

#include <optional>
#include <vector>

#include "dualcut/core.hpp"
#include "dualcut/detect.hpp"

namespace dualcut {

struct LossOutput {
    double value = 0.0;
    std::vector<double> dL_dp_plain;
    // present only when the loss term optimizes the judged-context
    // probability (the supervised term on erroneous-response records)
    std::optional<std::vector<double>> dL_dp_judged;
};

// value = -(1/N) sum log p;  dL/dp_t = -1/(N p_t). Entries must lie in (0,1).
LossOutput mle_loss(const std::vector<double>& p_plain);

// Likelihood on positions outside u_neg, weighted unlikelihood on members:
// value = -(1/N)[ sum_{t not in U} log p_plain
//               + sum_{t in U} scale_neg_t * log(1 - p_plain) ]
// with (1 - p) floored at clamp_eps. The weight is d's scale_neg (equal to
// alpha * p_neg^gamma under the precondition that d = cut_detect(p, h)).
LossOutput cut_l1(const ProbabilityTriple& p, const DetectionResult& d, const Hyperparams& h);

// Indicator-routed supervision: correct responses (AlignP) take MLE on the
// plain context; erroneous ones (AlignN) take MLE on the context judged
// with the negative feedback, gradient in dL_dp_judged. Misalign records
// are rejected.
LossOutput cut_l2(const std::vector<double>& p_plain, const std::vector<double>& p_judged,
                  Category category);

// Elementwise sum of the two terms.
LossOutput cut_total(const LossOutput& l1, const LossOutput& l2);

// value = -(1/N)[ sum_{U-} scale-_t log(1 - p_plain)
//               + sum_{U+} scale+_t log p_plain
//               + sum_else  log p_plain ]
// with (1 - p) floored at clamp_eps; scales from d as constants. Throws if
// d's sets overlap (detection must have resolved that).
LossOutput dualcut_loss(const ProbabilityTriple& p, const DetectionResult& d, const Hyperparams& h);

}  // namespace dualcut
