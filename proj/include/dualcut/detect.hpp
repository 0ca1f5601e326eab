#pragma once

// Contrastive token detection and dynamic weighting, computed from realized
// token probabilities alone. All operations are pure.

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "dualcut/core.hpp"

namespace dualcut {

enum class DetectMethod { CUT, DualCUT };

const char* detect_method_name(DetectMethod m);
DetectMethod detect_method_from_name(const std::string&);

struct DetectionResult {
    DetectMethod method = DetectMethod::CUT;
    std::vector<std::size_t> u_neg;            // sorted positions flagged erroneous
    std::vector<std::size_t> u_pos;            // sorted positions flagged satisfactory (empty for CUT)
    std::map<std::size_t, double> scale_neg;   // keyed exactly by u_neg
    std::map<std::size_t, double> scale_pos;   // keyed exactly by u_pos
    std::size_t n = 0;                         // response length
    // positions that met both criteria and were resolved by margin (only
    // possible when lambda1*lambda3 < 1); informational, not serialized
    std::size_t overlap_resolved = 0;

    bool in_u_neg(std::size_t t) const;
    bool in_u_pos(std::size_t t) const;

    // Serialization schema: method, u_neg, u_pos, scale_neg, scale_pos, n.
    std::string to_json() const;
    static DetectionResult from_json(const std::string&);
};

// Single-contrast detection: u_neg = { t : p_neg - lambda_cut * p_pos > 0 },
// weight alpha * p_neg^gamma per member.
DetectionResult cut_detect(const ProbabilityTriple& p, const Hyperparams& h);

// Dual-contrast detection. Negative set: the triple intersection of
// p_neg - lambda1*p_pos > 0, p_neg - lambda2*p_plain > 0, p_neg > sigma1;
// positive set symmetric with lambda3, lambda4, sigma2. Weights:
//   scale_neg = alpha / (1 + exp(-(p_neg/p_plain - lambda2)))
//   scale_pos = beta  / (1 + exp(-(p_pos/p_plain - lambda4))) + 1
// If a position satisfies both criteria (possible when lambda1*lambda3 < 1)
// it resolves to the side with the larger margin, ties to the negative set.
DetectionResult dualcut_detect(const ProbabilityTriple& p, const Hyperparams& h);

std::vector<DetectionResult> detect_batch(const std::vector<ProbabilityTriple>& ps,
                                          const Hyperparams& h, DetectMethod method);

}  // namespace dualcut
