#include "dualcut/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dualcut {

namespace {

void check_open_unit(const std::vector<double>& p, const char* name) {
    if (p.empty()) throw std::invalid_argument(std::string(name) + " must be non-empty");
    for (double v : p)
        if (!(v > 0.0 && v < 1.0))
            throw std::invalid_argument(std::string(name) + " entry outside (0,1)");
}

}  // namespace

LossOutput mle_loss(const std::vector<double>& p_plain) {
    check_open_unit(p_plain, "p_plain");
    const double n = static_cast<double>(p_plain.size());
    LossOutput out;
    out.dL_dp_plain.resize(p_plain.size());
    double sum = 0.0;
    for (std::size_t t = 0; t < p_plain.size(); ++t) {
        sum += std::log(p_plain[t]);
        out.dL_dp_plain[t] = -1.0 / (n * p_plain[t]);
    }
    out.value = -sum / n;
    return out;
}

LossOutput cut_l1(const ProbabilityTriple& p, const DetectionResult& d, const Hyperparams& h) {
    p.validate();
    if (d.n != p.n()) throw std::invalid_argument("detection length does not match probabilities");

    const double n = static_cast<double>(p.n());
    LossOutput out;
    out.dL_dp_plain.resize(p.n());
    double sum = 0.0;
    for (std::size_t t = 0; t < p.n(); ++t) {
        if (d.in_u_neg(t)) {
            const double w = d.scale_neg.at(t);
            // floor keeps the gradient bounded without flipping its direction
            const double q = std::max(1.0 - p.p_plain[t], h.clamp_eps);
            sum += w * std::log(q);
            out.dL_dp_plain[t] = w / (n * q);
        } else {
            sum += std::log(p.p_plain[t]);
            out.dL_dp_plain[t] = -1.0 / (n * p.p_plain[t]);
        }
    }
    out.value = -sum / n;
    return out;
}

LossOutput cut_l2(const std::vector<double>& p_plain, const std::vector<double>& p_judged,
                  Category category) {
    if (p_plain.size() != p_judged.size())
        throw std::invalid_argument("p_plain and p_judged must have equal length");
    if (category == Category::Misalign)
        throw std::invalid_argument("L2 undefined for Misalign");

    if (category == Category::AlignP) return mle_loss(p_plain);

    // AlignN: supervise the negatively-judged context; the plain-context
    // derivative is identically zero
    check_open_unit(p_judged, "p_judged");
    const double n = static_cast<double>(p_judged.size());
    LossOutput out;
    out.dL_dp_plain.assign(p_plain.size(), 0.0);
    out.dL_dp_judged.emplace(p_judged.size());
    double sum = 0.0;
    for (std::size_t t = 0; t < p_judged.size(); ++t) {
        sum += std::log(p_judged[t]);
        (*out.dL_dp_judged)[t] = -1.0 / (n * p_judged[t]);
    }
    out.value = -sum / n;
    return out;
}

LossOutput cut_total(const LossOutput& l1, const LossOutput& l2) {
    if (l1.dL_dp_plain.size() != l2.dL_dp_plain.size())
        throw std::invalid_argument("loss outputs have mismatched lengths");
    LossOutput out;
    out.value = l1.value + l2.value;
    out.dL_dp_plain.resize(l1.dL_dp_plain.size());
    for (std::size_t t = 0; t < out.dL_dp_plain.size(); ++t)
        out.dL_dp_plain[t] = l1.dL_dp_plain[t] + l2.dL_dp_plain[t];

    if (l1.dL_dp_judged && l2.dL_dp_judged) {
        if (l1.dL_dp_judged->size() != l2.dL_dp_judged->size())
            throw std::invalid_argument("judged derivative lengths mismatch");
        out.dL_dp_judged.emplace(l1.dL_dp_judged->size());
        for (std::size_t t = 0; t < out.dL_dp_judged->size(); ++t)
            (*out.dL_dp_judged)[t] = (*l1.dL_dp_judged)[t] + (*l2.dL_dp_judged)[t];
    } else if (l1.dL_dp_judged) {
        out.dL_dp_judged = l1.dL_dp_judged;
    } else if (l2.dL_dp_judged) {
        out.dL_dp_judged = l2.dL_dp_judged;
    }
    return out;
}

LossOutput dualcut_loss(const ProbabilityTriple& p, const DetectionResult& d, const Hyperparams& h) {
    p.validate();
    if (d.n != p.n()) throw std::invalid_argument("detection length does not match probabilities");
    for (std::size_t t : d.u_neg)
        if (d.in_u_pos(t))
            throw std::invalid_argument("u_neg and u_pos overlap; detection must resolve membership");

    const double n = static_cast<double>(p.n());
    LossOutput out;
    out.dL_dp_plain.resize(p.n());
    double sum = 0.0;
    for (std::size_t t = 0; t < p.n(); ++t) {
        const double pp = p.p_plain[t];
        if (d.in_u_neg(t)) {
            const double w = d.scale_neg.at(t);
            const double q = std::max(1.0 - pp, h.clamp_eps);
            sum += w * std::log(q);
            out.dL_dp_plain[t] = w / (n * q);
        } else if (d.in_u_pos(t)) {
            const double w = d.scale_pos.at(t);
            sum += w * std::log(pp);
            out.dL_dp_plain[t] = -w / (n * pp);
        } else {
            sum += std::log(pp);
            out.dL_dp_plain[t] = -1.0 / (n * pp);
        }
    }
    out.value = -sum / n;
    return out;
}

}  // namespace dualcut
