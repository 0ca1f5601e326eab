#include "dualcut/detect.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace dualcut {

using nlohmann::json;

const char* detect_method_name(DetectMethod m) {
    switch (m) {
        case DetectMethod::CUT: return "cut";
        case DetectMethod::DualCUT: return "dualcut";
    }
    throw std::logic_error("invalid detect method value");
}

DetectMethod detect_method_from_name(const std::string& s) {
    if (s == "cut") return DetectMethod::CUT;
    if (s == "dualcut") return DetectMethod::DualCUT;
    throw std::invalid_argument("unknown detection method \"" + s + "\"");
}

bool DetectionResult::in_u_neg(std::size_t t) const {
    return std::binary_search(u_neg.begin(), u_neg.end(), t);
}

bool DetectionResult::in_u_pos(std::size_t t) const {
    return std::binary_search(u_pos.begin(), u_pos.end(), t);
}

namespace {

// Saturated arguments would round to exactly 1.0 in double precision; the
// scale bounds are strict open intervals, so cap one ulp below.
double sigmoid(double x) {
    return std::min(1.0 / (1.0 + std::exp(-x)), std::nextafter(1.0, 0.0));
}

void check_finite_ratio(double ratio) {
    if (!std::isfinite(ratio)) throw std::runtime_error("non-finite probability ratio in detection");
}

}  // namespace

DetectionResult cut_detect(const ProbabilityTriple& p, const Hyperparams& h) {
    p.validate();
    DetectionResult d;
    d.method = DetectMethod::CUT;
    d.n = p.n();
    for (std::size_t t = 0; t < d.n; ++t) {
        if (p.p_neg[t] - h.lambda_cut * p.p_pos[t] > 0.0) {
            d.u_neg.push_back(t);
            d.scale_neg[t] = h.alpha * std::pow(p.p_neg[t], h.gamma);
        }
    }
    return d;
}

DetectionResult dualcut_detect(const ProbabilityTriple& p, const Hyperparams& h) {
    p.validate();
    DetectionResult d;
    d.method = DetectMethod::DualCUT;
    d.n = p.n();
    for (std::size_t t = 0; t < d.n; ++t) {
        const double neg_margin = p.p_neg[t] - h.lambda1 * p.p_pos[t];
        const bool in_neg = neg_margin > 0.0 && p.p_neg[t] - h.lambda2 * p.p_plain[t] > 0.0 &&
                            p.p_neg[t] > h.sigma1;
        const double pos_margin = p.p_pos[t] - h.lambda3 * p.p_neg[t];
        const bool in_pos = pos_margin > 0.0 && p.p_pos[t] - h.lambda4 * p.p_plain[t] > 0.0 &&
                            p.p_pos[t] > h.sigma2;

        bool take_neg = in_neg;
        bool take_pos = in_pos;
        if (in_neg && in_pos) {
            // both criteria fired (possible when lambda1*lambda3 < 1); the
            // larger margin wins, ties go to the negative set
            ++d.overlap_resolved;
            take_neg = neg_margin >= pos_margin;
            take_pos = !take_neg;
        }

        if (take_neg) {
            const double ratio = p.p_neg[t] / p.p_plain[t];
            check_finite_ratio(ratio);
            d.u_neg.push_back(t);
            d.scale_neg[t] = h.alpha * sigmoid(ratio - h.lambda2);
        } else if (take_pos) {
            const double ratio = p.p_pos[t] / p.p_plain[t];
            check_finite_ratio(ratio);
            d.u_pos.push_back(t);
            d.scale_pos[t] = h.beta * sigmoid(ratio - h.lambda4) + 1.0;
        }
    }
    return d;
}

std::vector<DetectionResult> detect_batch(const std::vector<ProbabilityTriple>& ps,
                                          const Hyperparams& h, DetectMethod method) {
    std::vector<DetectionResult> out;
    out.reserve(ps.size());
    for (const auto& p : ps)
        out.push_back(method == DetectMethod::CUT ? cut_detect(p, h) : dualcut_detect(p, h));
    return out;
}

std::string DetectionResult::to_json() const {
    json j;
    j["method"] = detect_method_name(method);
    j["u_neg"] = u_neg;
    j["u_pos"] = u_pos;
    json sn = json::object();
    for (const auto& [t, s] : scale_neg) sn[std::to_string(t)] = s;
    json sp = json::object();
    for (const auto& [t, s] : scale_pos) sp[std::to_string(t)] = s;
    j["scale_neg"] = sn;
    j["scale_pos"] = sp;
    j["n"] = n;
    return j.dump();
}

DetectionResult DetectionResult::from_json(const std::string& text) {
    json j = json::parse(text);
    for (const char* key : {"method", "u_neg", "u_pos", "scale_neg", "scale_pos", "n"})
        if (!j.contains(key))
            throw std::invalid_argument(std::string("missing field \"") + key + "\"");

    DetectionResult d;
    d.method = detect_method_from_name(j["method"].get<std::string>());
    d.u_neg = j["u_neg"].get<std::vector<std::size_t>>();
    d.u_pos = j["u_pos"].get<std::vector<std::size_t>>();
    for (const auto& [key, val] : j["scale_neg"].items())
        d.scale_neg[std::stoul(key)] = val.get<double>();
    for (const auto& [key, val] : j["scale_pos"].items())
        d.scale_pos[std::stoul(key)] = val.get<double>();
    d.n = j["n"].get<std::size_t>();

    if (!std::is_sorted(d.u_neg.begin(), d.u_neg.end()) ||
        !std::is_sorted(d.u_pos.begin(), d.u_pos.end()))
        throw std::invalid_argument("detection sets must be sorted");
    if (d.scale_neg.size() != d.u_neg.size() || d.scale_pos.size() != d.u_pos.size())
        throw std::invalid_argument("scale maps must be keyed exactly by their sets");
    for (std::size_t t : d.u_neg)
        if (t >= d.n || !d.scale_neg.count(t))
            throw std::invalid_argument("u_neg entry out of range or missing scale");
    for (std::size_t t : d.u_pos)
        if (t >= d.n || !d.scale_pos.count(t))
            throw std::invalid_argument("u_pos entry out of range or missing scale");
    return d;
}

}  // namespace dualcut
