#pragma once

// Token-level saliency maps: per-token detection membership, scale
// magnitude, and the three conditioned probabilities, rendered as terminal
// text, a self-contained HTML page, or a structured-data document.

#include <map>
#include <string>
#include <vector>

#include "dualcut/core.hpp"
#include "dualcut/detect.hpp"
#include "dualcut/tokenizer.hpp"

namespace dualcut {

enum class Membership { Positive, Negative, Neutral };

const char* membership_name(Membership m);  // "pos" / "neg" / "neu"
Membership membership_from_name(const std::string&);

struct SaliencyMap {
    std::vector<std::string> tokens;
    std::vector<Membership> membership;
    std::vector<double> scale;  // scale+ for Positive, scale- for Negative, exactly 1.0 for Neutral
    std::vector<double> p_plain;
    std::vector<double> p_pos;
    std::vector<double> p_neg;
    std::map<std::string, std::string> meta;  // method, hyperparameters, provenance flags

    std::size_t size() const { return tokens.size(); }
    void validate() const;

    bool operator==(const SaliencyMap&) const = default;
};

// Membership and scales transfer from d; tokens decode through the vocab.
SaliencyMap build_map(const AlignmentTriplet& t, const ProbabilityTriple& p,
                      const DetectionResult& d, const Vocab& v);

// Same, for records that already carry display tokens (probability traces).
SaliencyMap build_map_from_tokens(const std::vector<std::string>& tokens,
                                  const ProbabilityTriple& p, const DetectionResult& d);

// One line of tokens, negative members on red background, positive on
// green, intensity bucketed into 5 levels by floor(ratio*5) clamped to 0..4
// where ratio is scale-/alpha resp. (scale+ - 1)/beta; plus a legend line.
// Deterministic bytes for a fixed map.
std::string render_ansi(const SaliencyMap& map, const Hyperparams& h);

// Self-contained HTML document, one inline-styled span per token, hover
// text with the probabilities and scale. No external references.
std::string render_html(const SaliencyMap& map);
std::string render_html(const std::vector<SaliencyMap>& maps);

// Lossless structured-data round-trip (schema: tokens, membership, scale,
// p_plain, p_pos, p_neg, meta).
std::string to_data(const SaliencyMap& map);
SaliencyMap from_data(const std::string& text);

// 5-level intensity bucket used by the terminal renderer.
int ansi_bucket(double ratio);

}  // namespace dualcut
