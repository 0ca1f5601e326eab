#pragma once

// Shared domain types: alignment records, hyperparameters, per-token
// probability triples, and the line-delimited dataset format.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dualcut {

inline constexpr const char* kToolkitVersion = "0.1.0";

using TokenId = std::int32_t;

enum class Category { AlignP, AlignN, Misalign };

const char* category_name(Category c);            // "align-p" / "align-n" / "misalign"
Category category_from_name(const std::string&);  // throws on unknown name

// Canonical judgment texts substituted when a record carries only one
// polarity; contexts built from them are flagged synthetic in outputs.
inline constexpr const char* kCanonicalPositiveJudgment = "The response is satisfactory.";
inline constexpr const char* kCanonicalNegativeJudgment = "The response is unsatisfactory.";

// One <instruction, response, judgment> record. At least one judgment
// polarity must be present; instruction and response are non-empty.
struct AlignmentTriplet {
    std::string id;
    std::string instruction;
    std::string response;
    std::optional<std::string> judgment_pos;
    std::optional<std::string> judgment_neg;
    Category category = Category::AlignP;

    void validate() const;  // throws std::invalid_argument naming the field

    bool operator==(const AlignmentTriplet&) const = default;
};

// Loss and detection hyperparameters. Defaults make detection demand a
// strict margin (lambdas slightly above 1) and keep the low-probability
// cutoffs near zero. All overridable via config file or CLI flags.
struct Hyperparams {
    double lambda_cut = 1.1;  // margin for the single-contrast criterion
    double lambda1 = 1.1;     // negative set: judged-neg vs judged-pos margin
    double lambda2 = 1.2;     // negative set: judged-neg vs plain margin (also in scale-)
    double lambda3 = 1.1;     // positive set: judged-pos vs judged-neg margin
    double lambda4 = 1.2;     // positive set: judged-pos vs plain margin (also in scale+)
    double sigma1 = 0.001;    // negative set low-probability cutoff
    double sigma2 = 0.001;    // positive set low-probability cutoff
    double alpha = 1.0;       // negative scale amplitude
    double beta = 1.0;        // positive scale amplitude
    double gamma = 1.0;       // exponent of the single-contrast dynamic weight
    double clamp_eps = 1e-7;  // floor for log(1 - p) arguments
};

// Returns h unchanged iff every bound holds; throws naming the field.
Hyperparams validate_hyperparams(const Hyperparams& h);

// Realized-token probabilities for one response under the three contexts:
// plain, negative-judged, positive-judged. All vectors have length n and
// entries strictly inside (0, 1).
struct ProbabilityTriple {
    std::vector<double> p_plain;
    std::vector<double> p_neg;
    std::vector<double> p_pos;

    std::size_t n() const { return p_plain.size(); }
    void validate() const;  // throws on shape or range violations
};

// Dataset IO: one JSON object per line, fields id/instruction/response/
// judgment_pos(optional)/judgment_neg(optional)/category. Unknown fields
// are rejected. Errors name the offending line and field.
std::vector<AlignmentTriplet> load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const std::vector<AlignmentTriplet>& records);

// Single-record JSON codecs used by the dataset files.
std::string triplet_to_json_line(const AlignmentTriplet&);
AlignmentTriplet triplet_from_json_line(const std::string& line);

}  // namespace dualcut
