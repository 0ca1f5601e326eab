#pragma once

// Assembles the plain and judged conditioning contexts and computes the
// three realized-token probability vectors for a response under a model.

#include <optional>
#include <span>
#include <vector>

#include "dualcut/core.hpp"
#include "dualcut/tinylm.hpp"
#include "dualcut/tokenizer.hpp"

namespace dualcut {

// Judged-context layouts. Either way the judgment precedes every response
// token so it conditions all positions.
//   JudgmentAfterInstruction: <BOS> <INS> x <JUD> j <RES>   (default)
//   JudgmentBeforeResponse:   <BOS> <JUD> j <INS> x <RES>
enum class ContextTemplate { JudgmentAfterInstruction, JudgmentBeforeResponse };

const char* context_template_name(ContextTemplate t);
ContextTemplate context_template_from_name(const std::string&);

// Plain context when j is absent: <BOS> <INS> x <RES>. Throws when the
// assembled context plus response_len would overflow the model context.
std::vector<TokenId> assemble_context(std::span<const TokenId> instruction,
                                      const std::optional<std::vector<TokenId>>& judgment,
                                      ContextTemplate tpl,
                                      int context_len,
                                      int response_len);

// Judgment token sequences for both polarities, synthesizing the canonical
// text for a missing one. The synthetic flags feed output provenance.
struct ResolvedJudgments {
    std::vector<TokenId> pos;
    std::vector<TokenId> neg;
    bool pos_synthetic = false;
    bool neg_synthetic = false;
};

ResolvedJudgments resolve_judgments(const AlignmentTriplet& t, const Vocab& v);

// Three teacher-forced passes over the same response tokens: plain,
// negative-judged, positive-judged. Never mutates the model.
ProbabilityTriple response_probs(const Model& m, const AlignmentTriplet& t, ContextTemplate tpl,
                                 const Vocab& v);

}  // namespace dualcut
