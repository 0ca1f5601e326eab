#include "dualcut/condition.hpp"

#include <stdexcept>
#include <string>

namespace dualcut {

const char* context_template_name(ContextTemplate t) {
    switch (t) {
        case ContextTemplate::JudgmentAfterInstruction: return "judgment-after-instruction";
        case ContextTemplate::JudgmentBeforeResponse: return "judgment-before-response";
    }
    throw std::logic_error("invalid context template value");
}

ContextTemplate context_template_from_name(const std::string& s) {
    if (s == "judgment-after-instruction") return ContextTemplate::JudgmentAfterInstruction;
    if (s == "judgment-before-response") return ContextTemplate::JudgmentBeforeResponse;
    throw std::invalid_argument("unknown context template \"" + s + "\"");
}

std::vector<TokenId> assemble_context(std::span<const TokenId> instruction,
                                      const std::optional<std::vector<TokenId>>& judgment,
                                      ContextTemplate tpl, int context_len, int response_len) {
    std::vector<TokenId> ctx;
    ctx.reserve(instruction.size() + (judgment ? judgment->size() : 0) + 4);
    ctx.push_back(kBos);
    auto push_instruction = [&] {
        ctx.push_back(kIns);
        ctx.insert(ctx.end(), instruction.begin(), instruction.end());
    };
    auto push_judgment = [&] {
        ctx.push_back(kJud);
        ctx.insert(ctx.end(), judgment->begin(), judgment->end());
    };
    if (!judgment) {
        push_instruction();
    } else if (tpl == ContextTemplate::JudgmentAfterInstruction) {
        push_instruction();
        push_judgment();
    } else {
        push_judgment();
        push_instruction();
    }
    ctx.push_back(kRes);

    const std::size_t total = ctx.size() + static_cast<std::size_t>(response_len);
    if (total > static_cast<std::size_t>(context_len))
        throw std::invalid_argument("context of " + std::to_string(ctx.size()) + " plus response of " +
                                    std::to_string(response_len) + " tokens exceeds context_len " +
                                    std::to_string(context_len));
    return ctx;
}

ResolvedJudgments resolve_judgments(const AlignmentTriplet& t, const Vocab& v) {
    t.validate();
    ResolvedJudgments r;
    if (t.judgment_pos) {
        r.pos = v.encode(*t.judgment_pos);
    } else {
        r.pos = v.encode(kCanonicalPositiveJudgment);
        r.pos_synthetic = true;
    }
    if (t.judgment_neg) {
        r.neg = v.encode(*t.judgment_neg);
    } else {
        r.neg = v.encode(kCanonicalNegativeJudgment);
        r.neg_synthetic = true;
    }
    return r;
}

ProbabilityTriple response_probs(const Model& m, const AlignmentTriplet& t, ContextTemplate tpl,
                                 const Vocab& v) {
    const auto instruction = v.encode(t.instruction);
    const auto response = v.encode(t.response);
    if (response.empty()) throw std::invalid_argument("response encodes to zero tokens");
    const auto judgments = resolve_judgments(t, v);
    const int n = static_cast<int>(response.size());
    const int ctx_len = m.config().context_len;

    const auto plain = assemble_context(instruction, std::nullopt, tpl, ctx_len, n);
    const auto with_neg = assemble_context(instruction, judgments.neg, tpl, ctx_len, n);
    const auto with_pos = assemble_context(instruction, judgments.pos, tpl, ctx_len, n);

    ProbabilityTriple p;
    p.p_plain = m.forward_probs(plain, response);
    p.p_neg = m.forward_probs(with_neg, response);
    p.p_pos = m.forward_probs(with_pos, response);
    return p;
}

}  // namespace dualcut
