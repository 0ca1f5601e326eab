#include "doctest.h"
#include "dualcut/condition.hpp"
#include "test_util.hpp"

using namespace dualcut;

namespace {

Vocab demo_vocab() { return Vocab::build({"a b good bad"}, 16); }

}  // namespace

TEST_CASE("assemble_context expands the templates") {
    auto v = demo_vocab();
    const auto a = v.encode("a")[0];
    const auto b = v.encode("b")[0];
    const auto good = v.encode("good")[0];

    SUBCASE("plain context") {
        auto ctx = assemble_context(v.encode("a b"), std::nullopt,
                                    ContextTemplate::JudgmentAfterInstruction, 32, 2);
        CHECK(ctx == std::vector<TokenId>{kBos, kIns, a, b, kRes});
    }

    SUBCASE("judged context, judgment after instruction") {
        auto ctx = assemble_context(v.encode("a"), v.encode("good"),
                                    ContextTemplate::JudgmentAfterInstruction, 32, 1);
        CHECK(ctx == std::vector<TokenId>{kBos, kIns, a, kJud, good, kRes});
    }

    SUBCASE("judged context, judgment leading") {
        auto ctx = assemble_context(v.encode("a"), v.encode("good"),
                                    ContextTemplate::JudgmentBeforeResponse, 32, 1);
        CHECK(ctx == std::vector<TokenId>{kBos, kJud, good, kIns, a, kRes});
    }

    SUBCASE("determinism") {
        auto c1 = assemble_context(v.encode("a b"), v.encode("good"),
                                   ContextTemplate::JudgmentAfterInstruction, 32, 2);
        auto c2 = assemble_context(v.encode("a b"), v.encode("good"),
                                   ContextTemplate::JudgmentAfterInstruction, 32, 2);
        CHECK(c1 == c2);
    }

    SUBCASE("overflow names the lengths") {
        CHECK_THROWS_WITH_AS(
            (void)assemble_context(v.encode("a b"), std::nullopt,
                                   ContextTemplate::JudgmentAfterInstruction, 6, 2),
            doctest::Contains("exceeds context_len"), std::invalid_argument);
    }
}

TEST_CASE("response_probs shapes and identical-judgment equality") {
    ModelConfig cfg;
    cfg.vocab_size = 16;
    cfg.d_model = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.context_len = 32;
    cfg.seed = 3;
    auto m = Model::init(cfg);
    auto v = demo_vocab();

    AlignmentTriplet t;
    t.id = "t";
    t.instruction = "a b";
    t.response = "b a b";
    t.judgment_pos = "good";
    t.judgment_neg = "bad";
    t.category = Category::AlignN;

    auto p = response_probs(m, t, ContextTemplate::JudgmentAfterInstruction, v);
    CHECK(p.p_plain.size() == 3);
    CHECK(p.p_neg.size() == 3);
    CHECK(p.p_pos.size() == 3);
    CHECK_NOTHROW(p.validate());

    SUBCASE("equal judgment texts give equal conditioned probabilities") {
        t.judgment_neg = "good";
        auto q = response_probs(m, t, ContextTemplate::JudgmentAfterInstruction, v);
        CHECK(q.p_pos == q.p_neg);
    }

    SUBCASE("does not mutate the model") {
        auto before = std::vector<double>(m.parameters().begin(), m.parameters().end());
        (void)response_probs(m, t, ContextTemplate::JudgmentAfterInstruction, v);
        for (std::size_t i = 0; i < before.size(); ++i) CHECK(m.parameters()[i] == before[i]);
    }
}

TEST_CASE("missing judgment polarity is synthesized and flagged") {
    auto v = Vocab::build({"a", kCanonicalPositiveJudgment, kCanonicalNegativeJudgment}, 32);
    AlignmentTriplet t;
    t.id = "t";
    t.instruction = "a";
    t.response = "a";
    t.judgment_neg = "The response is unsatisfactory.";
    t.category = Category::AlignN;

    auto r = resolve_judgments(t, v);
    CHECK(!r.neg_synthetic);
    CHECK(r.pos_synthetic);
    CHECK(r.pos == v.encode(kCanonicalPositiveJudgment));
}

TEST_CASE("memorized model assigns high plain probability to its sequence") {
    const auto& mm = testutil::memorized_model();
    // direct forward on the plain-style context used during memorization
    auto probs = mm.model.forward_probs(mm.context, mm.targets);
    for (double p : probs) CHECK(p > 0.9);
}
