#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "dualcut/core.hpp"

using namespace dualcut;

namespace {

AlignmentTriplet sample_triplet(const std::string& id) {
    AlignmentTriplet t;
    t.id = id;
    t.instruction = "u1 u2 u3";
    t.response = "u1 u2 u4";
    t.judgment_neg = "The response is unsatisfactory.";
    t.category = Category::AlignN;
    return t;
}

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("dataset load preserves order and round-trips") {
    auto path = temp_file("core_ds.jsonl");
    std::vector<AlignmentTriplet> records = {sample_triplet("a"), sample_triplet("b"),
                                             sample_triplet("c")};
    records[1].judgment_pos = "The response is satisfactory.";
    records[1].judgment_neg.reset();
    records[1].category = Category::AlignP;
    save_dataset(path, records);

    auto loaded = load_dataset(path);
    REQUIRE(loaded.size() == 3);
    CHECK(loaded == records);
    CHECK(loaded[0].id == "a");
    CHECK(loaded[1].id == "b");
    CHECK(loaded[2].id == "c");
    std::filesystem::remove(path);
}

TEST_CASE("empty dataset file loads as empty list") {
    auto path = temp_file("core_empty.jsonl");
    std::ofstream(path).close();
    CHECK(load_dataset(path).empty());
    std::filesystem::remove(path);
}

TEST_CASE("unknown category is rejected with the line number") {
    auto path = temp_file("core_badcat.jsonl");
    {
        std::ofstream out(path);
        out << triplet_to_json_line(sample_triplet("ok")) << "\n";
        out << R"({"id":"x","instruction":"a","response":"b","judgment_neg":"bad","category":"align-x"})"
            << "\n";
    }
    try {
        load_dataset(path);
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("unknown category") != std::string::npos);
        CHECK(msg.find("line 2") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("records missing both judgments are rejected") {
    auto path = temp_file("core_nojudge.jsonl");
    {
        std::ofstream out(path);
        out << R"({"id":"x","instruction":"a","response":"b","category":"align-p"})" << "\n";
    }
    CHECK_THROWS_WITH_AS((void)load_dataset(path),
                         doctest::Contains("judgment"), std::runtime_error);
    std::filesystem::remove(path);
}

TEST_CASE("unknown fields are rejected") {
    CHECK_THROWS_WITH_AS(
        (void)triplet_from_json_line(
            R"({"id":"x","instruction":"a","response":"b","judgment_neg":"j","category":"align-n","extra":1})"),
        doctest::Contains("unknown field"), std::invalid_argument);
}

TEST_CASE("hyperparameter validation") {
    Hyperparams h;

    SUBCASE("defaults pass unchanged") {
        auto out = validate_hyperparams(h);
        CHECK(out.lambda_cut == 1.1);
        CHECK(out.lambda1 == 1.1);
        CHECK(out.lambda2 == 1.2);
        CHECK(out.lambda3 == 1.1);
        CHECK(out.lambda4 == 1.2);
        CHECK(out.sigma1 == 0.001);
        CHECK(out.sigma2 == 0.001);
        CHECK(out.alpha == 1.0);
        CHECK(out.beta == 1.0);
        CHECK(out.gamma == 1.0);
        CHECK(out.clamp_eps == 1e-7);
    }

    SUBCASE("sigma bound") {
        h.sigma1 = 1.0;
        CHECK_THROWS_WITH_AS((void)validate_hyperparams(h), "sigma1 out of [0,1)",
                             std::invalid_argument);
    }

    SUBCASE("lambda bound") {
        h.lambda1 = 0.0;
        CHECK_THROWS_WITH_AS((void)validate_hyperparams(h), "lambda1 must be > 0",
                             std::invalid_argument);
    }

    SUBCASE("clamp_eps bound") {
        h.clamp_eps = 0.1;
        CHECK_THROWS_AS((void)validate_hyperparams(h), std::invalid_argument);
    }
}

TEST_CASE("probability triple validation") {
    ProbabilityTriple p;
    p.p_plain = {0.5, 0.5};
    p.p_neg = {0.5, 0.5};
    p.p_pos = {0.5};
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.p_pos = {0.5, 1.0};
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.p_pos = {0.5, 0.5};
    CHECK_NOTHROW(p.validate());
}

TEST_CASE("triplet invariants") {
    AlignmentTriplet t = sample_triplet("x");
    CHECK_NOTHROW(t.validate());
    t.judgment_neg.reset();
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
    t = sample_triplet("x");
    t.response.clear();
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
}
