#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "dualcut/detect.hpp"
#include "dualcut/rand.hpp"
#include "test_util.hpp"

using namespace dualcut;

namespace {

ProbabilityTriple triple(std::vector<double> plain, std::vector<double> neg,
                         std::vector<double> pos) {
    ProbabilityTriple p;
    p.p_plain = std::move(plain);
    p.p_neg = std::move(neg);
    p.p_pos = std::move(pos);
    return p;
}

ProbabilityTriple random_triple(std::mt19937_64& rng, std::size_t n) {
    ProbabilityTriple p;
    p.p_plain = testutil::random_probs(rng, n);
    p.p_neg = testutil::random_probs(rng, n);
    p.p_pos = testutil::random_probs(rng, n);
    return p;
}

}  // namespace

TEST_CASE("cut_detect hand values") {
    Hyperparams h;

    SUBCASE("0.6 - 1.1*0.2 = 0.38 > 0 puts the position in U") {
        auto d = cut_detect(triple({0.3}, {0.6}, {0.2}), h);
        CHECK(d.u_neg == std::vector<std::size_t>{0});
        CHECK(d.u_pos.empty());
        CHECK(d.scale_neg.at(0) == doctest::Approx(0.6).epsilon(1e-12));
    }

    SUBCASE("equal judged probabilities never fire with lambda > 1") {
        auto d = cut_detect(triple({0.4, 0.2}, {0.5, 0.3}, {0.5, 0.3}), h);
        CHECK(d.u_neg.empty());
    }

    SUBCASE("weight is alpha * p_neg^gamma") {
        h.alpha = 2.0;
        h.gamma = 2.0;
        auto d = cut_detect(triple({0.3}, {0.6}, {0.2}), h);
        CHECK(d.scale_neg.at(0) == doctest::Approx(2.0 * 0.36).epsilon(1e-12));
    }
}

TEST_CASE("dualcut_detect hand values") {
    Hyperparams h;

    SUBCASE("negative-set example with scale 1/(1+e^-0.8)") {
        auto d = dualcut_detect(triple({0.3}, {0.6}, {0.2}), h);
        REQUIRE(d.u_neg == std::vector<std::size_t>{0});
        // ratio 0.6/0.3 = 2.0, sigmoid(2.0 - 1.2) = 0.6899744811276125
        CHECK(d.scale_neg.at(0) == doctest::Approx(0.6899744811276125).epsilon(1e-10));
    }

    SUBCASE("positive-set example with scale 1/(1+e^-0.8) + 1") {
        auto d = dualcut_detect(triple({0.4}, {0.1}, {0.8}), h);
        REQUIRE(d.u_pos == std::vector<std::size_t>{0});
        CHECK(d.u_neg.empty());
        CHECK(d.scale_pos.at(0) == doctest::Approx(1.6899744811276125).epsilon(1e-10));
    }

    SUBCASE("sub-sigma probabilities are excluded regardless of margins") {
        auto d = dualcut_detect(triple({0.0001}, {0.0005}, {0.0001}), h);
        CHECK(d.u_neg.empty());
    }
}

TEST_CASE("dualcut reduces to cut when lambda2 = 0 and sigma1 = 0") {
    // raw hyperparams bypass the IO-boundary validation deliberately
    Hyperparams h;
    h.lambda2 = 0.0;
    h.sigma1 = 0.0;
    Hyperparams hc;
    hc.lambda_cut = h.lambda1;

    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 2000; ++trial) {
        auto p = random_triple(rng, 1 + uniform_below(rng, 12));
        CHECK(dualcut_detect(p, h).u_neg == cut_detect(p, hc).u_neg);
    }
}

TEST_CASE("u_neg and u_pos are disjoint when lambda1*lambda3 >= 1") {
    Hyperparams h;  // 1.1 * 1.1 > 1
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 2000; ++trial) {
        auto d = dualcut_detect(random_triple(rng, 1 + uniform_below(rng, 12)), h);
        for (std::size_t t : d.u_neg) CHECK(!d.in_u_pos(t));
        CHECK(d.overlap_resolved == 0);
    }
}

TEST_CASE("overlap with lambda1*lambda3 < 1 resolves to the larger margin") {
    Hyperparams h;
    h.lambda1 = 0.5;
    h.lambda3 = 0.5;
    // p_neg=0.6, p_pos=0.4: neg margin 0.6-0.2=0.4, pos margin 0.4-0.3=0.1
    auto d = dualcut_detect(triple({0.2}, {0.6}, {0.4}), h);
    CHECK(d.u_neg == std::vector<std::size_t>{0});
    CHECK(d.u_pos.empty());
    CHECK(d.overlap_resolved == 1);

    // symmetric probabilities tie on margin and go to u_neg
    auto tie = dualcut_detect(triple({0.2}, {0.5}, {0.5}), h);
    CHECK(tie.u_neg == std::vector<std::size_t>{0});
    CHECK(tie.overlap_resolved == 1);
}

TEST_CASE("scale bounds and monotonicity") {
    Hyperparams h;
    h.alpha = 1.5;
    h.beta = 2.5;
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 2000; ++trial) {
        auto d = dualcut_detect(random_triple(rng, 1 + uniform_below(rng, 10)), h);
        for (const auto& [t, s] : d.scale_neg) {
            CHECK(s > 0.0);
            CHECK(s < h.alpha);
        }
        for (const auto& [t, s] : d.scale_pos) {
            CHECK(s > 1.0);
            CHECK(s < 1.0 + h.beta);
        }
    }

    // for fixed p_plain, growing p_neg (resp. p_pos) never lowers the scale
    for (int trial = 0; trial < 500; ++trial) {
        const double plain = 0.05 + 0.5 * uniform01(rng);
        double lo = 0.3 + 0.3 * uniform01(rng);
        double hi = lo + (0.97 - lo) * uniform01(rng);
        auto d_lo = dualcut_detect(triple({plain}, {lo}, {0.01}), h);
        auto d_hi = dualcut_detect(triple({plain}, {hi}, {0.01}), h);
        if (d_lo.scale_neg.count(0) && d_hi.scale_neg.count(0))
            CHECK(d_hi.scale_neg.at(0) >= d_lo.scale_neg.at(0));
        auto e_lo = dualcut_detect(triple({plain}, {0.01}, {lo}), h);
        auto e_hi = dualcut_detect(triple({plain}, {0.01}, {hi}), h);
        if (e_lo.scale_pos.count(0) && e_hi.scale_pos.count(0))
            CHECK(e_hi.scale_pos.at(0) >= e_lo.scale_pos.at(0));
    }
}

TEST_CASE("permuting positions permutes the detection sets") {
    Hyperparams h;
    std::mt19937_64 rng(24);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + uniform_below(rng, 8);
        auto p = random_triple(rng, n);
        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i) perm[i] = i;
        deterministic_shuffle(perm, rng);

        ProbabilityTriple q;
        q.p_plain.resize(n);
        q.p_neg.resize(n);
        q.p_pos.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            q.p_plain[perm[i]] = p.p_plain[i];
            q.p_neg[perm[i]] = p.p_neg[i];
            q.p_pos[perm[i]] = p.p_pos[i];
        }

        auto dp = dualcut_detect(p, h);
        auto dq = dualcut_detect(q, h);
        std::vector<std::size_t> mapped;
        for (std::size_t t : dp.u_neg) mapped.push_back(perm[t]);
        std::sort(mapped.begin(), mapped.end());
        CHECK(mapped == dq.u_neg);
    }
}

TEST_CASE("detect_batch equals the per-element loop") {
    Hyperparams h;
    std::mt19937_64 rng(25);
    std::vector<ProbabilityTriple> ps;
    for (int i = 0; i < 1000; ++i) ps.push_back(random_triple(rng, 1 + uniform_below(rng, 6)));

    auto batch = detect_batch(ps, h, DetectMethod::DualCUT);
    REQUIRE(batch.size() == ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i) {
        auto single = dualcut_detect(ps[i], h);
        CHECK(batch[i].u_neg == single.u_neg);
        CHECK(batch[i].u_pos == single.u_pos);
        CHECK(batch[i].scale_neg == single.scale_neg);
        CHECK(batch[i].scale_pos == single.scale_pos);
    }

    CHECK(detect_batch({}, h, DetectMethod::CUT).empty());
}

TEST_CASE("detection results serialize and parse losslessly") {
    Hyperparams h;
    std::mt19937_64 rng(26);
    for (int trial = 0; trial < 100; ++trial) {
        auto d = dualcut_detect(random_triple(rng, 1 + uniform_below(rng, 8)), h);
        auto parsed = DetectionResult::from_json(d.to_json());
        CHECK(parsed.method == d.method);
        CHECK(parsed.u_neg == d.u_neg);
        CHECK(parsed.u_pos == d.u_pos);
        CHECK(parsed.scale_neg == d.scale_neg);
        CHECK(parsed.scale_pos == d.scale_pos);
        CHECK(parsed.n == d.n);
    }

    CHECK_THROWS_WITH_AS((void)DetectionResult::from_json(R"({"method":"cut"})"),
                         doctest::Contains("missing field"), std::invalid_argument);
}
