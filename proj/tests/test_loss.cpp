#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "dualcut/loss.hpp"
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

// margins forced negative so every detection set comes out empty
ProbabilityTriple no_margin_triple(std::mt19937_64& rng, std::size_t n) {
    ProbabilityTriple p;
    p.p_plain = testutil::random_probs(rng, n, 0.05, 0.95);
    p.p_neg.resize(n);
    p.p_pos.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double c = 0.5 + 0.4 * uniform01(rng);
        p.p_neg[i] = c * p.p_plain[i];
        p.p_pos[i] = p.p_neg[i];
    }
    return p;
}

// central finite differences on the probability inputs
double fd_derivative(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace

TEST_CASE("mle_loss hand values and derivative") {
    SUBCASE("near-perfect prediction gives near-zero loss") {
        auto out = mle_loss({1.0 - 1e-12});
        CHECK(out.value == doctest::Approx(0.0).epsilon(1e-9));
    }

    SUBCASE("two coin flips cost ln 2") {
        auto out = mle_loss({0.5, 0.5});
        CHECK(out.value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        CHECK(out.dL_dp_plain[0] == doctest::Approx(-1.0).epsilon(1e-12));
    }

    SUBCASE("derivative matches finite differences") {
        std::mt19937_64 rng(31);
        for (int trial = 0; trial < 50; ++trial) {
            auto p = testutil::random_probs(rng, 4);
            auto out = mle_loss(p);
            for (std::size_t t = 0; t < p.size(); ++t) {
                auto f = [&](double x) {
                    auto q = p;
                    q[t] = x;
                    return mle_loss(q).value;
                };
                const double fd = fd_derivative(f, p[t], 1e-6);
                CHECK(out.dL_dp_plain[t] ==
                      doctest::Approx(fd).epsilon(1e-8));
            }
        }
    }

    SUBCASE("entries outside (0,1) are rejected") {
        CHECK_THROWS_AS((void)mle_loss({0.5, 1.0}), std::invalid_argument);
        CHECK_THROWS_AS((void)mle_loss({0.0}), std::invalid_argument);
    }
}

TEST_CASE("cut_l1 hand values and reductions") {
    Hyperparams h;

    SUBCASE("empty U reduces exactly to mle") {
        std::mt19937_64 rng(32);
        for (int trial = 0; trial < 100; ++trial) {
            auto p = no_margin_triple(rng, 1 + uniform_below(rng, 8));
            auto d = cut_detect(p, h);
            REQUIRE(d.u_neg.empty());
            auto l1 = cut_l1(p, d, h);
            auto ml = mle_loss(p.p_plain);
            CHECK(l1.value == ml.value);
            CHECK(l1.dL_dp_plain == ml.dL_dp_plain);
        }
    }

    SUBCASE("single detected position costs -0.6 ln 0.5") {
        auto p = triple({0.5}, {0.6}, {0.2});
        auto d = cut_detect(p, h);
        REQUIRE(d.u_neg.size() == 1);
        auto out = cut_l1(p, d, h);
        CHECK(out.value == doctest::Approx(0.4158883083359672).epsilon(1e-10));
    }

    SUBCASE("derivative matches finite differences on both branches") {
        std::mt19937_64 rng(33);
        for (int trial = 0; trial < 50; ++trial) {
            auto p = triple(testutil::random_probs(rng, 4), testutil::random_probs(rng, 4),
                            testutil::random_probs(rng, 4));
            auto d = cut_detect(p, h);
            auto out = cut_l1(p, d, h);
            for (std::size_t t = 0; t < 4; ++t) {
                auto f = [&](double x) {
                    auto q = p;
                    q.p_plain[t] = x;
                    return cut_l1(q, d, h).value;
                };
                const double fd = fd_derivative(f, p.p_plain[t], 1e-6);
                CHECK(out.dL_dp_plain[t] == doctest::Approx(fd).epsilon(1e-8));
            }
        }
    }
}

TEST_CASE("cut_l2 routes by category") {
    SUBCASE("AlignP takes the plain context") {
        auto out = cut_l2({0.5}, {0.9}, Category::AlignP);
        CHECK(out.value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        CHECK(!out.dL_dp_judged.has_value());
    }

    SUBCASE("AlignN takes the judged context") {
        auto out = cut_l2({0.9}, {0.5}, Category::AlignN);
        CHECK(out.value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        REQUIRE(out.dL_dp_judged.has_value());
        CHECK((*out.dL_dp_judged)[0] == doctest::Approx(-2.0).epsilon(1e-12));
        CHECK(out.dL_dp_plain[0] == 0.0);
    }

    SUBCASE("Misalign is rejected") {
        CHECK_THROWS_WITH_AS((void)cut_l2({0.5}, {0.5}, Category::Misalign),
                             "L2 undefined for Misalign", std::invalid_argument);
    }
}

TEST_CASE("cut_total adds values and derivatives") {
    auto l1 = mle_loss({0.5, 0.25});
    auto l2 = cut_l2({0.5, 0.25}, {0.4, 0.4}, Category::AlignN);

    auto tot = cut_total(l1, l2);
    CHECK(tot.value == doctest::Approx(l1.value + l2.value).epsilon(1e-15));
    for (std::size_t t = 0; t < 2; ++t)
        CHECK(tot.dL_dp_plain[t] == l1.dL_dp_plain[t] + l2.dL_dp_plain[t]);
    REQUIRE(tot.dL_dp_judged.has_value());
    CHECK(*tot.dL_dp_judged == *l2.dL_dp_judged);

    SUBCASE("zero second term is the identity") {
        LossOutput zero;
        zero.value = 0.0;
        zero.dL_dp_plain.assign(2, 0.0);
        auto same = cut_total(l1, zero);
        CHECK(same.value == l1.value);
        CHECK(same.dL_dp_plain == l1.dL_dp_plain);
    }

    SUBCASE("commutative") {
        auto ba = cut_total(l2, l1);
        CHECK(ba.value == tot.value);
        CHECK(ba.dL_dp_plain == tot.dL_dp_plain);
    }

    SUBCASE("length mismatch is rejected") {
        auto shorter = mle_loss({0.5});
        CHECK_THROWS_AS((void)cut_total(l1, shorter), std::invalid_argument);
    }
}

TEST_CASE("dualcut_loss hand values, reductions, and derivative") {
    Hyperparams h;

    SUBCASE("empty sets reduce exactly to mle") {
        std::mt19937_64 rng(34);
        for (int trial = 0; trial < 100; ++trial) {
            auto p = no_margin_triple(rng, 1 + uniform_below(rng, 8));
            auto d = dualcut_detect(p, h);
            REQUIRE(d.u_neg.empty());
            REQUIRE(d.u_pos.empty());
            auto out = dualcut_loss(p, d, h);
            auto ml = mle_loss(p.p_plain);
            CHECK(out.value == ml.value);
            CHECK(out.dL_dp_plain == ml.dL_dp_plain);
        }
    }

    SUBCASE("single positive member worth 1.69 ln 2") {
        DetectionResult d;
        d.method = DetectMethod::DualCUT;
        d.n = 1;
        d.u_pos = {0};
        d.scale_pos[0] = 1.69;
        auto out = dualcut_loss(triple({0.5}, {0.2}, {0.8}), d, h);
        CHECK(out.value == doctest::Approx(1.1714187351463076).epsilon(1e-10));
    }

    SUBCASE("single negative member worth -0.69 ln 0.5") {
        DetectionResult d;
        d.method = DetectMethod::DualCUT;
        d.n = 1;
        d.u_neg = {0};
        d.scale_neg[0] = 0.69;
        auto out = dualcut_loss(triple({0.5}, {0.8}, {0.2}), d, h);
        CHECK(out.value == doctest::Approx(0.4782715545863623).epsilon(1e-10));
    }

    SUBCASE("overlapping sets are rejected") {
        DetectionResult d;
        d.method = DetectMethod::DualCUT;
        d.n = 1;
        d.u_neg = {0};
        d.u_pos = {0};
        d.scale_neg[0] = 0.5;
        d.scale_pos[0] = 1.5;
        CHECK_THROWS_AS((void)dualcut_loss(triple({0.5}, {0.8}, {0.2}), d, h),
                        std::invalid_argument);
    }

    SUBCASE("derivative matches finite differences across all branches") {
        std::mt19937_64 rng(35);
        for (int trial = 0; trial < 50; ++trial) {
            auto p = triple(testutil::random_probs(rng, 5), testutil::random_probs(rng, 5),
                            testutil::random_probs(rng, 5));
            auto d = dualcut_detect(p, h);
            auto out = dualcut_loss(p, d, h);
            for (std::size_t t = 0; t < 5; ++t) {
                auto f = [&](double x) {
                    auto q = p;
                    q.p_plain[t] = x;
                    return dualcut_loss(q, d, h).value;
                };
                const double fd = fd_derivative(f, p.p_plain[t], 1e-6);
                CHECK(out.dL_dp_plain[t] == doctest::Approx(fd).epsilon(1e-8));
            }
        }
    }

    SUBCASE("sign correctness of both branches") {
        DetectionResult d;
        d.method = DetectMethod::DualCUT;
        d.n = 2;
        d.u_neg = {0};
        d.u_pos = {1};
        d.scale_neg[0] = 0.7;
        d.scale_pos[1] = 1.7;
        auto base = triple({0.5, 0.5}, {0.8, 0.2}, {0.2, 0.8});
        const double v0 = dualcut_loss(base, d, Hyperparams{}).value;

        auto lower_neg = base;
        lower_neg.p_plain[0] = 0.4;  // decreasing a punished token lowers the loss
        CHECK(dualcut_loss(lower_neg, d, Hyperparams{}).value < v0);

        auto raise_pos = base;
        raise_pos.p_plain[1] = 0.6;  // increasing a rewarded token lowers the loss
        CHECK(dualcut_loss(raise_pos, d, Hyperparams{}).value < v0);
    }
}

TEST_CASE("loss values are permutation invariant") {
    Hyperparams h;
    std::mt19937_64 rng(36);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + uniform_below(rng, 6);
        ProbabilityTriple p = triple(testutil::random_probs(rng, n), testutil::random_probs(rng, n),
                                     testutil::random_probs(rng, n));
        auto d = dualcut_detect(p, h);
        const double v = dualcut_loss(p, d, h).value;

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
        auto dq = dualcut_detect(q, h);
        CHECK(dualcut_loss(q, dq, h).value == doctest::Approx(v).epsilon(1e-12));
    }
}
