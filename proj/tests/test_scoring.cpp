#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "msrlab/rng.hpp"
#include "msrlab/scoring.hpp"

#include "test_util.hpp"

using namespace msrlab;

TEST_SUITE_BEGIN("scoring");

TEST_CASE("brier scores at corners and uniform") {
    BrierRule rule(2);
    ScoreVector s = score(rule, Distribution({1.0, 0.0}));
    CHECK(s[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s[1] == doctest::Approx(-1.0).epsilon(1e-15));

    BrierRule r3(3);
    ScoreVector u = score(r3, Distribution::uniform(3));
    for (int x = 0; x < 3; ++x) CHECK(u[x] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("floored log scores") {
    FlooredLogRule rule(2, 1e-3);
    ScoreVector s = score(rule, Distribution({0.5, 0.5}));
    CHECK(s[0] == doctest::Approx(std::log(0.5)).epsilon(1e-15));
    CHECK(s[1] == s[0]);

    // reports below the floor are out of domain
    CHECK_THROWS_AS(score(rule, Distribution({0.9995, 0.0005})), std::domain_error);
    CHECK(rule.in_domain(Distribution({0.999, 0.001})));
}

TEST_CASE("rule constructor guards") {
    CHECK_THROWS_AS(BrierRule(1), std::invalid_argument);
    CHECK_THROWS_AS(BrierRule(3, -0.1), std::invalid_argument);
    CHECK_THROWS_AS(BrierRule(3, 0.4), std::invalid_argument);
    CHECK_THROWS_AS(FlooredLogRule(3, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(FlooredLogRule(2, 0.6), std::invalid_argument);
}

TEST_CASE("registry") {
    RulePtr b = make_rule("brier", 3);
    CHECK(b->tag() == "brier");
    CHECK(b->floor() == 0.0);
    RulePtr l = make_rule("log", 3);
    CHECK(l->tag() == "log");
    CHECK(l->floor() == 1e-3);
    RulePtr l2 = make_rule("log", 2, 0.25);
    CHECK(l2->floor() == 0.25);
    CHECK_THROWS_AS(make_rule("cubic", 3), std::invalid_argument);
}

TEST_CASE("expected score") {
    BrierRule rule(2);
    Distribution even({0.5, 0.5});
    CHECK(expected_score(rule, even, even) == doctest::Approx(0.5).epsilon(1e-15));
    // certain belief scored against the opposite corner
    CHECK(expected_score(rule, Distribution({1.0, 0.0}), Distribution({0.0, 1.0})) ==
          doctest::Approx(-1.0).epsilon(1e-15));
    CHECK_THROWS_AS(expected_score(rule, even, Distribution::uniform(3)),
                    std::invalid_argument);
}

TEST_CASE("gradients match the finite-difference oracle") {
    std::mt19937_64 gen(2024);
    for (const char* tag : {"brier", "log"}) {
        for (int k : {2, 3, 4}) {
            RulePtr rule = make_rule(tag, k);
            for (int t = 0; t < 20; ++t) {
                auto q = testutil::random_simplex_point(gen, k, rule->floor(), 0.2);
                for (int x = 0; x < k; ++x) {
                    auto fd = testutil::fd_gradient(*rule, q, x);
                    auto g = score_gradient(*rule, Distribution(q), x);
                    for (int i = 0; i < k; ++i)
                        CHECK(g[static_cast<std::size_t>(i)] ==
                              doctest::Approx(fd[static_cast<std::size_t>(i)]).epsilon(1e-6));
                }
            }
        }
    }
}

TEST_CASE("brier gradient closed form at the even report") {
    BrierRule rule(2);
    auto g = score_gradient(rule, Distribution({0.5, 0.5}), 0);
    CHECK(g[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(g[1] == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK_THROWS_AS(score_gradient(rule, Distribution({0.5, 0.5}), 2), std::invalid_argument);
}

TEST_CASE("product scores expand the belief first") {
    BrierRule rule(4);
    ScoreVector even = product_score(rule, ProductBelief(0.5, 0.5));
    for (int x = 0; x < 4; ++x) CHECK(even[x] == doctest::Approx(0.25).epsilon(1e-14));

    ScoreVector corner = product_score(rule, ProductBelief(1.0, 1.0));
    CHECK(corner[0] == doctest::Approx(1.0).epsilon(1e-15));
    for (int x = 1; x < 4; ++x) CHECK(corner[x] == doctest::Approx(-1.0).epsilon(1e-15));

    BrierRule r3(3);
    CHECK_THROWS_AS(product_score(r3, ProductBelief(0.5, 0.5)), std::invalid_argument);
}

TEST_CASE("interior sampler stays in domain and is seed-stable") {
    for (const char* tag : {"brier", "log"}) {
        for (int k : {2, 3, 4}) {
            RulePtr rule = make_rule(tag, k);
            Rng rng(99);
            for (int t = 0; t < 100; ++t) {
                Distribution d = sample_interior(*rule, rng, t % 2 ? 0.5 : 0.0);
                CHECK(rule->in_domain(d));
            }
        }
    }
    RulePtr rule = make_rule("brier", 3);
    Rng a(7), b(7);
    CHECK(sample_interior(*rule, a) == sample_interior(*rule, b));
}

TEST_CASE("properness holds for the built-in rules") {
    for (const char* tag : {"brier", "log"}) {
        RulePtr rule = make_rule(tag, 3);
        PropernessOptions opts;
        opts.grid_resolution = 0.02; // keep the unit test fast; the dense grid runs elsewhere
        CheckReport rep = check_properness(*rule, 20, 1e-12, opts);
        CHECK(rep.pass);
        CHECK(rep.worst_violation <= 1e-12);
    }
}

TEST_CASE("properness flags the linear rule") {
    testutil::LinearRule rule(3);
    PropernessOptions opts;
    opts.grid_resolution = 0.02;
    CheckReport rep = check_properness(rule, 20, 1e-12, opts);
    CHECK(!rep.pass);
    // a corner report beats an interior truthful report by a wide margin
    CHECK(rep.worst_violation > 0.01);
}

TEST_CASE("quasiconcavity holds for the built-in rules") {
    for (const char* tag : {"brier", "log"}) {
        RulePtr rule = make_rule(tag, 3);
        CheckReport rep = check_quasiconcavity(*rule, 2000);
        CHECK(rep.pass);
    }
}

TEST_SUITE_END();
