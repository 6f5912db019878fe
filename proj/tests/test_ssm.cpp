#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "msrlab/budget.hpp"
#include "msrlab/ledger.hpp"
#include "msrlab/ssm.hpp"

#include "test_util.hpp"

using namespace msrlab;

namespace {

// Broken variant kept only in the tests: scale payoffs by lambda but move
// the reference all the way to the raw report. A cheap first identity can
// then push the reference to a bad point, letting a second identity buy the
// ride back at nearly full scale.
double raw_reference_split_payoff(const ScoringRule& rule, const Distribution& q_base,
                                  const Distribution& belief,
                                  const std::vector<double>& deposits,
                                  const std::vector<Distribution>& reports) {
    const double B = budget_bound(rule);
    Distribution ref = q_base;
    double total = 0.0;
    for (std::size_t j = 0; j < deposits.size(); ++j) {
        double lambda = std::min(1.0, deposits[j] / B);
        total += lambda * (expected_score(rule, belief, reports[j]) -
                           expected_score(rule, belief, ref));
        ref = reports[j];
    }
    return total;
}

} // namespace

TEST_SUITE_BEGIN("ssm");

TEST_CASE("half-deposit trade moves the reference half way") {
    MarketState mkt =
        MarketState::create(make_rule("brier", 2), Distribution({0.5, 0.5}), Mechanism::ssm);
    CHECK(mkt.cached_budget_bound() == doctest::Approx(2.0).epsilon(1e-14));

    const TradeRecord& rec = ssm_trade(mkt, "alice", 1.0, Distribution({0.9, 0.1}));
    CHECK(rec.scale == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(mkt.reference()[0] == doctest::Approx(0.7).epsilon(1e-14));
    CHECK(mkt.reference()[1] == doctest::Approx(0.3).epsilon(1e-14));

    SettlementReport rep = settle(mkt, 0);
    // 0.5 * (S_X(0.9,0.1) - S_X(0.5,0.5)) = 0.5 * (0.98 - 0.5)
    CHECK(rep.payoffs[0] == doctest::Approx(0.24).epsilon(1e-13));
    CHECK(rep.payoffs[0] >= -1.0);
}

TEST_CASE("deposits at or above the bound trade unscaled") {
    MarketState mkt =
        MarketState::create(make_rule("brier", 2), Distribution({0.5, 0.5}), Mechanism::ssm);
    const TradeRecord& rec = ssm_trade(mkt, "big", 5.0, Distribution({0.9, 0.1}));
    CHECK(rec.scale == 1.0);
    CHECK(linf_distance(mkt.reference(), rec.report) == 0.0);
    CHECK_THROWS_AS(ssm_trade(mkt, "neg", -0.5, Distribution({0.5, 0.5})),
                    std::invalid_argument);
}

TEST_CASE("every settled payoff clears the deposit floor") {
    std::mt19937_64 gen(808);
    RulePtr rule = make_rule("log", 3);
    for (int t = 0; t < 10; ++t) {
        MarketState mkt = MarketState::create(rule, Distribution::uniform(3), Mechanism::ssm);
        std::vector<double> deposits;
        for (int i = 0; i < 4; ++i) {
            double dep = 0.05 + 0.5 * static_cast<double>(gen() % 1000) / 1000.0;
            deposits.push_back(dep);
            ssm_trade(mkt, "s" + std::to_string(i), dep,
                      Distribution(testutil::random_simplex_point(gen, 3, rule->floor())));
        }
        for (int outcome = 0; outcome < 3; ++outcome) {
            MarketState copy = mkt;
            SettlementReport rep = settle(copy, outcome);
            for (std::size_t i = 0; i < rep.payoffs.size(); ++i)
                CHECK(rep.payoffs[i] + deposits[i] >= 0.0);
        }
    }
}

TEST_CASE("belief inference inverts the mixture") {
    MarketState mkt =
        MarketState::create(make_rule("brier", 2), Distribution({0.5, 0.5}), Mechanism::ssm);
    Distribution report({0.9, 0.1});
    const TradeRecord& rec = ssm_trade(mkt, "alice", 1.0, report);
    Distribution inferred = infer_belief(rec);
    CHECK(linf_distance(inferred, report) <= 1e-12);

    TradeRecord tiny = rec;
    tiny.scale = 1e-12;
    CHECK_THROWS_AS(infer_belief(tiny), std::invalid_argument);
}

TEST_CASE("truthful reporting is grid-optimal") {
    for (const char* tag : {"brier", "log"}) {
        RulePtr rule = make_rule(tag, 3);
        Distribution base = Distribution::uniform(3);
        Distribution belief({0.55, 0.25, 0.2});
        TruthfulnessReport rep = verify_truthfulness(*rule, base, belief, 0.4);
        CHECK(rep.pass);
        CHECK(rep.worst_gap <= 1e-9);
        CHECK(rep.budget_monotone);
        CHECK(rep.truthful_payoff > 0.0);
    }
    RulePtr rule = make_rule("brier", 3);
    CHECK_THROWS_AS(
        verify_truthfulness(*rule, Distribution::uniform(3), Distribution::uniform(3), -1.0),
        std::invalid_argument);
}

TEST_CASE("scaled loss is dominated by the reference path") {
    RulePtr rule = make_rule("brier", 3);
    std::vector<Distribution> reports{Distribution({0.7, 0.2, 0.1}),
                                      Distribution({0.2, 0.5, 0.3}),
                                      Distribution({0.4, 0.4, 0.2})};
    std::vector<double> budgets{0.5, 1.2, 0.3};
    LossDominanceReport rep = verify_loss_dominance(*rule, Distribution::uniform(3),
                                                    reports, budgets);
    CHECK(rep.pass);
    CHECK(rep.worst_concavity_slack >= -1e-9);
    CHECK(rep.ssm_loss <= rep.reference_msr_loss + 1e-9);
    CHECK(rep.ssm_loss <= worst_case_maker_loss(*rule, Distribution::uniform(3)) + 1e-9);

    std::vector<double> short_budgets{0.5};
    CHECK_THROWS_AS(verify_loss_dominance(*rule, Distribution::uniform(3), reports,
                                          short_budgets),
                    std::invalid_argument);
}

TEST_CASE("splitting a deposit across identities never helps") {
    RulePtr rule = make_rule("brier", 2);
    Distribution base({0.5, 0.5});
    Distribution belief({0.8, 0.2});
    std::vector<Distribution> reports{Distribution({0.65, 0.35}), belief};
    std::vector<double> shares{0.3, 0.7};
    SybilComparison cmp = simulate_sybil_split(*rule, base, belief, 1.0, shares, reports);
    CHECK(cmp.dominated);
    CHECK(cmp.margin >= -1e-9);

    std::vector<double> bad_shares{0.3, 0.3};
    CHECK_THROWS_AS(simulate_sybil_split(*rule, base, belief, 1.0, bad_shares, reports),
                    std::invalid_argument);
}

TEST_CASE("moving the reference to the raw report invites sybil splits") {
    BrierRule rule(2);
    Distribution base({0.5, 0.5});
    Distribution belief({0.5, 0.5});
    // identity one dumps the reference at a bad point for pennies; identity
    // two carries it back at nearly full scale
    std::vector<Distribution> reports{Distribution({0.9, 0.1}), belief};
    std::vector<double> deposits{0.01, 0.99};

    double raw_split = raw_reference_split_payoff(rule, base, belief, deposits, reports);
    SybilComparison honest = simulate_sybil_split(rule, base, belief, 1.0, deposits, reports);

    // the best single trade under this belief is reporting the belief itself,
    // which earns exactly zero from an even reference
    CHECK(honest.single_payoff == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(honest.dominated);
    CHECK(raw_split > honest.single_payoff + 0.1);
}

TEST_SUITE_END();
