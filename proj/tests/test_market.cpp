#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "msrlab/budget.hpp"
#include "msrlab/market.hpp"

#include "test_util.hpp"

using namespace msrlab;

namespace {

// Payoff recomputed from first principles: score the report and the prior
// reference through the public call and difference them at the outcome.
double payoff_oracle(const ScoringRule& rule, const TradeRecord& rec, int outcome) {
    ScoreVector post = score(rule, rec.report);
    ScoreVector pre = score(rule, rec.pre_reference);
    return rec.scale * (post[outcome] - pre[outcome]);
}

} // namespace

TEST_SUITE_BEGIN("market");

TEST_CASE("single trade settles at the score difference") {
    MarketState mkt =
        MarketState::create(make_rule("brier", 2), Distribution({0.5, 0.5}), Mechanism::msr);
    const TradeRecord& rec = msr_trade(mkt, "alice", Distribution({0.8, 0.2}));
    CHECK(rec.scale == 1.0);
    CHECK(linf_distance(rec.post_reference, rec.report) == 0.0);
    CHECK(linf_distance(mkt.reference(), rec.report) == 0.0);

    SettlementReport rep = settle(mkt, 0);
    // S_X(0.8,0.2) - S_X(0.5,0.5) = 0.92 - 0.5
    CHECK(rep.payoffs[0] == doctest::Approx(0.42).epsilon(1e-14));
    CHECK(rep.maker_loss == doctest::Approx(0.42).epsilon(1e-14));
    CHECK(rep.payoffs[0] ==
          doctest::Approx(payoff_oracle(mkt.rule(), mkt.ledger()[0], 0)).epsilon(1e-15));
    CHECK(mkt.settled_outcome() == 0);
}

TEST_CASE("consecutive payoffs telescope") {
    MarketState mkt =
        MarketState::create(make_rule("log", 3), Distribution::uniform(3), Mechanism::msr);
    msr_trade(mkt, "a", Distribution({0.5, 0.3, 0.2}));
    msr_trade(mkt, "b", Distribution({0.2, 0.6, 0.2}));
    msr_trade(mkt, "c", Distribution({0.1, 0.8, 0.1}));
    SettlementReport rep = settle(mkt, 1);

    double direct = std::log(0.8) - std::log(1.0 / 3.0);
    CHECK(rep.maker_loss == doctest::Approx(direct).epsilon(1e-12));

    PathInvarianceReport pi = check_path_invariance(mkt);
    CHECK(pi.pass);
    CHECK(std::abs(pi.residual) <= 1e-12);
}

TEST_CASE("corrupting one recorded payoff breaks the telescoping identity") {
    MarketState mkt =
        MarketState::create(make_rule("brier", 3), Distribution::uniform(3), Mechanism::msr);
    msr_trade(mkt, "a", Distribution({0.5, 0.3, 0.2}));
    msr_trade(mkt, "b", Distribution({0.3, 0.5, 0.2}));
    settle(mkt, 2);

    std::vector<TradeRecord> records(mkt.ledger().begin(), mkt.ledger().end());
    *records[1].realized_payoff += 0.25;
    PathInvarianceReport pi =
        check_path_invariance(mkt.rule(), mkt.initial(), records, *mkt.settled_outcome());
    CHECK(!pi.pass);
    CHECK(pi.residual == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("path invariance needs settled records") {
    MarketState mkt =
        MarketState::create(make_rule("brier", 2), Distribution({0.5, 0.5}), Mechanism::msr);
    msr_trade(mkt, "a", Distribution({0.6, 0.4}));
    CHECK_THROWS_AS(check_path_invariance(mkt), std::runtime_error);
    PathInvarianceReport pi =
        check_path_invariance(mkt.rule(), mkt.initial(), mkt.ledger(), 0);
    CHECK(!pi.pass); // payoffs not realized yet

    // an empty settled ledger satisfies the identity trivially
    MarketState empty =
        MarketState::create(make_rule("brier", 2), Distribution({0.5, 0.5}), Mechanism::msr);
    settle(empty, 1);
    CHECK(check_path_invariance(empty).pass);
}

TEST_CASE("worst-case maker loss") {
    BrierRule b2(2);
    Distribution even({0.5, 0.5});
    CHECK(worst_case_maker_loss(b2, even) == doctest::Approx(0.5).epsilon(1e-9));

    FlooredLogRule l2(2, 1e-3);
    CHECK(worst_case_maker_loss(l2, even) ==
          doctest::Approx(std::log(0.999 / 0.5)).epsilon(1e-9));

    auto per = worst_case_maker_loss_by_outcome(b2, even);
    REQUIRE(per.size() == 2);
    CHECK(per[0] == doctest::Approx(per[1]).epsilon(1e-9));
    // starting from a corner leaves no room to gain on that outcome
    auto corner = worst_case_maker_loss_by_outcome(b2, Distribution({1.0, 0.0}));
    CHECK(corner[0] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("maker loss stays under the bound on random paths") {
    std::mt19937_64 gen(31337);
    for (const char* tag : {"brier", "log"}) {
        RulePtr rule = make_rule(tag, 3);
        Distribution initial = Distribution::uniform(3);
        double bound = worst_case_maker_loss(*rule, initial);
        for (int t = 0; t < 10; ++t) {
            MarketState mkt = MarketState::create(rule, initial, Mechanism::msr);
            int trades = 1 + static_cast<int>(gen() % 5);
            for (int i = 0; i < trades; ++i)
                msr_trade(mkt, "t" + std::to_string(i),
                          Distribution(testutil::random_simplex_point(gen, 3, rule->floor())));
            int outcome = static_cast<int>(gen() % 3);
            SettlementReport rep = settle(mkt, outcome);
            CHECK(rep.maker_loss <= bound + 1e-9);
        }
    }
}

TEST_CASE("budget enforcement is opt-in") {
    MarketState mkt =
        MarketState::create(make_rule("brier", 2), Distribution({0.5, 0.5}), Mechanism::msr);
    // claimed budget is recorded but not checked by default
    const TradeRecord& rec = msr_trade(mkt, "a", Distribution({0.9, 0.1}), 0.01);
    CHECK(rec.reported_budget == 0.01);

    double nb = natural_budget(mkt.rule(), mkt.reference(), Distribution({0.1, 0.9}));
    CHECK_THROWS_AS(msr_trade(mkt, "b", Distribution({0.1, 0.9}), nb / 2, true),
                    std::runtime_error);
    msr_trade(mkt, "b", Distribution({0.1, 0.9}), nb + 1e-9, true);
    CHECK(mkt.ledger().size() == 2);
    CHECK_THROWS_AS(msr_trade(mkt, "c", Distribution({0.5, 0.5}), -1.0), std::invalid_argument);
}

TEST_CASE("lifecycle guards") {
    MarketState mkt =
        MarketState::create(make_rule("brier", 2), Distribution({0.5, 0.5}), Mechanism::msr);
    CHECK_THROWS_AS(settle(mkt, 5), std::invalid_argument);
    settle(mkt, 0);
    CHECK_THROWS_AS(settle(mkt, 0), std::runtime_error);
    CHECK_THROWS_AS(msr_trade(mkt, "late", Distribution({0.6, 0.4})), std::runtime_error);

    CHECK_THROWS_AS(MarketState::create(make_rule("log", 2), Distribution({1.0, 0.0}),
                                        Mechanism::msr),
                    std::domain_error);
    CHECK_THROWS_AS(MarketState::create(make_rule("brier", 3), Distribution({0.5, 0.5}),
                                        Mechanism::msr),
                    std::invalid_argument);

    MarketState ssm_mkt =
        MarketState::create(make_rule("brier", 2), Distribution({0.5, 0.5}), Mechanism::ssm);
    CHECK_THROWS_AS(msr_trade(ssm_mkt, "a", Distribution({0.6, 0.4})), std::runtime_error);

    CHECK(mechanism_from_tag("msr") == Mechanism::msr);
    CHECK(mechanism_tag(Mechanism::ssm) == "ssm");
    CHECK_THROWS_AS(mechanism_from_tag("amm"), std::invalid_argument);
}

TEST_SUITE_END();
