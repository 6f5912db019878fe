#pragma once

#include <span>
#include <vector>

#include "msrlab/market.hpp"

namespace msrlab {

using SsmTrade = TradeRecord;

/// Appends a deposit-scaled trade. The agent deposits b_prime and reports q;
/// the trade is scaled by lambda = min(1, b_prime / B) where B is the
/// market's cached budget bound. The reference moves to the lambda-mixture
/// mix(pre, report, lambda) and settlement pays lambda * [S_x(q) - S_x(pre)],
/// never below -b_prime.
const TradeRecord& ssm_trade(MarketState& state, const std::string& agent_id, double b_prime,
                             const Distribution& report);

struct TruthfulnessGrid {
    double report_resolution = 0.02; // simplex grid spacing for candidate reports
    int budget_levels = 21;          // deposit grid over [0, budget]
};

struct TruthfulnessReport {
    bool pass = false;
    double worst_gap = 0.0;    // best grid payoff minus truthful payoff
    double truthful_payoff = 0.0;
    bool budget_monotone = true; // payoff of the truthful report non-decreasing in deposit
};

/// Checks that reporting (belief, budget) maximizes expected scaled payoff
/// over a (report, deposit) grid, within 1e-9, and that under-reporting the
/// deposit never helps.
TruthfulnessReport verify_truthfulness(const ScoringRule& rule, const Distribution& q_base,
                                       const Distribution& belief, double budget,
                                       const TruthfulnessGrid& grid = {});

struct LossDominanceReport {
    bool pass = false;
    double worst_concavity_slack = 0.0; // most negative per-trade inequality margin
    double ssm_loss = 0.0;              // worst-case scaled loss over outcomes
    double reference_msr_loss = 0.0;    // unscaled loss of the reference path
};

/// Runs the scaled mechanism over a report sequence and checks, per outcome
/// and trade, S_x(post) - S_x(pre) >= lambda * [S_x(report) - S_x(pre)]
/// within 1e-9; consequently the scaled loss never exceeds the loss of the
/// reference path, which is itself bounded by the worst case from initial.
LossDominanceReport verify_loss_dominance(const ScoringRule& rule, const Distribution& initial,
                                          std::span<const Distribution> reports,
                                          std::span<const double> budgets);

struct SybilComparison {
    double split_payoff = 0.0;  // expected total over the consecutive trades
    double single_payoff = 0.0; // best single trade with the combined deposit
    double margin = 0.0;        // single - split
    bool dominated = false;     // split <= single + 1e-9
};

/// Expected value (under belief) of splitting total_budget across consecutive
/// identities with the given shares and reports, versus one trade with the
/// whole deposit reporting the best of those reports. The dominance guarantee
/// assumes at least one report is weakly profitable against q_base, which
/// always holds when some identity reports the belief itself.
SybilComparison simulate_sybil_split(const ScoringRule& rule, const Distribution& q_base,
                                     const Distribution& belief, double total_budget,
                                     std::span<const double> shares,
                                     std::span<const Distribution> reports);

/// Recovers the raw report from a scaled trade record:
/// report = pre + (post - pre) / lambda. Precision degrades like ulp/lambda,
/// so tiny scales are rejected.
Distribution infer_belief(const TradeRecord& trade);

} // namespace msrlab
