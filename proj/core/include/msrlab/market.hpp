#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msrlab/distribution.hpp"
#include "msrlab/scoring.hpp"

namespace msrlab {

enum class Mechanism { msr, ssm };

std::string mechanism_tag(Mechanism m);
Mechanism mechanism_from_tag(const std::string& tag);

/// One ledger entry. Plain market-scoring trades always have scale 1 and
/// record the agent's claimed budget without using it; deposit-scaled trades
/// store the deposit in reported_budget and the scale factor lambda in scale.
struct TradeRecord {
    std::string agent_id;
    Distribution report;
    double reported_budget = 0.0;
    Distribution pre_reference;
    Distribution post_reference;
    double scale = 1.0;
    std::optional<double> realized_payoff; // set at settlement
};

/// Mutable market: a scoring rule, a current reference forecast, and an
/// append-only trade ledger. The budget bound B is computed once here and
/// cached for deposit scaling.
class MarketState {
public:
    static MarketState create(RulePtr rule, Distribution initial, Mechanism mechanism);

    const ScoringRule& rule() const { return *rule_; }
    RulePtr rule_ptr() const { return rule_; }
    Mechanism mechanism() const { return mechanism_; }
    const Distribution& initial() const { return initial_; }
    const Distribution& reference() const { return reference_; }
    const std::vector<TradeRecord>& ledger() const { return ledger_; }
    std::optional<int> settled_outcome() const { return settled_outcome_; }
    bool settled() const { return settled_outcome_.has_value(); }
    double cached_budget_bound() const { return budget_bound_; }

private:
    MarketState(RulePtr rule, Distribution initial, Mechanism mechanism, double bound);

    friend const TradeRecord& msr_trade(MarketState&, const std::string&, const Distribution&,
                                        double, bool);
    friend const TradeRecord& ssm_trade(MarketState&, const std::string&, double,
                                        const Distribution&);
    friend struct SettlementReport settle(MarketState&, int);

    RulePtr rule_;
    Mechanism mechanism_;
    Distribution initial_;
    Distribution reference_;
    std::vector<TradeRecord> ledger_;
    std::optional<int> settled_outcome_;
    double budget_bound_;
};

/// Appends an unscaled trade: the reference moves to the raw report and the
/// trader is owed S_x(report) - S_x(pre) at settlement. The claimed budget is
/// recorded only; with enforce_budget set, trades whose natural budget
/// exceeds the claim are rejected.
const TradeRecord& msr_trade(MarketState& state, const std::string& agent_id,
                             const Distribution& report, double reported_budget = 0.0,
                             bool enforce_budget = false);

struct SettlementReport {
    int outcome = 0;
    double maker_loss = 0.0;        // sum of trader payoffs
    std::vector<double> payoffs;    // one per ledger entry
};

/// Fixes the outcome, fills realized payoffs on every ledger entry, and
/// returns the maker's total loss. A market settles exactly once.
SettlementReport settle(MarketState& state, int outcome);

/// max over outcomes x and reports q of S_x(q) - S_x(initial): the maker's
/// worst-case settlement exposure when the reference starts at initial.
double worst_case_maker_loss(const ScoringRule& rule, const Distribution& initial);
std::vector<double> worst_case_maker_loss_by_outcome(const ScoringRule& rule,
                                                     const Distribution& initial);

struct PathInvarianceReport {
    bool pass = false;
    double residual = 0.0;
};

/// Settled unscaled-market identity: payoffs telescope, so their sum equals
/// S_outcome(final reference) - S_outcome(initial) within 1e-9.
PathInvarianceReport check_path_invariance(const MarketState& state);
PathInvarianceReport check_path_invariance(const ScoringRule& rule, const Distribution& initial,
                                           std::span<const TradeRecord> records, int outcome);

} // namespace msrlab
