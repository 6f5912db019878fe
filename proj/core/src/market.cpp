#include "msrlab/market.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "msrlab/budget.hpp"
#include "msrlab/simplex_search.hpp"

namespace msrlab {

std::string mechanism_tag(Mechanism m) { return m == Mechanism::msr ? "msr" : "ssm"; }

Mechanism mechanism_from_tag(const std::string& tag) {
    if (tag == "msr") return Mechanism::msr;
    if (tag == "ssm") return Mechanism::ssm;
    throw std::invalid_argument("mechanism_from_tag: unknown mechanism '" + tag + "'");
}

MarketState::MarketState(RulePtr rule, Distribution initial, Mechanism mechanism, double bound)
    : rule_(std::move(rule)),
      mechanism_(mechanism),
      initial_(std::move(initial)),
      reference_(initial_),
      budget_bound_(bound) {}

MarketState MarketState::create(RulePtr rule, Distribution initial, Mechanism mechanism) {
    if (!rule) throw std::invalid_argument("MarketState: null rule");
    if (initial.size() != rule->outcome_count())
        throw std::invalid_argument("MarketState: initial forecast dimension mismatch");
    if (!rule->in_domain(initial))
        throw std::domain_error("MarketState: initial forecast outside rule domain");
    double bound = budget_bound(*rule);
    return MarketState(std::move(rule), std::move(initial), mechanism, bound);
}

namespace {

void require_open(const MarketState& state, const char* who) {
    if (state.settled())
        throw std::runtime_error(std::string(who) + ": market already settled");
}

void require_report(const MarketState& state, const Distribution& report, const char* who) {
    if (report.size() != state.rule().outcome_count())
        throw std::invalid_argument(std::string(who) + ": report dimension mismatch");
    if (!state.rule().in_domain(report))
        throw std::domain_error(std::string(who) + ": report outside rule domain");
}

} // namespace

const TradeRecord& msr_trade(MarketState& state, const std::string& agent_id,
                             const Distribution& report, double reported_budget,
                             bool enforce_budget) {
    require_open(state, "msr_trade");
    require_report(state, report, "msr_trade");
    if (state.mechanism() != Mechanism::msr)
        throw std::runtime_error("msr_trade: market uses the deposit-scaled mechanism");
    if (reported_budget < 0.0)
        throw std::invalid_argument("msr_trade: negative reported budget");
    if (enforce_budget) {
        double nb = natural_budget(state.rule(), state.reference_, report);
        if (nb > reported_budget)
            throw std::runtime_error("msr_trade: natural budget exceeds the reported budget");
    }
    TradeRecord rec{agent_id, report, reported_budget, state.reference_, report, 1.0,
                    std::nullopt};
    state.reference_ = report;
    state.ledger_.push_back(std::move(rec));
    return state.ledger_.back();
}

SettlementReport settle(MarketState& state, int outcome) {
    if (state.settled()) throw std::runtime_error("settle: market already settled");
    if (outcome < 0 || outcome >= state.rule().outcome_count())
        throw std::invalid_argument("settle: outcome index out of range");

    SettlementReport rep;
    rep.outcome = outcome;
    std::array<double, kMaxOutcomes> pre{}, post{};
    const std::size_t k = static_cast<std::size_t>(state.rule().outcome_count());
    for (TradeRecord& rec : state.ledger_) {
        state.rule().score_into(rec.pre_reference.span(), std::span<double>(pre.data(), k));
        state.rule().score_into(rec.report.span(), std::span<double>(post.data(), k));
        double raw = rec.scale * (post[static_cast<std::size_t>(outcome)] -
                                  pre[static_cast<std::size_t>(outcome)]);
        if (state.mechanism() == Mechanism::ssm) {
            // escrow semantics: the deposit is the hard floor on losses, so
            // rounding can never push a payout below -b'
            if (raw < -rec.reported_budget - 1e-9)
                throw std::runtime_error("settle: scaled payoff broke the deposit floor");
            raw = std::max(raw, -rec.reported_budget);
        }
        rec.realized_payoff = raw;
        rep.payoffs.push_back(raw);
        rep.maker_loss += raw;
    }
    state.settled_outcome_ = outcome;
    return rep;
}

std::vector<double> worst_case_maker_loss_by_outcome(const ScoringRule& rule,
                                                     const Distribution& initial) {
    if (!rule.in_domain(initial))
        throw std::domain_error("worst_case_maker_loss: initial outside rule domain");
    const int k = rule.outcome_count();
    std::array<double, kMaxOutcomes> s{};
    rule.score_into(initial.span(), std::span<double>(s.data(), static_cast<std::size_t>(k)));
    std::vector<double> out(static_cast<std::size_t>(k));
    std::array<double, kMaxOutcomes> sq{};
    for (int x = 0; x < k; ++x) {
        auto hi = maximize_on_simplex(k, rule.floor(), [&](std::span<const double> q) {
            rule.score_into(q, std::span<double>(sq.data(), q.size()));
            return sq[static_cast<std::size_t>(x)];
        });
        out[static_cast<std::size_t>(x)] = hi.value - s[static_cast<std::size_t>(x)];
    }
    return out;
}

double worst_case_maker_loss(const ScoringRule& rule, const Distribution& initial) {
    double worst = -1e300;
    for (double v : worst_case_maker_loss_by_outcome(rule, initial)) worst = std::max(worst, v);
    return worst;
}

PathInvarianceReport check_path_invariance(const ScoringRule& rule, const Distribution& initial,
                                           std::span<const TradeRecord> records, int outcome) {
    std::array<double, kMaxOutcomes> s{};
    const std::size_t k = static_cast<std::size_t>(rule.outcome_count());
    rule.score_into(initial.span(), std::span<double>(s.data(), k));
    double s_init = s[static_cast<std::size_t>(outcome)];

    const Distribution* final_ref = &initial;
    double total = 0.0;
    for (const TradeRecord& rec : records) {
        if (!rec.realized_payoff)
            return {false, std::numeric_limits<double>::quiet_NaN()};
        total += *rec.realized_payoff;
        final_ref = &rec.post_reference;
    }
    rule.score_into(final_ref->span(), std::span<double>(s.data(), k));
    double residual = total - (s[static_cast<std::size_t>(outcome)] - s_init);
    return {std::abs(residual) <= 1e-9, residual};
}

PathInvarianceReport check_path_invariance(const MarketState& state) {
    if (state.mechanism() != Mechanism::msr)
        throw std::runtime_error("check_path_invariance: defined for unscaled markets");
    if (!state.settled())
        throw std::runtime_error("check_path_invariance: market not settled");
    return check_path_invariance(state.rule(), state.initial(),
                                 std::span<const TradeRecord>(state.ledger()),
                                 *state.settled_outcome());
}

} // namespace msrlab
