#include "msrlab/ssm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "msrlab/budget.hpp"
#include "msrlab/simplex_search.hpp"

namespace msrlab {

const TradeRecord& ssm_trade(MarketState& state, const std::string& agent_id, double b_prime,
                             const Distribution& report) {
    if (state.settled()) throw std::runtime_error("ssm_trade: market already settled");
    if (state.mechanism() != Mechanism::ssm)
        throw std::runtime_error("ssm_trade: market uses the unscaled mechanism");
    if (report.size() != state.rule().outcome_count())
        throw std::invalid_argument("ssm_trade: report dimension mismatch");
    if (!state.rule().in_domain(report))
        throw std::domain_error("ssm_trade: report outside rule domain");
    if (b_prime < 0.0) throw std::invalid_argument("ssm_trade: negative deposit");

    const double B = state.cached_budget_bound();
    const double lambda = B > 0.0 ? std::min(1.0, b_prime / B) : 1.0;
    Distribution pre = state.reference_;
    Distribution post = mix(pre, report, lambda);

    state.ledger_.push_back(
        TradeRecord{agent_id, report, b_prime, std::move(pre), post, lambda, std::nullopt});
    state.reference_ = std::move(post);
    return state.ledger_.back();
}

namespace {

double scaled_gain(const ScoringRule& rule, std::span<const double> belief,
                   std::span<const double> base, std::span<const double> report,
                   double lambda) {
    return lambda * (expected_score_span(rule, belief, report) -
                     expected_score_span(rule, belief, base));
}

} // namespace

TruthfulnessReport verify_truthfulness(const ScoringRule& rule, const Distribution& q_base,
                                       const Distribution& belief, double budget,
                                       const TruthfulnessGrid& grid) {
    if (!rule.in_domain(q_base))
        throw std::domain_error("verify_truthfulness: q_base outside rule domain");
    if (!rule.in_domain(belief))
        throw std::domain_error("verify_truthfulness: belief outside rule domain");
    if (budget < 0.0) throw std::invalid_argument("verify_truthfulness: negative budget");

    const int k = rule.outcome_count();
    const double B = budget_bound(rule);
    auto lam = [&](double dep) { return B > 0.0 ? std::min(1.0, dep / B) : 1.0; };

    TruthfulnessReport rep;
    rep.truthful_payoff = scaled_gain(rule, belief.span(), q_base.span(), belief.span(),
                                      lam(budget));

    // payoff of the truthful report as the deposit shrinks: must never rise
    rep.budget_monotone = true;
    double prev = -1e300;
    for (int i = 0; i < grid.budget_levels; ++i) {
        double dep = budget * static_cast<double>(i) / (grid.budget_levels - 1);
        double v = scaled_gain(rule, belief.span(), q_base.span(), belief.span(), lam(dep));
        if (v < prev - 1e-12) rep.budget_monotone = false;
        prev = v;
    }

    // grid of (report, deposit) pairs
    const double span = 1.0 - k * rule.floor();
    const long m = std::max<long>(1, std::lround(1.0 / grid.report_resolution));
    std::array<double, kMaxOutcomes> buf{};
    std::span<double> q(buf.data(), static_cast<std::size_t>(k));
    double best = -1e300;
    for_each_composition(m, k, [&](std::span<const long> c) {
        for (int i = 0; i < k; ++i)
            buf[static_cast<std::size_t>(i)] =
                rule.floor() + span * (static_cast<double>(c[static_cast<std::size_t>(i)]) / static_cast<double>(m));
        double g = expected_score_span(rule, belief.span(), q) -
                   expected_score_span(rule, belief.span(), q_base.span());
        for (int i = 0; i < grid.budget_levels; ++i) {
            double dep = budget * static_cast<double>(i) / (grid.budget_levels - 1);
            best = std::max(best, lam(dep) * g);
        }
    });

    rep.worst_gap = best - rep.truthful_payoff;
    rep.pass = rep.worst_gap <= 1e-9 && rep.budget_monotone;
    return rep;
}

LossDominanceReport verify_loss_dominance(const ScoringRule& rule, const Distribution& initial,
                                          std::span<const Distribution> reports,
                                          std::span<const double> budgets) {
    if (reports.size() != budgets.size())
        throw std::invalid_argument("verify_loss_dominance: reports/budgets length mismatch");
    // non-owning handle: the market only needs the rule for the call's duration
    RulePtr rule_ptr(std::shared_ptr<void>(), &rule);
    MarketState mkt = MarketState::create(rule_ptr, initial, Mechanism::ssm);
    for (std::size_t i = 0; i < reports.size(); ++i)
        ssm_trade(mkt, "a" + std::to_string(i), budgets[i], reports[i]);

    const int k = rule.outcome_count();
    LossDominanceReport rep;
    rep.worst_concavity_slack = 1e300;
    rep.ssm_loss = -1e300;
    rep.reference_msr_loss = -1e300;

    std::array<double, kMaxOutcomes> s_pre{}, s_post{}, s_rep{}, s_init{}, s_final{};
    const std::size_t ks = static_cast<std::size_t>(k);
    rule.score_into(initial.span(), std::span<double>(s_init.data(), ks));
    const Distribution& final_ref = mkt.reference();
    rule.score_into(final_ref.span(), std::span<double>(s_final.data(), ks));

    for (int x = 0; x < k; ++x) {
        double scaled_total = 0.0;
        for (const TradeRecord& rec : mkt.ledger()) {
            rule.score_into(rec.pre_reference.span(), std::span<double>(s_pre.data(), ks));
            rule.score_into(rec.post_reference.span(), std::span<double>(s_post.data(), ks));
            rule.score_into(rec.report.span(), std::span<double>(s_rep.data(), ks));
            const std::size_t xi = static_cast<std::size_t>(x);
            double lhs = s_post[xi] - s_pre[xi];
            double rhs = rec.scale * (s_rep[xi] - s_pre[xi]);
            rep.worst_concavity_slack = std::min(rep.worst_concavity_slack, lhs - rhs);
            scaled_total += rhs;
        }
        const std::size_t xi = static_cast<std::size_t>(x);
        rep.ssm_loss = std::max(rep.ssm_loss, scaled_total);
        rep.reference_msr_loss = std::max(rep.reference_msr_loss, s_final[xi] - s_init[xi]);
    }
    rep.pass = rep.worst_concavity_slack >= -1e-9 &&
               rep.ssm_loss <= rep.reference_msr_loss + 1e-9;
    return rep;
}

SybilComparison simulate_sybil_split(const ScoringRule& rule, const Distribution& q_base,
                                     const Distribution& belief, double total_budget,
                                     std::span<const double> shares,
                                     std::span<const Distribution> reports) {
    if (shares.size() != reports.size() || shares.empty())
        throw std::invalid_argument("simulate_sybil_split: shares/reports length mismatch");
    double sum = 0.0;
    for (double s : shares) {
        if (s < 0.0) throw std::invalid_argument("simulate_sybil_split: negative share");
        sum += s;
    }
    if (std::abs(sum - total_budget) > 1e-9)
        throw std::invalid_argument("simulate_sybil_split: shares must sum to total_budget");

    const double B = budget_bound(rule);
    auto lam = [&](double dep) { return B > 0.0 ? std::min(1.0, dep / B) : 1.0; };

    SybilComparison cmp;
    // consecutive scaled trades from q_base
    std::vector<double> ref = q_base.probs();
    const std::size_t k = ref.size();
    for (std::size_t j = 0; j < shares.size(); ++j) {
        double l = lam(shares[j]);
        cmp.split_payoff += scaled_gain(rule, belief.span(),
                                        std::span<const double>(ref.data(), k),
                                        reports[j].span(), l);
        for (std::size_t i = 0; i < k; ++i)
            ref[i] = (1.0 - l) * ref[i] + l * reports[j][static_cast<int>(i)];
    }

    // one trade with the combined deposit, reporting the best of the shares'
    // reports (under the agent's own belief)
    double best_gain = -1e300;
    for (const Distribution& r : reports)
        best_gain = std::max(best_gain, expected_score_span(rule, belief.span(), r.span()));
    double base_val = expected_score_span(rule, belief.span(), q_base.span());
    cmp.single_payoff = lam(total_budget) * (best_gain - base_val);

    cmp.margin = cmp.single_payoff - cmp.split_payoff;
    cmp.dominated = cmp.split_payoff <= cmp.single_payoff + 1e-9;
    return cmp;
}

Distribution infer_belief(const TradeRecord& trade) {
    if (trade.scale < 1e-9)
        throw std::invalid_argument("infer_belief: scale too small to invert");
    const int k = trade.pre_reference.size();
    std::vector<double> out(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i)
        out[static_cast<std::size_t>(i)] =
            trade.pre_reference[i] +
            (trade.post_reference[i] - trade.pre_reference[i]) / trade.scale;
    return Distribution(std::move(out));
}

} // namespace msrlab
