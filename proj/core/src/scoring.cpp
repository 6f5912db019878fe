#include "msrlab/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "msrlab/rng.hpp"
#include "msrlab/simplex_search.hpp"

namespace msrlab {

ScoringRule::ScoringRule(std::string tag, int k, double floor)
    : k_(k), floor_(floor), tag_(std::move(tag)) {
    if (k < 2) throw std::invalid_argument("ScoringRule: k < 2");
    if (floor < 0.0) throw std::invalid_argument("ScoringRule: negative floor");
    if (k * floor > 1.0 + 1e-12)
        throw std::invalid_argument("ScoringRule: floor too large, domain empty");
}

bool ScoringRule::in_domain(std::span<const double> q) const {
    if (static_cast<int>(q.size()) != k_) return false;
    for (double v : q)
        if (v < floor_ - 1e-12) return false;
    return true;
}

// ---- Brier ----

BrierRule::BrierRule(int k, double floor) : ScoringRule("brier", k, floor) {}

void BrierRule::score_into(std::span<const double> q, std::span<double> out) const {
    double ss = 0.0;
    for (double v : q) ss += v * v;
    for (int x = 0; x < k_; ++x) out[static_cast<std::size_t>(x)] = 2.0 * q[static_cast<std::size_t>(x)] - ss;
}

void BrierRule::gradient_into(std::span<const double> q, int outcome,
                              std::span<double> out) const {
    for (int j = 0; j < k_; ++j)
        out[static_cast<std::size_t>(j)] = -2.0 * q[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(outcome)] += 2.0;
}

std::optional<double> BrierRule::analytic_budget_bound() const {
    // extremes sit at domain corners: S_x spans [2*floor - C, 2*(1-(k-1)floor) - C]
    return 2.0 * (1.0 - k_ * floor_);
}

// ---- floored log ----

FlooredLogRule::FlooredLogRule(int k, double floor) : ScoringRule("log", k, floor) {
    if (floor <= 0.0)
        throw std::invalid_argument("FlooredLogRule: floor must be positive");
}

void FlooredLogRule::score_into(std::span<const double> q, std::span<double> out) const {
    for (int x = 0; x < k_; ++x)
        out[static_cast<std::size_t>(x)] = std::log(q[static_cast<std::size_t>(x)]);
}

void FlooredLogRule::gradient_into(std::span<const double> q, int outcome,
                                   std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    out[static_cast<std::size_t>(outcome)] = 1.0 / q[static_cast<std::size_t>(outcome)];
}

std::optional<double> FlooredLogRule::analytic_budget_bound() const {
    double span = 1.0 - k_ * floor_;
    if (span <= 0.0) return 0.0;
    return std::log((1.0 - (k_ - 1) * floor_) / floor_);
}

// ---- registry ----

RulePtr make_rule(const std::string& tag, int k, std::optional<double> floor) {
    if (tag == "brier") return std::make_shared<BrierRule>(k, floor.value_or(0.0));
    if (tag == "log") return std::make_shared<FlooredLogRule>(k, floor.value_or(1e-3));
    throw std::invalid_argument("make_rule: unknown rule tag '" + tag + "'");
}

// ---- free operations ----

ScoreVector score(const ScoringRule& rule, const Distribution& q) {
    if (!rule.in_domain(q))
        throw std::domain_error("score: report outside rule domain");
    ScoreVector sv;
    sv.values.resize(static_cast<std::size_t>(rule.outcome_count()));
    rule.score_into(q.span(), sv.values);
    return sv;
}

double expected_score_span(const ScoringRule& rule, std::span<const double> belief,
                           std::span<const double> report) {
    double buf[kMaxOutcomes];
    std::span<double> s(buf, report.size());
    rule.score_into(report, s);
    double e = 0.0;
    for (std::size_t i = 0; i < report.size(); ++i) e += belief[i] * s[i];
    return e;
}

double expected_score(const ScoringRule& rule, const Distribution& belief,
                      const Distribution& report) {
    if (belief.size() != report.size() || belief.size() != rule.outcome_count())
        throw std::invalid_argument("expected_score: dimension mismatch");
    if (!rule.in_domain(report))
        throw std::domain_error("expected_score: report outside rule domain");
    return expected_score_span(rule, belief.span(), report.span());
}

std::vector<double> score_gradient(const ScoringRule& rule, const Distribution& q, int outcome) {
    if (outcome < 0 || outcome >= rule.outcome_count())
        throw std::invalid_argument("score_gradient: bad outcome index");
    if (!rule.in_domain(q))
        throw std::domain_error("score_gradient: point outside rule domain");
    std::vector<double> g(static_cast<std::size_t>(rule.outcome_count()));
    rule.gradient_into(q.span(), outcome, g);
    return g;
}

ScoreVector product_score(const ScoringRule& rule, const ProductBelief& pb) {
    if (rule.outcome_count() != 4)
        throw std::invalid_argument("product_score: rule must have 4 outcomes");
    return score(rule, pb.expand());
}

Distribution sample_interior(const ScoringRule& rule, Rng& rng, double margin_frac) {
    const int k = rule.outcome_count();
    const double lo = rule.floor() + margin_frac * (1.0 - k * rule.floor()) / k;
    const double span = 1.0 - k * lo;
    std::vector<double> v(static_cast<std::size_t>(k));
    double sum = 0.0;
    for (double& x : v) {
        x = -std::log(1.0 - rng.uniform()) + 1e-12;
        sum += x;
    }
    for (double& x : v) x = lo + span * (x / sum);
    return Distribution(std::move(v));
}

// ---- property checkers ----

namespace {

std::vector<double> sample_domain_point(Rng& rng, int k, double floor) {
    std::vector<double> v(static_cast<std::size_t>(k));
    double sum = 0.0;
    for (double& x : v) {
        x = -std::log(1.0 - rng.uniform());
        sum += x;
    }
    double span = 1.0 - k * floor;
    for (double& x : v) x = floor + span * (x / sum);
    return v;
}

} // namespace

CheckReport check_properness(const ScoringRule& rule, int trials, double tolerance,
                             const PropernessOptions& opts) {
    const int k = rule.outcome_count();
    CheckReport rep;
    rep.trials = trials;
    rep.worst_violation = -1e300;
    Rng rng(opts.seed);

    const long m = std::lround(1.0 / opts.grid_resolution);
    const double span = 1.0 - k * rule.floor();
    std::vector<double> q(static_cast<std::size_t>(k));

    for (int t = 0; t < trials; ++t) {
        std::vector<double> p = sample_domain_point(rng, k, rule.floor());
        const double self = expected_score_span(rule, p, p);
        double best = -1e300;
        for_each_composition(m, k, [&](std::span<const long> c) {
            for (int i = 0; i < k; ++i)
                q[static_cast<std::size_t>(i)] =
                    rule.floor() + span * (static_cast<double>(c[static_cast<std::size_t>(i)]) / static_cast<double>(m));
            best = std::max(best, expected_score_span(rule, p, q));
        });
        for (int r = 0; r < opts.random_reports; ++r) {
            std::vector<double> cand = sample_domain_point(rng, k, rule.floor());
            best = std::max(best, expected_score_span(rule, p, cand));
        }
        rep.worst_violation = std::max(rep.worst_violation, best - self);
    }
    rep.pass = rep.worst_violation <= tolerance;
    if (!rep.pass) rep.note = "a report beat the truthful report in expectation";
    return rep;
}

CheckReport check_quasiconcavity(const ScoringRule& rule, int trials, std::uint64_t seed) {
    const int k = rule.outcome_count();
    CheckReport rep;
    rep.trials = trials;
    rep.worst_violation = -1e300;
    Rng rng(seed);

    std::vector<double> mid(static_cast<std::size_t>(k));
    std::vector<double> sp(static_cast<std::size_t>(k)), sq(static_cast<std::size_t>(k)),
        sm(static_cast<std::size_t>(k));

    for (int t = 0; t < trials; ++t) {
        std::vector<double> p = sample_domain_point(rng, k, rule.floor());
        std::vector<double> q = sample_domain_point(rng, k, rule.floor());
        for (int i = 0; i < k; ++i)
            mid[static_cast<std::size_t>(i)] = 0.5 * (p[static_cast<std::size_t>(i)] + q[static_cast<std::size_t>(i)]);
        rule.score_into(p, sp);
        rule.score_into(q, sq);
        rule.score_into(mid, sm);
        for (int x = 0; x < k; ++x) {
            const double a = sp[static_cast<std::size_t>(x)];
            const double b = sq[static_cast<std::size_t>(x)];
            const double m = sm[static_cast<std::size_t>(x)];
            const double lo = std::min(a, b);
            // midpoint below the endpoint minimum is a hard violation;
            // sitting exactly on it is allowed only when the endpoints tie
            double viol = lo - m;
            if (std::abs(a - b) > 1e-9 && m <= lo) viol = std::max(viol, 1e-18);
            rep.worst_violation = std::max(rep.worst_violation, viol);
        }
    }
    rep.pass = rep.worst_violation <= 1e-12;
    if (!rep.pass) rep.note = "midpoint score fell to or below the endpoint minimum";
    return rep;
}

} // namespace msrlab
