#pragma once

#include <optional>
#include <span>
#include <vector>

#include "msrlab/distribution.hpp"
#include "msrlab/scoring.hpp"

namespace msrlab {

// Constraint-activity tolerance for binding_outcomes membership.
inline constexpr double kBindingTolerance = 1e-7;

/// Result of a budget-constrained report optimization.
struct ConstrainedReport {
    Distribution q_star;
    std::vector<int> binding_outcomes; // outcomes with score drop within 1e-7 of b
    double budget_used = 0.0;          // natural_budget(q0, q_star)
    double expected_score_gain = 0.0;  // E_p[S(q_star)] - E_p[S(q0)]
    double segment_deviation = 0.0;    // distance from q_star to segment [q0, p]
};

/// Worst-case score drop max_x [S_x(q0) - S_x(q)] when moving the market
/// from q0 to q. Strictly positive for q != q0 under a strictly proper rule.
double natural_budget(const ScoringRule& rule, const Distribution& q0, const Distribution& q);
double natural_budget_span(const ScoringRule& rule, std::span<const double> s_q0,
                           std::span<const double> q);

/// Largest natural budget over all domain pairs; the scale cap B used by the
/// deposit-scaled mechanism. Uses the rule's closed form when available,
/// after confirming it against a grid search within 1e-4.
double budget_bound(const ScoringRule& rule);

/// Pure grid+refinement evaluation of the bound, ignoring any closed form.
double budget_bound_numeric(const ScoringRule& rule);

struct SolveOptions {
    long global_n = 24;
    double h_min = 1e-7;
    bool boundary_snap = true;
};

/// Maximizes E_p[S(q)] subject to natural_budget(q0, q) <= b by adaptive
/// simplex-grid refinement (coarse grid, then shrinking pattern search around
/// the incumbent). Deterministic; ties broken lexicographically.
ConstrainedReport solve_constrained(const ScoringRule& rule, const Distribution& p,
                                    const Distribution& q0, double b,
                                    const SolveOptions& opts = {});

/// Independent brute-force check: exhaustive dense grid over the feasible
/// set at the given resolution (<= 1e-2), then exhaustive re-grids of the
/// incumbent's neighborhood down to a fixed terminal resolution. q0 is
/// always a candidate, so the feasible set is never empty.
ConstrainedReport oracle_constrained(const ScoringRule& rule, const Distribution& p,
                                     const Distribution& q0, double b, double resolution);

/// Largest alpha such that mix(q0, p, alpha) stays within budget b, found by
/// bisection to 1e-9. Monotonicity of the budget along the segment is
/// asserted from the bisection samples; a violation throws.
double max_alpha(const ScoringRule& rule, const Distribution& p, const Distribution& q0,
                 double b);

} // namespace msrlab
