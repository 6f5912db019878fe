#include "msrlab/budget.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "msrlab/simplex_search.hpp"

namespace msrlab {

namespace {

// feasibility slack: keeps boundary lattice points from being dropped to
// floating-point noise while staying far inside the 1e-7 reporting tolerance
constexpr double kFeasSlack = 1e-12;

std::array<double, kMaxOutcomes> scores_at(const ScoringRule& rule, std::span<const double> q) {
    std::array<double, kMaxOutcomes> s{};
    rule.score_into(q, std::span<double>(s.data(), q.size()));
    return s;
}

void check_inputs(const ScoringRule& rule, const Distribution& p, const Distribution& q0,
                  double b) {
    if (p.size() != rule.outcome_count() || q0.size() != rule.outcome_count())
        throw std::invalid_argument("constrained solve: dimension mismatch");
    if (!rule.in_domain(q0))
        throw std::domain_error("constrained solve: q0 outside rule domain");
    if (!rule.in_domain(p))
        throw std::domain_error("constrained solve: p outside rule domain");
    if (b < 0.0) throw std::invalid_argument("constrained solve: negative budget");
}

ConstrainedReport make_report(const ScoringRule& rule, const Distribution& p,
                              const Distribution& q0, double b, std::vector<double> q) {
    ConstrainedReport rep{Distribution(std::move(q)), {}, 0.0, 0.0, 0.0};
    const int k = rule.outcome_count();
    auto s0 = scores_at(rule, q0.span());
    auto s1 = scores_at(rule, rep.q_star.span());
    double nb = -1e300;
    for (int x = 0; x < k; ++x) {
        double drop = s0[static_cast<std::size_t>(x)] - s1[static_cast<std::size_t>(x)];
        nb = std::max(nb, drop);
        if (std::abs(drop - b) <= kBindingTolerance) rep.binding_outcomes.push_back(x);
    }
    rep.budget_used = nb;
    rep.expected_score_gain = expected_score_span(rule, p.span(), rep.q_star.span()) -
                              expected_score_span(rule, p.span(), q0.span());
    rep.segment_deviation =
        linf_distance(p, q0) < 1e-12 ? 0.0 : segment_distance(rep.q_star, q0, p);
    return rep;
}

// The log rule's budget constraint is the box bound q_x >= q0_x e^{-b}, so
// the optimal report is water-filling the belief against that box and the
// domain floor. The Brier expected score is a negated squared distance to
// the belief while each drop bounds the distance to a simplex corner, so the
// optimal report is the projection of p onto an intersection of balls cut by
// the floored simplex; enumerating which constraints are tight reduces every
// case to a projection onto an affine hull followed by a step to the sphere
// of one tight ball, and the best feasible candidate is the exact optimum
// because the true active structure is part of the enumeration. Anything
// else falls back to the search machinery below.
std::optional<std::vector<double>> exact_constrained(const ScoringRule& rule,
                                                     const Distribution& p,
                                                     const Distribution& q0, double b,
                                                     std::span<const double> s0s) {
    const int k = rule.outcome_count();
    const std::size_t n = static_cast<std::size_t>(k);
    const double floor = rule.floor();

    if (rule.tag() == "log") {
        std::vector<double> lower(n), q(n);
        for (std::size_t i = 0; i < n; ++i)
            lower[i] = std::max(floor, q0[static_cast<int>(i)] * std::exp(-b));
        std::vector<bool> free(n, true);
        for (int round = 0; round <= k; ++round) {
            double clamped_mass = 0.0, free_belief = 0.0;
            int free_n = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (free[i]) {
                    free_belief += p[static_cast<int>(i)];
                    ++free_n;
                } else {
                    clamped_mass += lower[i];
                }
            }
            if (free_n == 0) return lower;
            double scale = (1.0 - clamped_mass) / free_belief;
            bool grew = false;
            for (std::size_t i = 0; i < n; ++i) {
                if (!free[i]) continue;
                q[i] = p[static_cast<int>(i)] * scale;
                if (q[i] < lower[i]) {
                    free[i] = false;
                    grew = true;
                }
            }
            if (!grew) {
                for (std::size_t i = 0; i < n; ++i)
                    if (!free[i]) q[i] = lower[i];
                return q;
            }
        }
        return std::nullopt; // partition failed to settle; let the search run
    }

    if (rule.tag() == "brier" && k <= 10) {
        // the tight-structure enumeration is 4^k subsets; past ten outcomes
        // the generic search is the cheaper option
        std::vector<double> radius2(n);
        for (std::size_t i = 0; i < n; ++i) {
            // drop_x(q) = s0_x - 2 q_x + |q|^2 <= b  <=>  |q - e_x|^2 <= 1 + b - s0_x
            radius2[i] = std::max(0.0, 1.0 + b - s0s[i]);
        }

        auto feasible = [&](const std::vector<double>& q) {
            for (std::size_t i = 0; i < n; ++i)
                if (q[i] < floor - 1e-10) return false;
            return natural_budget_span(rule, s0s,
                                       std::span<const double>(q.data(), n)) <= b + 1e-10;
        };
        auto objective = [&](const std::vector<double>& q) {
            return expected_score_span(rule, p.span(), std::span<const double>(q.data(), n));
        };

        std::vector<double> best = q0.probs();
        double best_val = objective(best);

        // rows of the tight-constraint system: the simplex plane, the pairwise
        // sphere differences (linear since the quadratic terms cancel), and
        // any floor faces; m <= k rows over k unknowns
        std::vector<double> rows(n * n), rhs(n), m_fact(n * n), sol(n);
        std::vector<int> piv(n);
        std::vector<double> cp(n), pp(n), q(n);

        // projection onto the affine hull: z - A^T (A A^T)^{-1} (A z - rhs)
        auto project = [&](std::size_t m, const std::vector<double>& z,
                           std::vector<double>& out) {
            for (std::size_t r = 0; r < m; ++r) {
                sol[r] = -rhs[r];
                for (std::size_t i = 0; i < n; ++i) sol[r] += rows[r * n + i] * z[i];
            }
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t c = 0; c < m; ++c) {
                    double dot = 0.0;
                    for (std::size_t i = 0; i < n; ++i)
                        dot += rows[r * n + i] * rows[c * n + i];
                    m_fact[r * m + c] = dot;
                }
            // gaussian elimination with partial pivoting on the m x m gram
            for (std::size_t col = 0; col < m; ++col) {
                std::size_t lead = col;
                for (std::size_t r = col + 1; r < m; ++r)
                    if (std::abs(m_fact[r * m + col]) > std::abs(m_fact[lead * m + col]))
                        lead = r;
                if (std::abs(m_fact[lead * m + col]) < 1e-12) return false;
                if (lead != col) {
                    for (std::size_t c = 0; c < m; ++c)
                        std::swap(m_fact[lead * m + c], m_fact[col * m + c]);
                    std::swap(sol[lead], sol[col]);
                }
                for (std::size_t r = col + 1; r < m; ++r) {
                    double f = m_fact[r * m + col] / m_fact[col * m + col];
                    for (std::size_t c = col; c < m; ++c)
                        m_fact[r * m + c] -= f * m_fact[col * m + c];
                    sol[r] -= f * sol[col];
                }
            }
            for (std::size_t col = m; col-- > 0;) {
                for (std::size_t c = col + 1; c < m; ++c)
                    sol[col] -= m_fact[col * m + c] * sol[c];
                sol[col] /= m_fact[col * m + col];
            }
            out = z;
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t i = 0; i < n; ++i) out[i] -= sol[r] * rows[r * n + i];
            return true;
        };

        const std::vector<double> pv = p.probs();
        const unsigned full = 1u << k;
        for (unsigned balls = 1; balls < full; ++balls) {
            int anchor = -1;
            for (int x = 0; x < k; ++x)
                if (balls & (1u << x)) {
                    anchor = x;
                    break;
                }
            for (unsigned floors = 0; floors < full; ++floors) {
                std::size_t m = 1 + static_cast<std::size_t>(std::popcount(balls)) - 1 +
                                static_cast<std::size_t>(std::popcount(floors));
                if (m > n) continue;
                std::fill(rows.begin(), rows.begin() + static_cast<long>(m * n), 0.0);
                std::size_t r = 0;
                for (std::size_t i = 0; i < n; ++i) rows[r * n + i] = 1.0;
                rhs[r++] = 1.0;
                for (int y = 0; y < k; ++y) {
                    if (y == anchor || !(balls & (1u << y))) continue;
                    rows[r * n + static_cast<std::size_t>(y)] = 1.0;
                    rows[r * n + static_cast<std::size_t>(anchor)] = -1.0;
                    rhs[r++] = 0.5 * (radius2[static_cast<std::size_t>(anchor)] -
                                      radius2[static_cast<std::size_t>(y)]);
                }
                for (int i = 0; i < k; ++i) {
                    if (!(floors & (1u << i))) continue;
                    rows[r * n + static_cast<std::size_t>(i)] = 1.0;
                    rhs[r++] = floor;
                }

                std::vector<double> center(n, 0.0);
                center[static_cast<std::size_t>(anchor)] = 1.0;
                if (!project(m, center, cp) || !project(m, pv, pp)) continue;
                double off = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    double d = cp[i] - center[i];
                    off += d * d;
                }
                double rr = radius2[static_cast<std::size_t>(anchor)] - off;
                if (rr < -1e-12) continue;
                rr = std::max(rr, 0.0);
                double wn = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    q[i] = pp[i] - cp[i];
                    wn += q[i] * q[i];
                }
                wn = std::sqrt(wn);
                double scale = wn > 1e-14 ? std::sqrt(rr) / wn : 0.0;
                for (std::size_t i = 0; i < n; ++i) q[i] = cp[i] + scale * q[i];
                if (!feasible(q)) continue;
                double val = objective(q);
                if (val > best_val) {
                    best_val = val;
                    best = q;
                }
            }
        }
        return best;
    }

    return std::nullopt;
}

// For both built-in rules every score drop is convex along a ray leaving q0,
// so feasibility along the ray is an interval and the binding boundary is a
// radial graph over directions. Polishing a report then reduces to a direct
// search over unit directions with one radial bisection per trial; nothing
// is left to stall on curved faces or their edges, which is where stencil
// walks with explicit feasibility filtering lose tangential progress.
void radial_polish(const ScoringRule& rule, const Distribution& p, const Distribution& q0,
                   double b, std::span<const double> s0s, std::vector<double>& pt) {
    const int k = rule.outcome_count();
    const std::size_t n = static_cast<std::size_t>(k);
    const double floor = rule.floor();
    if (1.0 - k * floor <= 0.0) return;

    auto objective = [&](const std::vector<double>& q) {
        return expected_score_span(rule, p.span(), std::span<const double>(q.data(), n));
    };
    auto feasible = [&](const std::vector<double>& q) {
        return natural_budget_span(rule, s0s, std::span<const double>(q.data(), n)) <=
               b + kFeasSlack;
    };

    // orthonormal basis of the sum-zero subspace
    std::vector<std::vector<double>> basis;
    basis.reserve(n - 1);
    for (std::size_t j = 1; j < n; ++j) {
        std::vector<double> v(n, 0.0);
        double s = 1.0 / std::sqrt(static_cast<double>(j) * static_cast<double>(j + 1));
        for (std::size_t i = 0; i < j; ++i) v[i] = s;
        v[j] = -static_cast<double>(j) * s;
        basis.push_back(std::move(v));
    }
    const std::size_t dim = n - 1;

    std::vector<double> u(n), out(n);
    auto to_ambient = [&](const std::vector<double>& c) {
        std::fill(u.begin(), u.end(), 0.0);
        for (std::size_t j = 0; j < dim; ++j)
            for (std::size_t i = 0; i < n; ++i) u[i] += c[j] * basis[j][i];
    };

    // outermost feasible point on the ray q0 + t*u, written into out
    auto boundary_value = [&](const std::vector<double>& c) {
        to_ambient(c);
        double t_max = 1e300;
        for (std::size_t i = 0; i < n; ++i)
            if (u[i] < 0.0) t_max = std::min(t_max, (q0[static_cast<int>(i)] - floor) / -u[i]);
        auto at = [&](double t) {
            for (std::size_t i = 0; i < n; ++i)
                out[i] = std::max(floor, q0[static_cast<int>(i)] + t * u[i]);
        };
        if (!(t_max > 0.0)) {
            at(0.0);
            return objective(out);
        }
        at(t_max);
        if (feasible(out)) return objective(out);
        double lo = 0.0, hi = t_max;
        for (int it = 0; it < 80; ++it) {
            double mid = 0.5 * (lo + hi);
            at(mid);
            (feasible(out) ? lo : hi) = mid;
        }
        at(lo);
        return objective(out);
    };

    std::vector<double> start(n);
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        start[i] = pt[i] - q0[static_cast<int>(i)];
        norm += start[i] * start[i];
    }
    if (norm < 1e-24) return; // pinned at q0, nothing to slide

    std::vector<double> c(dim), trial(dim);
    for (std::size_t j = 0; j < dim; ++j) {
        c[j] = 0.0;
        for (std::size_t i = 0; i < n; ++i) c[j] += start[i] * basis[j][i];
        c[j] /= std::sqrt(norm);
    }

    double best_val = boundary_value(c);
    std::vector<double> best_pt = out;

    // direct search over unit directions: full +-1 box stencil, halving the
    // angular step only when no move improves
    std::vector<std::vector<double>> stencil;
    {
        std::vector<int> digits(dim, -1);
        while (true) {
            bool all_zero = true;
            for (int d : digits) all_zero &= d == 0;
            if (!all_zero)
                stencil.emplace_back(digits.begin(), digits.end());
            std::size_t j = 0;
            while (j < dim && digits[j] == 1) digits[j++] = -1;
            if (j == dim) break;
            ++digits[j];
        }
    }

    std::array<double, kMaxOutcomes> grad{};
    std::array<double, kMaxOutcomes> sc{};
    std::span<double> grad_s(grad.data(), n);
    std::span<double> sc_s(sc.data(), n);

    double h = 0.25;
    for (int round = 0; round < 600 && h > 1e-9; ++round) {
        bool improved = false;
        std::vector<double> next_c;
        auto offer_trial = [&](const std::vector<double>& shift) {
            double norm2 = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                trial[j] = c[j] + h * shift[j];
                norm2 += trial[j] * trial[j];
            }
            if (norm2 < 1e-18) return;
            double inv = 1.0 / std::sqrt(norm2);
            for (double& v : trial) v *= inv;
            double val = boundary_value(trial);
            if (val > best_val) {
                best_val = val;
                best_pt = out;
                next_c = trial;
                improved = true;
            }
        };
        for (const auto& s : stencil) offer_trial(s);

        // tangents of the faces binding at the incumbent: along a kinked
        // ridge the improving cone is thinner than the box stencil resolves
        std::vector<std::vector<double>> acts;
        std::span<const double> bp(best_pt.data(), n);
        rule.score_into(bp, sc_s);
        auto add_active = [&](std::vector<double> a) {
            double amean = 0.0;
            for (double v : a) amean += v;
            amean /= static_cast<double>(k);
            for (double& v : a) v -= amean;
            for (const auto& prior : acts) {
                double along = 0.0;
                for (std::size_t i = 0; i < n; ++i) along += a[i] * prior[i];
                for (std::size_t i = 0; i < n; ++i) a[i] -= along * prior[i];
            }
            double norm2 = 0.0;
            for (double v : a) norm2 += v * v;
            if (norm2 < 1e-16) return;
            double inv = 1.0 / std::sqrt(norm2);
            for (double& v : a) v *= inv;
            acts.push_back(std::move(a));
        };
        for (int x = 0; x < k; ++x) {
            if (s0s[static_cast<std::size_t>(x)] - sc[static_cast<std::size_t>(x)] <
                b - 1e-7)
                continue;
            rule.gradient_into(bp, x, grad_s);
            std::vector<double> a(n);
            for (std::size_t i = 0; i < n; ++i) a[i] = -grad[i];
            add_active(std::move(a));
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (best_pt[i] > floor + 1e-9) continue;
            std::vector<double> a(n, 0.0);
            a[i] = -1.0;
            add_active(std::move(a));
        }
        if (!acts.empty() && acts.size() < dim) {
            std::vector<std::vector<double>> nulls;
            for (std::size_t j = 0; j < dim && nulls.size() < dim - acts.size(); ++j) {
                std::vector<double> v = basis[j];
                for (const auto& a : acts) {
                    double along = 0.0;
                    for (std::size_t i = 0; i < n; ++i) along += v[i] * a[i];
                    for (std::size_t i = 0; i < n; ++i) v[i] -= along * a[i];
                }
                for (const auto& nl : nulls) {
                    double along = 0.0;
                    for (std::size_t i = 0; i < n; ++i) along += v[i] * nl[i];
                    for (std::size_t i = 0; i < n; ++i) v[i] -= along * nl[i];
                }
                double norm2 = 0.0;
                for (double x : v) norm2 += x * x;
                if (norm2 < 1e-12) continue;
                double inv = 1.0 / std::sqrt(norm2);
                for (double& x : v) x *= inv;
                nulls.push_back(std::move(v));
            }
            std::vector<double> w(dim);
            for (const auto& nl : nulls) {
                for (std::size_t j = 0; j < dim; ++j) {
                    w[j] = 0.0;
                    for (std::size_t i = 0; i < n; ++i) w[j] += nl[i] * basis[j][i];
                }
                offer_trial(w);
                for (double& x : w) x = -x;
                offer_trial(w);
            }
        }

        if (improved) {
            c = next_c;
            // growing the step keeps ridge traversal geometric instead of a
            // creep that exhausts the round budget
            h = std::min(h * 1.6, 0.25);
        } else {
            h *= 0.5;
        }
    }

    if (best_val > objective(pt)) pt = best_pt;
}

} // namespace

double natural_budget_span(const ScoringRule& rule, std::span<const double> s_q0,
                           std::span<const double> q) {
    std::array<double, kMaxOutcomes> s{};
    rule.score_into(q, std::span<double>(s.data(), q.size()));
    double nb = -1e300;
    for (std::size_t x = 0; x < q.size(); ++x) nb = std::max(nb, s_q0[x] - s[x]);
    return nb;
}

double natural_budget(const ScoringRule& rule, const Distribution& q0, const Distribution& q) {
    if (q0.size() != rule.outcome_count() || q.size() != rule.outcome_count())
        throw std::invalid_argument("natural_budget: dimension mismatch");
    if (!rule.in_domain(q0) || !rule.in_domain(q))
        throw std::domain_error("natural_budget: point outside rule domain");
    auto s0 = scores_at(rule, q0.span());
    return natural_budget_span(rule, std::span<const double>(s0.data(), q0.span().size()),
                               q.span());
}

double budget_bound_numeric(const ScoringRule& rule) {
    const int k = rule.outcome_count();
    if (1.0 - k * rule.floor() <= 0.0) return 0.0;
    double bound = 0.0;
    std::array<double, kMaxOutcomes> s{};
    for (int x = 0; x < k; ++x) {
        auto sx = [&](std::span<const double> q) {
            rule.score_into(q, std::span<double>(s.data(), q.size()));
            return s[static_cast<std::size_t>(x)];
        };
        auto hi = maximize_on_simplex(k, rule.floor(), sx);
        auto lo = maximize_on_simplex(
            k, rule.floor(), [&](std::span<const double> q) { return -sx(q); });
        bound = std::max(bound, hi.value + lo.value);
    }
    return bound;
}

double budget_bound(const ScoringRule& rule) {
    auto analytic = rule.analytic_budget_bound();
    if (!analytic) return budget_bound_numeric(rule);
    // cheap confirmation pass; the corners realizing the extremes for both
    // built-in rules sit exactly on a coarse grid
    const int k = rule.outcome_count();
    const double span = 1.0 - k * rule.floor();
    if (span <= 0.0) {
        if (std::abs(*analytic) > 1e-4)
            throw std::runtime_error("budget_bound: closed form disagrees with point domain");
        return *analytic;
    }
    double hi = -1e300, lo = 1e300;
    std::array<double, kMaxOutcomes> s{};
    std::array<double, kMaxOutcomes> q{};
    const long n = 32;
    for_each_composition(n, k, [&](std::span<const long> c) {
        for (int i = 0; i < k; ++i)
            q[static_cast<std::size_t>(i)] =
                rule.floor() + span * (static_cast<double>(c[static_cast<std::size_t>(i)]) / static_cast<double>(n));
        rule.score_into(std::span<const double>(q.data(), static_cast<std::size_t>(k)),
                        std::span<double>(s.data(), static_cast<std::size_t>(k)));
        hi = std::max(hi, s[0]);
        lo = std::min(lo, s[0]);
    });
    if (std::abs((hi - lo) - *analytic) > 1e-4)
        throw std::runtime_error("budget_bound: closed form disagrees with grid search");
    return *analytic;
}

ConstrainedReport solve_constrained(const ScoringRule& rule, const Distribution& p,
                                    const Distribution& q0, double b, const SolveOptions& opts) {
    check_inputs(rule, p, q0, b);
    const int k = rule.outcome_count();

    // degenerate belief: staying put is optimal and exact
    if (linf_distance(p, q0) < 1e-12) return make_report(rule, p, q0, b, q0.probs());

    // zero budget: any move away from q0 drops some outcome's score
    if (b == 0.0) return make_report(rule, p, q0, b, q0.probs());

    auto s0 = scores_at(rule, q0.span());
    std::span<const double> s0s(s0.data(), static_cast<std::size_t>(k));

    // slack constraint: the truthful report is feasible, hence optimal
    if (natural_budget_span(rule, s0s, p.span()) <= b)
        return make_report(rule, p, q0, b, p.probs());

    if (auto exact = exact_constrained(rule, p, q0, b, s0s))
        return make_report(rule, p, q0, b, std::move(*exact));

    auto objective = [&](std::span<const double> q) {
        return expected_score_span(rule, p.span(), q);
    };
    auto feasible = [&](std::span<const double> q) {
        return natural_budget_span(rule, s0s, q) <= b + kFeasSlack;
    };

    SimplexSearchOptions sopts;
    sopts.global_n = opts.global_n;
    sopts.h_min = opts.h_min;
    sopts.stencil_radius = 2;
    std::vector<std::vector<double>> seeds = {q0.probs()};
    {
        // the deepest feasible mixture toward the belief is always a valid
        // report; seeding it keeps the search from undercutting the segment
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 60; ++it) {
            double mid = 0.5 * (lo + hi);
            (feasible(mix(q0, p, mid).span()) ? lo : hi) = mid;
        }
        seeds.push_back(mix(q0, p, lo).probs());
    }
    auto best = maximize_on_simplex(k, rule.floor(), objective, feasible, seeds, sopts);

    {
        // the pattern step above stalls where the budget surface curves away
        // from its narrow stencil; re-grid the incumbent with a wide shell,
        // recentering while improvements keep landing on the rim
        constexpr int radius = 6;
        const auto& stencil = sum_zero_stencil(k, radius);
        const double floor = rule.floor();
        const double span = 1.0 - k * floor;
        std::vector<double> cand(static_cast<std::size_t>(k));
        double h = span / static_cast<double>(opts.global_n);
        int recenters = 0;
        while (h > opts.h_min && recenters < 600) {
            ++recenters;
            const std::vector<double> center = best.point;
            const double prev_val = best.value;
            int hit_shell = 0;
            for (const auto& v : stencil) {
                bool ok = true;
                for (int i = 0; i < k; ++i) {
                    double x = center[static_cast<std::size_t>(i)] +
                               h * v[static_cast<std::size_t>(i)];
                    if (x < floor) {
                        if (x > floor - 1e-15) x = floor;
                        else { ok = false; break; }
                    }
                    cand[static_cast<std::size_t>(i)] = x;
                }
                if (!ok || !feasible(cand)) continue;
                double val = objective(cand);
                if (val > best.value) {
                    best.value = val;
                    best.point = cand;
                    int shell = 0;
                    for (int x : v) shell = std::max(shell, std::abs(x));
                    hit_shell = shell;
                }
            }
            if (best.value <= prev_val || hit_shell < radius) h /= 3.0;
        }
    }

    if (opts.boundary_snap) {
        // the optimum sits on the budget surface whenever the constraint
        // binds; push the incumbent outward along its ray from q0 by
        // bisection and keep the result only if it scores better
        std::vector<double> dir(static_cast<std::size_t>(k));
        double norm = 0.0;
        for (int i = 0; i < k; ++i) {
            dir[static_cast<std::size_t>(i)] = best.point[static_cast<std::size_t>(i)] - q0[i];
            norm += dir[static_cast<std::size_t>(i)] * dir[static_cast<std::size_t>(i)];
        }
        if (norm > 1e-24) {
            // largest admissible scale before leaving the floored simplex
            double t_max = 1e300;
            for (int i = 0; i < k; ++i) {
                double d = dir[static_cast<std::size_t>(i)];
                if (d < 0.0) t_max = std::min(t_max, (rule.floor() - q0[i]) / d);
            }
            std::vector<double> cand(static_cast<std::size_t>(k));
            auto at = [&](double t) {
                for (int i = 0; i < k; ++i)
                    cand[static_cast<std::size_t>(i)] = q0[i] + t * dir[static_cast<std::size_t>(i)];
            };
            double lo = 1.0, hi = std::min(t_max, 4.0);
            at(hi);
            if (feasible(cand)) {
                lo = hi;
            } else {
                for (int it = 0; it < 100 && hi - lo > 1e-15; ++it) {
                    double mid = 0.5 * (lo + hi);
                    at(mid);
                    (feasible(cand) ? lo : hi) = mid;
                }
            }
            at(lo);
            double val = objective(cand);
            if (val > best.value) {
                best.value = val;
                best.point = cand;
            }
        }
    }

    radial_polish(rule, p, q0, b, s0s, best.point);

    return make_report(rule, p, q0, b, std::move(best.point));
}

ConstrainedReport oracle_constrained(const ScoringRule& rule, const Distribution& p,
                                     const Distribution& q0, double b, double resolution) {
    check_inputs(rule, p, q0, b);
    if (!(resolution > 0.0) || resolution > 1e-2 + 1e-15)
        throw std::invalid_argument("oracle_constrained: resolution must be in (0, 1e-2]");
    const int k = rule.outcome_count();
    const double floor = rule.floor();
    const double span = 1.0 - k * floor;

    auto s0 = scores_at(rule, q0.span());
    std::span<const double> s0s(s0.data(), static_cast<std::size_t>(k));
    auto objective = [&](std::span<const double> q) {
        return expected_score_span(rule, p.span(), q);
    };
    auto feasible = [&](std::span<const double> q) {
        return natural_budget_span(rule, s0s, q) <= b + kFeasSlack;
    };

    std::array<double, kMaxOutcomes> buf{};
    std::span<double> q(buf.data(), static_cast<std::size_t>(k));
    std::array<double, kMaxOutcomes> best{};
    double best_val = -1e300;
    bool have = false;
    auto offer = [&](std::span<const double> cand) {
        if (!feasible(cand)) return;
        double v = objective(cand);
        bool better = !have || v > best_val;
        if (!better && v == best_val) {
            for (int i = 0; i < k; ++i) {
                if (cand[static_cast<std::size_t>(i)] < best[static_cast<std::size_t>(i)]) { better = true; break; }
                if (cand[static_cast<std::size_t>(i)] > best[static_cast<std::size_t>(i)]) break;
            }
        }
        if (better) {
            std::copy(cand.begin(), cand.end(), best.begin());
            best_val = v;
            have = true;
        }
    };

    offer(q0.span());
    if (span <= 0.0)
        return make_report(rule, p, q0, b,
                           std::vector<double>(best.begin(), best.begin() + k));

    // stage 1: exhaustive dense grid at the requested resolution
    const long m = std::max<long>(1, std::lround(1.0 / resolution));
    for_each_composition(m, k, [&](std::span<const long> c) {
        for (int i = 0; i < k; ++i)
            q[static_cast<std::size_t>(i)] =
                floor + span * (static_cast<double>(c[static_cast<std::size_t>(i)]) / static_cast<double>(m));
        offer(q);
    });

    // stage 2+: exhaustive re-grid of the incumbent's neighborhood, six times
    // finer each stage; recenter without shrinking while the incumbent keeps
    // landing on the stencil shell
    constexpr int radius = 12;
    const auto& stencil = sum_zero_stencil(k, radius);
    double h = (span / static_cast<double>(m)) / 6.0;
    int recenters = 0;
    while (h > 1e-9 && recenters < 400) {
        ++recenters;
        std::array<double, kMaxOutcomes> center = best;
        double prev_val = best_val;
        int hit_shell = 0;
        for (const auto& v : stencil) {
            bool ok = true;
            for (int i = 0; i < k; ++i) {
                double x = center[static_cast<std::size_t>(i)] + h * v[static_cast<std::size_t>(i)];
                if (x < floor) {
                    if (x > floor - 1e-15) x = floor;
                    else { ok = false; break; }
                }
                q[static_cast<std::size_t>(i)] = x;
            }
            if (!ok) continue;
            double old = best_val;
            offer(q);
            if (best_val > old) {
                int shell = 0;
                for (int x : v) shell = std::max(shell, std::abs(x));
                hit_shell = shell;
            }
        }
        if (best_val <= prev_val || hit_shell < radius) h /= 6.0;
    }

    std::vector<double> polished(best.begin(), best.begin() + k);
    radial_polish(rule, p, q0, b, s0s, polished);
    offer(std::span<const double>(polished.data(), static_cast<std::size_t>(k)));

    return make_report(rule, p, q0, b, std::vector<double>(best.begin(), best.begin() + k));
}

double max_alpha(const ScoringRule& rule, const Distribution& p, const Distribution& q0,
                 double b) {
    check_inputs(rule, p, q0, b);
    auto s0 = scores_at(rule, q0.span());
    std::span<const double> s0s(s0.data(), q0.span().size());
    auto nb_at = [&](double a) {
        Distribution m = mix(q0, p, a);
        return natural_budget_span(rule, s0s, m.span());
    };

    if (b == 0.0) return 0.0; // any movement costs budget under a strictly proper rule
    if (nb_at(1.0) <= b) return 1.0;

    std::vector<std::pair<double, double>> trace;
    trace.reserve(64);
    double lo = 0.0, hi = 1.0;
    while (hi - lo > 1e-9) {
        double mid = 0.5 * (lo + hi);
        double nb = nb_at(mid);
        trace.emplace_back(mid, nb);
        (nb <= b ? lo : hi) = mid;
    }

    // the search relies on the budget growing along the segment; check the
    // samples actually seen and surface any quasiconcavity breakage
    std::sort(trace.begin(), trace.end());
    for (std::size_t i = 1; i < trace.size(); ++i) {
        if (trace[i].second < trace[i - 1].second - 1e-10)
            throw std::runtime_error("max_alpha: natural budget not monotone along segment");
    }
    return lo;
}

} // namespace msrlab
