#include "msrlab/lab.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "msrlab/ledger.hpp"
#include "msrlab/rng.hpp"

namespace msrlab {

namespace {

using Vec3 = std::array<double, 3>;

// orthonormal basis of the sum-zero plane for three outcomes
constexpr Vec3 kU1 = {0.7071067811865476, -0.7071067811865476, 0.0};
constexpr Vec3 kU2 = {0.4082482904638630, 0.4082482904638630, -0.8164965809277260};

std::vector<double> scores_of(const ScoringRule& rule, std::span<const double> q) {
    std::vector<double> s(q.size());
    rule.score_into(q, s);
    return s;
}

Vec3 scores3(const ScoringRule& rule, const Vec3& q) {
    Vec3 s{};
    rule.score_into(std::span<const double>(q.data(), 3), std::span<double>(s.data(), 3));
    return s;
}

double score3(const ScoringRule& rule, const Vec3& q, int outcome) {
    return scores3(rule, q)[static_cast<std::size_t>(outcome)];
}

// gradient of S_outcome projected onto the sum-zero plane
Vec3 proj_grad3(const ScoringRule& rule, const Vec3& q, int outcome) {
    Vec3 g{};
    rule.gradient_into(std::span<const double>(q.data(), 3), outcome,
                       std::span<double>(g.data(), 3));
    double mean = (g[0] + g[1] + g[2]) / 3.0;
    for (double& v : g) v -= mean;
    return g;
}

double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

double norm3(const Vec3& a) { return std::sqrt(dot3(a, a)); }

// 90-degree rotation of a sum-zero vector within the simplex plane
Vec3 rotate90(const Vec3& g) {
    const double inv_sqrt3 = 0.5773502691896258;
    return {inv_sqrt3 * (g[2] - g[1]), inv_sqrt3 * (g[0] - g[2]), inv_sqrt3 * (g[1] - g[0])};
}

bool in_box3(const Vec3& q, double lo) {
    return q[0] >= lo && q[1] >= lo && q[2] >= lo;
}

void recentre_sum3(Vec3& q) {
    double drift = (q[0] + q[1] + q[2] - 1.0) / 3.0;
    for (double& v : q) v -= drift;
}

// projected Newton step back onto the level set {S_X = target}
bool correct_to_level(const ScoringRule& rule, Vec3& q, double target, double lo) {
    for (int it = 0; it < 16; ++it) {
        recentre_sum3(q);
        double e = score3(rule, q, 0) - target;
        if (std::abs(e) <= 1e-14) break;
        Vec3 g = proj_grad3(rule, q, 0);
        double gg = dot3(g, g);
        if (gg < 1e-20) return false;
        double t = -e / gg;
        for (int i = 0; i < 3; ++i) q[static_cast<std::size_t>(i)] += t * g[static_cast<std::size_t>(i)];
        if (!in_box3(q, lo - 1e-9)) return false;
    }
    return in_box3(q, lo) && std::abs(score3(rule, q, 0) - target) <= 1e-12;
}

// two-variable Newton in sum-zero coordinates driving both tight residuals
// to machine precision
bool newton_polish(const ScoringRule& rule, Vec3& r, double tx, double ty, double lo,
                   double& residual) {
    for (int it = 0; it < 40; ++it) {
        Vec3 s = scores3(rule, r);
        double f1 = s[0] - tx;
        double f2 = s[1] - ty;
        residual = std::max(std::abs(f1), std::abs(f2));
        if (residual <= 1e-14) return true;
        Vec3 gx = proj_grad3(rule, r, 0);
        Vec3 gy = proj_grad3(rule, r, 1);
        double j11 = dot3(gx, kU1), j12 = dot3(gx, kU2);
        double j21 = dot3(gy, kU1), j22 = dot3(gy, kU2);
        double det = j11 * j22 - j12 * j21;
        if (std::abs(det) < 1e-18) return false;
        double d1 = (-f1 * j22 + f2 * j12) / det;
        double d2 = (-f2 * j11 + f1 * j21) / det;
        for (int i = 0; i < 3; ++i)
            r[static_cast<std::size_t>(i)] += d1 * kU1[static_cast<std::size_t>(i)] + d2 * kU2[static_cast<std::size_t>(i)];
        recentre_sum3(r);
        if (!in_box3(r, lo)) return false;
    }
    Vec3 s = scores3(rule, r);
    residual = std::max(std::abs(s[0] - tx), std::abs(s[1] - ty));
    return residual <= 5e-14;
}

// walk the {S_X = s0_X - b} level set from the steepest-descent entry point
// until the S_Y drop also equals b with a surplus on Z
bool walk_double_tight(const ScoringRule& rule, const Distribution& q0, double b, Vec3& out,
                       double& out_a, double& out_residual) {
    const double lo = rule.floor() + 1e-9;
    Vec3 start = {q0[0], q0[1], q0[2]};
    Vec3 s0 = scores3(rule, start);
    const double tx = s0[0] - b;
    const double ty = s0[1] - b;

    Vec3 d = proj_grad3(rule, start, 0);
    double dn = norm3(d);
    if (dn < 1e-12) return false;
    for (double& v : d) v /= -dn;

    // bracket the level crossing along the descent ray
    auto at = [&](double s) {
        Vec3 q;
        for (int i = 0; i < 3; ++i) q[static_cast<std::size_t>(i)] = start[static_cast<std::size_t>(i)] + s * d[static_cast<std::size_t>(i)];
        return q;
    };
    double s_hi = 0.01;
    while (true) {
        Vec3 q = at(s_hi);
        if (!in_box3(q, lo)) return false;
        if (score3(rule, q, 0) <= tx) break;
        s_hi *= 1.9;
        if (s_hi > 4.0) return false;
    }
    double s_lo = 0.0;
    for (int it = 0; it < 90; ++it) {
        double mid = 0.5 * (s_lo + s_hi);
        (score3(rule, at(mid), 0) > tx ? s_lo : s_hi) = mid;
    }
    Vec3 r = at(s_hi);
    if (!correct_to_level(rule, r, tx, lo)) return false;

    auto fy = [&](const Vec3& q) { return score3(rule, q, 1) - ty; };

    double f = fy(r);
    const double step = 0.004;
    const int max_steps = 4000;
    int crossings = 0;
    Vec3 prev_t{0.0, 0.0, 0.0};

    auto accept = [&](Vec3 cand) -> bool {
        double a = score3(rule, cand, 2) - s0[2];
        if (a <= 1e-10) return false;
        double residual = 0.0;
        if (!newton_polish(rule, cand, tx, ty, lo, residual)) return false;
        double a2 = scores3(rule, cand)[2] - s0[2];
        if (a2 <= 1e-12) return false;
        out = cand;
        out_a = a2;
        out_residual = residual;
        return true;
    };

    if (std::abs(f) <= 1e-13 && accept(r)) return true;

    bool oriented = false;
    for (int steps = 0; steps < max_steps; ++steps) {
        Vec3 g = proj_grad3(rule, r, 0);
        if (norm3(g) < 1e-14) return false;
        Vec3 t = rotate90(g);
        double tn = norm3(t);
        for (double& v : t) v /= tn;
        if (!oriented) {
            // head toward the crossing once; afterwards continuity keeps the
            // walk moving one way around the level set, past bad crossings
            double dfd = dot3(t, proj_grad3(rule, r, 1));
            if (dfd * f > 0.0) for (double& v : t) v = -v;
            oriented = true;
        } else if (dot3(t, prev_t) < 0.0) {
            for (double& v : t) v = -v;
        }
        prev_t = t;

        Vec3 cand;
        for (int i = 0; i < 3; ++i) cand[static_cast<std::size_t>(i)] = r[static_cast<std::size_t>(i)] + step * t[static_cast<std::size_t>(i)];
        if (!correct_to_level(rule, cand, tx, lo)) return false;
        double fc = fy(cand);

        if (fc == 0.0 || (fc > 0.0) != (f > 0.0)) {
            // bisect the crossing along the chord, re-correcting onto the
            // level set each time
            Vec3 a_pt = r, b_pt = cand;
            double fa = f;
            Vec3 m = b_pt;
            for (int it = 0; it < 100; ++it) {
                for (int i = 0; i < 3; ++i) m[static_cast<std::size_t>(i)] = 0.5 * (a_pt[static_cast<std::size_t>(i)] + b_pt[static_cast<std::size_t>(i)]);
                if (!correct_to_level(rule, m, tx, lo)) return false;
                double fm = fy(m);
                if (std::abs(fm) <= 1e-14) break;
                if ((fm > 0.0) == (fa > 0.0)) { a_pt = m; fa = fm; }
                else b_pt = m;
            }
            if (accept(m)) return true;
            if (++crossings >= 6) return false;
            // wrong-surplus crossing: continue the walk on the far side
        }
        r = cand;
        f = fc;
    }
    return false;
}

// budget that keeps the level-set walk well inside the simplex: half the
// smallest natural budget on a circle around q0
double default_tight_budget(const ScoringRule& rule, const Distribution& q0) {
    double m = std::min({q0[0], q0[1], q0[2]});
    double c = 0.45 * (m - rule.floor());
    if (c <= 1e-6)
        throw std::invalid_argument("find_double_tight: q0 too close to the domain boundary");
    auto s0 = scores_of(rule, q0.span());
    double min_nb = 1e300;
    Vec3 q;
    for (int i = 0; i < 256; ++i) {
        double th = 2.0 * 3.14159265358979323846 * (static_cast<double>(i) / 256.0);
        double w1 = c * std::cos(th), w2 = c * std::sin(th);
        for (int j = 0; j < 3; ++j)
            q[static_cast<std::size_t>(j)] = q0[j] + w1 * kU1[static_cast<std::size_t>(j)] + w2 * kU2[static_cast<std::size_t>(j)];
        min_nb = std::min(min_nb,
                          natural_budget_span(rule, s0, std::span<const double>(q.data(), 3)));
    }
    return 0.5 * min_nb;
}

} // namespace

TangentDirection tangent_direction(const ScoringRule& rule, const Distribution& q, int outcome) {
    const int k = rule.outcome_count();
    if (k < 3)
        throw std::invalid_argument("tangent_direction: needs at least three outcomes");
    if (outcome < 0 || outcome >= k)
        throw std::invalid_argument("tangent_direction: bad outcome index");
    if (q.size() != k || !rule.in_domain(q))
        throw std::domain_error("tangent_direction: point outside rule domain");

    std::vector<double> g = score_gradient(rule, q, outcome);
    double mean = 0.0;
    for (double v : g) mean += v;
    mean /= static_cast<double>(k);
    for (double& v : g) v -= mean;
    double gn = 0.0;
    for (double v : g) gn += v * v;
    if (gn < 1e-24)
        throw std::runtime_error("tangent_direction: gradient has no tangent component");

    // adjacent-difference basis of the sum-zero plane; combine the two most
    // useful basis vectors into a direction orthogonal to the gradient
    std::vector<double> c(static_cast<std::size_t>(k - 1));
    int jstar = 0;
    for (int i = 0; i + 1 < k; ++i) {
        c[static_cast<std::size_t>(i)] = g[static_cast<std::size_t>(i)] - g[static_cast<std::size_t>(i + 1)];
        if (std::abs(c[static_cast<std::size_t>(i)]) > std::abs(c[static_cast<std::size_t>(jstar)])) jstar = i;
    }
    if (std::abs(c[static_cast<std::size_t>(jstar)]) < 1e-12)
        throw std::runtime_error("tangent_direction: gradient has no tangent component");
    int i0 = jstar == 0 ? 1 : 0;

    std::vector<double> eps(static_cast<std::size_t>(k), 0.0);
    // eps = c[jstar] * d_{i0} - c[i0] * d_{jstar}, d_i = e_i - e_{i+1}
    eps[static_cast<std::size_t>(i0)] += c[static_cast<std::size_t>(jstar)];
    eps[static_cast<std::size_t>(i0 + 1)] -= c[static_cast<std::size_t>(jstar)];
    eps[static_cast<std::size_t>(jstar)] -= c[static_cast<std::size_t>(i0)];
    eps[static_cast<std::size_t>(jstar + 1)] += c[static_cast<std::size_t>(i0)];

    double n = 0.0;
    for (double v : eps) n += v * v;
    n = std::sqrt(n);
    if (n < 1e-18)
        throw std::runtime_error("tangent_direction: degenerate direction");
    for (double& v : eps) v /= n;
    for (double v : eps) {
        if (std::abs(v) > 1e-12) {
            if (v < 0.0)
                for (double& w : eps) w = -w;
            break;
        }
    }

    // among the other outcomes, the direction must raise at least one score
    // and lower at least one; a violation here means the rule broke the
    // smooth strictly-proper assumptions, so surface it loudly
    bool has_pos = false, has_neg = false;
    std::vector<double> gy(static_cast<std::size_t>(k));
    for (int y = 0; y < k; ++y) {
        if (y == outcome) continue;
        rule.gradient_into(q.span(), y, gy);
        double d = 0.0;
        for (int i = 0; i < k; ++i) d += eps[static_cast<std::size_t>(i)] * gy[static_cast<std::size_t>(i)];
        if (d > 0.0) has_pos = true;
        if (d < 0.0) has_neg = true;
    }
    if (!has_pos || !has_neg)
        throw std::runtime_error("tangent_direction: sign structure violated at this point");
    return TangentDirection(std::move(eps));
}

MidpointReport verify_midpoint(const ScoringRule& rule, const Distribution& p,
                               const Distribution& q0, double tol) {
    if (linf_distance(p, q0) <= 1e-12)
        throw std::invalid_argument("verify_midpoint: belief equals the market state");
    Distribution q_mid = mix(q0, p, 0.5);
    double b = natural_budget(rule, q0, q_mid);
    ConstrainedReport rep = solve_constrained(rule, p, q0, b);
    double gap = linf_distance(rep.q_star, q_mid);
    return {b, gap, rep.segment_deviation, gap <= tol, rep.q_star};
}

DoubleTight find_double_tight(const ScoringRule& rule, const Distribution& q0,
                              std::optional<double> target_b) {
    if (rule.outcome_count() != 3)
        throw std::invalid_argument("find_double_tight: three outcomes only");
    if (q0.size() != 3 || !rule.in_domain(q0))
        throw std::domain_error("find_double_tight: q0 outside rule domain");

    if (target_b) {
        if (!(*target_b > 0.0))
            throw std::invalid_argument("find_double_tight: budget must be positive");
        Vec3 r{};
        double a = 0.0, residual = 0.0;
        if (!walk_double_tight(rule, q0, *target_b, r, a, residual))
            throw std::runtime_error("find_double_tight: no double-tight report at this budget");
        return {Distribution({r[0], r[1], r[2]}), *target_b, a, residual};
    }

    double b = default_tight_budget(rule, q0);
    for (int attempt = 0; attempt < 40; ++attempt) {
        Vec3 r{};
        double a = 0.0, residual = 0.0;
        if (walk_double_tight(rule, q0, b, r, a, residual))
            return {Distribution({r[0], r[1], r[2]}), b, a, residual};
        b *= 0.5;
        if (b < 1e-8) break;
    }
    throw std::runtime_error("find_double_tight: no double-tight report found");
}

// ---- deviation search, simplex space ----

namespace {

struct Instance {
    Distribution q0;
    Distribution p;
    double b = 0.0;
    bool structured = false;
};

Instance random_instance(const ScoringRule& rule, Rng& rng) {
    Instance inst{Distribution::uniform(rule.outcome_count()),
                  Distribution::uniform(rule.outcome_count()), 0.0, false};
    inst.q0 = sample_interior(rule, rng, 0.1);
    do {
        inst.p = sample_interior(rule, rng, 0.1);
    } while (linf_distance(inst.p, inst.q0) < 1e-3);
    inst.b = rng.uniform(0.15, 0.85) * natural_budget(rule, inst.q0, inst.p);
    return inst;
}

// belief in the cone of the double-tight report: both tight outcomes pushed
// down, the slack one up, surplus condition respected
bool cone_belief(const ScoringRule& rule, const DoubleTight& dt, Rng& rng, Distribution& out) {
    Vec3 r = {dt.r[0], dt.r[1], dt.r[2]};
    Vec3 sr = scores3(rule, r);
    const double lo = rule.floor() + 1e-9;
    for (int t = 0; t < 60; ++t) {
        double radius = rng.uniform(0.004, 0.05);
        double u1 = rng.uniform(0.1, 1.0), u2 = rng.uniform(0.1, 1.0);
        Vec3 pe = {r[0] - radius * u1, r[1] - radius * u2, r[2] + radius * (u1 + u2)};
        if (!in_box3(pe, lo)) continue;
        Vec3 sp = scores3(rule, pe);
        if (sp[2] < sr[2] - dt.a - 1e-15) continue;
        if (!(sp[0] < sr[0] - 1e-15 || sp[1] < sr[1] - 1e-15)) continue;
        out = Distribution({pe[0], pe[1], pe[2]});
        return true;
    }
    return false;
}

} // namespace

DeviationSearch find_deviation(const ScoringRule& rule, long search_budget, double threshold,
                               std::uint64_t seed) {
    if (search_budget <= 0) throw std::invalid_argument("find_deviation: empty search budget");
    if (!(threshold > 0.0)) throw std::invalid_argument("find_deviation: threshold must be positive");
    const int k = rule.outcome_count();

    DeviationSearch res;
    res.trace.reserve(static_cast<std::size_t>(std::min<long>(search_budget, 1 << 20)));

    for (long i = 0; i < search_budget; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        Instance inst = random_instance(rule, rng);
        if (k == 3 && i % 2 == 0) {
            // structured probe: double-tight report with a belief in its cone
            try {
                Distribution q0s = sample_interior(rule, rng, 0.25);
                DoubleTight dt = find_double_tight(rule, q0s);
                Distribution pc = Distribution::uniform(3);
                if (cone_belief(rule, dt, rng, pc)) {
                    inst = Instance{q0s, pc, dt.b, true};
                }
            } catch (const std::exception&) {
                // fall back to the random instance already drawn
            }
        }

        ConstrainedReport rep = solve_constrained(rule, inst.p, inst.q0, inst.b);
        double dev = rep.segment_deviation;
        res.trace.push_back({i, inst.structured, dev, false});
        res.max_deviation_seen = std::max(res.max_deviation_seen, dev);
        res.instances_tried = i + 1;

        if (dev > threshold) {
            ConstrainedReport orep = oracle_constrained(rule, inst.p, inst.q0, inst.b, 0.01);
            double obj_solver = expected_score_span(rule, inst.p.span(), rep.q_star.span());
            double obj_oracle = expected_score_span(rule, inst.p.span(), orep.q_star.span());
            double gap = std::abs(obj_solver - obj_oracle);
            if (orep.segment_deviation > threshold && gap <= 1e-6) {
                DeviationCertificate cert;
                cert.rule_tag = rule.tag();
                cert.floor = rule.floor();
                cert.space = "simplex";
                cert.k = k;
                cert.seed = seed;
                cert.instance_index = i;
                cert.threshold = threshold;
                cert.p = inst.p.probs();
                cert.q0 = inst.q0.probs();
                cert.b = inst.b;
                cert.q_star = rep.q_star.probs();
                cert.deviation = dev;
                cert.oracle_q = orep.q_star.probs();
                cert.oracle_deviation = orep.segment_deviation;
                cert.objective_residual = gap;
                res.trace.back().certified = true;
                res.certificate = std::move(cert);
                return res;
            }
        }
    }
    return res;
}

// ---- deviation search, product space ----

namespace {

struct ZPoint {
    double zt = 0.0;
    double zl = 0.0;
};

std::array<double, 4> expand_z(const ZPoint& z) {
    return {z.zt * z.zl, z.zt * (1.0 - z.zl), (1.0 - z.zt) * z.zl,
            (1.0 - z.zt) * (1.0 - z.zl)};
}

bool lex_less_z(const ZPoint& a, const ZPoint& b) {
    if (a.zt != b.zt) return a.zt < b.zt;
    return a.zl < b.zl;
}

struct ZOptimum {
    ZPoint z;
    double value = -1e300;
    bool have = false;
};

// shared incumbent logic for the product-space solver and oracle
template <typename Objective, typename Feasible>
void offer_z(ZOptimum& best, const ZPoint& z, const Objective& objective,
             const Feasible& feasible) {
    if (z.zt < 0.0 || z.zt > 1.0 || z.zl < 0.0 || z.zl > 1.0) return;
    if (!feasible(z)) return;
    double v = objective(z);
    if (!best.have || v > best.value || (v == best.value && lex_less_z(z, best.z))) {
        best.z = z;
        best.value = v;
        best.have = true;
    }
}

struct ZSolveResult {
    ZPoint z;
    double value = 0.0;
    double deviation = 0.0;
};

template <typename Objective, typename Feasible>
ZOptimum z_pattern_search(const Objective& objective, const Feasible& feasible, ZOptimum best,
                          double h0, double h_min, int radius) {
    double h = h0;
    while (h > h_min) {
        ZPoint c = best.z;
        double prev = best.value;
        int hit_shell = 0;
        for (int dx = -radius; dx <= radius; ++dx) {
            for (int dy = -radius; dy <= radius; ++dy) {
                if (dx == 0 && dy == 0) continue;
                ZPoint cand{c.zt + h * dx, c.zl + h * dy};
                // snap tiny box violations so the walls stay reachable
                if (cand.zt < 0.0 && cand.zt > -1e-15) cand.zt = 0.0;
                if (cand.zt > 1.0 && cand.zt < 1.0 + 1e-15) cand.zt = 1.0;
                if (cand.zl < 0.0 && cand.zl > -1e-15) cand.zl = 0.0;
                if (cand.zl > 1.0 && cand.zl < 1.0 + 1e-15) cand.zl = 1.0;
                double old = best.value;
                offer_z(best, cand, objective, feasible);
                if (best.value > old) hit_shell = std::max({hit_shell, std::abs(dx), std::abs(dy)});
            }
        }
        if (best.value <= prev || hit_shell < radius) h *= 0.5;
    }
    return best;
}

template <typename Objective, typename Feasible>
ZOptimum z_zoom_search(const Objective& objective, const Feasible& feasible, ZOptimum best,
                       double h0) {
    constexpr int radius = 12;
    double h = h0;
    int recenters = 0;
    while (h > 1e-9 && recenters < 400) {
        ++recenters;
        ZPoint c = best.z;
        double prev = best.value;
        int hit_shell = 0;
        for (int dx = -radius; dx <= radius; ++dx) {
            for (int dy = -radius; dy <= radius; ++dy) {
                if (dx == 0 && dy == 0) continue;
                ZPoint cand{c.zt + h * dx, c.zl + h * dy};
                if (cand.zt < 0.0 && cand.zt > -1e-15) cand.zt = 0.0;
                if (cand.zt > 1.0 && cand.zt < 1.0 + 1e-15) cand.zt = 1.0;
                if (cand.zl < 0.0 && cand.zl > -1e-15) cand.zl = 0.0;
                if (cand.zl > 1.0 && cand.zl < 1.0 + 1e-15) cand.zl = 1.0;
                double old = best.value;
                offer_z(best, cand, objective, feasible);
                if (best.value > old) hit_shell = std::max({hit_shell, std::abs(dx), std::abs(dy)});
            }
        }
        if (best.value <= prev || hit_shell < radius) h /= 6.0;
    }
    return best;
}

struct ZContext {
    const ScoringRule* rule = nullptr;
    std::array<double, 4> p4{};
    std::vector<double> s0;
    double b = 0.0;

    bool feasible(const ZPoint& z) const {
        auto q4 = expand_z(z);
        std::span<const double> qs(q4.data(), 4);
        if (!rule->in_domain(qs)) return false;
        return natural_budget_span(*rule, s0, qs) <= b + 1e-12;
    }
    double objective(const ZPoint& z) const {
        auto q4 = expand_z(z);
        return expected_score_span(*rule, std::span<const double>(p4.data(), 4),
                                   std::span<const double>(q4.data(), 4));
    }
};

ZSolveResult solve_product_z(const ScoringRule& rule, const ZPoint& zp, const ZPoint& z0,
                             double b) {
    ZContext ctx;
    ctx.rule = &rule;
    ctx.p4 = expand_z(zp);
    {
        auto q04 = expand_z(z0);
        ctx.s0 = scores_of(rule, std::span<const double>(q04.data(), 4));
    }
    ctx.b = b;
    auto objective = [&](const ZPoint& z) { return ctx.objective(z); };
    auto feasible = [&](const ZPoint& z) { return ctx.feasible(z); };

    // truthful report within budget: the segment endpoint itself, deviation 0
    if (ctx.feasible(zp)) return {zp, ctx.objective(zp), 0.0};

    ZOptimum best;
    offer_z(best, z0, objective, feasible);
    const int n = 48;
    for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j)
            offer_z(best, ZPoint{static_cast<double>(i) / n, static_cast<double>(j) / n},
                    objective, feasible);
    if (!best.have) throw std::runtime_error("product solve: no feasible point found");

    best = z_pattern_search(objective, feasible, best, 1.0 / n, 1e-7, 2);

    // push toward the budget surface along the ray from z0
    {
        double dt = best.z.zt - z0.zt, dl = best.z.zl - z0.zl;
        double norm = dt * dt + dl * dl;
        if (norm > 1e-24) {
            double t_hi = 4.0;
            if (dt > 0.0) t_hi = std::min(t_hi, (1.0 - z0.zt) / dt);
            if (dt < 0.0) t_hi = std::min(t_hi, (0.0 - z0.zt) / dt);
            if (dl > 0.0) t_hi = std::min(t_hi, (1.0 - z0.zl) / dl);
            if (dl < 0.0) t_hi = std::min(t_hi, (0.0 - z0.zl) / dl);
            auto at = [&](double t) { return ZPoint{z0.zt + t * dt, z0.zl + t * dl}; };
            double lo = 1.0, hi = std::max(1.0, t_hi);
            if (feasible(at(hi))) {
                lo = hi;
            } else {
                for (int it = 0; it < 100 && hi - lo > 1e-15; ++it) {
                    double mid = 0.5 * (lo + hi);
                    (feasible(at(mid)) ? lo : hi) = mid;
                }
            }
            offer_z(best, at(lo), objective, feasible);
        }
    }

    double zspan[2] = {best.z.zt, best.z.zl};
    double z0span[2] = {z0.zt, z0.zl};
    double zpspan[2] = {zp.zt, zp.zl};
    double dev = segment_distance_span(std::span<const double>(zspan, 2),
                                       std::span<const double>(z0span, 2),
                                       std::span<const double>(zpspan, 2));
    return {best.z, best.value, dev};
}

ZSolveResult oracle_product_z(const ScoringRule& rule, const ZPoint& zp, const ZPoint& z0,
                              double b, double resolution) {
    if (!(resolution > 0.0) || resolution > 1e-2 + 1e-15)
        throw std::invalid_argument("product oracle: resolution must be in (0, 1e-2]");
    ZContext ctx;
    ctx.rule = &rule;
    ctx.p4 = expand_z(zp);
    {
        auto q04 = expand_z(z0);
        ctx.s0 = scores_of(rule, std::span<const double>(q04.data(), 4));
    }
    ctx.b = b;
    auto objective = [&](const ZPoint& z) { return ctx.objective(z); };
    auto feasible = [&](const ZPoint& z) { return ctx.feasible(z); };

    ZOptimum best;
    offer_z(best, z0, objective, feasible);
    offer_z(best, zp, objective, feasible);
    const long m = std::max<long>(1, std::lround(1.0 / resolution));
    for (long i = 0; i <= m; ++i)
        for (long j = 0; j <= m; ++j)
            offer_z(best,
                    ZPoint{static_cast<double>(i) / static_cast<double>(m),
                           static_cast<double>(j) / static_cast<double>(m)},
                    objective, feasible);
    if (!best.have) throw std::runtime_error("product oracle: no feasible point found");

    best = z_zoom_search(objective, feasible, best, (1.0 / static_cast<double>(m)) / 6.0);

    double zspan[2] = {best.z.zt, best.z.zl};
    double z0span[2] = {z0.zt, z0.zl};
    double zpspan[2] = {zp.zt, zp.zl};
    double dev = segment_distance_span(std::span<const double>(zspan, 2),
                                       std::span<const double>(z0span, 2),
                                       std::span<const double>(zpspan, 2));
    return {best.z, best.value, dev};
}

} // namespace

DeviationSearch find_deviation_product(const ScoringRule& rule, long search_budget,
                                       double threshold, std::uint64_t seed) {
    if (rule.outcome_count() != 4)
        throw std::invalid_argument("find_deviation_product: rule must have 4 outcomes");
    if (search_budget <= 0)
        throw std::invalid_argument("find_deviation_product: empty search budget");
    if (!(threshold > 0.0))
        throw std::invalid_argument("find_deviation_product: threshold must be positive");

    DeviationSearch res;
    res.trace.reserve(static_cast<std::size_t>(std::min<long>(search_budget, 1 << 20)));

    for (long i = 0; i < search_budget; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        ZPoint z0{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
        ZPoint zp{};
        do {
            zp = ZPoint{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
        } while (std::max(std::abs(zp.zt - z0.zt), std::abs(zp.zl - z0.zl)) < 0.05);

        auto q04 = expand_z(z0);
        auto p4 = expand_z(zp);
        Distribution q0d({q04[0], q04[1], q04[2], q04[3]});
        Distribution pd({p4[0], p4[1], p4[2], p4[3]});
        double nb = natural_budget(rule, q0d, pd);
        double b = rng.uniform(0.15, 0.85) * nb;

        ZSolveResult sol = solve_product_z(rule, zp, z0, b);
        double dev = sol.deviation;
        res.trace.push_back({i, false, dev, false});
        res.max_deviation_seen = std::max(res.max_deviation_seen, dev);
        res.instances_tried = i + 1;

        if (dev > threshold) {
            ZSolveResult osol = oracle_product_z(rule, zp, z0, b, 0.01);
            double gap = std::abs(sol.value - osol.value);
            if (osol.deviation > threshold && gap <= 1e-6) {
                DeviationCertificate cert;
                cert.rule_tag = rule.tag();
                cert.floor = rule.floor();
                cert.space = "product";
                cert.k = 4;
                cert.seed = seed;
                cert.instance_index = i;
                cert.threshold = threshold;
                cert.p = {zp.zt, zp.zl};
                cert.q0 = {z0.zt, z0.zl};
                cert.b = b;
                cert.q_star = {sol.z.zt, sol.z.zl};
                cert.deviation = dev;
                cert.oracle_q = {osol.z.zt, osol.z.zl};
                cert.oracle_deviation = osol.deviation;
                cert.objective_residual = gap;
                res.trace.back().certified = true;
                res.certificate = std::move(cert);
                return res;
            }
        }
    }
    return res;
}

// ---- belief-insensitivity regions ----

InsensitivityCertificate verify_insensitivity(const ScoringRule& rule, const Distribution& q0,
                                              int samples, std::uint64_t seed, double radius0,
                                              std::optional<double> target_b) {
    if (samples <= 0) throw std::invalid_argument("verify_insensitivity: samples must be positive");
    if (!(radius0 > 0.0))
        throw std::invalid_argument("verify_insensitivity: radius must be positive");

    DoubleTight dt = find_double_tight(rule, q0, target_b);
    Vec3 r = {dt.r[0], dt.r[1], dt.r[2]};
    Vec3 sr = scores3(rule, r);
    const double lo = rule.floor() + 1e-9;

    InsensitivityCertificate cert;
    cert.rule_tag = rule.tag();
    cert.floor = rule.floor();
    cert.seed = seed;
    cert.q0 = q0.probs();
    cert.r = dt.r.probs();
    cert.b = dt.b;
    cert.a = dt.a;
    cert.residual = dt.residual;

    Rng rng(seed);
    double radius = radius0;
    double worst_gap = 0.0;

    for (int n = 0; n < samples; ++n) {
        bool accepted = false;
        Vec3 pe{};
        while (!accepted) {
            for (int t = 0; t < 50; ++t) {
                double u1 = rng.uniform(0.1, 1.0), u2 = rng.uniform(0.1, 1.0);
                pe = {r[0] - radius * u1, r[1] - radius * u2, r[2] + radius * (u1 + u2)};
                if (!in_box3(pe, lo)) continue;
                Vec3 sp = scores3(rule, pe);
                if (sp[2] < sr[2] - dt.a - 1e-15) continue;
                if (!(sp[0] < sr[0] - 1e-15 || sp[1] < sr[1] - 1e-15)) continue;
                accepted = true;
                break;
            }
            if (!accepted) {
                radius *= 0.5;
                if (radius < 1e-4)
                    throw std::runtime_error(
                        "verify_insensitivity: no admissible beliefs near the tight report");
            }
        }
        Distribution p({pe[0], pe[1], pe[2]});
        ConstrainedReport rep = solve_constrained(rule, p, q0, dt.b);
        ConstrainedReport orep = oracle_constrained(rule, p, q0, dt.b, 0.01);
        double sg = linf_distance(rep.q_star, dt.r);
        double og = linf_distance(orep.q_star, dt.r);
        cert.beliefs.push_back(p.probs());
        cert.solver_gaps.push_back(sg);
        cert.oracle_gaps.push_back(og);
        worst_gap = std::max({worst_gap, sg, og});
    }
    cert.radius = radius;
    cert.all_map_to_r = worst_gap <= 1e-4;

    // the sampled beliefs should fill a genuinely two-dimensional patch
    if (cert.beliefs.size() >= 3) {
        double m1 = 0.0, m2 = 0.0;
        std::vector<std::pair<double, double>> w;
        w.reserve(cert.beliefs.size());
        for (const auto& bp : cert.beliefs) {
            Vec3 d = {bp[0] - r[0], bp[1] - r[1], bp[2] - r[2]};
            double w1 = dot3(d, kU1), w2 = dot3(d, kU2);
            w.emplace_back(w1, w2);
            m1 += w1;
            m2 += w2;
        }
        m1 /= static_cast<double>(w.size());
        m2 /= static_cast<double>(w.size());
        double c11 = 0.0, c12 = 0.0, c22 = 0.0;
        for (auto [w1, w2] : w) {
            c11 += (w1 - m1) * (w1 - m1);
            c12 += (w1 - m1) * (w2 - m2);
            c22 += (w2 - m2) * (w2 - m2);
        }
        double tr = c11 + c22;
        double det = c11 * c22 - c12 * c12;
        double disc = std::sqrt(std::max(0.0, tr * tr - 4.0 * det));
        double eig_min = 0.5 * (tr - disc);
        double eig_max = 0.5 * (tr + disc);
        cert.rank2 = eig_min > 1e-12 && eig_min > 1e-6 * eig_max;
    }
    return cert;
}

// ---- certificate (de)serialization ----

namespace {

void append_array(std::string& out, const std::vector<double>& v) {
    out += '[';
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += fmt_g17(v[i]);
    }
    out += ']';
}

std::vector<double> read_array(const nlohmann::json& j, const char* field, int expected = -1) {
    if (!j.contains(field) || !j[field].is_array())
        throw std::runtime_error(std::string("certificate: missing array field '") + field + "'");
    std::vector<double> v = j[field].get<std::vector<double>>();
    if (expected >= 0 && static_cast<int>(v.size()) != expected)
        throw std::runtime_error(std::string("certificate: field '") + field + "' has wrong length");
    return v;
}

double read_number(const nlohmann::json& j, const char* field) {
    if (!j.contains(field) || !j[field].is_number())
        throw std::runtime_error(std::string("certificate: missing numeric field '") + field + "'");
    return j[field].get<double>();
}

} // namespace

std::string deviation_certificate_to_json(const DeviationCertificate& cert) {
    std::string out = "{\"type\":\"deviation\",\"rule\":\"" + cert.rule_tag + "\",\"floor\":" +
                      fmt_g17(cert.floor) + ",\"space\":\"" + cert.space +
                      "\",\"k\":" + std::to_string(cert.k) +
                      ",\"seed\":" + std::to_string(cert.seed) +
                      ",\"instance_index\":" + std::to_string(cert.instance_index) +
                      ",\"threshold\":" + fmt_g17(cert.threshold) + ",\"p\":";
    append_array(out, cert.p);
    out += ",\"q0\":";
    append_array(out, cert.q0);
    out += ",\"b\":" + fmt_g17(cert.b) + ",\"q_star\":";
    append_array(out, cert.q_star);
    out += ",\"deviation\":" + fmt_g17(cert.deviation) + ",\"oracle_q\":";
    append_array(out, cert.oracle_q);
    out += ",\"oracle_deviation\":" + fmt_g17(cert.oracle_deviation) +
           ",\"objective_residual\":" + fmt_g17(cert.objective_residual) + "}";
    return out;
}

std::string insensitivity_certificate_to_json(const InsensitivityCertificate& cert) {
    std::string out = "{\"type\":\"insensitivity\",\"rule\":\"" + cert.rule_tag +
                      "\",\"floor\":" + fmt_g17(cert.floor) + ",\"k\":" + std::to_string(cert.k) +
                      ",\"seed\":" + std::to_string(cert.seed) + ",\"q0\":";
    append_array(out, cert.q0);
    out += ",\"r\":";
    append_array(out, cert.r);
    out += ",\"b\":" + fmt_g17(cert.b) + ",\"a\":" + fmt_g17(cert.a) +
           ",\"residual\":" + fmt_g17(cert.residual) + ",\"radius\":" + fmt_g17(cert.radius) +
           ",\"rank2\":" + (cert.rank2 ? "true" : "false") +
           ",\"all_map_to_r\":" + (cert.all_map_to_r ? "true" : "false") + ",\"beliefs\":[";
    for (std::size_t i = 0; i < cert.beliefs.size(); ++i) {
        if (i) out += ',';
        append_array(out, cert.beliefs[i]);
    }
    out += "],\"solver_gaps\":";
    append_array(out, cert.solver_gaps);
    out += ",\"oracle_gaps\":";
    append_array(out, cert.oracle_gaps);
    out += "}";
    return out;
}

LoadedCertificate parse_certificate(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(std::string("certificate: invalid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
        throw std::runtime_error("certificate: missing type field");
    const std::string type = j["type"].get<std::string>();

    LoadedCertificate loaded;
    if (type == "deviation") {
        DeviationCertificate c;
        c.rule_tag = j.at("rule").get<std::string>();
        c.floor = read_number(j, "floor");
        c.space = j.at("space").get<std::string>();
        if (c.space != "simplex" && c.space != "product")
            throw std::runtime_error("certificate: unknown space '" + c.space + "'");
        c.k = static_cast<int>(read_number(j, "k"));
        c.seed = j.at("seed").get<std::uint64_t>();
        c.instance_index = j.at("instance_index").get<long>();
        c.threshold = read_number(j, "threshold");
        const int veclen = c.space == "simplex" ? c.k : 2;
        c.p = read_array(j, "p", veclen);
        c.q0 = read_array(j, "q0", veclen);
        c.b = read_number(j, "b");
        c.q_star = read_array(j, "q_star", veclen);
        c.deviation = read_number(j, "deviation");
        c.oracle_q = read_array(j, "oracle_q", veclen);
        c.oracle_deviation = read_number(j, "oracle_deviation");
        c.objective_residual = read_number(j, "objective_residual");
        loaded.deviation = std::move(c);
    } else if (type == "insensitivity") {
        InsensitivityCertificate c;
        c.rule_tag = j.at("rule").get<std::string>();
        c.floor = read_number(j, "floor");
        c.k = static_cast<int>(read_number(j, "k"));
        if (c.k != 3) throw std::runtime_error("certificate: insensitivity needs k = 3");
        c.seed = j.at("seed").get<std::uint64_t>();
        c.q0 = read_array(j, "q0", 3);
        c.r = read_array(j, "r", 3);
        c.b = read_number(j, "b");
        c.a = read_number(j, "a");
        c.residual = read_number(j, "residual");
        c.radius = read_number(j, "radius");
        c.rank2 = j.at("rank2").get<bool>();
        c.all_map_to_r = j.at("all_map_to_r").get<bool>();
        if (!j.contains("beliefs") || !j["beliefs"].is_array())
            throw std::runtime_error("certificate: missing beliefs");
        for (const auto& bj : j["beliefs"]) {
            std::vector<double> bp = bj.get<std::vector<double>>();
            if (bp.size() != 3) throw std::runtime_error("certificate: belief has wrong length");
            c.beliefs.push_back(std::move(bp));
        }
        c.solver_gaps = read_array(j, "solver_gaps", static_cast<int>(c.beliefs.size()));
        c.oracle_gaps = read_array(j, "oracle_gaps", static_cast<int>(c.beliefs.size()));
        loaded.insensitivity = std::move(c);
    } else {
        throw std::runtime_error("certificate: unknown type '" + type + "'");
    }
    return loaded;
}

namespace {

CertificateCheck verify_deviation_cert(const DeviationCertificate& c) {
    RulePtr rule = make_rule(c.rule_tag, c.k, c.floor);
    std::ostringstream detail;

    if (c.space == "simplex") {
        Distribution p(c.p), q0(c.q0), qs(c.q_star), oq(c.oracle_q);
        double nb = natural_budget(*rule, q0, qs);
        if (nb > c.b + kBindingTolerance)
            return {false, "stored optimum exceeds the budget"};
        double dev = segment_distance(qs, q0, p);
        if (std::abs(dev - c.deviation) > 1e-9)
            return {false, "stored deviation does not match the stored optimum"};
        if (!(dev > c.threshold)) return {false, "deviation does not exceed the threshold"};

        ConstrainedReport fresh = oracle_constrained(*rule, p, q0, c.b, 0.01);
        if (linf_distance(fresh.q_star, oq) > 1e-6)
            return {false, "oracle re-run disagrees with the stored oracle point"};
        if (std::abs(fresh.segment_deviation - c.oracle_deviation) > 1e-6)
            return {false, "stored oracle deviation drifts from the re-run"};
        double obj_fresh = expected_score_span(*rule, p.span(), fresh.q_star.span());
        double obj_stored = expected_score_span(*rule, p.span(), qs.span());
        if (std::abs(obj_fresh - obj_stored) > 1e-6)
            return {false, "stored optimum objective drifts from the oracle"};
        if (!(fresh.segment_deviation > c.threshold))
            return {false, "oracle re-run no longer deviates"};
        detail << "deviation " << dev << " confirmed at budget " << c.b;
        return {true, detail.str()};
    }

    // product space: vectors are (q_top, q_left) pairs
    ZPoint zp{c.p[0], c.p[1]}, z0{c.q0[0], c.q0[1]}, zs{c.q_star[0], c.q_star[1]},
        zo{c.oracle_q[0], c.oracle_q[1]};
    auto q04 = expand_z(z0);
    auto qs4 = expand_z(zs);
    Distribution q0d({q04[0], q04[1], q04[2], q04[3]});
    Distribution qsd({qs4[0], qs4[1], qs4[2], qs4[3]});
    if (natural_budget(*rule, q0d, qsd) > c.b + kBindingTolerance)
        return {false, "stored optimum exceeds the budget"};
    double zs_s[2] = {zs.zt, zs.zl};
    double z0_s[2] = {z0.zt, z0.zl};
    double zp_s[2] = {zp.zt, zp.zl};
    double dev = segment_distance_span(std::span<const double>(zs_s, 2),
                                       std::span<const double>(z0_s, 2),
                                       std::span<const double>(zp_s, 2));
    if (std::abs(dev - c.deviation) > 1e-9)
        return {false, "stored deviation does not match the stored optimum"};
    if (!(dev > c.threshold)) return {false, "deviation does not exceed the threshold"};

    ZSolveResult fresh = oracle_product_z(*rule, zp, z0, c.b, 0.01);
    if (std::max(std::abs(fresh.z.zt - zo.zt), std::abs(fresh.z.zl - zo.zl)) > 1e-6)
        return {false, "oracle re-run disagrees with the stored oracle point"};
    if (std::abs(fresh.deviation - c.oracle_deviation) > 1e-6)
        return {false, "stored oracle deviation drifts from the re-run"};
    auto p4 = expand_z(zp);
    double obj_stored = expected_score_span(*rule, std::span<const double>(p4.data(), 4),
                                            std::span<const double>(qs4.data(), 4));
    if (std::abs(fresh.value - obj_stored) > 1e-6)
        return {false, "stored optimum objective drifts from the oracle"};
    if (!(fresh.deviation > c.threshold)) return {false, "oracle re-run no longer deviates"};
    detail << "product deviation " << dev << " confirmed at budget " << c.b;
    return {true, detail.str()};
}

CertificateCheck verify_insensitivity_cert(const InsensitivityCertificate& c) {
    RulePtr rule = make_rule(c.rule_tag, c.k, c.floor);
    Distribution q0(c.q0), r(c.r);
    auto s0 = scores_of(*rule, q0.span());
    auto sr = scores_of(*rule, r.span());
    if (std::abs((s0[0] - sr[0]) - c.b) > 1e-8 || std::abs((s0[1] - sr[1]) - c.b) > 1e-8)
        return {false, "tight-outcome residuals exceed 1e-8"};
    double a = sr[2] - s0[2];
    if (!(a > 0.0) || std::abs(a - c.a) > 1e-8)
        return {false, "slack-outcome surplus does not match"};

    for (std::size_t i = 0; i < c.beliefs.size(); ++i) {
        Distribution p(c.beliefs[i]);
        auto sp = scores_of(*rule, p.span());
        if (sp[2] < sr[2] - c.a - 1e-12)
            return {false, "belief leaves the surplus region"};
        if (!(sp[0] < sr[0] + 1e-12 || sp[1] < sr[1] + 1e-12))
            return {false, "belief does not press on a tight outcome"};
        ConstrainedReport orep = oracle_constrained(*rule, p, q0, c.b, 0.01);
        if (linf_distance(orep.q_star, r) > 1e-4)
            return {false, "a belief no longer maps to the common report"};
    }
    if (!c.all_map_to_r) return {false, "certificate was stored with a failing gap"};
    return {true, "all " + std::to_string(c.beliefs.size()) + " beliefs map to the common report"};
}

} // namespace

CertificateCheck verify_certificate(const LoadedCertificate& cert) {
    if (cert.deviation) return verify_deviation_cert(*cert.deviation);
    if (cert.insensitivity) return verify_insensitivity_cert(*cert.insensitivity);
    return {false, "empty certificate"};
}

} // namespace msrlab
