#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "msrlab/budget.hpp"
#include "msrlab/distribution.hpp"
#include "msrlab/scoring.hpp"

namespace msrlab {

/// Direction in the simplex tangent plane along which S_outcome is
/// stationary: sum(eps) = 0 and eps . grad S_outcome(q) = 0. Unit length,
/// first nonzero component positive. Needs k >= 3.
TangentDirection tangent_direction(const ScoringRule& rule, const Distribution& q, int outcome);

struct MidpointReport {
    double b = 0.0;            // natural budget of the half-way mixture
    double midpoint_gap = 0.0; // |q_star - mix(q0, p, 0.5)|_inf
    double deviation = 0.0;    // distance from q_star to the segment [q0, p]
    bool holds = false;        // midpoint optimal within tolerance
    Distribution q_star;
};

/// Measures whether the budget of the half-way mixture makes that mixture
/// the optimal report. A guarantee for two outcomes; a measurement beyond.
MidpointReport verify_midpoint(const ScoringRule& rule, const Distribution& p,
                               const Distribution& q0, double tol = 1e-4);

struct DoubleTight {
    Distribution r;
    double b = 0.0;        // common score drop on outcomes 0 and 1
    double a = 0.0;        // score surplus on outcome 2
    double residual = 0.0; // max |tight-constraint residual| at r
};

/// Finds a report r with S_X(r) - S_X(q0) = S_Y(r) - S_Y(q0) = -b and
/// S_Z(r) - S_Z(q0) = a > 0, by walking the S_X level set from q0 and
/// polishing with Newton. Three outcomes only. When target_b is absent a
/// radius scan around q0 picks a budget that keeps the walk interior; the
/// budget is halved and retried if the walk leaves the domain.
DoubleTight find_double_tight(const ScoringRule& rule, const Distribution& q0,
                              std::optional<double> target_b = std::nullopt);

struct DeviationCertificate {
    std::string rule_tag;
    double floor = 0.0;
    std::string space; // "simplex" or "product"
    int k = 0;
    std::uint64_t seed = 0;
    long instance_index = 0;
    double threshold = 0.0;
    // instance: vectors are simplex points, or (q_top, q_left) pairs in
    // product space
    std::vector<double> p;
    std::vector<double> q0;
    double b = 0.0;
    // solver result and the independent confirmation
    std::vector<double> q_star;
    double deviation = 0.0;
    std::vector<double> oracle_q;
    double oracle_deviation = 0.0;
    double objective_residual = 0.0; // |E_p S(q_star) - E_p S(oracle_q)|
};

struct DeviationTraceRow {
    long index = 0;
    bool structured = false;
    double deviation = 0.0;
    bool certified = false;
};

struct DeviationSearch {
    std::optional<DeviationCertificate> certificate;
    long instances_tried = 0;
    double max_deviation_seen = 0.0;
    std::vector<DeviationTraceRow> trace;
};

/// Searches (p, q0, b) instances for a budget-constrained optimum that
/// leaves the segment [q0, p] by more than threshold, alternating structured
/// probes near double-tight reports with uniform random instances. Returns
/// the first oracle-confirmed certificate found within search_budget.
DeviationSearch find_deviation(const ScoringRule& rule, long search_budget, double threshold,
                               std::uint64_t seed);

/// Product-belief variant on a 4-outcome rule: agents report independent
/// (q_top, q_left) pairs, budgets act on the expanded distribution, and
/// deviations are measured in the 2-dimensional parameter rectangle.
DeviationSearch find_deviation_product(const ScoringRule& rule, long search_budget,
                                       double threshold, std::uint64_t seed);

struct InsensitivityCertificate {
    std::string rule_tag;
    double floor = 0.0;
    int k = 3;
    std::uint64_t seed = 0;
    std::vector<double> q0;
    std::vector<double> r;
    double b = 0.0;
    double a = 0.0;
    double residual = 0.0;
    double radius = 0.0; // sampling radius actually used
    std::vector<std::vector<double>> beliefs;
    std::vector<double> solver_gaps; // |q_star(p) - r|_inf per belief
    std::vector<double> oracle_gaps;
    bool rank2 = false;          // beliefs span a 2-dimensional patch
    bool all_map_to_r = false;   // every gap within 1e-4
};

/// Builds a double-tight instance from q0 and samples beliefs p = r + eps
/// with eps negative on the tight outcomes and positive on the slack one,
/// keeping S_Z(p) >= S_Z(r) - a. Every such belief should produce the same
/// constrained optimum r; solver and oracle gaps are recorded per belief.
InsensitivityCertificate verify_insensitivity(const ScoringRule& rule, const Distribution& q0,
                                              int samples, std::uint64_t seed,
                                              double radius0 = 0.02,
                                              std::optional<double> target_b = std::nullopt);

// ---- certificate (de)serialization ----

std::string deviation_certificate_to_json(const DeviationCertificate& cert);
std::string insensitivity_certificate_to_json(const InsensitivityCertificate& cert);

struct LoadedCertificate {
    std::optional<DeviationCertificate> deviation;
    std::optional<InsensitivityCertificate> insensitivity;
};

/// Parses either certificate type; malformed content or unknown tags throw.
LoadedCertificate parse_certificate(const std::string& json_text);

struct CertificateCheck {
    bool pass = false;
    std::string detail;
};

/// Re-runs the independent oracle on the certificate's instance(s) and
/// confirms the stored optimum, deviation, and (for insensitivity) the tight
/// residuals and the common report.
CertificateCheck verify_certificate(const LoadedCertificate& cert);

} // namespace msrlab
