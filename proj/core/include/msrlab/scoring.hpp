#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msrlab/distribution.hpp"

namespace msrlab {

/// Per-outcome scores S_x(q), x = 0..k-1.
struct ScoreVector {
    std::vector<double> values;

    int size() const { return static_cast<int>(values.size()); }
    double operator[](int i) const { return values[static_cast<std::size_t>(i)]; }
};

// Strictly proper scoring rule on distributions over k outcomes, with an
// optional domain floor: reports must satisfy q_x >= floor for every x.
class ScoringRule {
public:
    virtual ~ScoringRule() = default;

    int outcome_count() const { return k_; }
    double floor() const { return floor_; }
    const std::string& tag() const { return tag_; }

    /// All k scores of a report, written into out (size k). No domain check;
    /// callers on the public path go through score().
    virtual void score_into(std::span<const double> q, std::span<double> out) const = 0;

    /// Ambient gradient of S_outcome at q, written into out (size k).
    virtual void gradient_into(std::span<const double> q, int outcome,
                               std::span<double> out) const = 0;

    /// Closed-form value of the worst-case score drop over the domain, when
    /// one is known for the rule. Used to cross-check the numeric search.
    virtual std::optional<double> analytic_budget_bound() const { return std::nullopt; }

    bool in_domain(std::span<const double> q) const;
    bool in_domain(const Distribution& q) const { return in_domain(q.span()); }

protected:
    ScoringRule(std::string tag, int k, double floor);

    int k_;
    double floor_;
    std::string tag_;
};

/// Quadratic rule S_x(q) = 2 q_x - sum_j q_j^2. Scores lie in [-1, 1].
class BrierRule final : public ScoringRule {
public:
    explicit BrierRule(int k, double floor = 0.0);
    void score_into(std::span<const double> q, std::span<double> out) const override;
    void gradient_into(std::span<const double> q, int outcome,
                       std::span<double> out) const override;
    std::optional<double> analytic_budget_bound() const override;
};

/// Logarithmic rule S_x(q) = ln(q_x) restricted to q_x >= floor > 0, which
/// keeps scores (and the budget bound) finite.
class FlooredLogRule final : public ScoringRule {
public:
    explicit FlooredLogRule(int k, double floor = 1e-3);
    void score_into(std::span<const double> q, std::span<double> out) const override;
    void gradient_into(std::span<const double> q, int outcome,
                       std::span<double> out) const override;
    std::optional<double> analytic_budget_bound() const override;
};

using RulePtr = std::shared_ptr<const ScoringRule>;

/// Rule registry keyed by tag: "brier" (default floor 0) or "log" (default
/// floor 1e-3). Unknown tags are rejected.
RulePtr make_rule(const std::string& tag, int k, std::optional<double> floor = std::nullopt);

ScoreVector score(const ScoringRule& rule, const Distribution& q);
double expected_score(const ScoringRule& rule, const Distribution& belief,
                      const Distribution& report);
double expected_score_span(const ScoringRule& rule, std::span<const double> belief,
                           std::span<const double> report);
std::vector<double> score_gradient(const ScoringRule& rule, const Distribution& q, int outcome);

class Rng;

/// Dirichlet(1) sample pushed into the rule's domain. margin_frac > 0 keeps
/// every coordinate at least that fraction of an even share above the floor,
/// which the lab uses to stay clear of the boundary.
Distribution sample_interior(const ScoringRule& rule, Rng& rng, double margin_frac = 0.0);

/// Scores of an expanded product belief under a 4-outcome rule.
ScoreVector product_score(const ScoringRule& rule, const ProductBelief& pb);

struct CheckReport {
    bool pass = false;
    double worst_violation = 0.0; // positive means the property failed by that much
    long trials = 0;
    std::string note;
};

struct PropernessOptions {
    double grid_resolution = 1e-3;
    int random_reports = 128;
    std::uint64_t seed = 0x5eedULL;
};

/// Samples `trials` beliefs and checks expected_score(p, p) beats every
/// report on a dense grid plus random candidates, up to `tolerance`.
CheckReport check_properness(const ScoringRule& rule, int trials, double tolerance,
                             const PropernessOptions& opts = {});

/// Samples (p, q) pairs and checks, per outcome, the midpoint score is at
/// least min(S_x(p), S_x(q)), strictly unless the two scores tie.
CheckReport check_quasiconcavity(const ScoringRule& rule, int trials,
                                 std::uint64_t seed = 0xc0ffeeULL);

} // namespace msrlab
