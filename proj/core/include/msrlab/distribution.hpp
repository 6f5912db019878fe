#pragma once

#include <span>
#include <string>
#include <vector>

namespace msrlab {

// Validation tolerances for probability vectors. Inputs whose sum is within
// kSumRenormWindow of 1 are kept bit-for-bit (important for ledger round
// trips); sums off by more than that but within kSumTolerance are
// renormalized; anything worse is rejected.
inline constexpr double kSumTolerance = 1e-9;
inline constexpr double kSumRenormWindow = 1e-12;
inline constexpr double kEntryClamp = 1e-12;

/// Immutable probability vector over k >= 2 indexed outcomes.
class Distribution {
public:
    explicit Distribution(std::vector<double> probs);

    static Distribution uniform(int k);

    int size() const { return static_cast<int>(p_.size()); }
    double operator[](int i) const { return p_[static_cast<std::size_t>(i)]; }
    const std::vector<double>& probs() const { return p_; }
    std::span<const double> span() const { return {p_.data(), p_.size()}; }

    bool operator==(const Distribution& o) const { return p_ == o.p_; }

private:
    std::vector<double> p_;
};

/// Independent two-coordinate belief (top event, left event) over a 2x2
/// outcome grid. expand() orders outcomes (TL, TR, BL, BR).
class ProductBelief {
public:
    ProductBelief(double q_top, double q_left);

    double q_top() const { return q_top_; }
    double q_left() const { return q_left_; }
    Distribution expand() const;

private:
    double q_top_;
    double q_left_;
};

Distribution expand(const ProductBelief& pb);

/// Direction in the simplex tangent plane: components sum to 0 (within
/// 1e-12) and the vector is nonzero.
class TangentDirection {
public:
    explicit TangentDirection(std::vector<double> eps);

    int size() const { return static_cast<int>(e_.size()); }
    double operator[](int i) const { return e_[static_cast<std::size_t>(i)]; }
    const std::vector<double>& components() const { return e_; }

private:
    std::vector<double> e_;
};

/// Convex combination alpha*p + (1-alpha)*q0. alpha outside [0,1] or
/// mismatched dimensions are rejected.
Distribution mix(const Distribution& q0, const Distribution& p, double alpha);

/// Euclidean distance from q to the closed segment [q0, p]. Degenerate
/// segments (p == q0) are rejected.
double segment_distance(const Distribution& q, const Distribution& q0, const Distribution& p);

/// Raw-buffer variants used by the solvers and the lab.
double segment_distance_span(std::span<const double> q, std::span<const double> a,
                             std::span<const double> b);
double l2_distance(std::span<const double> a, std::span<const double> b);
double linf_distance(std::span<const double> a, std::span<const double> b);

double linf_distance(const Distribution& a, const Distribution& b);
bool approx_equal(const Distribution& a, const Distribution& b, double tol);

/// Display label for an outcome index: X/Y/Z for k<=3, TL/TR/BL/BR for k=4.
std::string outcome_label(int k, int index);

} // namespace msrlab
