#pragma once

#include <functional>
#include <span>
#include <vector>

namespace msrlab {

// Search buffers are stack-sized for this many outcomes; the experiments in
// this lab use k <= 4 but the machinery tolerates a bit more.
inline constexpr int kMaxOutcomes = 8;

/// Enumerates every k-tuple of non-negative integers summing to m, in
/// lexicographic order, calling fn on each tuple.
void for_each_composition(long m, int k, const std::function<void(std::span<const long>)>& fn);

/// Integer direction vectors v with sum(v) = 0 and |v_i| <= radius, the zero
/// vector excluded. Deterministic order; cached per (k, radius).
const std::vector<std::vector<int>>& sum_zero_stencil(int k, int radius);

struct SimplexOptimum {
    std::vector<double> point;
    double value = 0.0;
};

struct SimplexSearchOptions {
    long global_n = 64;     // initial grid: compositions of global_n
    double h_min = 1e-9;    // terminal lattice resolution (simplex coordinates)
    int stencil_radius = 2; // local lattice half-width, in steps
    int max_rounds = 4000;
};

/// Maximizes an arbitrary objective over {q : q_i >= floor, sum q = 1} by
/// coarse grid enumeration followed by pattern refinement around the
/// incumbent. Deterministic; ties broken toward lexicographically smaller
/// points. Candidate filter (when given) restricts the feasible set; the
/// seed points are always offered as candidates so feasibility is preserved.
SimplexOptimum maximize_on_simplex(
    int k, double floor, const std::function<double(std::span<const double>)>& objective,
    const std::function<bool(std::span<const double>)>& feasible = nullptr,
    std::span<const std::vector<double>> seeds = {}, const SimplexSearchOptions& opts = {});

} // namespace msrlab
