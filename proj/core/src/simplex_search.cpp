#include "msrlab/simplex_search.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace msrlab {

void for_each_composition(long m, int k, const std::function<void(std::span<const long>)>& fn) {
    std::vector<long> c(static_cast<std::size_t>(k), 0);
    c[static_cast<std::size_t>(k) - 1] = m;
    // odometer over the first k-1 slots; the last absorbs the remainder
    while (true) {
        fn(c);
        int i = k - 2;
        while (i >= 0) {
            long tail = c[static_cast<std::size_t>(k) - 1];
            if (tail > 0) {
                c[static_cast<std::size_t>(i)] += 1;
                c[static_cast<std::size_t>(k) - 1] -= 1;
                break;
            }
            // slot i is exhausted: fold its count back into the tail and carry
            c[static_cast<std::size_t>(k) - 1] += c[static_cast<std::size_t>(i)];
            c[static_cast<std::size_t>(i)] = 0;
            --i;
        }
        if (i < 0) return;
    }
}

const std::vector<std::vector<int>>& sum_zero_stencil(int k, int radius) {
    static std::map<std::pair<int, int>, std::vector<std::vector<int>>> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto key = std::make_pair(k, radius);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    std::vector<std::vector<int>> out;
    std::vector<int> v(static_cast<std::size_t>(k), -radius);
    while (true) {
        long sum = 0;
        for (int i = 0; i + 1 < k; ++i) sum += v[static_cast<std::size_t>(i)];
        long last = -sum;
        if (std::abs(last) <= radius) {
            v[static_cast<std::size_t>(k) - 1] = static_cast<int>(last);
            bool zero = true;
            for (int x : v)
                if (x != 0) { zero = false; break; }
            if (!zero) out.push_back(v);
        }
        int i = k - 2;
        while (i >= 0 && v[static_cast<std::size_t>(i)] == radius) {
            v[static_cast<std::size_t>(i)] = -radius;
            --i;
        }
        if (i < 0) break;
        v[static_cast<std::size_t>(i)] += 1;
    }
    return cache.emplace(key, std::move(out)).first->second;
}

namespace {

bool lex_less(std::span<const double> a, std::span<const double> b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] < b[i]) return true;
        if (a[i] > b[i]) return false;
    }
    return false;
}

struct Incumbent {
    std::array<double, kMaxOutcomes> q{};
    double value = -1e300;
    bool set = false;

    void offer(std::span<const double> cand, double val, int k) {
        if (!set || val > value ||
            (val == value && lex_less(cand, std::span<const double>(q.data(), static_cast<std::size_t>(k))))) {
            std::copy(cand.begin(), cand.end(), q.begin());
            value = val;
            set = true;
        }
    }
};

} // namespace

SimplexOptimum maximize_on_simplex(
    int k, double floor, const std::function<double(std::span<const double>)>& objective,
    const std::function<bool(std::span<const double>)>& feasible,
    std::span<const std::vector<double>> seeds, const SimplexSearchOptions& opts) {
    if (k < 2 || k > kMaxOutcomes)
        throw std::invalid_argument("maximize_on_simplex: unsupported outcome count");
    const double span = 1.0 - k * floor;
    if (span < 0.0) throw std::invalid_argument("maximize_on_simplex: empty domain");

    Incumbent inc;
    std::array<double, kMaxOutcomes> buf{};
    std::span<double> q(buf.data(), static_cast<std::size_t>(k));

    auto offer = [&](std::span<const double> cand) {
        if (feasible && !feasible(cand)) return;
        inc.offer(cand, objective(cand), k);
    };

    for (const auto& s : seeds) {
        if (static_cast<int>(s.size()) != k)
            throw std::invalid_argument("maximize_on_simplex: seed dimension mismatch");
        offer(std::span<const double>(s.data(), s.size()));
    }

    if (span == 0.0) {
        // domain collapsed to the single point (floor, ..., floor)
        for (int i = 0; i < k; ++i) q[static_cast<std::size_t>(i)] = floor;
        offer(q);
        if (!inc.set) throw std::runtime_error("maximize_on_simplex: no feasible point");
        return {std::vector<double>(inc.q.begin(), inc.q.begin() + k), inc.value};
    }

    // global pass at resolution 1/global_n
    const long n0 = opts.global_n;
    for_each_composition(n0, k, [&](std::span<const long> c) {
        for (int i = 0; i < k; ++i)
            q[static_cast<std::size_t>(i)] =
                floor + span * (static_cast<double>(c[static_cast<std::size_t>(i)]) / static_cast<double>(n0));
        offer(q);
    });
    if (!inc.set) {
        // grid entirely infeasible and no seed offered: nothing to refine from
        throw std::runtime_error("maximize_on_simplex: no feasible point found");
    }

    // pattern refinement: probe a sum-zero lattice around the incumbent;
    // recenter while improvement lands on the stencil shell, shrink otherwise
    const auto& stencil = sum_zero_stencil(k, opts.stencil_radius);
    double h = span / static_cast<double>(n0);
    int rounds = 0;
    while (h > opts.h_min && rounds < opts.max_rounds) {
        ++rounds;
        const Incumbent before = inc;
        int best_shell = 0;
        for (const auto& v : stencil) {
            bool ok = true;
            for (int i = 0; i < k; ++i) {
                double x = before.q[static_cast<std::size_t>(i)] + h * v[static_cast<std::size_t>(i)];
                if (x < floor) {
                    if (x > floor - 1e-15) x = floor;
                    else { ok = false; break; }
                }
                q[static_cast<std::size_t>(i)] = x;
            }
            if (!ok) continue;
            const double old = inc.value;
            offer(q);
            if (inc.value > old) {
                int shell = 0;
                for (int x : v) shell = std::max(shell, std::abs(x));
                best_shell = shell;
            }
        }
        const bool moved = inc.value > before.value;
        if (!moved || best_shell < opts.stencil_radius) h *= 0.5;
    }

    return {std::vector<double>(inc.q.begin(), inc.q.begin() + k), inc.value};
}

} // namespace msrlab
