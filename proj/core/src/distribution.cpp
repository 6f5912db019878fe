#include "msrlab/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace msrlab {

Distribution::Distribution(std::vector<double> probs) : p_(std::move(probs)) {
    if (p_.size() < 2)
        throw std::invalid_argument("Distribution: need at least 2 outcomes");
    double sum = 0.0;
    for (double& v : p_) {
        if (!std::isfinite(v))
            throw std::invalid_argument("Distribution: non-finite entry");
        if (v < 0.0) {
            if (v < -kEntryClamp)
                throw std::invalid_argument("Distribution: negative entry");
            v = 0.0;
        }
        sum += v;
    }
    double err = std::abs(sum - 1.0);
    if (err > kSumTolerance)
        throw std::invalid_argument("Distribution: entries sum to " + std::to_string(sum));
    if (err > kSumRenormWindow) {
        for (double& v : p_) v /= sum;
    }
}

Distribution Distribution::uniform(int k) {
    if (k < 2) throw std::invalid_argument("Distribution::uniform: k < 2");
    return Distribution(std::vector<double>(static_cast<std::size_t>(k), 1.0 / k));
}

ProductBelief::ProductBelief(double q_top, double q_left) : q_top_(q_top), q_left_(q_left) {
    if (!(q_top >= 0.0 && q_top <= 1.0 && q_left >= 0.0 && q_left <= 1.0))
        throw std::invalid_argument("ProductBelief: coordinates must lie in [0,1]");
}

Distribution ProductBelief::expand() const {
    double t = q_top_, l = q_left_;
    return Distribution({t * l, t * (1.0 - l), (1.0 - t) * l, (1.0 - t) * (1.0 - l)});
}

Distribution expand(const ProductBelief& pb) { return pb.expand(); }

TangentDirection::TangentDirection(std::vector<double> eps) : e_(std::move(eps)) {
    if (e_.size() < 2)
        throw std::invalid_argument("TangentDirection: need at least 2 components");
    double sum = 0.0, norm = 0.0;
    for (double v : e_) {
        if (!std::isfinite(v))
            throw std::invalid_argument("TangentDirection: non-finite component");
        sum += v;
        norm += v * v;
    }
    if (std::abs(sum) > 1e-12)
        throw std::invalid_argument("TangentDirection: components must sum to 0");
    if (norm == 0.0)
        throw std::invalid_argument("TangentDirection: zero vector");
}

Distribution mix(const Distribution& q0, const Distribution& p, double alpha) {
    if (q0.size() != p.size())
        throw std::invalid_argument("mix: dimension mismatch");
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw std::invalid_argument("mix: alpha outside [0,1]");
    std::vector<double> out(static_cast<std::size_t>(q0.size()));
    for (int i = 0; i < q0.size(); ++i)
        out[static_cast<std::size_t>(i)] = (1.0 - alpha) * q0[i] + alpha * p[i];
    return Distribution(std::move(out));
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

double linf_distance(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double segment_distance_span(std::span<const double> q, std::span<const double> a,
                             std::span<const double> b) {
    double dd = 0.0, qa_d = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        double d = b[i] - a[i];
        dd += d * d;
        qa_d += (q[i] - a[i]) * d;
    }
    if (dd < 1e-24)
        throw std::invalid_argument("segment_distance: degenerate segment");
    double t = std::clamp(qa_d / dd, 0.0, 1.0);
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        double r = q[i] - (a[i] + t * (b[i] - a[i]));
        s += r * r;
    }
    return std::sqrt(s);
}

double segment_distance(const Distribution& q, const Distribution& q0, const Distribution& p) {
    if (q.size() != q0.size() || q.size() != p.size())
        throw std::invalid_argument("segment_distance: dimension mismatch");
    return segment_distance_span(q.span(), q0.span(), p.span());
}

double linf_distance(const Distribution& a, const Distribution& b) {
    return linf_distance(a.span(), b.span());
}

bool approx_equal(const Distribution& a, const Distribution& b, double tol) {
    return a.size() == b.size() && linf_distance(a, b) <= tol;
}

std::string outcome_label(int k, int index) {
    static const char* xyz[] = {"X", "Y", "Z"};
    static const char* grid[] = {"TL", "TR", "BL", "BR"};
    if (index < 0 || index >= k) throw std::invalid_argument("outcome_label: bad index");
    if (k <= 3) return xyz[index];
    if (k == 4) return grid[index];
    return "o" + std::to_string(index);
}

} // namespace msrlab
