#include "markovlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace markovlab {

namespace {

void require_same_size(const ProbabilityVector& a, const ProbabilityVector& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("distributions have different sizes (" +
                                    std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
}

}  // namespace

double tv_distance(const ProbabilityVector& a, const ProbabilityVector& b) {
    require_same_size(a, b);
    return 0.5 * (a.values() - b.values()).cwiseAbs().sum();
}

double linf_distance(const ProbabilityVector& a, const ProbabilityVector& b) {
    require_same_size(a, b);
    return (a.values() - b.values()).cwiseAbs().maxCoeff();
}

Vec descending_scaled(const ProbabilityVector& pi) {
    Vec out = pi.values() * static_cast<double>(pi.size());
    std::sort(out.data(), out.data() + out.size(), std::greater<double>());
    return out;
}

LogLogFit loglog_slope(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 3)
        throw std::invalid_argument("log-log fit needs at least three points");
    const double count = static_cast<double>(points.size());
    double sx = 0, sy = 0;
    for (const auto& [n, value] : points) {
        if (!(n > 0.0) || !(value > 0.0))
            throw std::invalid_argument("log-log fit needs strictly positive coordinates");
        sx += std::log(n);
        sy += std::log(value);
    }
    const double mx = sx / count;
    const double my = sy / count;
    double sxx = 0, sxy = 0, syy = 0;
    for (const auto& [n, value] : points) {
        const double dx = std::log(n) - mx;
        const double dy = std::log(value) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (!(sxx > 0.0))
        throw std::invalid_argument("log-log fit needs at least two distinct n values");
    const double slope = sxy / sxx;
    const double ss_res = syy - slope * sxy;
    // All-equal values fit the constant exactly.
    const double r2 = syy > 0.0 ? std::max(0.0, 1.0 - ss_res / syy) : 1.0;
    return {slope, my - slope * mx, r2};
}

LemmaStatistics compute_lemma_statistics(const WeightedDigraph& g, const KernelMatrix& kernel,
                                         const ProbabilityVector& pi_jump, double mean) {
    const Index n = g.size();
    const Mat& k = kernel.matrix();
    if (k.rows() != n || pi_jump.size() != n)
        throw std::invalid_argument("lemma statistics need matching sizes for the draw, the "
                                    "kernel, and the jump distribution");

    LemmaStatistics stats;
    stats.n = n;

    const Vec rowsums = kahan_row_sums(g.edge_weights);
    const Vec offdiag = kahan_row_sums(g.edge_weights, /*skip_diagonal=*/true);
    stats.max_rowsum = rowsums.maxCoeff();
    stats.min_offdiag_rowsum = offdiag.minCoeff();
    if (std::isfinite(mean)) {
        const double total = mean * static_cast<double>(n);
        stats.max_centered_rowsum = (rowsums.array() - total).abs().maxCoeff();
    }

    stats.max_entry = k.maxCoeff();
    stats.max_row_l2 = k.array().square().rowwise().sum().maxCoeff();

    Mat two_step(n, n);
    two_step.noalias() = k * k;
    stats.min_two_step = two_step.minCoeff();

    const double u = 1.0 / static_cast<double>(n);
    stats.linf_jump_gap = (pi_jump.values().array() - u).abs().maxCoeff();
    return stats;
}

double chernoff_bound(double mean, double variance, long n, double eps) {
    if (!(mean > 0.0) || !std::isfinite(mean) || !(variance > 0.0) || !std::isfinite(variance))
        throw std::invalid_argument("lower-tail bound needs finite positive mean and variance");
    if (!(eps > 0.0) || !(eps < 1.0)) throw std::invalid_argument("eps must lie in (0,1)");
    if (n < 1) throw std::invalid_argument("n must be at least 1");
    const double m2 = mean * mean;
    return std::exp(-eps * eps * m2 * static_cast<double>(n) / (2.0 * (m2 + variance)));
}

double empirical_lower_tail(const WeightLaw& law, long n, double eps, long trials,
                            RngStream& rng) {
    const LawMoments m = law.moments();
    if (!std::isfinite(m.mean) || !std::isfinite(m.variance))
        throw std::invalid_argument("lower-tail sampling needs finite mean and variance");
    if (!(eps > 0.0) || !(eps < 1.0)) throw std::invalid_argument("eps must lie in (0,1)");
    if (n < 1 || trials < 1)
        throw std::invalid_argument("lower-tail sampling needs n >= 1 and trials >= 1");
    const double threshold = (1.0 - eps) * m.mean * static_cast<double>(n);
    long hits = 0;
    for (long t = 0; t < trials; ++t) {
        double sum = 0.0;
        for (long i = 0; i < n; ++i) sum += law.sample(rng);
        if (sum <= threshold) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(trials);
}

}  // namespace markovlab
