#include "markovlab/markov_builders.hpp"

#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace markovlab {

namespace {

constexpr double kRowSumTol = 1e-12;

void require_square(const Mat& m, const char* what) {
    if (m.rows() != m.cols() || m.rows() < 2)
        throw std::invalid_argument(std::string(what) + " must be square with n >= 2");
}

}  // namespace

WeightedDigraph build_adjacency(Vec theta, Mat edge_weights) {
    require_square(edge_weights, "edge-weight matrix");
    if (theta.size() != edge_weights.rows())
        throw std::invalid_argument("theta has length " + std::to_string(theta.size()) +
                                    " but the edge matrix is " +
                                    std::to_string(edge_weights.rows()) + " x " +
                                    std::to_string(edge_weights.cols()));
    for (Index i = 0; i < theta.size(); ++i)
        if (!(theta(i) > 0.0) || !std::isfinite(theta(i)))
            throw std::invalid_argument("vertex weight " + std::to_string(i) +
                                        " must be positive and finite");
    for (Index i = 0; i < edge_weights.size(); ++i)
        if (!(edge_weights.data()[i] >= 0.0) || !std::isfinite(edge_weights.data()[i]))
            throw std::invalid_argument("edge weights must be non-negative and finite");
    WeightedDigraph g;
    g.adjacency = theta.asDiagonal() * edge_weights;
    g.theta = std::move(theta);
    g.edge_weights = std::move(edge_weights);
    return g;
}

GeneratorMatrix::GeneratorMatrix(Mat q) : m_(std::move(q)) {
    require_square(m_, "generator");
    const Index n = m_.rows();
    double max_abs_rowsum = 0.0;
    double scale = 0.0;
    for (Index i = 0; i < n; ++i) {
        double sum = 0.0, comp = 0.0, abs_sum = 0.0;
        for (Index j = 0; j < n; ++j) {
            const double v = m_(i, j);
            if (j != i && v < 0.0)
                throw std::invalid_argument("generator has a negative off-diagonal rate at (" +
                                            std::to_string(i) + "," + std::to_string(j) + ")");
            const double y = v - comp;
            const double t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            abs_sum += std::abs(v);
        }
        max_abs_rowsum = std::max(max_abs_rowsum, std::abs(sum));
        scale = std::max(scale, abs_sum);
    }
    if (max_abs_rowsum > kRowSumTol * std::max(scale, 1.0))
        throw std::invalid_argument("generator rows do not sum to zero (max |row sum| " +
                                    format_double(max_abs_rowsum) + " against scale " +
                                    format_double(scale) + ")");
}

KernelMatrix::KernelMatrix(Mat k, KernelVariant variant) : m_(std::move(k)), variant_(variant) {
    require_square(m_, "kernel");
    const Index n = m_.rows();
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            const double v = m_(i, j);
            if (!(v >= 0.0) || v > 1.0 + kRowSumTol)
                throw std::invalid_argument("kernel entry (" + std::to_string(i) + "," +
                                            std::to_string(j) + ") = " + format_double(v) +
                                            " lies outside [0,1]");
        }
        if (variant_ == KernelVariant::jump && m_(i, i) != 0.0)
            throw std::invalid_argument("jump kernel has a non-zero diagonal at state " +
                                        std::to_string(i));
        const double sum = kahan_sum(m_.data() + i * n, n);
        if (std::abs(sum - 1.0) > kRowSumTol)
            throw std::invalid_argument("kernel row " + std::to_string(i) + " sums to " +
                                        format_double(sum));
    }
}

ProbabilityVector::ProbabilityVector(Vec values) : v_(std::move(values)) {
    if (v_.size() < 1) throw std::invalid_argument("probability vector is empty");
    for (Index i = 0; i < v_.size(); ++i)
        if (!(v_(i) >= 0.0) || !std::isfinite(v_(i)))
            throw std::invalid_argument("probability entry " + std::to_string(i) + " = " +
                                        format_double(v_(i)) + " is not in [0,1]");
    const double sum = kahan_sum(v_);
    if (std::abs(sum - 1.0) > kRowSumTol)
        throw std::invalid_argument("probability vector sums to " + format_double(sum));
}

ProbabilityVector ProbabilityVector::normalized(Vec weights) {
    if (weights.size() < 1) throw std::invalid_argument("cannot normalize an empty vector");
    const double max_abs = weights.cwiseAbs().maxCoeff();
    for (Index i = 0; i < weights.size(); ++i) {
        if (!std::isfinite(weights(i)))
            throw std::invalid_argument("cannot normalize: entry " + std::to_string(i) +
                                        " is not finite");
        if (weights(i) < 0.0) {
            if (weights(i) < -1e-9 * max_abs)
                throw std::invalid_argument("cannot normalize: entry " + std::to_string(i) +
                                            " = " + format_double(weights(i)) +
                                            " is significantly negative");
            weights(i) = 0.0;
        }
    }
    const double sum = kahan_sum(weights);
    if (!(sum > 0.0))
        throw std::invalid_argument("cannot normalize a vector with zero total mass");
    weights /= sum;
    return ProbabilityVector(std::move(weights));
}

ProbabilityVector ProbabilityVector::uniform(Index n) {
    if (n < 1) throw std::invalid_argument("uniform distribution needs n >= 1");
    return ProbabilityVector(Vec::Constant(n, 1.0 / static_cast<double>(n)));
}

GeneratorMatrix build_generator(const WeightedDigraph& g) {
    Mat q = g.adjacency;
    const Vec d = kahan_row_sums(g.adjacency);
    q.diagonal() = g.adjacency.diagonal() - d;
    return GeneratorMatrix(std::move(q));
}

KernelMatrix build_kernel(const WeightedDigraph& g) {
    const Vec d = kahan_row_sums(g.adjacency);
    const Index n = g.size();
    Mat k(n, n);
    for (Index i = 0; i < n; ++i) {
        if (!(d(i) > 0.0))
            throw std::invalid_argument("row " + std::to_string(i) +
                                        " of the adjacency matrix has zero sum; kernel undefined");
        k.row(i) = g.adjacency.row(i) / d(i);
    }
    return KernelMatrix(std::move(k), KernelVariant::with_loops);
}

KernelMatrix build_jump_kernel(const WeightedDigraph& g) {
    const Vec d = kahan_row_sums(g.adjacency, /*skip_diagonal=*/true);
    const Index n = g.size();
    Mat k(n, n);
    for (Index i = 0; i < n; ++i) {
        if (!(d(i) > 0.0))
            throw std::invalid_argument("row " + std::to_string(i) +
                                        " has no off-diagonal mass; jump kernel undefined");
        k.row(i) = g.adjacency.row(i) / d(i);
        k(i, i) = 0.0;
    }
    return KernelMatrix(std::move(k), KernelVariant::jump);
}

KernelMatrix build_jump_kernel(const GeneratorMatrix& q) {
    const Mat& m = q.matrix();
    const Index n = m.rows();
    Mat k(n, n);
    for (Index i = 0; i < n; ++i) {
        const double rate = -m(i, i);
        if (!(rate > 0.0))
            throw std::invalid_argument("exit rate is zero at state " + std::to_string(i) +
                                        "; jump chain undefined");
        k.row(i) = m.row(i) / rate;
        k(i, i) = 0.0;
    }
    return KernelMatrix(std::move(k), KernelVariant::jump);
}

Vec exit_rates(const WeightedDigraph& g) {
    return g.theta.cwiseProduct(kahan_row_sums(g.edge_weights, /*skip_diagonal=*/true));
}

ProbabilityVector reciprocal_distribution(const Vec& x) {
    Vec r(x.size());
    for (Index i = 0; i < x.size(); ++i) {
        if (!(x(i) > 0.0) || !std::isfinite(x(i)))
            throw std::invalid_argument("reciprocal distribution needs strictly positive inputs; "
                                        "entry " + std::to_string(i) + " = " +
                                        format_double(x(i)));
        r(i) = 1.0 / x(i);
    }
    return ProbabilityVector::normalized(std::move(r));
}

std::string_view to_string(SupportClass c) {
    switch (c) {
        case SupportClass::primitive: return "primitive";
        case SupportClass::reducible: return "reducible";
        case SupportClass::periodic: return "periodic";
    }
    return "unknown";
}

SupportClass classify_support(const Mat& m, bool include_diagonal) {
    const Index n = m.rows();
    const auto has_edge = [&](Index u, Index v) {
        if (u == v && !include_diagonal) return false;
        return m(u, v) > 0.0;
    };

    // Strong connectivity: vertex 0 reaches everything forwards and backwards.
    const auto reach = [&](bool forward) {
        std::vector<char> seen(n, 0);
        std::vector<Index> stack{0};
        seen[0] = 1;
        while (!stack.empty()) {
            const Index u = stack.back();
            stack.pop_back();
            for (Index v = 0; v < n; ++v) {
                if (seen[v]) continue;
                const bool edge = forward ? has_edge(u, v) : has_edge(v, u);
                if (edge) {
                    seen[v] = 1;
                    stack.push_back(v);
                }
            }
        }
        return seen;
    };
    const auto fwd = reach(true);
    const auto bwd = reach(false);
    for (Index v = 0; v < n; ++v)
        if (!fwd[v] || !bwd[v]) return SupportClass::reducible;

    // Period: gcd of (level(u) + 1 - level(v)) over edges, levels from a BFS.
    std::vector<Index> level(n, -1);
    std::vector<Index> queue{0};
    level[0] = 0;
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const Index u = queue[head];
        for (Index v = 0; v < n; ++v) {
            if (has_edge(u, v) && level[v] < 0) {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    long long g = 0;
    for (Index u = 0; u < n; ++u)
        for (Index v = 0; v < n; ++v)
            if (has_edge(u, v)) g = std::gcd(g, static_cast<long long>(level[u] + 1 - level[v]));
    return g == 1 ? SupportClass::primitive : SupportClass::periodic;
}

PrimitivityReport check_primitive(const WeightedDigraph& g) {
    return {classify_support(g.adjacency, true), classify_support(g.adjacency, false)};
}

void write_matrix_dump(std::ostream& out, const MatrixDump& dump) {
    out << dump.n << ' ' << dump.theta_spec << ' ' << dump.law_spec << ' ' << dump.seed << '\n';
    for (Index i = 0; i < dump.n; ++i) {
        for (Index j = 0; j < dump.n; ++j) {
            if (j) out << ' ';
            out << format_double(dump.adjacency(i, j));
        }
        out << '\n';
    }
}

MatrixDump read_matrix_dump(std::istream& in) {
    MatrixDump dump;
    if (!(in >> dump.n >> dump.theta_spec >> dump.law_spec >> dump.seed))
        throw std::invalid_argument("matrix dump: malformed header; expected 'n theta law seed'");
    if (dump.n < 2) throw std::invalid_argument("matrix dump: n must be at least 2");
    dump.adjacency.resize(dump.n, dump.n);
    for (Index i = 0; i < dump.n; ++i)
        for (Index j = 0; j < dump.n; ++j)
            if (!(in >> dump.adjacency(i, j)))
                throw std::invalid_argument("matrix dump: truncated at row " + std::to_string(i));
    return dump;
}

}  // namespace markovlab
