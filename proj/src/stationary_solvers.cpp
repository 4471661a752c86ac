#include "markovlab/stationary_solvers.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/LU>

namespace markovlab {

namespace {

using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

double generator_residual(const Vec& pi, const Mat& q) {
    return (pi.transpose() * q).cwiseAbs().sum();
}

double kernel_residual(const Vec& pi, const Mat& k) {
    return (pi.transpose() * k - pi.transpose()).cwiseAbs().sum();
}

// Solves pi M = 0 with total mass one by swapping the last column of M for
// the all-ones constraint; M is a generator or K - I.
Vec balance_solve(const Mat& m, const char* what) {
    const Index n = m.rows();
    Eigen::MatrixXd c = m.transpose();
    c.row(n - 1).setOnes();
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(c);
    const double rc = lu.rcond();
    if (!(rc > 1e-14))
        throw std::runtime_error(std::string(what) +
                                 ": balance system is singular beyond the expected redundancy "
                                 "(reducible chain or ill-conditioned matrix; rcond ~ " +
                                 format_double(rc) + ")");
    Vec rhs = Vec::Zero(n);
    rhs(n - 1) = 1.0;
    return lu.solve(rhs);
}

// Sum over spanning in-trees rooted at each vertex of the product of edge
// weights w(v, parent(v)); brute force over parent assignments.
Vec enumerate_tree_weights(const Mat& w) {
    const Index n = w.rows();
    Vec totals = Vec::Zero(n);
    std::vector<Index> verts(n - 1);
    std::vector<Index> parent(n);
    for (Index root = 0; root < n; ++root) {
        Index pos = 0;
        for (Index v = 0; v < n; ++v)
            if (v != root) verts[pos++] = v;

        const auto reaches_root = [&]() {
            for (Index v : verts) {
                Index cur = v;
                Index steps = 0;
                while (cur != root) {
                    cur = parent[cur];
                    if (++steps > n) return false;  // parent pointers form a cycle
                }
            }
            return true;
        };

        double total = 0.0;
        const auto recurse = [&](auto&& self, Index idx, double prod) -> void {
            if (idx == static_cast<Index>(verts.size())) {
                if (reaches_root()) total += prod;
                return;
            }
            const Index v = verts[idx];
            for (Index p = 0; p < n; ++p) {
                if (p == v) continue;
                const double f = w(v, p);
                if (f <= 0.0) continue;
                parent[v] = p;
                self(self, idx + 1, prod * f);
            }
        };
        recurse(recurse, 0, 1.0);
        totals(root) = total;
    }
    return totals;
}

// Principal minors of the scaled Laplacian form; the common scale factor
// cancels when the weights are normalized.
Vec cofactor_tree_weights(const Mat& laplacian) {
    const Index n = laplacian.rows();
    const double scale = laplacian.cwiseAbs().maxCoeff();
    if (!(scale > 0.0))
        throw std::runtime_error("tree oracle: matrix is identically zero");
    const Mat scaled = laplacian / scale;
    Vec weights(n);
    Eigen::MatrixXd sub(n - 1, n - 1);
    for (Index i = 0; i < n; ++i) {
        for (Index r = 0, mr = 0; r < n; ++r) {
            if (r == i) continue;
            for (Index c = 0, mc = 0; c < n; ++c) {
                if (c == i) continue;
                sub(mr, mc) = scaled(r, c);
                ++mc;
            }
            ++mr;
        }
        const double det = sub.partialPivLu().determinant();
        weights(i) = det > 0.0 ? det : 0.0;
    }
    return weights;
}

SolveReport tree_report(Vec weights, const Mat* generator, const Mat* kernel, TreeMode mode) {
    if (!(weights.maxCoeff() > 0.0))
        throw std::runtime_error("tree oracle: every spanning in-tree has zero weight "
                                 "(reducible chain)");
    auto pi = ProbabilityVector::normalized(std::move(weights));
    const double residual = generator ? generator_residual(pi.values(), *generator)
                                      : kernel_residual(pi.values(), *kernel);
    return {std::move(pi),
            mode == TreeMode::cofactor ? SolveMethod::tree_cofactor
                                       : SolveMethod::tree_enumeration,
            0, residual};
}

}  // namespace

std::string_view to_string(SolveMethod m) {
    switch (m) {
        case SolveMethod::power: return "power";
        case SolveMethod::direct: return "direct";
        case SolveMethod::tree_cofactor: return "tree_cofactor";
        case SolveMethod::tree_enumeration: return "tree_enumeration";
        case SolveMethod::via_jump: return "via_jump";
    }
    return "unknown";
}

SolveReport stationary_kernel_power(const KernelMatrix& kernel, const PowerOptions& opt) {
    const Mat& k = kernel.matrix();
    if (classify_support(k, true) == SupportClass::reducible)
        throw std::invalid_argument("power iteration requires an irreducible kernel");
    if (!(opt.tol > 0.0) || opt.max_iter < 1)
        throw std::invalid_argument("power iteration needs tol > 0 and max_iter >= 1");

    const Index n = k.rows();
    RowVec pi = RowVec::Constant(n, 1.0 / static_cast<double>(n));
    long iter = 0;
    double change = std::numeric_limits<double>::infinity();
    RowVec next(n);
    while (iter < opt.max_iter) {
        ++iter;
        next.noalias() = pi * k;
        next = 0.5 * (pi + next);
        next /= next.sum();
        change = (next - pi).cwiseAbs().sum();
        pi.swap(next);
        if (change <= opt.tol) break;
    }
    if (change > opt.tol)
        throw std::runtime_error("power iteration did not converge within " +
                                 std::to_string(opt.max_iter) + " iterations (last l1 change " +
                                 format_double(change) + ")");
    Vec result = pi.transpose();
    const double residual = kernel_residual(result, k);
    return {ProbabilityVector::normalized(std::move(result)), SolveMethod::power, iter, residual};
}

SolveReport stationary_direct(const GeneratorMatrix& q, double residual_tol) {
    const Mat& m = q.matrix();
    auto pi = ProbabilityVector::normalized(balance_solve(m, "generator"));
    const double residual = generator_residual(pi.values(), m);
    const double scale = m.cwiseAbs().maxCoeff() * static_cast<double>(m.rows());
    if (residual > residual_tol * std::max(scale, 1.0))
        throw std::runtime_error("direct generator solve residual " + format_double(residual) +
                                 " exceeds tolerance at scale " + format_double(scale));
    return {std::move(pi), SolveMethod::direct, 0, residual};
}

SolveReport stationary_direct(const KernelMatrix& k, double residual_tol) {
    Mat m = k.matrix();
    m.diagonal().array() -= 1.0;
    auto pi = ProbabilityVector::normalized(balance_solve(m, "kernel"));
    const double residual = kernel_residual(pi.values(), k.matrix());
    if (residual > residual_tol * static_cast<double>(m.rows()))
        throw std::runtime_error("direct kernel solve residual " + format_double(residual) +
                                 " exceeds tolerance");
    return {std::move(pi), SolveMethod::direct, 0, residual};
}

SolveReport stationary_generator(const GeneratorMatrix& q, GeneratorMethod method,
                                 const PowerOptions& power, double residual_tol) {
    if (method == GeneratorMethod::direct) return stationary_direct(q, residual_tol);

    const Vec rates = q.exit_rates();
    for (Index i = 0; i < rates.size(); ++i)
        if (!(rates(i) > 0.0))
            throw std::invalid_argument("exit rate is zero at state " + std::to_string(i) +
                                        "; jump chain undefined");
    const KernelMatrix jump = build_jump_kernel(q);
    SolveReport inner = stationary_kernel_power(jump, power);
    auto pi = ProbabilityVector::normalized(inner.pi.values().cwiseQuotient(rates));
    const double residual = generator_residual(pi.values(), q.matrix());
    const double scale = q.matrix().cwiseAbs().maxCoeff() * static_cast<double>(q.size());
    if (residual > residual_tol * std::max(scale, 1.0))
        throw std::runtime_error("via-jump solve residual " + format_double(residual) +
                                 " exceeds tolerance at scale " + format_double(scale));
    return {std::move(pi), SolveMethod::via_jump, inner.iterations, residual};
}

SolveReport stationary_tree_oracle(const GeneratorMatrix& q, TreeMode mode) {
    const Mat& m = q.matrix();
    const Index n = m.rows();
    if (mode == TreeMode::enumeration) {
        if (n > 6)
            throw std::invalid_argument("tree enumeration is limited to n <= 6 (got " +
                                        std::to_string(n) + ")");
        Mat w = m;
        w.diagonal().setZero();
        return tree_report(enumerate_tree_weights(w), &m, nullptr, mode);
    }
    if (n > 64)
        throw std::invalid_argument("cofactor tree oracle is limited to n <= 64 (got " +
                                    std::to_string(n) + ")");
    return tree_report(cofactor_tree_weights(-m), &m, nullptr, mode);
}

SolveReport stationary_tree_oracle(const KernelMatrix& k, TreeMode mode) {
    const Mat& m = k.matrix();
    const Index n = m.rows();
    if (mode == TreeMode::enumeration) {
        if (n > 6)
            throw std::invalid_argument("tree enumeration is limited to n <= 6 (got " +
                                        std::to_string(n) + ")");
        Mat w = m;
        w.diagonal().setZero();
        return tree_report(enumerate_tree_weights(w), nullptr, &m, mode);
    }
    if (n > 64)
        throw std::invalid_argument("cofactor tree oracle is limited to n <= 64 (got " +
                                    std::to_string(n) + ")");
    Mat laplacian = -m;
    laplacian.diagonal().array() += 1.0;
    return tree_report(cofactor_tree_weights(laplacian), nullptr, &m, mode);
}

}  // namespace markovlab
