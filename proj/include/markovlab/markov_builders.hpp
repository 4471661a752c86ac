#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

#include "markovlab/types.hpp"

namespace markovlab {

// Complete digraph with vertex weights theta and edge weights X;
// adjacency A(i,j) = theta(i) * X(i,j). X and theta are retained so
// diagnostics can look at the raw draws.
struct WeightedDigraph {
    Vec theta;
    Mat edge_weights;
    Mat adjacency;

    Index size() const { return theta.size(); }
};

WeightedDigraph build_adjacency(Vec theta, Mat edge_weights);

// Rows sum to zero; off-diagonal entries are non-negative rates.
class GeneratorMatrix {
public:
    explicit GeneratorMatrix(Mat q);

    const Mat& matrix() const { return m_; }
    Index size() const { return m_.rows(); }
    Vec exit_rates() const { return -m_.diagonal(); }

private:
    Mat m_;
};

enum class KernelVariant { with_loops, jump };

// Row-stochastic transition matrix; the jump variant has a zero diagonal.
class KernelMatrix {
public:
    KernelMatrix(Mat k, KernelVariant variant);

    const Mat& matrix() const { return m_; }
    KernelVariant variant() const { return variant_; }
    Index size() const { return m_.rows(); }

private:
    Mat m_;
    KernelVariant variant_;
};

// Non-negative entries summing to one.
class ProbabilityVector {
public:
    explicit ProbabilityVector(Vec values);

    // Clamps tiny negative round-off to zero and rescales to total mass one.
    static ProbabilityVector normalized(Vec weights);
    static ProbabilityVector uniform(Index n);

    const Vec& values() const { return v_; }
    double operator()(Index i) const { return v_(i); }
    Index size() const { return v_.size(); }

private:
    ProbabilityVector() = default;

    Vec v_;
};

GeneratorMatrix build_generator(const WeightedDigraph& g);  // Q = A - diag(A 1)
KernelMatrix build_kernel(const WeightedDigraph& g);        // P = D^-1 A
KernelMatrix build_jump_kernel(const WeightedDigraph& g);   // zero-diagonal row normalization
KernelMatrix build_jump_kernel(const GeneratorMatrix& q);   // row i divided by its exit rate

// q(i) = theta(i) * sum_{j != i} X(i,j); equals |Q(i,i)| up to rounding.
Vec exit_rates(const WeightedDigraph& g);

// nu_x(i) proportional to 1/x(i); requires strictly positive x.
ProbabilityVector reciprocal_distribution(const Vec& x);

enum class SupportClass { primitive, reducible, periodic };
std::string_view to_string(SupportClass c);

// Classification of the positivity pattern of m (self-loops included only
// when include_diagonal is set).
SupportClass classify_support(const Mat& m, bool include_diagonal);

struct PrimitivityReport {
    SupportClass adjacency;  // support of A, self-loops counted
    SupportClass jump;       // support of A with the diagonal removed

    bool both_primitive() const {
        return adjacency == SupportClass::primitive && jump == SupportClass::primitive;
    }
};

PrimitivityReport check_primitive(const WeightedDigraph& g);

// Plain-text dump: header "n theta-spec law seed", then n rows of n entries.
struct MatrixDump {
    Index n = 0;
    std::string theta_spec;
    std::string law_spec;
    std::uint64_t seed = 0;
    Mat adjacency;
};

void write_matrix_dump(std::ostream& out, const MatrixDump& dump);
MatrixDump read_matrix_dump(std::istream& in);

}  // namespace markovlab
