#pragma once

#include <string>

#include <Eigen/Core>

namespace markovlab {

// Dense row-major doubles throughout; the model graph is a complete digraph.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

// Compensated summation; keeps the row-sum invariants tight when a row mixes
// magnitudes (heavy-tailed draws).
double kahan_sum(const double* values, Index count);
double kahan_sum(const Vec& values);

Vec kahan_row_sums(const Mat& m, bool skip_diagonal = false);

// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

}  // namespace markovlab
