#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "markovlab/markov_builders.hpp"
#include "markovlab/weight_models.hpp"

namespace markovlab {

double tv_distance(const ProbabilityVector& a, const ProbabilityVector& b);
double linf_distance(const ProbabilityVector& a, const ProbabilityVector& b);

// n * pi(i), sorted in descending order.
Vec descending_scaled(const ProbabilityVector& pi);

struct LogLogFit {
    double slope;
    double intercept;
    double r_squared;
};

// Least squares of ln(value) against ln(n); needs at least three points with
// distinct n and strictly positive values.
LogLogFit loglog_slope(const std::vector<std::pair<double, double>>& points);

// Concentration statistics of one draw, the quantities the lemma suite
// tracks across n.
struct LemmaStatistics {
    Index n = 0;
    std::optional<double> max_centered_rowsum;  // max_i |sum_j (X(i,j) - mean)|; needs a mean
    double min_offdiag_rowsum = 0;              // min_i sum_{j != i} X(i,j)
    double max_rowsum = 0;                      // max_i sum_j X(i,j)
    double max_row_l2 = 0;                      // max_i sum_j K(i,j)^2
    double max_entry = 0;                       // max_{i,j} K(i,j)
    double min_two_step = 0;                    // min_{i,k} (K^2)(i,k)
    double linf_jump_gap = 0;                   // ||pi_jump - uniform||_inf
};

LemmaStatistics compute_lemma_statistics(const WeightedDigraph& g, const KernelMatrix& kernel,
                                         const ProbabilityVector& pi_jump, double mean);

// exp(-eps^2 mean^2 n / (2 (mean^2 + variance))), the closed-form lower-tail
// bound for sums of n i.i.d. non-negative variables.
double chernoff_bound(double mean, double variance, long n, double eps);

// Monte Carlo frequency of { sum of n draws <= (1 - eps) * mean * n }.
double empirical_lower_tail(const WeightLaw& law, long n, double eps, long trials,
                            RngStream& rng);

}  // namespace markovlab
