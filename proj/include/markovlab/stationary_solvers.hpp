#pragma once

#include <string_view>

#include "markovlab/markov_builders.hpp"

namespace markovlab {

enum class SolveMethod { power, direct, tree_cofactor, tree_enumeration, via_jump };
std::string_view to_string(SolveMethod m);

struct SolveReport {
    ProbabilityVector pi;
    SolveMethod method;
    long iterations = 0;   // power-based routes only
    double residual = 0;   // ||pi K - pi||_1 for kernels, ||pi Q||_1 for generators
};

struct PowerOptions {
    double tol = 1e-13;  // l1 change between successive iterates
    long max_iter = 1000000;
};

// Damped power iteration pi <- pi (I + K) / 2 from the uniform start. The
// damping leaves fixed points alone but keeps periodic kernels convergent.
SolveReport stationary_kernel_power(const KernelMatrix& kernel, const PowerOptions& opt = {});

enum class GeneratorMethod { via_jump, direct };

// via_jump solves the embedded jump chain by power iteration and rescales by
// reciprocal exit rates; direct factorizes the transposed balance system.
SolveReport stationary_generator(const GeneratorMatrix& q, GeneratorMethod method,
                                 const PowerOptions& power = {}, double residual_tol = 1e-10);

// Dense LU on the balance equations with one column traded for the
// total-mass constraint.
SolveReport stationary_direct(const GeneratorMatrix& q, double residual_tol = 1e-10);
SolveReport stationary_direct(const KernelMatrix& k, double residual_tol = 1e-10);

enum class TreeMode { cofactor, enumeration };

// Markov-chain tree-theorem solver. cofactor evaluates principal minors of
// the Laplacian form (n <= 64); enumeration sums the weight of every spanning
// in-tree of the complete digraph by brute force (n <= 6).
SolveReport stationary_tree_oracle(const GeneratorMatrix& q, TreeMode mode);
SolveReport stationary_tree_oracle(const KernelMatrix& k, TreeMode mode);

}  // namespace markovlab
