#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "markovlab/rng.hpp"
#include "markovlab/types.hpp"

namespace markovlab {

enum class LawKind { exponential, inverse_power, constant, bernoulli_mix };

// Analytic moments; infinite ones are +inf. max_order is the supremum of
// orders with a finite moment (+inf when every moment exists).
struct LawMoments {
    double mean;
    double variance;
    double max_order;
};

// Edge-weight distribution on [0, inf) with analytically known moments.
// constant(c) is degenerate and meant for test fixtures only.
class WeightLaw {
public:
    static WeightLaw exponential(double rate);
    static WeightLaw inverse_power(double alpha);  // X = Y^(-1/alpha), Y ~ Exp(1)
    static WeightLaw constant(double value);
    static WeightLaw bernoulli_mix(double p, WeightLaw base);  // X = B * X', B ~ Bernoulli(p)

    // exp:<lambda> | invpow:<alpha> | const:<c> | bern:<p>:<base>
    static WeightLaw parse(std::string_view text);

    LawKind kind() const { return kind_; }
    double param() const { return param_; }
    const WeightLaw& base() const;  // bernoulli_mix only
    bool degenerate() const { return kind_ == LawKind::constant; }
    bool strictly_positive() const;  // support excludes 0
    const LawMoments& moments() const { return moments_; }

    double sample(RngStream& rng) const;
    std::string to_string() const;  // round-trips through parse()

private:
    WeightLaw(LawKind kind, double param, std::shared_ptr<const WeightLaw> base);

    LawKind kind_;
    double param_;
    std::shared_ptr<const WeightLaw> base_;
    LawMoments moments_{};
};

LawMoments law_moments(const WeightLaw& law);

// Vertex weights: a shared constant, i.i.d. draws from a strictly positive
// law, or an explicit vector.
class VertexWeightSpec {
public:
    enum class Kind { constant, iid, explicit_values };

    static VertexWeightSpec constant(double value);
    static VertexWeightSpec iid(WeightLaw law);
    static VertexWeightSpec explicit_values(std::vector<double> values);

    // const:<c> | iid:<law> | explicit:<v1>,<v2>,...
    static VertexWeightSpec parse(std::string_view text);

    Kind kind() const { return kind_; }
    bool is_constant() const { return kind_ == Kind::constant; }
    double constant_value() const;
    const WeightLaw& law() const;
    const std::vector<double>& values() const;
    std::string to_string() const;

    Vec sample(Index n, RngStream& rng) const;

private:
    VertexWeightSpec() = default;

    Kind kind_ = Kind::constant;
    double value_ = 1.0;
    std::optional<WeightLaw> law_;
    std::vector<double> values_;
};

// i.i.d. n x n edge-weight matrix, filled row-major, so the draw is a pure
// function of (law, n, stream).
Mat sample_edge_matrix(const WeightLaw& law, Index n, RngStream& rng);

Vec sample_vertex_weights(const VertexWeightSpec& spec, Index n, RngStream& rng);

}  // namespace markovlab
