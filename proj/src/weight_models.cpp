#include "markovlab/weight_models.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace markovlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

[[noreturn]] void bad_law(std::string_view text) {
    throw std::invalid_argument("invalid weight law '" + std::string(text) +
                                "': expected exp:<lambda>, invpow:<alpha>, const:<c>, or "
                                "bern:<p>:<base>");
}

double parse_number(std::string_view token, std::string_view whole) {
    const std::string_view t = trim(token);
    double value = 0.0;
    auto res = std::from_chars(t.data(), t.data() + t.size(), value);
    if (res.ec != std::errc{} || res.ptr != t.data() + t.size()) bad_law(whole);
    return value;
}

}  // namespace

WeightLaw::WeightLaw(LawKind kind, double param, std::shared_ptr<const WeightLaw> base)
    : kind_(kind), param_(param), base_(std::move(base)) {}

WeightLaw WeightLaw::exponential(double rate) {
    if (!(rate > 0.0) || !std::isfinite(rate))
        throw std::invalid_argument("exponential rate must be positive and finite");
    WeightLaw law(LawKind::exponential, rate, nullptr);
    law.moments_ = {1.0 / rate, 1.0 / (rate * rate), kInf};
    return law;
}

WeightLaw WeightLaw::inverse_power(double alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        throw std::invalid_argument("inverse-power exponent must be positive and finite");
    WeightLaw law(LawKind::inverse_power, alpha, nullptr);
    // E[X^r] = Gamma(1 - r/alpha) for r < alpha, infinite otherwise.
    const double mean = alpha > 1.0 ? std::tgamma(1.0 - 1.0 / alpha) : kInf;
    const double variance =
        alpha > 2.0 ? std::tgamma(1.0 - 2.0 / alpha) - mean * mean : kInf;
    law.moments_ = {mean, variance, alpha};
    return law;
}

WeightLaw WeightLaw::constant(double value) {
    if (!(value > 0.0) || !std::isfinite(value))
        throw std::invalid_argument("constant weight must be positive and finite");
    WeightLaw law(LawKind::constant, value, nullptr);
    law.moments_ = {value, 0.0, kInf};
    return law;
}

WeightLaw WeightLaw::bernoulli_mix(double p, WeightLaw base) {
    if (!(p > 0.0) || !(p < 1.0))
        throw std::invalid_argument("bernoulli mix probability must lie strictly in (0,1)");
    auto shared = std::make_shared<const WeightLaw>(std::move(base));
    WeightLaw law(LawKind::bernoulli_mix, p, shared);
    const LawMoments& b = shared->moments_;
    const double mean = p * b.mean;
    const bool second_finite = std::isfinite(b.mean) && std::isfinite(b.variance);
    const double second = second_finite ? b.variance + b.mean * b.mean : kInf;
    law.moments_ = {mean, second_finite ? p * second - mean * mean : kInf, b.max_order};
    return law;
}

WeightLaw WeightLaw::parse(std::string_view text) {
    const std::string t = to_lower(trim(text));
    const auto colon = t.find(':');
    if (colon == std::string::npos || colon + 1 >= t.size()) bad_law(text);
    const std::string_view head = std::string_view(t).substr(0, colon);
    const std::string_view rest = std::string_view(t).substr(colon + 1);
    if (head == "exp") return exponential(parse_number(rest, text));
    if (head == "invpow") return inverse_power(parse_number(rest, text));
    if (head == "const") return constant(parse_number(rest, text));
    if (head == "bern") {
        const auto second = rest.find(':');
        if (second == std::string_view::npos || second + 1 >= rest.size()) bad_law(text);
        const double p = parse_number(rest.substr(0, second), text);
        return bernoulli_mix(p, parse(rest.substr(second + 1)));
    }
    bad_law(text);
}

const WeightLaw& WeightLaw::base() const {
    if (!base_) throw std::logic_error("law has no base component");
    return *base_;
}

bool WeightLaw::strictly_positive() const { return kind_ != LawKind::bernoulli_mix; }

double WeightLaw::sample(RngStream& rng) const {
    switch (kind_) {
        case LawKind::exponential:
            return -std::log(rng.uniform01()) / param_;
        case LawKind::inverse_power:
            return std::pow(-std::log(rng.uniform01()), -1.0 / param_);
        case LawKind::constant:
            return param_;
        case LawKind::bernoulli_mix:
            return rng.uniform01() < param_ ? base_->sample(rng) : 0.0;
    }
    throw std::logic_error("unreachable law kind");
}

std::string WeightLaw::to_string() const {
    switch (kind_) {
        case LawKind::exponential:
            return "exp:" + format_double(param_);
        case LawKind::inverse_power:
            return "invpow:" + format_double(param_);
        case LawKind::constant:
            return "const:" + format_double(param_);
        case LawKind::bernoulli_mix:
            return "bern:" + format_double(param_) + ":" + base_->to_string();
    }
    throw std::logic_error("unreachable law kind");
}

LawMoments law_moments(const WeightLaw& law) { return law.moments(); }

VertexWeightSpec VertexWeightSpec::constant(double value) {
    if (!(value > 0.0) || !std::isfinite(value))
        throw std::invalid_argument("constant vertex weight must be positive and finite");
    VertexWeightSpec spec;
    spec.kind_ = Kind::constant;
    spec.value_ = value;
    return spec;
}

VertexWeightSpec VertexWeightSpec::iid(WeightLaw law) {
    if (!law.strictly_positive())
        throw std::invalid_argument(
            "vertex weights must be strictly positive; law '" + law.to_string() +
            "' puts mass at zero");
    VertexWeightSpec spec;
    spec.kind_ = Kind::iid;
    spec.law_ = std::move(law);
    return spec;
}

VertexWeightSpec VertexWeightSpec::explicit_values(std::vector<double> values) {
    for (std::size_t i = 0; i < values.size(); ++i)
        if (!(values[i] > 0.0) || !std::isfinite(values[i]))
            throw std::invalid_argument("explicit vertex weight " + std::to_string(i) +
                                        " must be positive and finite");
    if (values.empty()) throw std::invalid_argument("explicit vertex weights are empty");
    VertexWeightSpec spec;
    spec.kind_ = Kind::explicit_values;
    spec.values_ = std::move(values);
    return spec;
}

VertexWeightSpec VertexWeightSpec::parse(std::string_view text) {
    const std::string t = to_lower(trim(text));
    const auto colon = t.find(':');
    if (colon == std::string::npos || colon + 1 >= t.size())
        throw std::invalid_argument("invalid vertex-weight spec '" + std::string(text) +
                                    "': expected const:<c>, iid:<law>, or explicit:<v1>,<v2>,...");
    const std::string_view head = std::string_view(t).substr(0, colon);
    const std::string_view rest = std::string_view(t).substr(colon + 1);
    if (head == "const") return constant(parse_number(rest, text));
    if (head == "iid") return iid(WeightLaw::parse(rest));
    if (head == "explicit") {
        std::vector<double> values;
        std::string_view remaining = rest;
        while (true) {
            const auto comma = remaining.find(',');
            values.push_back(parse_number(remaining.substr(0, comma), text));
            if (comma == std::string_view::npos) break;
            remaining = remaining.substr(comma + 1);
        }
        return explicit_values(std::move(values));
    }
    throw std::invalid_argument("invalid vertex-weight spec '" + std::string(text) +
                                "': expected const:<c>, iid:<law>, or explicit:<v1>,<v2>,...");
}

double VertexWeightSpec::constant_value() const {
    if (kind_ != Kind::constant) throw std::logic_error("vertex-weight spec is not constant");
    return value_;
}

const WeightLaw& VertexWeightSpec::law() const {
    if (!law_) throw std::logic_error("vertex-weight spec has no law");
    return *law_;
}

const std::vector<double>& VertexWeightSpec::values() const {
    if (kind_ != Kind::explicit_values)
        throw std::logic_error("vertex-weight spec has no explicit values");
    return values_;
}

std::string VertexWeightSpec::to_string() const {
    switch (kind_) {
        case Kind::constant:
            return "const:" + format_double(value_);
        case Kind::iid:
            return "iid:" + law_->to_string();
        case Kind::explicit_values: {
            std::string out = "explicit:";
            for (std::size_t i = 0; i < values_.size(); ++i) {
                if (i) out += ',';
                out += format_double(values_[i]);
            }
            return out;
        }
    }
    throw std::logic_error("unreachable vertex-weight kind");
}

Vec VertexWeightSpec::sample(Index n, RngStream& rng) const {
    if (n < 2) throw std::invalid_argument("vertex-weight sample needs n >= 2");
    switch (kind_) {
        case Kind::constant:
            return Vec::Constant(n, value_);
        case Kind::iid: {
            Vec out(n);
            for (Index i = 0; i < n; ++i) out(i) = law_->sample(rng);
            return out;
        }
        case Kind::explicit_values: {
            if (static_cast<Index>(values_.size()) != n)
                throw std::invalid_argument("explicit vertex weights have length " +
                                            std::to_string(values_.size()) + ", expected " +
                                            std::to_string(n));
            return Eigen::Map<const Vec>(values_.data(), n);
        }
    }
    throw std::logic_error("unreachable vertex-weight kind");
}

Mat sample_edge_matrix(const WeightLaw& law, Index n, RngStream& rng) {
    if (n < 2) throw std::invalid_argument("edge matrix needs n >= 2");
    Mat m(n, n);
    double* data = m.data();
    const Index count = n * n;
    for (Index k = 0; k < count; ++k) data[k] = law.sample(rng);
    return m;
}

Vec sample_vertex_weights(const VertexWeightSpec& spec, Index n, RngStream& rng) {
    return spec.sample(n, rng);
}

}  // namespace markovlab
