#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "carr/rng.hpp"

namespace carr {

/// Generalized beta of the second kind: shapes (a, p, q), scale b.
struct Gb2Params {
    double a = 1.0;
    double b = 1.0;
    double p = 1.0;
    double q = 1.0;

    /// a != 0 and b, p, q > 0.
    bool valid() const;
    void validate() const;
    /// E[X^h] is finite iff p + h/a > 0 and q - h/a > 0 (i.e. -ap < h < aq for a > 0).
    bool has_moment(double h) const;
    /// E[X^h] = b^h B(p + h/a, q - h/a) / B(p, q). Throws std::domain_error when infinite.
    double moment(double h) const;
};

/// Location, scale and shape summary of the multiplicative error.
struct ErrorMoments {
    double mu = 1.0;
    double sigma = 1.0;
    double gamma = 0.0;  // skewness
    double kappa = 0.0;  // excess kurtosis

    /// kappa + 2 - gamma^2, the denominator of the quadratic estimating-function weights.
    double weight_denominator() const { return kappa + 2.0 - gamma * gamma; }
};

double log_beta(double x, double y);

double gb2_logpdf(double x, const Gb2Params& params);
double gb2_cdf(double x, const Gb2Params& params);
double gb2_mean(const Gb2Params& params);

/// GB2 with scale chosen so that the mean is one.
Gb2Params standardize_gb2(double a, double p, double q);

/// Draws via b * (G_p / G_q)^(1/a) with independent unit-scale gamma variates,
/// which is the Beta-ratio transform b * (B / (1 - B))^(1/a).
std::vector<double> gb2_sample(const Gb2Params& params, std::size_t n, std::uint64_t seed);

/// exp(sigma Z) / exp(sigma^2 / 2), Z standard normal: unit mean.
std::vector<double> lognormal_standardized_sample(double sigma, std::size_t n, std::uint64_t seed);

/// Mean, standard deviation (divisor n), skewness m3/m2^1.5 and excess kurtosis m4/m2^2 - 3.
ErrorMoments sample_moments(std::span<const double> x);

struct LognormalError {
    double sigma = 0.5;
};

struct ConstantError {
    double value = 1.0;
};

/// Sampler handle for the multiplicative error in simulation.
class ErrorDistribution {
public:
    using Spec = std::variant<Gb2Params, LognormalError, ConstantError>;

    explicit ErrorDistribution(Spec spec);

    static ErrorDistribution standardized_gb2(double a, double p, double q);
    static ErrorDistribution standardized_lognormal(double sigma);
    static ErrorDistribution constant(double value = 1.0);

    const Spec& spec() const { return spec_; }
    std::vector<double> sample(std::size_t n, std::uint64_t seed) const;
    double draw(Rng& rng) const;

    /// E(eps) and E(eps^2) when finite.
    double mean() const;
    std::optional<double> second_moment() const;
    std::string describe() const;

private:
    Spec spec_;
};

}  // namespace carr
