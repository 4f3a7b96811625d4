#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace carr {

class ErrorDistribution;

/// Coefficients of a CARR(u,v) conditional-mean recursion
///   psi_t = omega + sum_i alpha_i r_{t-i} + sum_j beta_j psi_{t-j}.
///
/// The parameter vector layout used everywhere in the library is
/// theta = (omega, alpha_1..alpha_u, beta_1..beta_v).
struct CarrParams {
    double omega = 0.0;
    std::vector<double> alpha;
    std::vector<double> beta;

    std::size_t u() const { return alpha.size(); }
    std::size_t v() const { return beta.size(); }
    std::size_t size() const { return 1 + alpha.size() + beta.size(); }

    double persistence() const;
    /// True iff sum(alpha) + sum(beta) < 1.
    bool stationary() const;
    /// omega > 0 and every coefficient >= 0.
    bool valid() const;
    /// Throws std::invalid_argument when !valid().
    void validate() const;

    Eigen::VectorXd to_vector() const;
    static CarrParams from_vector(const Eigen::VectorXd& theta, std::size_t u, std::size_t v);

    /// Names in theta order: omega, alpha1.., beta1..
    std::vector<std::string> names() const;
};

/// Strictly positive range observations, optionally labelled.
class RangeSeries {
public:
    RangeSeries() = default;
    /// Throws std::domain_error naming the first non-positive entry.
    explicit RangeSeries(std::vector<double> values, std::vector<std::string> labels = {});

    std::span<const double> values() const { return values_; }
    const std::vector<std::string>& labels() const { return labels_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }
    double operator[](std::size_t t) const { return values_[t]; }
    double mean() const;

    /// First n observations (labels sliced too).
    RangeSeries head(std::size_t n) const;
    /// Observations [n, size()).
    RangeSeries tail_from(std::size_t n) const;

private:
    std::vector<double> values_;
    std::vector<std::string> labels_;
};

using GradMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Conditional means and their gradients with respect to theta.
struct PsiPath {
    std::vector<double> psi;
    /// Row t holds d psi_t / d theta.
    GradMatrix grad;

    std::size_t size() const { return psi.size(); }
};

/// 100 * (max - min) of each interval's log prices. Returns the raw values
/// without the positivity check so degenerate intervals can be inspected.
std::vector<double> interval_ranges(const std::vector<std::vector<double>>& log_prices);

/// Range series from per-interval log prices. Throws std::invalid_argument on
/// an interval with fewer than two prices and std::domain_error on a zero range.
RangeSeries compute_range(const std::vector<std::vector<double>>& log_prices);

/// Range series from daily high/low price columns: 100 * (ln high - ln low).
RangeSeries compute_range_high_low(std::span<const double> high, std::span<const double> low);

/// Runs the conditional-mean recursion over r. Every lag that reaches before
/// the first observation uses presample for both psi and r, and pre-sample
/// gradients are zero. Throws std::domain_error if any psi_t <= 0.
PsiPath psi_path(const CarrParams& params, std::span<const double> r, double presample,
                 bool with_gradient = true);

inline PsiPath psi_path(const CarrParams& params, const RangeSeries& series, double presample,
                        bool with_gradient = true) {
    return psi_path(params, series.values(), presample, with_gradient);
}

struct SimulatedPath {
    RangeSeries series;
    std::vector<double> psi;
    std::vector<double> errors;
};

/// r_t = psi_t * eps_t with eps drawn from errors using the given seed.
/// psi1 is the pre-sample level, using the same convention as psi_path, so
/// psi_path(params, series, psi1) reproduces `psi` exactly.
SimulatedPath simulate_path(const CarrParams& params, const ErrorDistribution& errors,
                            std::size_t T, double psi1, std::uint64_t seed);

RangeSeries simulate(const CarrParams& params, const ErrorDistribution& errors, std::size_t T,
                     double psi1, std::uint64_t seed);

struct UnconditionalMoments {
    double mean;
    double variance;
};

/// Unconditional mean and variance of a stationary CARR(1,1) (a missing beta
/// is treated as zero). e_eps2 is E(eps^2) for unit-mean errors.
UnconditionalMoments unconditional_moments(const CarrParams& params, double e_eps2);

}  // namespace carr
