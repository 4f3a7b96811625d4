#include "carr/carr_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "carr/distributions.hpp"
#include "carr/rng.hpp"

namespace carr {

double CarrParams::persistence() const {
    return std::accumulate(alpha.begin(), alpha.end(), 0.0) +
           std::accumulate(beta.begin(), beta.end(), 0.0);
}

bool CarrParams::stationary() const { return persistence() < 1.0; }

bool CarrParams::valid() const {
    if (!(omega > 0.0) || !std::isfinite(omega)) return false;
    auto nonneg = [](double c) { return c >= 0.0 && std::isfinite(c); };
    return std::all_of(alpha.begin(), alpha.end(), nonneg) &&
           std::all_of(beta.begin(), beta.end(), nonneg);
}

void CarrParams::validate() const {
    if (alpha.empty()) throw std::invalid_argument("CARR order u must be at least 1");
    if (!valid())
        throw std::invalid_argument("CARR parameters require omega > 0 and alpha, beta >= 0");
}

Eigen::VectorXd CarrParams::to_vector() const {
    Eigen::VectorXd theta(static_cast<Eigen::Index>(size()));
    theta[0] = omega;
    for (std::size_t i = 0; i < u(); ++i) theta[1 + i] = alpha[i];
    for (std::size_t j = 0; j < v(); ++j) theta[1 + u() + j] = beta[j];
    return theta;
}

CarrParams CarrParams::from_vector(const Eigen::VectorXd& theta, std::size_t u, std::size_t v) {
    if (static_cast<std::size_t>(theta.size()) != 1 + u + v)
        throw std::invalid_argument("parameter vector length does not match order");
    CarrParams p;
    p.omega = theta[0];
    p.alpha.assign(theta.data() + 1, theta.data() + 1 + u);
    p.beta.assign(theta.data() + 1 + u, theta.data() + 1 + u + v);
    return p;
}

std::vector<std::string> CarrParams::names() const {
    std::vector<std::string> out{"omega"};
    for (std::size_t i = 0; i < u(); ++i) out.push_back("alpha" + std::to_string(i + 1));
    for (std::size_t j = 0; j < v(); ++j) out.push_back("beta" + std::to_string(j + 1));
    return out;
}

RangeSeries::RangeSeries(std::vector<double> values, std::vector<std::string> labels)
    : values_(std::move(values)), labels_(std::move(labels)) {
    if (!labels_.empty() && labels_.size() != values_.size())
        throw std::invalid_argument("range labels must align with values");
    for (std::size_t t = 0; t < values_.size(); ++t) {
        if (!(values_[t] > 0.0) || !std::isfinite(values_[t]))
            throw std::domain_error("range must be positive and finite (observation " +
                                    std::to_string(t + 1) + " is " + std::to_string(values_[t]) +
                                    ")");
    }
}

double RangeSeries::mean() const {
    if (values_.empty()) throw std::domain_error("mean of an empty range series");
    return std::accumulate(values_.begin(), values_.end(), 0.0) /
           static_cast<double>(values_.size());
}

RangeSeries RangeSeries::head(std::size_t n) const {
    n = std::min(n, values_.size());
    std::vector<std::string> labels;
    if (!labels_.empty()) labels.assign(labels_.begin(), labels_.begin() + n);
    return RangeSeries({values_.begin(), values_.begin() + n}, std::move(labels));
}

RangeSeries RangeSeries::tail_from(std::size_t n) const {
    n = std::min(n, values_.size());
    std::vector<std::string> labels;
    if (!labels_.empty()) labels.assign(labels_.begin() + n, labels_.end());
    return RangeSeries({values_.begin() + n, values_.end()}, std::move(labels));
}

std::vector<double> interval_ranges(const std::vector<std::vector<double>>& log_prices) {
    std::vector<double> out;
    out.reserve(log_prices.size());
    for (std::size_t t = 0; t < log_prices.size(); ++t) {
        const auto& interval = log_prices[t];
        if (interval.size() < 2)
            throw std::invalid_argument("interval " + std::to_string(t + 1) +
                                        " needs at least two prices");
        const auto [lo, hi] = std::minmax_element(interval.begin(), interval.end());
        out.push_back(100.0 * (*hi - *lo));
    }
    return out;
}

RangeSeries compute_range(const std::vector<std::vector<double>>& log_prices) {
    return RangeSeries(interval_ranges(log_prices));
}

RangeSeries compute_range_high_low(std::span<const double> high, std::span<const double> low) {
    if (high.size() != low.size()) throw std::invalid_argument("high/low length mismatch");
    std::vector<double> out(high.size());
    for (std::size_t t = 0; t < high.size(); ++t) {
        if (!(low[t] > 0.0) || !(high[t] > 0.0))
            throw std::domain_error("prices must be positive (row " + std::to_string(t + 1) + ")");
        if (high[t] < low[t])
            throw std::domain_error("high below low (row " + std::to_string(t + 1) + ")");
        out[t] = 100.0 * (std::log(high[t]) - std::log(low[t]));
    }
    return RangeSeries(std::move(out));
}

namespace {

// One step of the recursion. Shared by psi_path and simulate_path so both
// produce identical floating-point results.
inline double next_psi(const CarrParams& p, std::span<const double> r,
                       const std::vector<double>& psi, std::size_t t, double presample) {
    double value = p.omega;
    for (std::size_t i = 1; i <= p.u(); ++i) value += p.alpha[i - 1] * (t >= i ? r[t - i] : presample);
    for (std::size_t j = 1; j <= p.v(); ++j)
        value += p.beta[j - 1] * (t >= j ? psi[t - j] : presample);
    return value;
}

}  // namespace

PsiPath psi_path(const CarrParams& params, std::span<const double> r, double presample,
                 bool with_gradient) {
    if (!(presample > 0.0)) throw std::invalid_argument("pre-sample psi must be positive");
    if (params.alpha.empty()) throw std::invalid_argument("CARR order u must be at least 1");
    if (!(params.omega > 0.0)) throw std::domain_error("omega must be positive");

    const std::size_t T = r.size();
    const std::size_t u = params.u();
    const std::size_t v = params.v();
    const std::size_t k = params.size();

    PsiPath out;
    out.psi.resize(T);
    if (with_gradient) out.grad.setZero(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(k));

    for (std::size_t t = 0; t < T; ++t) {
        const double value = next_psi(params, r, out.psi, t, presample);
        if (!(value > 0.0) || !std::isfinite(value))
            throw std::domain_error("conditional mean is not positive at t=" + std::to_string(t + 1));
        out.psi[t] = value;
        if (!with_gradient) continue;

        auto row = out.grad.row(static_cast<Eigen::Index>(t));
        row[0] = 1.0;
        for (std::size_t i = 1; i <= u; ++i) row[static_cast<Eigen::Index>(i)] = t >= i ? r[t - i] : presample;
        for (std::size_t j = 1; j <= v; ++j)
            row[static_cast<Eigen::Index>(u + j)] = t >= j ? out.psi[t - j] : presample;
        for (std::size_t j = 1; j <= v && j <= t; ++j)
            row += params.beta[j - 1] * out.grad.row(static_cast<Eigen::Index>(t - j));
    }
    return out;
}

SimulatedPath simulate_path(const CarrParams& params, const ErrorDistribution& errors,
                            std::size_t T, double psi1, std::uint64_t seed) {
    params.validate();
    if (!(psi1 > 0.0)) throw std::invalid_argument("initial psi must be positive");
    if (T == 0) throw std::invalid_argument("simulation length must be positive");

    SimulatedPath out;
    out.errors = errors.sample(T, seed);
    out.psi.resize(T);
    std::vector<double> r(T);
    for (std::size_t t = 0; t < T; ++t) {
        if (!(out.errors[t] > 0.0))
            throw std::domain_error("error sampler produced a non-positive draw");
        out.psi[t] = next_psi(params, r, out.psi, t, psi1);
        r[t] = out.psi[t] * out.errors[t];
    }
    out.series = RangeSeries(std::move(r));
    return out;
}

RangeSeries simulate(const CarrParams& params, const ErrorDistribution& errors, std::size_t T,
                     double psi1, std::uint64_t seed) {
    return simulate_path(params, errors, T, psi1, seed).series;
}

UnconditionalMoments unconditional_moments(const CarrParams& params, double e_eps2) {
    params.validate();
    if (params.u() != 1 || params.v() > 1)
        throw std::invalid_argument("unconditional moments are implemented for CARR(1,1)");
    const double a = params.alpha[0];
    const double b = params.v() == 1 ? params.beta[0] : 0.0;
    if (!(a + b < 1.0)) throw std::domain_error("parameters are not stationary");
    const double denom = 1.0 - a * a * e_eps2 - b * b - 2.0 * a * b;
    if (!(denom > 0.0)) throw std::domain_error("unconditional variance does not exist");
    const double mean = params.omega / (1.0 - a - b);
    const double variance = (e_eps2 - 1.0) * mean * mean * (1.0 - b * b - 2.0 * a * b) / denom;
    return {mean, variance};
}

}  // namespace carr
