#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "carr/carr_core.hpp"
#include "carr/estimators.hpp"

namespace carr {

struct LjungBox {
    std::size_t lag = 0;
    double q = 0.0;
    double p_value = 1.0;
};

struct DiagnosticsReport {
    std::size_t n = 0;
    double mean = 0.0;
    double median = 0.0;
    double variance = 0.0;  // divisor n
    double skewness = 0.0;
    double kurtosis = 0.0;  // excess
    double min = 0.0;
    double max = 0.0;
    /// acf[j] for j = 0..max_lag, acf[0] == 1.
    std::vector<double> acf;
    std::vector<LjungBox> ljung_box;
};

/// Sample autocorrelations with the biased 1/T covariance, lags 0..max_lag.
std::vector<double> acf(std::span<const double> x, std::size_t max_lag);

/// Q_k = T (T + 2) sum_{j<=k} rho_j^2 / (T - j) with a chi-square(k) p-value.
LjungBox ljung_box(std::span<const double> x, std::size_t lag);
LjungBox ljung_box_from_acf(const std::vector<double>& rho, std::size_t n, std::size_t lag);

/// Throws std::invalid_argument when the series is shorter than 2 * max_lag
/// and std::domain_error when it is constant.
DiagnosticsReport summarize(const RangeSeries& series, std::size_t max_lag = 30,
                            const std::vector<std::size_t>& lb_lags = {6, 12});

struct ForecastResult {
    std::size_t horizon = 0;
    std::vector<double> point;
    std::vector<double> variance;
    std::vector<double> lower;
    std::vector<double> upper;
    /// Row h-1 holds d psi_{T+h} / d theta.
    GradMatrix grad;
    /// Delta-method variance of each point forecast.
    std::vector<double> psi_variance;
    std::optional<std::vector<double>> actual;
    std::optional<double> coverage;
};

/// Point forecasts psi_{T+1..T+horizon} from the end of `series`, which must be
/// the sample the fit was computed on. Future ranges are replaced by their
/// conditional means. Variance and limits are left empty.
ForecastResult forecast(const FitResult& fit, const RangeSeries& series, std::size_t horizon);

/// mu^2 s^2 + v + v s^2 for point forecast mu, error sd s and parameter variance v.
double forecast_variance_value(double mu_psi, double sigma_eps, double sigma2_psi);

/// Fills variance and 95% limits using the fit's information matrix.
/// Throws std::domain_error when the information matrix is singular.
ForecastResult forecast_variance(const FitResult& fit, ForecastResult fc);

/// Attaches realised values for the first actual.size() horizons and sets coverage.
void attach_actuals(ForecastResult& fc, std::span<const double> actual);

struct PredictionMetrics {
    double rmse = 0.0;
    double mae = 0.0;
};

PredictionMetrics prediction_metrics(std::span<const double> actual, std::span<const double> predicted);

/// Fraction of actual values inside [lower, upper].
double coverage(std::span<const double> actual, std::span<const double> lower,
                std::span<const double> upper);

/// sup_x |F_n(x) - F(x)| for the sample against a continuous CDF.
double ks_distance(std::span<const double> sample, const std::function<double(double)>& cdf);

/// Asymptotic Kolmogorov critical value sqrt(-log(level / 2) / 2) / sqrt(n).
double ks_critical_value(std::size_t n, double level);

}  // namespace carr
