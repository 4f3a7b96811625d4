#include "carr/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <boost/math/special_functions/gamma.hpp>

namespace carr {

std::vector<double> acf(std::span<const double> x, std::size_t max_lag) {
    const std::size_t n = x.size();
    if (n < 2) throw std::invalid_argument("autocorrelations need at least two observations");
    if (max_lag >= n) throw std::invalid_argument("ACF lag must be below the series length");
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    std::vector<double> c(max_lag + 1, 0.0);
    for (std::size_t j = 0; j <= max_lag; ++j) {
        double s = 0.0;
        for (std::size_t t = j; t < n; ++t) s += (x[t] - mean) * (x[t - j] - mean);
        c[j] = s / static_cast<double>(n);
    }
    if (!(c[0] > 0.0)) throw std::domain_error("autocorrelations of a constant series are undefined");
    std::vector<double> rho(max_lag + 1);
    for (std::size_t j = 0; j <= max_lag; ++j) rho[j] = c[j] / c[0];
    rho[0] = 1.0;
    return rho;
}

LjungBox ljung_box_from_acf(const std::vector<double>& rho, std::size_t n, std::size_t lag) {
    if (lag == 0 || lag >= rho.size()) throw std::invalid_argument("Ljung-Box lag out of range");
    const double T = static_cast<double>(n);
    double s = 0.0;
    for (std::size_t j = 1; j <= lag; ++j) s += rho[j] * rho[j] / (T - static_cast<double>(j));
    LjungBox lb;
    lb.lag = lag;
    lb.q = T * (T + 2.0) * s;
    lb.p_value = boost::math::gamma_q(0.5 * static_cast<double>(lag), 0.5 * lb.q);
    return lb;
}

LjungBox ljung_box(std::span<const double> x, std::size_t lag) {
    return ljung_box_from_acf(acf(x, lag), x.size(), lag);
}

DiagnosticsReport summarize(const RangeSeries& series, std::size_t max_lag,
                            const std::vector<std::size_t>& lb_lags) {
    const auto x = series.values();
    std::size_t need = 2 * max_lag;
    for (std::size_t k : lb_lags) need = std::max(need, 2 * k);
    if (x.size() < std::max<std::size_t>(need, 4))
        throw std::invalid_argument("series of length " + std::to_string(x.size()) +
                                    " is too short for lag " + std::to_string(need / 2));

    DiagnosticsReport rep;
    rep.n = x.size();
    const ErrorMoments m = sample_moments(x);
    rep.mean = m.mu;
    rep.variance = m.sigma * m.sigma;
    rep.skewness = m.gamma;
    rep.kurtosis = m.kappa;

    std::vector<double> sorted(x.begin(), x.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    rep.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    rep.min = sorted.front();
    rep.max = sorted.back();

    std::size_t lags = max_lag;
    for (std::size_t k : lb_lags) lags = std::max(lags, k);
    const auto rho = acf(x, lags);
    rep.acf.assign(rho.begin(), rho.begin() + static_cast<std::ptrdiff_t>(max_lag + 1));
    for (std::size_t k : lb_lags) rep.ljung_box.push_back(ljung_box_from_acf(rho, n, k));
    return rep;
}

ForecastResult forecast(const FitResult& fit, const RangeSeries& series, std::size_t horizon) {
    if (horizon < 1) throw std::invalid_argument("forecast horizon must be at least 1");
    const CarrParams& par = fit.params;
    const auto r = series.values();
    const PsiPath path = psi_path(par, r, fit.presample, true);
    const std::size_t T = r.size();
    const std::size_t u = par.u(), v = par.v();
    const Eigen::Index k = static_cast<Eigen::Index>(par.size());
    const double c = fit.presample;

    ForecastResult fc;
    fc.horizon = horizon;
    fc.point.resize(horizon);
    fc.grad = GradMatrix::Zero(static_cast<Eigen::Index>(horizon), k);

    // index s runs over the extended sample; s >= T are forecasts
    auto psi_at = [&](std::ptrdiff_t s) -> double {
        if (s < 0) return c;
        if (s < static_cast<std::ptrdiff_t>(T)) return path.psi[static_cast<std::size_t>(s)];
        return fc.point[static_cast<std::size_t>(s) - T];
    };
    auto r_at = [&](std::ptrdiff_t s) -> double {
        if (s < 0) return c;
        if (s < static_cast<std::ptrdiff_t>(T)) return r[static_cast<std::size_t>(s)];
        return fc.point[static_cast<std::size_t>(s) - T];
    };
    auto dpsi_at = [&](std::ptrdiff_t s) -> Eigen::RowVectorXd {
        if (s < 0) return Eigen::RowVectorXd::Zero(k);
        if (s < static_cast<std::ptrdiff_t>(T)) return path.grad.row(s);
        return fc.grad.row(s - static_cast<std::ptrdiff_t>(T));
    };

    for (std::size_t h = 0; h < horizon; ++h) {
        const auto s = static_cast<std::ptrdiff_t>(T + h);
        double psi = par.omega;
        Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(k);
        g[0] = 1.0;
        for (std::size_t i = 0; i < u; ++i) {
            const std::ptrdiff_t lag = s - 1 - static_cast<std::ptrdiff_t>(i);
            psi += par.alpha[i] * r_at(lag);
            g[static_cast<Eigen::Index>(1 + i)] += r_at(lag);
            if (lag >= static_cast<std::ptrdiff_t>(T)) g += par.alpha[i] * dpsi_at(lag);
        }
        for (std::size_t j = 0; j < v; ++j) {
            const std::ptrdiff_t lag = s - 1 - static_cast<std::ptrdiff_t>(j);
            psi += par.beta[j] * psi_at(lag);
            g[static_cast<Eigen::Index>(1 + u + j)] += psi_at(lag);
            g += par.beta[j] * dpsi_at(lag);
        }
        fc.point[h] = psi;
        fc.grad.row(static_cast<Eigen::Index>(h)) = g;
    }
    return fc;
}

double forecast_variance_value(double mu_psi, double sigma_eps, double sigma2_psi) {
    const double s2 = sigma_eps * sigma_eps;
    return mu_psi * mu_psi * s2 + sigma2_psi + sigma2_psi * s2;
}

ForecastResult forecast_variance(const FitResult& fit, ForecastResult fc) {
    const Eigen::MatrixXd& info = fit.info_matrix;
    if (info.rows() != fc.grad.cols() || info.cols() != fc.grad.cols())
        throw std::invalid_argument("information matrix does not match the forecast gradient");
    if (!info.allFinite()) throw std::domain_error("information matrix is not finite");
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(info);
    if (!lu.isInvertible()) throw std::domain_error("information matrix is singular");
    const Eigen::MatrixXd cov = lu.inverse();

    const double s = fit.error_moments.sigma;
    fc.variance.resize(fc.horizon);
    fc.psi_variance.resize(fc.horizon);
    fc.lower.resize(fc.horizon);
    fc.upper.resize(fc.horizon);
    for (std::size_t h = 0; h < fc.horizon; ++h) {
        const Eigen::RowVectorXd g = fc.grad.row(static_cast<Eigen::Index>(h));
        const double vpsi = std::max(0.0, (g * cov * g.transpose())(0, 0));
        fc.psi_variance[h] = vpsi;
        fc.variance[h] = forecast_variance_value(fc.point[h], s, vpsi);
        const double half = 1.96 * std::sqrt(fc.variance[h]);
        fc.lower[h] = std::max(0.0, fc.point[h] - half);
        fc.upper[h] = fc.point[h] + half;
    }
    if (fc.actual) fc.coverage = coverage(*fc.actual, fc.lower, fc.upper);
    return fc;
}

void attach_actuals(ForecastResult& fc, std::span<const double> actual) {
    if (actual.size() > fc.horizon) throw std::invalid_argument("more actual values than forecast horizons");
    fc.actual = std::vector<double>(actual.begin(), actual.end());
    fc.coverage.reset();
    if (fc.lower.size() == fc.horizon && !actual.empty())
        fc.coverage = coverage(actual, std::span<const double>(fc.lower).first(actual.size()),
                               std::span<const double>(fc.upper).first(actual.size()));
}

PredictionMetrics prediction_metrics(std::span<const double> actual, std::span<const double> predicted) {
    if (actual.size() != predicted.size())
        throw std::invalid_argument("actual and predicted lengths differ (" + std::to_string(actual.size()) +
                                    " vs " + std::to_string(predicted.size()) + ")");
    if (actual.empty()) throw std::invalid_argument("prediction metrics need at least one value");
    double se = 0.0, ae = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const double e = actual[i] - predicted[i];
        se += e * e;
        ae += std::abs(e);
    }
    const double n = static_cast<double>(actual.size());
    return {std::sqrt(se / n), ae / n};
}

double coverage(std::span<const double> actual, std::span<const double> lower,
                std::span<const double> upper) {
    if (actual.size() != lower.size() || actual.size() != upper.size())
        throw std::invalid_argument("coverage inputs differ in length");
    if (actual.empty()) throw std::invalid_argument("coverage needs at least one value");
    std::size_t inside = 0;
    for (std::size_t i = 0; i < actual.size(); ++i)
        if (actual[i] >= lower[i] && actual[i] <= upper[i]) ++inside;
    return static_cast<double>(inside) / static_cast<double>(actual.size());
}

double ks_distance(std::span<const double> sample, const std::function<double(double)>& cdf) {
    if (sample.empty()) throw std::invalid_argument("KS distance of an empty sample");
    std::vector<double> x(sample.begin(), sample.end());
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = cdf(x[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

double ks_critical_value(std::size_t n, double level) {
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("KS level must lie in (0, 1)");
    if (n == 0) throw std::invalid_argument("KS critical value needs n > 0");
    return std::sqrt(-0.5 * std::log(0.5 * level)) / std::sqrt(static_cast<double>(n));
}

}  // namespace carr
