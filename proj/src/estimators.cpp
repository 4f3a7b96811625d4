#include "carr/estimators.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/special_functions/digamma.hpp>

#include "carr/kernels.hpp"
#include "carr/optim.hpp"

namespace carr {

std::string to_string(Method m) {
    switch (m) {
        case Method::ML: return "ml";
        case Method::LEF: return "lef";
        case Method::CEF: return "cef";
    }
    return "unknown";
}

Method method_from_string(const std::string& name) {
    std::string s(name);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "ml") return Method::ML;
    if (s == "lef") return Method::LEF;
    if (s == "cef") return Method::CEF;
    throw std::invalid_argument("unknown estimation method '" + name + "' (expected ml, lef or cef)");
}

void FitConfig::validate() const {
    if (u < 1) throw std::invalid_argument("CARR order u must be at least 1");
    if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");
    if (!(equation_tolerance > 0.0)) throw std::invalid_argument("equation tolerance must be positive");
    if (max_iterations == 0) throw std::invalid_argument("max_iterations must be positive");
    if (presample && !(*presample > 0.0)) throw std::invalid_argument("pre-sample psi must be positive");
    if (!(bounds.max_persistence > 0.0 && bounds.max_persistence <= 1.0))
        throw std::invalid_argument("max persistence must lie in (0, 1]");
}

namespace {

constexpr double kDegenerateSigma = 1e-10;

// Maps an unconstrained vector z onto theta. In the constrained case
// omega = exp(z0) and the coefficients are a scaled softmax, so every
// coefficient is positive and their sum stays below max_persistence.
class CoefficientMap {
public:
    CoefficientMap(std::size_t u, std::size_t v, const ParameterBounds& b)
        : k_(1 + u + v), constrained_(b.nonnegative), cap_(b.max_persistence) {}

    std::size_t size() const { return k_; }

    Eigen::VectorXd theta(const Eigen::VectorXd& z) const {
        Eigen::VectorXd th(static_cast<Eigen::Index>(k_));
        th[0] = std::exp(z[0]);
        const Eigen::Index nc = static_cast<Eigen::Index>(k_) - 1;
        if (!constrained_) {
            th.tail(nc) = z.tail(nc);
            return th;
        }
        const double m = std::max(0.0, z.tail(nc).maxCoeff());
        double denom = std::exp(-m);
        for (Eigen::Index i = 1; i <= nc; ++i) denom += std::exp(z[i] - m);
        for (Eigen::Index i = 1; i <= nc; ++i) th[i] = cap_ * std::exp(z[i] - m) / denom;
        return th;
    }

    Eigen::VectorXd z_of(const Eigen::VectorXd& theta) const {
        Eigen::VectorXd z(static_cast<Eigen::Index>(k_));
        z[0] = std::log(std::max(theta[0], 1e-300));
        const Eigen::Index nc = static_cast<Eigen::Index>(k_) - 1;
        if (!constrained_) {
            z.tail(nc) = theta.tail(nc);
            return z;
        }
        Eigen::VectorXd c = theta.tail(nc).cwiseMax(1e-8);
        double total = c.sum();
        if (total > cap_ * (1.0 - 1e-6)) {
            c *= cap_ * (1.0 - 1e-6) / total;
            total = c.sum();
        }
        const double rest = cap_ - total;
        for (Eigen::Index i = 0; i < nc; ++i) z[1 + i] = std::log(c[i] / rest);
        return z;
    }

    // d theta / d z
    Eigen::MatrixXd jacobian(const Eigen::VectorXd& z) const {
        const Eigen::Index k = static_cast<Eigen::Index>(k_);
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(k, k);
        const Eigen::VectorXd th = theta(z);
        J(0, 0) = th[0];
        if (!constrained_) {
            J.bottomRightCorner(k - 1, k - 1).setIdentity();
            return J;
        }
        for (Eigen::Index i = 1; i < k; ++i)
            for (Eigen::Index j = 1; j < k; ++j)
                J(i, j) = (i == j ? th[i] : 0.0) - th[i] * th[j] / cap_;
        return J;
    }

private:
    std::size_t k_;
    bool constrained_;
    double cap_;
};

std::optional<PsiPath> try_psi_path(const CarrParams& params, std::span<const double> r,
                                    double presample, bool with_gradient = true) {
    try {
        return psi_path(params, r, presample, with_gradient);
    } catch (const std::domain_error&) {
        return std::nullopt;
    }
}

double safe_mean(std::span<const double> x) {
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Moments of r_t / psi_t with mu pinned at one. Returns nullopt when the
// residuals have no dispersion.
std::optional<ErrorMoments> residual_moments(const std::vector<double>& res) {
    const double mean = safe_mean(res);
    double m2 = 0.0;
    for (double e : res) m2 += (e - mean) * (e - mean);
    if (!(std::sqrt(m2 / static_cast<double>(res.size())) > kDegenerateSigma * std::abs(mean)))
        return std::nullopt;
    ErrorMoments m = sample_moments(res);
    m.mu = 1.0;
    return m;
}

void fill_fit(FitResult& out, std::span<const double> r, const CarrParams& params, double presample) {
    out.params = params;
    out.presample = presample;
    out.psi_hat = psi_path(params, r, presample);
    out.residuals = residuals(r, out.psi_hat);
    double sq = 0.0, ab = 0.0;
    for (std::size_t t = 0; t < r.size(); ++t) {
        const double e = r[t] - out.psi_hat.psi[t];
        sq += e * e;
        ab += std::abs(e);
    }
    out.rmspe = std::sqrt(sq / static_cast<double>(r.size()));
    out.mape = ab / static_cast<double>(r.size());
}

void add_bound_warnings(FitResult& out, const ParameterBounds& b) {
    if (!b.nonnegative) return;
    const auto names = out.params.names();
    const Eigen::VectorXd th = out.params.to_vector();
    for (Eigen::Index i = 1; i < th.size(); ++i)
        if (th[i] < 1e-6)
            out.convergence.warnings.push_back(names[static_cast<std::size_t>(i)] +
                                               " is at its lower bound 0");
    if (out.params.persistence() > b.max_persistence - 1e-6)
        out.convergence.warnings.push_back("persistence is at its upper bound");
}

void check_inputs(const RangeSeries& series, const FitConfig& config) {
    config.validate();
    const std::size_t need = std::max(config.u, config.v) + 1;
    if (series.size() < std::max<std::size_t>(need, 4))
        throw std::invalid_argument("range series is too short for a CARR(" +
                                    std::to_string(config.u) + "," + std::to_string(config.v) +
                                    ") fit");
}

// Scalar potential whose theta-gradient is the estimating function at fixed
// moments: g = sum_t phi(r_t, psi_t) dpsi_t with phi = d q / d psi.
double ef_potential(std::span<const double> r, const PsiPath& psi, const ErrorMoments& m,
                    Method method) {
    const double mu = m.mu, s = m.sigma, s2 = s * s;
    const double quad =
        method == Method::CEF ? (m.gamma * s * mu - 2.0 * s2) / (s2 * s2 * m.weight_denominator()) : 0.0;
    const double lin_r = 2.0 * mu + m.gamma * s;
    const double log_coef = mu * mu - s2 + m.gamma * s * mu;
    double q = 0.0;
    for (std::size_t t = 0; t < r.size(); ++t) {
        const double p = psi.psi[t];
        const double lp = std::log(p);
        q += mu * r[t] / (s2 * p) + mu * mu / s2 * lp;
        if (quad != 0.0) q += quad * (-r[t] * r[t] / (2.0 * p * p) + lin_r * r[t] / p + log_coef * lp);
    }
    return q;
}

struct RootSolve {
    Eigen::VectorXd z;
    double norm = 0.0;
    std::size_t iterations = 0;
};

// Solves g(theta) = 0 with fixed nuisance moments, starting from z: a BFGS
// descent on the potential followed by Levenberg-Marquardt polishing of g.
RootSolve solve_equation(std::span<const double> r, double presample, const CoefficientMap& map,
                         std::size_t u, std::size_t v, const ErrorMoments& m, Method method,
                         const Eigen::VectorXd& z0) {
    const double scale = 1.0 / static_cast<double>(r.size());
    auto equation = [&](const PsiPath& path) {
        return method == Method::LEF ? lef_equation(r, path, m) : cef_equation(r, path, m);
    };
    const optim::Objective potential =
        [&](const Eigen::VectorXd& z) -> std::optional<optim::ValueGrad> {
        const Eigen::VectorXd th = map.theta(z);
        if (!th.allFinite()) return std::nullopt;
        const auto path = try_psi_path(CarrParams::from_vector(th, u, v), r, presample);
        if (!path) return std::nullopt;
        const double value = ef_potential(r, *path, m, method);
        if (!std::isfinite(value)) return std::nullopt;
        const Eigen::VectorXd gz = map.jacobian(z).transpose() * equation(*path);
        return optim::ValueGrad{value * scale, gz * scale};
    };
    optim::BfgsOptions bopts;
    bopts.grad_tolerance = 1e-10;

    const optim::Residual residual = [&](const Eigen::VectorXd& z) -> std::optional<Eigen::VectorXd> {
        const Eigen::VectorXd th = map.theta(z);
        if (!th.allFinite()) return std::nullopt;
        const auto path = try_psi_path(CarrParams::from_vector(th, u, v), r, presample);
        if (!path) return std::nullopt;
        return equation(*path);
    };
    if (method == Method::CEF) {
        // The CEF potential is unbounded below as psi -> 0 when gamma > 2 sigma,
        // so first look for the root locally from the warm start.
        const auto local = optim::solve_least_squares(residual, z0);
        if (local.norm < 1e-8) return {local.x, local.norm, local.iterations};
        const auto descent = optim::minimize_bfgs(potential, z0, bopts);
        const auto polish = optim::solve_least_squares(residual, descent.x);
        if (polish.norm < local.norm)
            return {polish.x, polish.norm, local.iterations + descent.iterations + polish.iterations};
        return {local.x, local.norm, local.iterations};
    }
    const auto descent = optim::minimize_bfgs(potential, z0, bopts);
    const auto polish = optim::solve_least_squares(residual, descent.x);
    return {polish.x, polish.norm, descent.iterations + polish.iterations};
}

}  // namespace

CarrParams default_start(const RangeSeries& series, std::size_t u, std::size_t v) {
    CarrParams p;
    p.omega = 0.1 * series.mean();
    p.alpha.assign(u, 0.1 / static_cast<double>(u));
    p.beta.assign(v, v > 0 ? 0.7 / static_cast<double>(v) : 0.0);
    return p;
}

std::vector<double> residuals(std::span<const double> r, const PsiPath& psi) {
    if (r.size() != psi.size()) throw std::invalid_argument("residuals: length mismatch");
    std::vector<double> out(r.size());
    for (std::size_t t = 0; t < r.size(); ++t) out[t] = r[t] / psi.psi[t];
    return out;
}

Eigen::VectorXd lef_equation(std::span<const double> r, const PsiPath& psi, const ErrorMoments& m) {
    if (r.size() != psi.size()) throw std::invalid_argument("lef_equation: length mismatch");
    const double s2 = m.sigma * m.sigma;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(psi.grad.cols());
    for (std::size_t t = 0; t < r.size(); ++t) {
        const double p = psi.psi[t];
        const double c = -m.mu / (p * p * s2) * (r[t] - p * m.mu);
        g += c * psi.grad.row(static_cast<Eigen::Index>(t)).transpose();
    }
    return g;
}

std::pair<std::vector<double>, std::vector<double>> martingale_differences(
    std::span<const double> r, const PsiPath& psi, const ErrorMoments& m) {
    std::vector<double> h1(r.size()), h2(r.size());
    for (std::size_t t = 0; t < r.size(); ++t) {
        const double p = psi.psi[t];
        h1[t] = r[t] - p * m.mu;
        h2[t] = h1[t] * h1[t] - p * p * m.sigma * m.sigma - m.gamma * p * m.sigma * h1[t];
    }
    return {std::move(h1), std::move(h2)};
}

Eigen::VectorXd cef_quadratic_weight(double psi, const Eigen::Ref<const Eigen::RowVectorXd>& dpsi,
                                     const ErrorMoments& m) {
    const double s = m.sigma;
    const double denom = std::pow(psi, 4) * std::pow(s, 4) * m.weight_denominator();
    return ((m.gamma * s * m.mu * psi - 2.0 * s * s * psi) / denom) * dpsi.transpose();
}

Eigen::VectorXd cef_equation(std::span<const double> r, const PsiPath& psi, const ErrorMoments& m) {
    if (r.size() != psi.size()) throw std::invalid_argument("cef_equation: length mismatch");
    const double d = m.weight_denominator();
    if (!(d >= kWeightDenominatorFloor))
        throw std::domain_error("kappa + 2 - gamma^2 is below the weight floor");
    const double s = m.sigma;
    const double s2 = s * s;
    const double s4 = s2 * s2;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(psi.grad.cols());
    for (std::size_t t = 0; t < r.size(); ++t) {
        const double p = psi.psi[t];
        const double p2 = p * p;
        const double h1 = r[t] - p * m.mu;
        const double h2 = h1 * h1 - p2 * s2 - m.gamma * p * s * h1;
        const double a1 = -m.mu / (p2 * s2);
        const double a2 = (m.gamma * s * m.mu * p - 2.0 * s2 * p) / (p2 * p2 * s4 * d);
        g += (a1 * h1 + a2 * h2) * psi.grad.row(static_cast<Eigen::Index>(t)).transpose();
    }
    return g;
}

Eigen::MatrixXd info_matrix_lef(const PsiPath& psi, const ErrorMoments& m) {
    const double c = m.mu * m.mu / (m.sigma * m.sigma);
    std::vector<double> w(psi.size());
    for (std::size_t t = 0; t < w.size(); ++t) w[t] = c / (psi.psi[t] * psi.psi[t]);
    return kernels::weighted_outer_sum(w, psi.grad);
}

Eigen::MatrixXd info_gain_cef(const PsiPath& psi, const ErrorMoments& m) {
    const double d = m.weight_denominator();
    if (!(d >= kWeightDenominatorFloor))
        throw std::domain_error("kappa + 2 - gamma^2 is below the weight floor");
    const double num = m.gamma * m.mu - 2.0 * m.sigma;
    const double c = num * num / (m.sigma * m.sigma * d);
    std::vector<double> w(psi.size());
    for (std::size_t t = 0; t < w.size(); ++t) w[t] = c / (psi.psi[t] * psi.psi[t]);
    return kernels::weighted_outer_sum(w, psi.grad);
}

Eigen::MatrixXd info_matrix_cef(const PsiPath& psi, const ErrorMoments& m) {
    return info_matrix_lef(psi, m) + info_gain_cef(psi, m);
}

double info_gain_min_eigenvalue(const FitResult& fit) {
    const Eigen::MatrixXd lef = info_matrix_lef(fit.psi_hat, fit.error_moments);
    const Eigen::MatrixXd cef = info_matrix_cef(fit.psi_hat, fit.error_moments);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cef - lef, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

Eigen::VectorXd standard_errors(const Eigen::MatrixXd& info) {
    const Eigen::Index k = info.rows();
    Eigen::VectorXd se = Eigen::VectorXd::Constant(k, std::numeric_limits<double>::quiet_NaN());
    if (!info.allFinite()) return se;
    const Eigen::LLT<Eigen::MatrixXd> llt(info);
    if (llt.info() != Eigen::Success) return se;
    const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(k, k));
    for (Eigen::Index i = 0; i < k; ++i) se[i] = cov(i, i) > 0.0 ? std::sqrt(cov(i, i)) : se[i];
    return se;
}

FitResult fit_lef(const RangeSeries& series, const FitConfig& config) {
    check_inputs(series, config);
    const auto r = series.values();
    const double presample = config.presample.value_or(series.mean());
    const CoefficientMap map(config.u, config.v, config.bounds);
    Eigen::VectorXd z = map.z_of(default_start(series, config.u, config.v).to_vector());

    FitResult out;
    out.method = Method::LEF;
    ErrorMoments m{1.0, 1.0, 0.0, 0.0};
    Eigen::VectorXd theta_prev;
    bool degenerate = false;

    for (std::size_t it = 0; it < config.max_iterations; ++it) {
        const auto sol = solve_equation(r, presample, map, config.u, config.v, m, Method::LEF, z);
        z = sol.z;
        out.convergence.inner_iterations += sol.iterations;
        out.convergence.outer_iterations = it + 1;
        const Eigen::VectorXd theta = map.theta(z);
        fill_fit(out, r, CarrParams::from_vector(theta, config.u, config.v), presample);

        const auto rm = residual_moments(out.residuals);
        degenerate = !rm;
        if (rm) m = *rm;
        if (degenerate || (it > 0 && (theta - theta_prev).lpNorm<Eigen::Infinity>() < config.tolerance)) {
            out.convergence.converged = true;
            break;
        }
        theta_prev = theta;
    }

    if (degenerate) {
        out.convergence.warnings.push_back("residuals have no dispersion; standard errors undefined");
        out.error_moments = ErrorMoments{1.0, 0.0, 0.0, 0.0};
        out.convergence.equation_norm =
            lef_equation(r, out.psi_hat, ErrorMoments{1.0, 1.0, 0.0, 0.0}).lpNorm<Eigen::Infinity>();
        const Eigen::Index k = static_cast<Eigen::Index>(map.size());
        out.info_matrix = Eigen::MatrixXd::Constant(k, k, std::numeric_limits<double>::quiet_NaN());
        out.std_errors = Eigen::VectorXd::Constant(k, std::numeric_limits<double>::quiet_NaN());
    } else {
        out.error_moments = m;
        out.convergence.equation_norm = lef_equation(r, out.psi_hat, m).lpNorm<Eigen::Infinity>();
        out.info_matrix = info_matrix_lef(out.psi_hat, m);
        out.std_errors = standard_errors(out.info_matrix);
    }
    add_bound_warnings(out, config.bounds);

    if (!out.convergence.converged)
        throw FitError("LEF moment iteration did not converge", std::move(out));
    if (!(out.convergence.equation_norm < config.equation_tolerance)) {
        out.convergence.converged = false;
        throw FitError("LEF equation not solved (max |g| = " +
                           std::to_string(out.convergence.equation_norm) + ")",
                       std::move(out));
    }
    return out;
}

FitResult fit_cef(const RangeSeries& series, const FitConfig& config) {
    check_inputs(series, config);
    const auto r = series.values();

    FitConfig lef_config = config;
    lef_config.method = Method::LEF;
    FitResult out;
    try {
        out = fit_lef(series, lef_config);
    } catch (const FitError& e) {
        FitResult best = e.best();
        best.method = Method::CEF;
        throw FitError(std::string("CEF initial LEF fit failed: ") + e.what(), std::move(best));
    }
    out.method = Method::CEF;
    if (!(out.error_moments.sigma > 0.0)) {
        // r_t = psi_t exactly: both martingale differences vanish at the LEF root
        out.convergence.warnings.push_back("quadratic component is degenerate; CEF equals LEF");
        return out;
    }

    const double presample = out.presample;
    const CoefficientMap map(config.u, config.v, config.bounds);
    Eigen::VectorXd z = map.z_of(out.params.to_vector());
    ErrorMoments m = out.error_moments;
    Eigen::VectorXd theta_prev = out.params.to_vector();
    out.convergence = {};
    // Moment updates are relaxed whenever the fixed-point iteration stops
    // contracting; heavy-tailed residuals can otherwise settle into a 2-cycle.
    double relax = 1.0;
    double last_step = std::numeric_limits<double>::infinity();
    int failed_solves = 0;

    for (std::size_t it = 0; it < config.max_iterations; ++it) {
        if (!(m.weight_denominator() >= kWeightDenominatorFloor)) {
            out.convergence.converged = false;
            throw FitError("kappa + 2 - gamma^2 of the residuals is below 1e-6", std::move(out));
        }
        const auto sol = solve_equation(r, presample, map, config.u, config.v, m, Method::CEF, z);
        z = sol.z;
        out.convergence.inner_iterations += sol.iterations;
        out.convergence.outer_iterations = it + 1;
        const Eigen::VectorXd theta = map.theta(z);
        fill_fit(out, r, CarrParams::from_vector(theta, config.u, config.v), presample);
        out.error_moments = m;

        const double step = (theta - theta_prev).lpNorm<Eigen::Infinity>();
        failed_solves = sol.norm < config.equation_tolerance ? 0 : failed_solves + 1;
        if (failed_solves >= 2) {
            out.convergence.converged = false;
            out.convergence.equation_norm = sol.norm;
            out.info_matrix = info_matrix_cef(out.psi_hat, m);
            out.std_errors = standard_errors(out.info_matrix);
            throw FitError("CEF equation has no root near the current estimate (max |g| = " +
                               std::to_string(sol.norm) + ")",
                           std::move(out));
        }
        if (step < config.tolerance * relax) {
            out.convergence.converged = true;
            break;
        }
        if (it > 0 && step > 0.9 * last_step) relax = std::max(0.5 * relax, 1.0 / 64.0);
        last_step = step;
        theta_prev = theta;
        const auto rm = residual_moments(out.residuals);
        if (!rm) {
            out.convergence.converged = false;
            throw FitError("CEF residuals lost all dispersion", std::move(out));
        }
        m.sigma += relax * (rm->sigma - m.sigma);
        m.gamma += relax * (rm->gamma - m.gamma);
        m.kappa += relax * (rm->kappa - m.kappa);
    }

    out.convergence.equation_norm = cef_equation(r, out.psi_hat, m).lpNorm<Eigen::Infinity>();
    out.info_matrix = info_matrix_cef(out.psi_hat, m);
    out.std_errors = standard_errors(out.info_matrix);
    add_bound_warnings(out, config.bounds);

    if (!out.convergence.converged)
        throw FitError("CEF moment iteration did not converge", std::move(out));
    if (!(out.convergence.equation_norm < config.equation_tolerance)) {
        out.convergence.converged = false;
        throw FitError("CEF equation not solved (max |g| = " +
                           std::to_string(out.convergence.equation_norm) + ")",
                       std::move(out));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Maximum likelihood under standardized GB2 errors

double ml_loglik(std::span<const double> r, const CarrParams& params, double a, double p, double q,
                 double presample) {
    const Gb2Params g{a, 1.0, p, q};
    if (!g.valid() || !g.has_moment(1.0)) return -std::numeric_limits<double>::infinity();
    const Gb2Params std_g = standardize_gb2(a, p, q);
    const auto path = try_psi_path(params, r, presample, false);
    if (!path) return -std::numeric_limits<double>::infinity();
    double ll = 0.0;
    for (std::size_t t = 0; t < r.size(); ++t)
        ll += gb2_logpdf(r[t] / path->psi[t], std_g) - std::log(path->psi[t]);
    return ll;
}

LoglikGrad ml_loglik_grad(std::span<const double> r, const CarrParams& params, double a, double p,
                          double q, double presample) {
    using boost::math::digamma;
    const std::size_t k = params.size();
    LoglikGrad out{-std::numeric_limits<double>::infinity(), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(3 + k))};
    const Gb2Params g{a, 1.0, p, q};
    if (!g.valid() || !g.has_moment(1.0)) return out;
    const auto path = try_psi_path(params, r, presample, true);
    if (!path) return out;

    const double pm = p + 1.0 / a;
    const double qm = q - 1.0 / a;
    const double lb = log_beta(p, q) - log_beta(pm, qm);
    const double dig_pq = digamma(p + q);
    const double Da = (digamma(pm) - digamma(qm)) / (a * a);
    const double Dp = digamma(p) - digamma(pm);
    const double Dq = digamma(q) - digamma(qm);
    const double lbeta_pq = log_beta(p, q);
    const double log_abs_a = std::log(std::abs(a));

    double ll = 0.0, ga = 0.0, gp = 0.0, gq = 0.0;
    Eigen::VectorXd gth = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    for (std::size_t t = 0; t < r.size(); ++t) {
        const double psi = path->psi[t];
        const double lx = std::log(r[t]) - std::log(psi);
        const double u = lx - lb;
        const double s = a * u;
        const double l1 = s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
        const double w1 = 1.0 / (1.0 + std::exp(-s));
        ll += log_abs_a + (a * p - 1.0) * lx - a * p * lb - lbeta_pq - (p + q) * l1 - std::log(psi);
        ga += 1.0 / a + p * u - a * p * Da - (p + q) * w1 * (u - a * Da);
        gp += a * u - a * p * Dp - (digamma(p) - dig_pq) - l1 + (p + q) * w1 * a * Dp;
        gq += -a * p * Dq - (digamma(q) - dig_pq) - l1 + (p + q) * w1 * a * Dq;
        const double dpsi = ((p + q) * a * w1 - a * p) / psi;
        gth += dpsi * path->grad.row(static_cast<Eigen::Index>(t)).transpose();
    }
    out.value = ll;
    out.grad << ga, gp, gq, gth;
    return out;
}

namespace {

// log-bounded positive map x = exp(lo + (hi - lo) * logistic(z))
struct BoundedLog {
    double lo, hi;
    BoundedLog(double min, double max) : lo(std::log(min)), hi(std::log(max)) {}
    double value(double z) const { return std::exp(lo + (hi - lo) / (1.0 + std::exp(-z))); }
    double deriv(double z) const {
        const double s = 1.0 / (1.0 + std::exp(-z));
        return value(z) * (hi - lo) * s * (1.0 - s);
    }
    double inverse(double x) const {
        double f = (std::log(x) - lo) / (hi - lo);
        f = std::clamp(f, 1e-9, 1.0 - 1e-9);
        return std::log(f / (1.0 - f));
    }
    bool at_bound(double z) const {
        const double s = 1.0 / (1.0 + std::exp(-z));
        return s < 1e-6 || s > 1.0 - 1e-6;
    }
};

}  // namespace

FitResult fit_ml(const RangeSeries& series, const FitConfig& config) {
    check_inputs(series, config);
    const auto r = series.values();
    const double presample = config.presample.value_or(series.mean());
    const std::size_t u = config.u, v = config.v;
    const CoefficientMap map(u, v, config.bounds);
    const auto& bnd = config.bounds;
    const BoundedLog amap(bnd.shape_a_min, bnd.shape_a_max);
    const BoundedLog pmap(bnd.shape_p_min, bnd.shape_p_max);
    const BoundedLog wmap(bnd.shape_excess_min, bnd.shape_excess_max);
    const Eigen::Index k = static_cast<Eigen::Index>(map.size());
    const double scale = 1.0 / static_cast<double>(r.size());

    struct Natural {
        double a, p, q;
        Eigen::VectorXd theta;
    };
    auto natural = [&](const Eigen::VectorXd& z) {
        Natural n;
        n.a = amap.value(z[0]);
        n.p = pmap.value(z[1]);
        n.q = (1.0 + wmap.value(z[2])) / n.a;
        n.theta = map.theta(z.tail(k));
        return n;
    };

    const optim::Objective objective = [&](const Eigen::VectorXd& z) -> std::optional<optim::ValueGrad> {
        const Natural n = natural(z);
        if (!n.theta.allFinite()) return std::nullopt;
        const auto lg = ml_loglik_grad(r, CarrParams::from_vector(n.theta, u, v), n.a, n.p, n.q, presample);
        if (!std::isfinite(lg.value) || !lg.grad.allFinite()) return std::nullopt;
        // chain rule back to z
        Eigen::VectorXd gz(3 + k);
        const double da = amap.deriv(z[0]);
        const double dw = wmap.deriv(z[2]);
        gz[0] = lg.grad[0] * da + lg.grad[2] * (-n.q / n.a) * da;
        gz[1] = lg.grad[1] * pmap.deriv(z[1]);
        gz[2] = lg.grad[2] * dw / n.a;
        gz.tail(k) = map.jacobian(z.tail(k)).transpose() * lg.grad.tail(k);
        return optim::ValueGrad{-lg.value * scale, -gz * scale};
    };

    Eigen::VectorXd z0(3 + k);
    const double a0 = 1.0, p0 = 2.0, q0 = 2.0;
    z0[0] = amap.inverse(a0);
    z0[1] = pmap.inverse(p0);
    z0[2] = wmap.inverse(a0 * q0 - 1.0);
    z0.tail(k) = map.z_of(default_start(series, u, v).to_vector());

    optim::BfgsOptions opts;
    opts.max_iterations = std::max<std::size_t>(config.max_iterations, 500);
    opts.grad_tolerance = 1e-8;
    const auto sol = optim::minimize_bfgs(objective, z0, opts);
    const Natural n = natural(sol.x);

    FitResult out;
    out.method = Method::ML;
    fill_fit(out, r, CarrParams::from_vector(n.theta, u, v), presample);
    out.gb2 = standardize_gb2(n.a, n.p, n.q);
    out.loglik = -sol.value / scale;
    out.convergence.converged = sol.converged;
    out.convergence.inner_iterations = sol.iterations;
    out.convergence.outer_iterations = 1;
    out.convergence.equation_norm = sol.grad.lpNorm<Eigen::Infinity>();
    if (const auto rm = residual_moments(out.residuals)) {
        out.error_moments = *rm;
    } else {
        out.error_moments = ErrorMoments{1.0, 0.0, 0.0, 0.0};
    }
    if (amap.at_bound(sol.x[0])) out.convergence.warnings.push_back("GB2 shape a is at a bound");
    if (pmap.at_bound(sol.x[1])) out.convergence.warnings.push_back("GB2 shape p is at a bound");
    if (wmap.at_bound(sol.x[2])) out.convergence.warnings.push_back("GB2 shape q is at a bound");
    add_bound_warnings(out, config.bounds);

    // Observed information: central differences of the analytic gradient in
    // lambda = (a, p, q, theta).
    Eigen::VectorXd lambda(3 + k);
    lambda << n.a, n.p, n.q, n.theta;
    const Eigen::Index d = lambda.size();
    Eigen::MatrixXd H(d, d);
    bool hessian_ok = true;
    for (Eigen::Index j = 0; j < d && hessian_ok; ++j) {
        const double h = 1e-5 * std::max(std::abs(lambda[j]), 1e-2);
        Eigen::VectorXd lp = lambda, lm = lambda;
        lp[j] += h;
        lm[j] -= h;
        auto eval = [&](const Eigen::VectorXd& l) {
            return ml_loglik_grad(r, CarrParams::from_vector(l.tail(k), u, v), l[0], l[1], l[2], presample);
        };
        const auto gp = eval(lp);
        const auto gm = eval(lm);
        if (!std::isfinite(gp.value) || !std::isfinite(gm.value)) {
            hessian_ok = false;
            break;
        }
        H.col(j) = (gp.grad - gm.grad) / (2.0 * h);
    }
    out.std_errors = Eigen::VectorXd::Constant(k, std::numeric_limits<double>::quiet_NaN());
    out.info_matrix = Eigen::MatrixXd::Constant(k, k, std::numeric_limits<double>::quiet_NaN());
    if (hessian_ok) {
        const Eigen::MatrixXd info_full = -0.5 * (H + H.transpose());
        const Eigen::LLT<Eigen::MatrixXd> llt(info_full);
        if (llt.info() == Eigen::Success) {
            const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(d, d));
            const Eigen::MatrixXd cov_theta = cov.bottomRightCorner(k, k);
            out.info_matrix = cov_theta.inverse();
            out.info_matrix = 0.5 * (out.info_matrix + out.info_matrix.transpose()).eval();
            for (Eigen::Index i = 0; i < k; ++i) out.std_errors[i] = std::sqrt(cov_theta(i, i));
            out.gb2_std_errors = std::array<double, 3>{std::sqrt(cov(0, 0)), std::sqrt(cov(1, 1)),
                                                       std::sqrt(cov(2, 2))};
        } else {
            hessian_ok = false;
        }
    }
    if (!hessian_ok)
        out.convergence.warnings.push_back("observed information is not positive definite");

    if (!sol.converged)
        throw FitError("ML optimisation did not converge within the iteration limit", std::move(out));
    return out;
}

FitResult fit(const RangeSeries& series, const FitConfig& config) {
    switch (config.method) {
        case Method::ML: return fit_ml(series, config);
        case Method::LEF: return fit_lef(series, config);
        case Method::CEF: return fit_cef(series, config);
    }
    throw std::invalid_argument("unknown estimation method");
}

}  // namespace carr
