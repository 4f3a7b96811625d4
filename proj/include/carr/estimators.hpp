#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "carr/carr_core.hpp"
#include "carr/distributions.hpp"

namespace carr {

enum class Method { ML, LEF, CEF };

std::string to_string(Method m);
/// Accepts "ml", "lef", "cef" in any case.
Method method_from_string(const std::string& name);

/// Feasible region for the coefficients during fitting.
struct ParameterBounds {
    /// Keep every alpha_i, beta_j >= 0 and their sum below max_persistence.
    /// When false only omega > 0 and psi_t > 0 are enforced.
    bool nonnegative = true;
    double max_persistence = 1.0 - 1e-6;
    /// Log-space boxes for the GB2 shapes in ML fits.
    double shape_a_min = 0.05, shape_a_max = 50.0;
    double shape_p_min = 1e-2, shape_p_max = 500.0;
    /// Bounds on a*q - 1, which must stay positive for the mean to exist.
    double shape_excess_min = 1e-3, shape_excess_max = 500.0;
};

struct FitConfig {
    std::size_t u = 1;
    std::size_t v = 1;
    Method method = Method::CEF;
    std::size_t max_iterations = 200;
    /// Outer-loop convergence on max parameter change.
    double tolerance = 1e-8;
    /// Required max |g*(theta_hat)| for LEF and CEF fits.
    double equation_tolerance = 1e-6;
    ParameterBounds bounds;
    /// Pre-sample psi and r; defaults to the sample mean of the fitted series.
    std::optional<double> presample;

    void validate() const;
};

struct ConvergenceReport {
    bool converged = false;
    std::size_t outer_iterations = 0;
    std::size_t inner_iterations = 0;
    /// max |g*| for LEF/CEF, max |grad| of the scaled negative log-likelihood for ML.
    double equation_norm = 0.0;
    std::vector<std::string> warnings;
};

struct FitResult {
    Method method = Method::CEF;
    CarrParams params;
    /// Moments of the residuals r_t / psi_hat_t (mu is fixed at one in the equations).
    ErrorMoments error_moments;
    std::optional<Gb2Params> gb2;
    std::optional<std::array<double, 3>> gb2_std_errors;  // (a, p, q)
    Eigen::VectorXd std_errors;
    /// Information matrix over theta; std_errors = sqrt(diag(inverse)).
    Eigen::MatrixXd info_matrix;
    std::vector<double> residuals;
    PsiPath psi_hat;
    double presample = 0.0;
    std::optional<double> loglik;
    double rmspe = 0.0;
    double mape = 0.0;
    ConvergenceReport convergence;
};

/// Raised when a fit does not converge; carries the best iterate reached.
class FitError : public std::runtime_error {
public:
    FitError(const std::string& what, FitResult best)
        : std::runtime_error(what), best_(std::move(best)) {}
    const FitResult& best() const { return best_; }

private:
    FitResult best_;
};

FitResult fit(const RangeSeries& series, const FitConfig& config);
FitResult fit_ml(const RangeSeries& series, const FitConfig& config);
FitResult fit_lef(const RangeSeries& series, const FitConfig& config);
FitResult fit_cef(const RangeSeries& series, const FitConfig& config);

/// Optimal linear estimating function
///   g1 = -sum_t mu / (psi_t^2 sigma^2) dpsi_t (r_t - psi_t mu).
Eigen::VectorXd lef_equation(std::span<const double> r, const PsiPath& psi, const ErrorMoments& m);

/// Combined estimating function sum_t a1_t h1_t + a2_t h2_t with
///   h1 = r - psi mu,  h2 = h1^2 - psi^2 sigma^2 - gamma psi sigma h1.
Eigen::VectorXd cef_equation(std::span<const double> r, const PsiPath& psi, const ErrorMoments& m);

/// The two martingale differences (h1_t, h2_t) at the given path and moments.
std::pair<std::vector<double>, std::vector<double>> martingale_differences(
    std::span<const double> r, const PsiPath& psi, const ErrorMoments& m);

/// The weight vector a*_{t-1,2} multiplying h2_t, for one t.
Eigen::VectorXd cef_quadratic_weight(double psi, const Eigen::Ref<const Eigen::RowVectorXd>& dpsi,
                                     const ErrorMoments& m);

/// sum_t mu^2 / (psi_t^2 sigma^2) dpsi dpsi'.
Eigen::MatrixXd info_matrix_lef(const PsiPath& psi, const ErrorMoments& m);

/// LEF information plus sum_t (gamma mu - 2 sigma)^2 / (psi_t^2 sigma^2 (kappa + 2 - gamma^2)) dpsi dpsi'.
/// Throws std::domain_error when kappa + 2 - gamma^2 is below the guard floor.
Eigen::MatrixXd info_matrix_cef(const PsiPath& psi, const ErrorMoments& m);

/// The information gained by the quadratic component, I_cef - I_lef.
Eigen::MatrixXd info_gain_cef(const PsiPath& psi, const ErrorMoments& m);

/// Smallest eigenvalue of I_cef - I_lef evaluated at a fitted path and its residual moments.
double info_gain_min_eigenvalue(const FitResult& fit);

inline constexpr double kWeightDenominatorFloor = 1e-6;

std::vector<double> residuals(std::span<const double> r, const PsiPath& psi);

/// sum_t log f(r_t | a, p, q, psi_t) with standardized GB2 errors.
double ml_loglik(std::span<const double> r, const CarrParams& params, double a, double p, double q,
                 double presample);

/// Log-likelihood and its gradient with respect to lambda = (a, p, q, theta).
struct LoglikGrad {
    double value;
    Eigen::VectorXd grad;
};
LoglikGrad ml_loglik_grad(std::span<const double> r, const CarrParams& params, double a, double p,
                          double q, double presample);

/// Starting values: omega = 0.1 mean(r), alpha_i = 0.1/u, beta_j = 0.7/v.
CarrParams default_start(const RangeSeries& series, std::size_t u, std::size_t v);

/// sqrt(diag(I^-1)); NaN entries when I is not positive definite.
Eigen::VectorXd standard_errors(const Eigen::MatrixXd& info);

}  // namespace carr
