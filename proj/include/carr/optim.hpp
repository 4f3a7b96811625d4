#pragma once

#include <cstddef>
#include <functional>
#include <optional>

#include <Eigen/Dense>

namespace carr::optim {

/// Objective value and gradient, or nullopt outside the feasible region.
struct ValueGrad {
    double value;
    Eigen::VectorXd grad;
};
using Objective = std::function<std::optional<ValueGrad>(const Eigen::VectorXd&)>;

struct BfgsOptions {
    std::size_t max_iterations = 500;
    double grad_tolerance = 1e-7;   // on max |grad|
    double value_tolerance = 1e-14; // relative decrease treated as stalled
};

struct BfgsResult {
    Eigen::VectorXd x;
    double value = 0.0;
    Eigen::VectorXd grad;
    std::size_t iterations = 0;
    bool converged = false;
};

/// Quasi-Newton minimisation with an Armijo backtracking line search.
/// Throws std::invalid_argument if x0 is infeasible.
BfgsResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const BfgsOptions& opts = {});

/// Residual vector, or nullopt outside the feasible region.
using Residual = std::function<std::optional<Eigen::VectorXd>(const Eigen::VectorXd&)>;

struct LmOptions {
    std::size_t max_iterations = 200;
    double residual_tolerance = 1e-11; // on max |f|; stops early once reached
    double step_tolerance = 1e-13;     // relative
    double fd_step = 1e-6;
};

struct LmResult {
    Eigen::VectorXd x;
    Eigen::VectorXd residual;
    double norm = 0.0;  // max |f|
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
};

/// Minimises ||f(x)||^2 with Levenberg-Marquardt steps on a central-difference
/// Jacobian. Convergence is judged by the caller from `norm`.
LmResult solve_least_squares(const Residual& f, Eigen::VectorXd x0, const LmOptions& opts = {});

/// Central-difference Jacobian; falls back to a one-sided difference when a
/// probe leaves the feasible region. Returns nullopt if neither side is feasible.
std::optional<Eigen::MatrixXd> jacobian_fd(const Residual& f, const Eigen::VectorXd& x,
                                           const Eigen::VectorXd& fx, double rel_step,
                                           std::size_t* evaluations = nullptr);

}  // namespace carr::optim
