#include "carr/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace carr::optim {

BfgsResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const BfgsOptions& opts) {
    auto current = f(x0);
    if (!current || !std::isfinite(current->value))
        throw std::invalid_argument("BFGS start point is infeasible");

    const Eigen::Index n = x0.size();
    BfgsResult res;
    res.x = std::move(x0);
    res.value = current->value;
    res.grad = current->grad;

    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
    bool fresh = true;
    std::size_t stalled = 0;

    for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
        if (res.grad.lpNorm<Eigen::Infinity>() < opts.grad_tolerance) {
            res.converged = true;
            return res;
        }
        Eigen::VectorXd dir = -H * res.grad;
        double slope = res.grad.dot(dir);
        if (!(slope < 0.0)) {
            H.setIdentity();
            fresh = true;
            dir = -res.grad;
            slope = res.grad.dot(dir);
        }
        if (fresh) {
            // first step after a reset: cap the move at unit length
            const double scale = std::min(1.0, 1.0 / dir.lpNorm<Eigen::Infinity>());
            dir *= scale;
            slope *= scale;
        }

        double step = 1.0;
        std::optional<ValueGrad> trial;
        Eigen::VectorXd x_new;
        bool accepted = false;
        for (int k = 0; k < 60; ++k, step *= 0.5) {
            x_new = res.x + step * dir;
            trial = f(x_new);
            if (trial && std::isfinite(trial->value) &&
                trial->value <= res.value + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (fresh) break;  // even a steepest-descent step failed
            H.setIdentity();
            fresh = true;
            continue;
        }

        const Eigen::VectorXd s = x_new - res.x;
        const Eigen::VectorXd y = trial->grad - res.grad;
        const double decrease = res.value - trial->value;
        res.x = x_new;
        res.value = trial->value;
        res.grad = trial->grad;

        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (fresh) {
                H = Eigen::MatrixXd::Identity(n, n) * (sy / y.squaredNorm());
                fresh = false;
            }
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
            H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) +
                rho * s * s.transpose();
        }

        if (decrease <= opts.value_tolerance * std::max(1.0, std::abs(res.value))) {
            if (++stalled >= 3) {
                res.converged = true;
                return res;
            }
        } else {
            stalled = 0;
        }
    }
    res.converged = res.grad.lpNorm<Eigen::Infinity>() < opts.grad_tolerance;
    return res;
}

std::optional<Eigen::MatrixXd> jacobian_fd(const Residual& f, const Eigen::VectorXd& x,
                                           const Eigen::VectorXd& fx, double rel_step,
                                           std::size_t* evaluations) {
    const Eigen::Index n = x.size();
    Eigen::MatrixXd J(fx.size(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double h = rel_step * std::max(1.0, std::abs(x[j]));
        Eigen::VectorXd xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        const auto fp = f(xp);
        const auto fm = f(xm);
        if (evaluations) *evaluations += 2;
        if (fp && fm) {
            J.col(j) = (*fp - *fm) / (2.0 * h);
        } else if (fp) {
            J.col(j) = (*fp - fx) / h;
        } else if (fm) {
            J.col(j) = (fx - *fm) / h;
        } else {
            return std::nullopt;
        }
    }
    return J;
}

LmResult solve_least_squares(const Residual& f, Eigen::VectorXd x0, const LmOptions& opts) {
    LmResult res;
    auto fx = f(x0);
    res.evaluations = 1;
    if (!fx) throw std::invalid_argument("least-squares start point is infeasible");
    res.x = std::move(x0);
    res.residual = std::move(*fx);
    res.norm = res.residual.lpNorm<Eigen::Infinity>();

    double lambda = -1.0;
    double nu = 2.0;
    for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
        if (res.norm < opts.residual_tolerance) break;
        const auto J = jacobian_fd(f, res.x, res.residual, opts.fd_step, &res.evaluations);
        if (!J) break;
        const Eigen::MatrixXd JtJ = J->transpose() * *J;
        const Eigen::VectorXd Jtf = J->transpose() * res.residual;
        Eigen::VectorXd diag = JtJ.diagonal().cwiseMax(1e-12 * JtJ.diagonal().maxCoeff());
        if (lambda < 0.0) lambda = 1e-6;

        const double cost = res.residual.squaredNorm();
        bool improved = false;
        double step_norm = 0.0;
        for (int k = 0; k < 40; ++k) {
            Eigen::MatrixXd A = JtJ;
            A.diagonal() += lambda * diag;
            const Eigen::VectorXd delta = A.ldlt().solve(-Jtf);
            step_norm = delta.lpNorm<Eigen::Infinity>();
            const Eigen::VectorXd x_new = res.x + delta;
            auto f_new = f(x_new);
            ++res.evaluations;
            if (f_new && f_new->allFinite() && f_new->squaredNorm() < cost) {
                res.x = x_new;
                res.residual = std::move(*f_new);
                res.norm = res.residual.lpNorm<Eigen::Infinity>();
                lambda = std::max(lambda / 3.0, 1e-12);
                nu = 2.0;
                improved = true;
                break;
            }
            lambda *= nu;
            nu *= 2.0;
        }
        if (!improved) break;
        if (step_norm < opts.step_tolerance * (1.0 + res.x.lpNorm<Eigen::Infinity>())) break;
    }
    return res;
}

}  // namespace carr::optim
