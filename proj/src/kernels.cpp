#include "carr/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

#include <omp.h>

namespace carr::kernels {

namespace {

constexpr Eigen::Index kBlock = 512;

void check_shapes(std::span<const double> weights, const GradMatrix& grad) {
    if (static_cast<Eigen::Index>(weights.size()) != grad.rows())
        throw std::invalid_argument("weights and gradient rows differ in length");
}

}  // namespace

Eigen::MatrixXd weighted_outer_sum_serial(std::span<const double> weights, const GradMatrix& grad) {
    check_shapes(weights, grad);
    const Eigen::Index k = grad.cols();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index t = 0; t < grad.rows(); ++t) {
        const double w = weights[static_cast<std::size_t>(t)];
        for (Eigen::Index i = 0; i < k; ++i) {
            const double wi = w * grad(t, i);
            for (Eigen::Index j = 0; j <= i; ++j) out(i, j) += wi * grad(t, j);
        }
    }
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = i + 1; j < k; ++j) out(i, j) = out(j, i);
    return out;
}

Eigen::MatrixXd weighted_outer_sum(std::span<const double> weights, const GradMatrix& grad) {
    check_shapes(weights, grad);
    const Eigen::Index T = grad.rows();
    const Eigen::Index k = grad.cols();
    const Eigen::Index nblocks = (T + kBlock - 1) / kBlock;
    std::vector<Eigen::MatrixXd> partial(static_cast<std::size_t>(nblocks));

#pragma omp parallel for schedule(static) if (nblocks > 1 && !omp_in_parallel())
    for (Eigen::Index b = 0; b < nblocks; ++b) {
        const Eigen::Index begin = b * kBlock;
        const Eigen::Index len = std::min(kBlock, T - begin);
        const auto rows = grad.middleRows(begin, len);
        const Eigen::Map<const Eigen::VectorXd> w(weights.data() + begin, len);
        partial[static_cast<std::size_t>(b)] = rows.transpose() * w.asDiagonal() * rows;
    }

    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(k, k);
    for (const auto& m : partial) out += m;
    return 0.5 * (out + out.transpose());
}

int resolve_thread_count(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("CARR_NUM_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0) return n;
        } catch (const std::exception&) {
        }
        throw std::invalid_argument(std::string("CARR_NUM_THREADS must be a positive integer, got '") +
                                    env + "'");
    }
    return omp_get_max_threads();
}

}  // namespace carr::kernels
