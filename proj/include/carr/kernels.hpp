#pragma once

#include <span>

#include <Eigen/Dense>

#include "carr/carr_core.hpp"

namespace carr::kernels {

/// sum_t w_t g_t g_t' over the rows of grad.
///
/// The OpenMP version reduces fixed-size blocks and combines them in block
/// order, so the result does not depend on the thread count.
Eigen::MatrixXd weighted_outer_sum(std::span<const double> weights, const GradMatrix& grad);

/// Single loop over t; reference for the parallel kernel.
Eigen::MatrixXd weighted_outer_sum_serial(std::span<const double> weights, const GradMatrix& grad);

/// Threads used by parallel regions: the explicit request when positive,
/// otherwise CARR_NUM_THREADS from the environment, otherwise the OpenMP default.
int resolve_thread_count(int requested);

}  // namespace carr::kernels
