// Serial vs OpenMP timings for the information-matrix kernel and the
// replication loop of a Monte Carlo study.
//
//   bench_carr [T] [replications] [threads]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "carr/carr_core.hpp"
#include "carr/distributions.hpp"
#include "carr/kernels.hpp"
#include "carr/mc_study.hpp"

namespace {

template <class F>
double time_ms(F&& f, int reps) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) f();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main(int argc, char** argv) {
    const std::size_t T = argc > 1 ? std::stoul(argv[1]) : 200000;
    const std::size_t N = argc > 2 ? std::stoul(argv[2]) : 40;
    const int threads = argc > 3 ? std::atoi(argv[3]) : 0;
    std::printf("threads: %d\n", carr::kernels::resolve_thread_count(threads));

    const carr::CarrParams par{0.1, {0.2, 0.05}, {0.5, 0.1}};
    const auto errors = carr::ErrorDistribution::standardized_lognormal(0.5);
    const auto series = carr::simulate(par, errors, T, 0.5, 3);
    const auto path = carr::psi_path(par, series, series.mean());
    std::vector<double> w(T);
    for (std::size_t t = 0; t < T; ++t) w[t] = 1.0 / (path.psi[t] * path.psi[t]);

    Eigen::MatrixXd a, b;
    const double ts = time_ms([&] { a = carr::kernels::weighted_outer_sum_serial(w, path.grad); }, 20);
    const double tp = time_ms([&] { b = carr::kernels::weighted_outer_sum(w, path.grad); }, 20);
    std::printf("info kernel  T=%zu  serial %.3f ms  openmp %.3f ms  speedup %.2f  max|diff| %.3g\n", T, ts, tp,
                ts / tp, (a - b).cwiseAbs().maxCoeff());

    carr::StudyDesign d;
    d.errors = carr::ErrorDistribution::standardized_lognormal(0.5);
    d.T_grid = {1000};
    d.replications = N;
    d.methods = {carr::Method::LEF, carr::Method::CEF};
    d.threads = threads;
    carr::StudyTable s1, s2;
    const double ms = time_ms([&] { s1 = carr::run_study_serial(d); }, 1);
    const double mp = time_ms([&] { s2 = carr::run_study(d); }, 1);
    double diff = 0.0;
    for (std::size_t i = 0; i < s1.rows.size(); ++i) diff = std::max(diff, std::abs(s1.rows[i].mean - s2.rows[i].mean));
    std::printf("mc study     N=%zu T=1000  serial %.1f ms  openmp %.1f ms  speedup %.2f  max|diff| %.3g\n", N, ms, mp,
                ms / mp, diff);
    return 0;
}
