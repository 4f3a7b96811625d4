#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "carr/carr_core.hpp"
#include "carr/distributions.hpp"
#include "carr/estimators.hpp"

namespace carr {

struct StudyDesign {
    CarrParams truth{0.2, {0.3}, {0.4}};
    /// Pre-sample level of the simulated recursion.
    double psi1 = 0.5;
    ErrorDistribution errors = ErrorDistribution::standardized_gb2(1.0, 1.0, 2.0);
    std::vector<std::size_t> T_grid{500, 1000, 1500, 2000};
    std::size_t replications = 100;
    std::uint64_t base_seed = 1;
    std::vector<Method> methods{Method::ML, Method::LEF, Method::CEF};
    /// Order, tolerances and bounds for every fit; the method field is ignored.
    FitConfig fit;
    /// A cell with a larger share of failed fits aborts the study.
    double max_failure_rate = 0.2;
    /// Worker threads; 0 defers to CARR_NUM_THREADS or the OpenMP default.
    int threads = 0;

    void validate() const;
};

struct ReplicationRecord {
    std::size_t T = 0;
    Method method = Method::CEF;
    std::size_t replication = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    Eigen::VectorXd estimate;
    Eigen::VectorXd std_error;
    /// Smallest eigenvalue of I_cef - I_lef at the estimate (NaN for ML).
    double info_gain_min_eigenvalue = 0.0;
    std::string error;
};

struct CellSummary {
    std::size_t T = 0;
    Method method = Method::CEF;
    std::string parameter;
    double truth = 0.0;
    double mean = 0.0;
    double bias = 0.0;
    /// Divisor N, so rmse^2 == bias^2 + sd^2.
    double sd = 0.0;
    double rmse = 0.0;
    /// Average standard error; absent for ML.
    std::optional<double> se;
    std::size_t n_ok = 0;
    std::size_t n_failed = 0;
};

struct StudyTable {
    std::vector<CellSummary> rows;
    std::vector<ReplicationRecord> records;
    double min_info_gain_eigenvalue = 0.0;

    /// Row for (T, method, parameter index); throws std::out_of_range if absent.
    const CellSummary& cell(std::size_t T, Method method, std::size_t param) const;
};

/// Raised when a cell exceeds the failure budget; carries the partial table.
class StudyError : public std::runtime_error {
public:
    StudyError(const std::string& what, StudyTable table)
        : std::runtime_error(what), table_(std::move(table)) {}
    const StudyTable& table() const { return table_; }

private:
    StudyTable table_;
};

/// One simulate-and-fit replication for every requested method.
std::vector<ReplicationRecord> run_replication(const StudyDesign& design, std::size_t T,
                                               std::size_t replication);

/// Replications run across OpenMP threads; results are merged in replication order.
StudyTable run_study(const StudyDesign& design);
/// Same output, single thread.
StudyTable run_study_serial(const StudyDesign& design);

/// Summaries from raw records, optionally restricted to replications below max_replication.
StudyTable summarize_replications(const StudyDesign& design, std::vector<ReplicationRecord> records,
                                  std::optional<std::size_t> max_replication = std::nullopt);

/// RMSE_a - RMSE_b over the replications where both methods succeeded, with a
/// delta-method Monte Carlo standard error from the paired squared errors.
struct RmseDifference {
    double diff = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};
RmseDifference rmse_difference(const StudyTable& table, const CarrParams& truth, std::size_t T,
                               Method a, Method b, std::size_t param);

struct Histogram {
    std::string parameter;
    double truth = 0.0;
    double se = 0.0;
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<std::size_t> count;
    /// N(truth, se^2) density at each bin centre and the matching expected count.
    std::vector<double> normal_density;
    std::vector<double> normal_count;
};

/// Equal-width bins over [min, max] of the values. Identical values fill one bin.
Histogram make_histogram(const std::vector<double>& values, std::size_t bins, double truth, double se,
                         const std::string& parameter = "");

/// One histogram per parameter from the successful records of (T, method).
std::vector<Histogram> export_histograms(const StudyTable& table, const CarrParams& truth, std::size_t T,
                                         Method method, std::size_t bins);

}  // namespace carr
