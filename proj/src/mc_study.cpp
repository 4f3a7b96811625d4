#include "carr/mc_study.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "carr/kernels.hpp"

namespace carr {

void StudyDesign::validate() const {
    truth.validate();
    if (replications < 2) throw std::invalid_argument("a study needs at least two replications");
    if (T_grid.empty()) throw std::invalid_argument("the T grid is empty");
    for (std::size_t T : T_grid)
        if (T < 50) throw std::invalid_argument("every T in the grid must be at least 50");
    if (methods.empty()) throw std::invalid_argument("no estimation methods requested");
    if (!(psi1 > 0.0)) throw std::invalid_argument("psi1 must be positive");
    if (fit.u != truth.u() || fit.v != truth.v())
        throw std::invalid_argument("fit order must match the order of the true parameters");
    if (!(max_failure_rate >= 0.0 && max_failure_rate <= 1.0))
        throw std::invalid_argument("max failure rate must lie in [0, 1]");
    fit.validate();
}

const CellSummary& StudyTable::cell(std::size_t T, Method method, std::size_t param) const {
    std::size_t seen = 0;
    for (const auto& row : rows) {
        if (row.T != T || row.method != method) continue;
        if (seen++ == param) return row;
    }
    throw std::out_of_range("no study row for T=" + std::to_string(T) + ", method " + to_string(method));
}

std::vector<ReplicationRecord> run_replication(const StudyDesign& design, std::size_t T,
                                               std::size_t replication) {
    const std::uint64_t seed = design.base_seed + replication;
    const RangeSeries series = simulate(design.truth, design.errors, T, design.psi1, seed);
    std::vector<ReplicationRecord> out;
    for (Method method : design.methods) {
        ReplicationRecord rec;
        rec.T = T;
        rec.method = method;
        rec.replication = replication;
        rec.seed = seed;
        rec.info_gain_min_eigenvalue = std::numeric_limits<double>::quiet_NaN();
        FitConfig cfg = design.fit;
        cfg.method = method;
        try {
            const FitResult fr = fit(series, cfg);
            rec.ok = true;
            rec.estimate = fr.params.to_vector();
            rec.std_error = fr.std_errors;
            if (method != Method::ML && fr.error_moments.sigma > 0.0)
                rec.info_gain_min_eigenvalue = info_gain_min_eigenvalue(fr);
        } catch (const FitError& e) {
            rec.error = e.what();
            rec.estimate = e.best().params.to_vector();
        } catch (const std::exception& e) {
            rec.error = e.what();
        }
        out.push_back(std::move(rec));
    }
    return out;
}

namespace {

StudyTable run_impl(const StudyDesign& design, bool parallel) {
    design.validate();
    const std::size_t nT = design.T_grid.size();
    const std::size_t N = design.replications;
    const auto tasks = static_cast<std::ptrdiff_t>(nT * N);
    std::vector<std::vector<ReplicationRecord>> slots(static_cast<std::size_t>(tasks));

    if (parallel) {
        const int threads = kernels::resolve_thread_count(design.threads);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
        for (std::ptrdiff_t i = 0; i < tasks; ++i) {
            const auto k = static_cast<std::size_t>(i);
            slots[k] = run_replication(design, design.T_grid[k / N], k % N);
        }
    } else {
        for (std::ptrdiff_t i = 0; i < tasks; ++i) {
            const auto k = static_cast<std::size_t>(i);
            slots[k] = run_replication(design, design.T_grid[k / N], k % N);
        }
    }

    std::vector<ReplicationRecord> records;
    records.reserve(static_cast<std::size_t>(tasks) * design.methods.size());
    for (auto& s : slots)
        for (auto& r : s) records.push_back(std::move(r));
    return summarize_replications(design, std::move(records));
}

}  // namespace

StudyTable run_study(const StudyDesign& design) { return run_impl(design, true); }
StudyTable run_study_serial(const StudyDesign& design) { return run_impl(design, false); }

StudyTable summarize_replications(const StudyDesign& design, std::vector<ReplicationRecord> records,
                                  std::optional<std::size_t> max_replication) {
    StudyTable table;
    if (max_replication)
        std::erase_if(records, [&](const ReplicationRecord& r) { return r.replication >= *max_replication; });
    table.records = std::move(records);

    const Eigen::VectorXd truth = design.truth.to_vector();
    const auto names = design.truth.names();
    double min_eig = std::numeric_limits<double>::infinity();
    std::ostringstream over_budget;

    for (std::size_t T : design.T_grid) {
        for (Method method : design.methods) {
            std::vector<const ReplicationRecord*> ok;
            std::size_t failed = 0;
            for (const auto& r : table.records) {
                if (r.T != T || r.method != method) continue;
                if (r.ok) {
                    ok.push_back(&r);
                    if (std::isfinite(r.info_gain_min_eigenvalue))
                        min_eig = std::min(min_eig, r.info_gain_min_eigenvalue);
                } else {
                    ++failed;
                }
            }
            const std::size_t total = ok.size() + failed;
            if (total > 0 && static_cast<double>(failed) > design.max_failure_rate * static_cast<double>(total))
                over_budget << " T=" << T << " " << to_string(method) << ": " << failed << "/" << total;

            for (Eigen::Index p = 0; p < truth.size(); ++p) {
                CellSummary c;
                c.T = T;
                c.method = method;
                c.parameter = names[static_cast<std::size_t>(p)];
                c.truth = truth[p];
                c.n_ok = ok.size();
                c.n_failed = failed;
                if (!ok.empty()) {
                    const double n = static_cast<double>(ok.size());
                    double sum = 0.0;
                    for (const auto* r : ok) sum += r->estimate[p];
                    c.mean = sum / n;
                    double ss = 0.0, se_sum = 0.0;
                    std::size_t se_n = 0;
                    for (const auto* r : ok) {
                        ss += (r->estimate[p] - c.mean) * (r->estimate[p] - c.mean);
                        if (r->std_error.size() > p && std::isfinite(r->std_error[p])) {
                            se_sum += r->std_error[p];
                            ++se_n;
                        }
                    }
                    c.bias = c.mean - c.truth;
                    c.sd = std::sqrt(ss / n);
                    c.rmse = std::sqrt(c.bias * c.bias + c.sd * c.sd);
                    if (method != Method::ML && se_n > 0) c.se = se_sum / static_cast<double>(se_n);
                } else {
                    c.mean = c.bias = c.sd = c.rmse = std::numeric_limits<double>::quiet_NaN();
                }
                table.rows.push_back(std::move(c));
            }
        }
    }
    table.min_info_gain_eigenvalue = std::isfinite(min_eig) ? min_eig : std::numeric_limits<double>::quiet_NaN();
    if (!over_budget.str().empty())
        throw StudyError("too many failed fits:" + over_budget.str(), std::move(table));
    return table;
}

RmseDifference rmse_difference(const StudyTable& table, const CarrParams& truth, std::size_t T,
                               Method a, Method b, std::size_t param) {
    const double tv = truth.to_vector()[static_cast<Eigen::Index>(param)];
    // replication -> squared error for each method
    std::vector<std::pair<std::size_t, double>> ea, eb;
    for (const auto& r : table.records) {
        if (r.T != T || !r.ok) continue;
        const double e = r.estimate[static_cast<Eigen::Index>(param)] - tv;
        if (r.method == a) ea.emplace_back(r.replication, e * e);
        if (r.method == b) eb.emplace_back(r.replication, e * e);
    }
    std::sort(ea.begin(), ea.end());
    std::sort(eb.begin(), eb.end());
    std::vector<double> sa, sb;
    for (std::size_t i = 0, j = 0; i < ea.size() && j < eb.size();) {
        if (ea[i].first < eb[j].first) ++i;
        else if (eb[j].first < ea[i].first) ++j;
        else {
            sa.push_back(ea[i++].second);
            sb.push_back(eb[j++].second);
        }
    }
    RmseDifference out;
    out.n = sa.size();
    if (out.n < 2) throw std::invalid_argument("fewer than two paired replications");
    const double n = static_cast<double>(out.n);
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < out.n; ++i) {
        ma += sa[i];
        mb += sb[i];
    }
    ma /= n;
    mb /= n;
    double vd = 0.0;
    for (std::size_t i = 0; i < out.n; ++i) {
        const double d = (sa[i] - sb[i]) - (ma - mb);
        vd += d * d;
    }
    vd /= (n - 1.0);
    const double ra = std::sqrt(ma), rb = std::sqrt(mb);
    out.diff = ra - rb;
    // RMSE_a - RMSE_b = (MSE_a - MSE_b) / (RMSE_a + RMSE_b)
    out.se = ra + rb > 0.0 ? std::sqrt(vd / n) / (ra + rb) : 0.0;
    return out;
}

Histogram make_histogram(const std::vector<double>& values, std::size_t bins, double truth, double se,
                         const std::string& parameter) {
    if (bins == 0) throw std::invalid_argument("histogram needs at least one bin");
    Histogram h;
    h.parameter = parameter;
    h.truth = truth;
    h.se = se;
    if (values.empty()) return h;
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    const double lo = *mn;
    double width = (*mx - lo) / static_cast<double>(bins);
    if (!(width > 0.0)) {
        bins = 1;
        width = 0.0;
    }
    h.count.assign(bins, 0);
    for (std::size_t b = 0; b < bins; ++b) {
        h.lower.push_back(lo + width * static_cast<double>(b));
        h.upper.push_back(b + 1 == bins ? *mx : lo + width * static_cast<double>(b + 1));
    }
    for (double x : values) {
        std::size_t b = width > 0.0 ? static_cast<std::size_t>((x - lo) / width) : 0;
        h.count[std::min(b, bins - 1)]++;
    }
    const double n = static_cast<double>(values.size());
    for (std::size_t b = 0; b < bins; ++b) {
        const double mid = 0.5 * (h.lower[b] + h.upper[b]);
        double dens = 0.0;
        if (se > 0.0) {
            const double z = (mid - truth) / se;
            dens = std::exp(-0.5 * z * z) / (se * std::sqrt(2.0 * std::numbers::pi));
        }
        h.normal_density.push_back(dens);
        h.normal_count.push_back(dens * n * (h.upper[b] - h.lower[b]));
    }
    return h;
}

std::vector<Histogram> export_histograms(const StudyTable& table, const CarrParams& truth, std::size_t T,
                                         Method method, std::size_t bins) {
    const Eigen::VectorXd tv = truth.to_vector();
    const auto names = truth.names();
    std::vector<Histogram> out;
    for (Eigen::Index p = 0; p < tv.size(); ++p) {
        std::vector<double> values;
        double se_sum = 0.0;
        std::size_t se_n = 0;
        for (const auto& r : table.records) {
            if (r.T != T || r.method != method || !r.ok) continue;
            values.push_back(r.estimate[p]);
            if (r.std_error.size() > p && std::isfinite(r.std_error[p])) {
                se_sum += r.std_error[p];
                ++se_n;
            }
        }
        const double se = se_n ? se_sum / static_cast<double>(se_n) : 0.0;
        out.push_back(make_histogram(values, bins, tv[p], se, names[static_cast<std::size_t>(p)]));
    }
    return out;
}

}  // namespace carr
