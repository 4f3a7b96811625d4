#include <cmath>
#include <numeric>

#include "doctest.h"

#include "carr/mc_study.hpp"

using namespace carr;

namespace {

StudyDesign small_design() {
    StudyDesign d;
    d.errors = ErrorDistribution::standardized_lognormal(0.5);
    d.T_grid = {300};
    d.replications = 12;
    d.base_seed = 40;
    return d;
}

ReplicationRecord record(std::size_t rep, Method m, double omega, bool ok = true) {
    ReplicationRecord r;
    r.T = 100;
    r.method = m;
    r.replication = rep;
    r.ok = ok;
    r.estimate = Eigen::Vector3d(omega, 0.3, 0.4);
    r.std_error = Eigen::Vector3d(0.01, 0.02, 0.03);
    return r;
}

}  // namespace

TEST_CASE("design validation") {
    StudyDesign d = small_design();
    CHECK_NOTHROW(d.validate());
    d.replications = 1;
    CHECK_THROWS(d.validate());
    d = small_design();
    d.T_grid = {20};
    CHECK_THROWS(d.validate());
    d = small_design();
    d.fit.u = 2;
    CHECK_THROWS(d.validate());
}

TEST_CASE("deterministic errors give identical replications") {
    StudyDesign d = small_design();
    d.errors = ErrorDistribution::constant();
    d.replications = 2;
    d.methods = {Method::LEF, Method::CEF};
    d.fit.presample = d.psi1;
    const auto t = run_study(d);
    for (const auto& row : t.rows) {
        CHECK(row.n_ok == 2);
        CHECK(row.sd == 0.0);
    }
    CHECK(t.records[0].estimate == t.records[2].estimate);
}

TEST_CASE("parallel and serial studies are bit-identical and reproducible") {
    const StudyDesign d = small_design();
    const auto a = run_study(d);
    const auto b = run_study_serial(d);
    const auto c = run_study(d);
    REQUIRE(a.rows.size() == 9);
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].mean == b.rows[i].mean);
        CHECK(a.rows[i].sd == b.rows[i].sd);
        CHECK(a.rows[i].mean == c.rows[i].mean);
        CHECK(a.rows[i].rmse == c.rows[i].rmse);
    }
    for (std::size_t i = 0; i < a.records.size(); ++i) CHECK(a.records[i].estimate == b.records[i].estimate);

    StudyDesign threaded = d;
    threaded.threads = 3;
    const auto e = run_study(threaded);
    for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i].mean == e.rows[i].mean);
}

TEST_CASE("summary conventions") {
    const StudyDesign d = small_design();
    const auto t = run_study(d);
    for (const auto& row : t.rows) {
        CHECK(row.rmse * row.rmse == doctest::Approx(row.bias * row.bias + row.sd * row.sd).epsilon(1e-12));
        CHECK(row.bias == doctest::Approx(row.mean - row.truth));
        CHECK(row.se.has_value() == (row.method != Method::ML));
    }
    // seeds follow base_seed + replication
    for (const auto& r : t.records) CHECK(r.seed == d.base_seed + r.replication);
    CHECK(t.min_info_gain_eigenvalue >= -1e-10);
    CHECK(t.cell(300, Method::CEF, 1).parameter == "alpha1");
    CHECK_THROWS_AS(t.cell(999, Method::CEF, 0), std::out_of_range);

    // subset summaries from the same records
    const auto sub = summarize_replications(d, t.records, 6);
    CHECK(sub.cell(300, Method::LEF, 0).n_ok + sub.cell(300, Method::LEF, 0).n_failed == 6);
}

TEST_CASE("hand-built records") {
    StudyDesign d;
    d.T_grid = {100};
    d.methods = {Method::LEF, Method::CEF};
    std::vector<ReplicationRecord> recs;
    const std::vector<double> a{0.1, 0.2, 0.3, 0.25}, b{0.2, 0.2, 0.2, 0.18};
    for (std::size_t i = 0; i < 4; ++i) {
        recs.push_back(record(i, Method::LEF, a[i]));
        recs.push_back(record(i, Method::CEF, b[i]));
    }
    const auto t = summarize_replications(d, recs);
    const auto& row = t.cell(100, Method::LEF, 0);
    CHECK(row.mean == doctest::Approx(0.2125));
    const double sd = std::sqrt((std::pow(0.1 - 0.2125, 2) + std::pow(0.0125, 2) + std::pow(0.0875, 2) +
                                 std::pow(0.0375, 2)) / 4.0);
    CHECK(row.sd == doctest::Approx(sd));
    CHECK(*row.se == doctest::Approx(0.01));

    const auto diff = rmse_difference(t, d.truth, 100, Method::LEF, Method::CEF, 0);
    double ma = 0.0, mb = 0.0;
    std::vector<double> dd;
    for (std::size_t i = 0; i < 4; ++i) {
        ma += std::pow(a[i] - 0.2, 2) / 4.0;
        mb += std::pow(b[i] - 0.2, 2) / 4.0;
        dd.push_back(std::pow(a[i] - 0.2, 2) - std::pow(b[i] - 0.2, 2));
    }
    const double md = std::accumulate(dd.begin(), dd.end(), 0.0) / 4.0;
    double vd = 0.0;
    for (double x : dd) vd += (x - md) * (x - md) / 3.0;
    CHECK(diff.diff == doctest::Approx(std::sqrt(ma) - std::sqrt(mb)));
    CHECK(diff.se == doctest::Approx(std::sqrt(vd / 4.0) / (std::sqrt(ma) + std::sqrt(mb))));
    CHECK(diff.n == 4);

    // one failure in four exceeds a 20% budget
    recs[0].ok = false;
    CHECK_THROWS_AS(summarize_replications(d, recs), StudyError);
    try {
        summarize_replications(d, recs);
    } catch (const StudyError& e) {
        CHECK(e.table().cell(100, Method::LEF, 0).n_failed == 1);
    }
}

TEST_CASE("histograms") {
    const auto single = make_histogram({0.3, 0.3, 0.3}, 10, 0.3, 0.01);
    std::size_t occupied = 0;
    for (auto c : single.count) occupied += c > 0;
    CHECK(occupied == 1);
    CHECK(single.count[0] == 3);

    const std::vector<double> v{0.1, 0.15, 0.2, 0.22, 0.3, 0.5};
    const auto h = make_histogram(v, 4, 0.2, 0.1);
    CHECK(std::accumulate(h.count.begin(), h.count.end(), std::size_t{0}) == v.size());
    CHECK(h.lower.front() == 0.1);
    CHECK(h.upper.back() == 0.5);
    const double mid = 0.5 * (h.lower[0] + h.upper[0]);
    CHECK(h.normal_density[0] ==
          doctest::Approx(std::exp(-0.5 * std::pow((mid - 0.2) / 0.1, 2)) / (0.1 * std::sqrt(2.0 * M_PI))));

    const StudyDesign d = small_design();
    const auto t = run_study(d);
    const auto hs = export_histograms(t, d.truth, 300, Method::CEF, 5);
    REQUIRE(hs.size() == 3);
    const auto& row = t.cell(300, Method::CEF, 0);
    CHECK(std::accumulate(hs[0].count.begin(), hs[0].count.end(), std::size_t{0}) == d.replications - row.n_failed);
}

TEST_CASE("RMSE shrinks with the sample size") {
    StudyDesign d = small_design();
    d.T_grid = {500, 2000};
    d.replications = 60;
    d.methods = {Method::LEF, Method::CEF};
    const auto t = run_study(d);
    for (Method m : d.methods)
        for (std::size_t p = 0; p < 3; ++p) CHECK(t.cell(2000, m, p).rmse < t.cell(500, m, p).rmse);
}
