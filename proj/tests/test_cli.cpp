#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "carr/cli.hpp"
#include "carr/csv_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path tmp_dir() {
    const char* env = std::getenv("CARR_TEST_TMP");
    fs::path p = env ? fs::path(env) : fs::temp_directory_path() / "carr_tests";
    fs::create_directories(p);
    return p;
}

std::string tmp(const std::string& name) { return (tmp_dir() / name).string(); }

struct Run {
    int code;
    std::string out, err;
};

Run carr_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "carr");
    std::ostringstream out, err;
    const int code = carr::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path);
    std::vector<std::vector<std::string>> rows;
    for (std::string line; std::getline(in, line);) {
        std::vector<std::string> f;
        std::stringstream ls(line);
        for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
        if (!line.empty() && line.back() == ',') f.emplace_back();
        rows.push_back(f);
    }
    return rows;
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    return json::parse(in);
}

void simulate_file(const std::string& path, std::size_t T, int seed, const std::string& errors = "--lognormal",
                   const std::string& value = "0.5") {
    std::vector<std::string> args{"simulate", "--T", std::to_string(T), "--seed", std::to_string(seed), "--out", path};
    args.push_back(errors);
    if (!value.empty()) args.push_back(value);
    REQUIRE(carr_cli(args).code == 0);
}

}  // namespace

TEST_CASE("csv ingestion") {
    using carr::io::read_range_csv;
    std::istringstream a("t,range\n1,0.5\n2,0.7\n");
    const auto ra = read_range_csv(a);
    CHECK(ra.series.size() == 2);
    CHECK(ra.series.labels()[1] == "2");

    std::istringstream b("date,range\r\n2020-01-02,1.25\r\n\r\n2020-01-03,0.9\r\n");
    CHECK(read_range_csv(b).series[0] == 1.25);

    std::istringstream c("date,high,low\n2020-01-02,101,100\n2020-01-03,55,50\n");
    const auto rc = read_range_csv(c);
    CHECK(rc.schema == carr::io::RangeSchema::HighLow);
    CHECK(rc.series[0] == doctest::Approx(100.0 * std::log(1.01)));

    auto message = [](const std::string& text) {
        std::istringstream in(text);
        try {
            read_range_csv(in, "data.csv");
        } catch (const carr::io::CsvError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message("date,high,low\n2020-01-02,101,100\n2020-01-03,49,50\n").find("data.csv:3") != std::string::npos);
    CHECK(message("t,range\n1,0.5\n2,abc\n").find("data.csv:3") != std::string::npos);
    CHECK(message("t,range\n1,0.5\n2,0\n").find("positive") != std::string::npos);
    CHECK(message("t,range\n1,0.5,9\n").find("data.csv:2") != std::string::npos);
    CHECK(message("x,y\n1,2\n").find("header") != std::string::npos);
    CHECK(message("").find("empty") != std::string::npos);
}

TEST_CASE("simulate is deterministic") {
    const auto a = tmp("sim_a.csv"), b = tmp("sim_b.csv");
    for (const auto& p : {a, b}) {
        const auto r = carr_cli({"simulate", "--omega", "0.2", "--alpha", "0.3", "--beta", "0.4", "--psi1", "0.5",
                                 "--gb2", "1,1,2", "--T", "2000", "--seed", "7", "--out", p});
        REQUIRE(r.code == 0);
    }
    CHECK(slurp(a) == slurp(b));
    const auto rows = read_csv(a);
    CHECK(rows.size() == 2001);
    CHECK(rows[0] == std::vector<std::string>{"t", "range"});
    const json meta = read_json(a + ".json");
    CHECK(meta["rng"] == "boost::random::mt19937_64");
    CHECK(meta["seed"] == 7);
    CHECK(meta["schema_version"] == 1);

    CHECK(carr_cli({"simulate", "--T", "0", "--out", tmp("never.csv")}).code != 0);
    CHECK(carr_cli({"simulate", "--T", "10", "--lognormal", "0.5", "--constant", "--out", tmp("never.csv")}).code != 0);
    CHECK(carr_cli({"simulate", "--T", "10", "--alpha", "-0.3", "--out", tmp("never.csv")}).code != 0);
    CHECK(carr_cli({"simulate", "--T", "10", "--out", "/nonexistent-dir/x.csv"}).code != 0);
    CHECK(carr_cli({}).code != 0);
    CHECK(carr_cli({"--help"}).code == 0);
}

TEST_CASE("fit round trip") {
    const auto data = tmp("fit_data.csv");
    simulate_file(data, 2000, 3);
    const auto js = tmp("fit.json"), csv = tmp("fit.csv");
    const auto r = carr_cli({"fit", "--input", data, "--method", "cef", "--out-json", js, "--out-csv", csv});
    REQUIRE(r.code == 0);
    const json j = read_json(js);
    for (const char* key : {"order", "method", "estimates", "std_errors", "sigma_eps", "rmspe", "mape", "converged",
                            "iterations", "seed", "schema_version", "info_matrix", "presample", "n_obs"})
        CHECK(j.contains(key));
    CHECK_FALSE(j.contains("loglik"));
    CHECK(j["converged"] == true);
    CHECK(j["seed"] == 3);
    const std::vector<double> truth{0.2, 0.3, 0.4};
    const std::vector<double> est{j["estimates"]["omega"], j["estimates"]["alpha"][0], j["estimates"]["beta"][0]};
    const std::vector<double> se{j["std_errors"]["omega"], j["std_errors"]["alpha"][0], j["std_errors"]["beta"][0]};
    for (int k = 0; k < 3; ++k) CHECK(std::abs(est[k] - truth[k]) < 3.0 * se[k]);

    const auto rows = read_csv(csv);
    CHECK(rows[0] == std::vector<std::string>{"t", "range", "psi_hat", "residual"});
    CHECK(rows.size() == 2001);

    const auto stored = carr::cli::fit_from_json(j);
    CHECK(stored.fit.params.omega == est[0]);
    CHECK(stored.n_obs == 2000);

    const auto ml = carr_cli({"fit", "--input", data, "--method", "ml", "--out-json", tmp("fit_ml.json")});
    REQUIRE(ml.code == 0);
    const json jm = read_json(tmp("fit_ml.json"));
    CHECK(jm.contains("loglik"));
    CHECK(jm.contains("gb2_shape"));
}

TEST_CASE("over-parameterised fit shows an insignificant second lag") {
    const auto data = tmp("fit21.csv");
    REQUIRE(carr_cli({"simulate", "--omega", "0.05", "--alpha", "0.15", "--beta", "0.8", "--lognormal", "0.5", "--T",
                      "2000", "--seed", "11", "--out", data})
                .code == 0);
    const auto js = tmp("fit21.json");
    REQUIRE(carr_cli({"fit", "--input", data, "--method", "cef", "--order", "2,1", "--out-json", js}).code == 0);
    const json j = read_json(js);
    const double a2 = j["estimates"]["alpha"][1], se2 = j["std_errors"]["alpha"][1];
    CHECK(std::abs(a2 / se2) < 2.0);
}

TEST_CASE("fit input errors") {
    const auto bad = tmp("bad_hl.csv");
    {
        std::ofstream o(bad);
        o << "date,high,low\n2020-01-01,10,9\n2020-01-02,10,11\n";
    }
    const auto r = carr_cli({"fit", "--input", bad, "--out-json", tmp("bad.json")});
    CHECK(r.code != 0);
    CHECK(r.err.find(":3") != std::string::npos);
    CHECK(carr_cli({"fit", "--input", tmp("does_not_exist.csv"), "--out-json", tmp("bad.json")}).code != 0);
    CHECK(carr_cli({"fit", "--input", bad, "--method", "ols", "--out-json", tmp("bad.json")}).code != 0);
}

TEST_CASE("forecast from a fit") {
    const auto data = tmp("fc_data.csv");
    simulate_file(data, 1014, 21);
    const auto js = tmp("fc_fit.json");
    REQUIRE(carr_cli({"fit", "--input", data, "--holdout", "14", "--out-json", js}).code == 0);
    const auto out = tmp("fc.csv");
    const auto r = carr_cli({"forecast", "--fit", js, "--input", data, "--out", out});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("coverage") != std::string::npos);
    const auto rows = read_csv(out);
    CHECK(rows[0] == std::vector<std::string>{"h", "point", "var", "lo95", "hi95", "actual"});
    REQUIRE(rows.size() == 15);
    std::size_t inside = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double p = std::stod(rows[i][1]), lo = std::stod(rows[i][3]), hi = std::stod(rows[i][4]);
        const double a = std::stod(rows[i][5]);
        CHECK(lo <= p);
        CHECK(p <= hi);
        CHECK(lo >= 0.0);
        inside += a >= lo && a <= hi;
    }
    const auto pos = r.out.find("coverage = ");
    REQUIRE(pos != std::string::npos);
    CHECK(std::stod(r.out.substr(pos + 11)) == doctest::Approx(inside / 14.0).epsilon(1e-5));

    CHECK(carr_cli({"forecast", "--fit", js, "--input", data, "--horizon", "20", "--out", tmp("fc2.csv")}).code != 0);
}

TEST_CASE("flat forecast from a no-dynamics fit") {
    carr::FitResult f;
    f.method = carr::Method::LEF;
    f.params = carr::CarrParams{0.9, {0.0}, {0.0}};
    f.error_moments = {1.0, 0.4, 0.0, 0.0};
    f.info_matrix = Eigen::MatrixXd::Identity(3, 3) * 1e4;
    f.std_errors = Eigen::VectorXd::Constant(3, 0.01);
    f.presample = 1.0;
    const auto js = tmp("flat.json");
    carr::io::write_text_file(js, carr::cli::fit_to_json(f, 5, 0).dump(2));
    const auto data = tmp("flat.csv");
    carr::io::write_text_file(data, "t,range\n1,0.8\n2,1.2\n3,0.9\n4,1.1\n5,0.7\n");
    REQUIRE(carr_cli({"forecast", "--fit", js, "--input", data, "--horizon", "6", "--out", tmp("flat_fc.csv")}).code == 0);
    const auto rows = read_csv(tmp("flat_fc.csv"));
    CHECK(rows[0].size() == 5);
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i][1] == "0.9");
}

TEST_CASE("diagnose") {
    const auto iid = tmp("iid.csv");
    REQUIRE(carr_cli({"simulate", "--alpha", "0", "--beta", "", "--omega", "1", "--lognormal", "0.5", "--T", "1500",
                      "--seed", "5", "--out", iid})
                .code == 0);
    const auto js = tmp("diag.json"), acf = tmp("diag_acf.csv");
    REQUIRE(carr_cli({"diagnose", "--input", iid, "--out-json", js, "--out-acf", acf}).code == 0);
    const json j = read_json(js);
    CHECK(j["ljung_box"][0]["lag"] == 6);
    CHECK(j["ljung_box"][0]["p_value"].get<double>() > 0.05);
    const auto rows = read_csv(acf);
    CHECK(rows.size() == 32);
    CHECK(rows[1] == std::vector<std::string>{"0", "1"});

    const auto persistent = tmp("persist.csv");
    REQUIRE(carr_cli({"simulate", "--omega", "0.0358", "--alpha", "0.1569", "--beta", "0.8065", "--lognormal", "0.4",
                      "--T", "1500", "--seed", "6", "--out", persistent})
                .code == 0);
    REQUIRE(carr_cli({"diagnose", "--input", persistent, "--out-json", js}).code == 0);
    CHECK(read_json(js)["ljung_box"][0]["p_value"].get<double>() < 0.001);
}

TEST_CASE("mc") {
    const auto a = tmp("mc_a.csv"), b = tmp("mc_b.csv");
    REQUIRE(carr_cli({"mc", "--design", "gb2", "--N", "50", "--T", "500", "--seed", "1", "--out", a, "--hist-dir",
                      tmp("hist"), "--bins", "12"})
                .code == 0);
    REQUIRE(carr_cli({"mc", "--design", "gb2", "--N", "50", "--T", "500", "--seed", "1", "--out", b, "--threads", "2"})
                .code == 0);
    CHECK(slurp(a) == slurp(b));
    const auto rows = read_csv(a);
    CHECK(rows.size() == 10);
    CHECK(rows[0][0] == "T");
    CHECK(rows[1][1] == "ml");
    CHECK(rows[1][8].empty());  // no SE column for ML
    CHECK_FALSE(rows[9][8].empty());
    CHECK(fs::exists(tmp("hist") + "/hist_T500_cef_omega.csv"));
    CHECK(carr_cli({"mc", "--design", "uniform", "--N", "5", "--out", tmp("mc_c.csv")}).code != 0);
}
