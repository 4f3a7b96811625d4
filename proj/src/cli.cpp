#include "carr/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "CLI11.hpp"

#include "carr/csv_io.hpp"
#include "carr/diagnostics.hpp"
#include "carr/distributions.hpp"
#include "carr/mc_study.hpp"
#include "carr/rng.hpp"

namespace carr::cli {

using nlohmann::json;

namespace {

// NaN is written as null and read back as NaN
double num(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json theta_json(const Eigen::VectorXd& theta, std::size_t u, std::size_t v) {
    json j;
    j["omega"] = theta[0];
    json a = json::array(), b = json::array();
    for (std::size_t i = 0; i < u; ++i) a.push_back(theta[static_cast<Eigen::Index>(1 + i)]);
    for (std::size_t i = 0; i < v; ++i) b.push_back(theta[static_cast<Eigen::Index>(1 + u + i)]);
    j["alpha"] = a;
    j["beta"] = b;
    return j;
}

std::vector<std::size_t> parse_sizes(const std::string& text, const char* what) {
    std::vector<std::size_t> out;
    for (double d : io::parse_double_list(text)) {
        if (!(d >= 0.0) || d != std::floor(d))
            throw CLI::ValidationError(std::string(what), "'" + text + "' is not a list of non-negative integers");
        out.push_back(static_cast<std::size_t>(d));
    }
    return out;
}

std::pair<std::size_t, std::size_t> parse_order(const std::string& text) {
    const auto o = parse_sizes(text, "--order");
    if (o.size() != 2 || o[0] < 1) throw CLI::ValidationError("--order", "expected u,v with u >= 1, got '" + text + "'");
    return {o[0], o[1]};
}

std::vector<double> parse_coefs(const std::string& text, const char* what) {
    try {
        return io::parse_double_list(text);
    } catch (const std::invalid_argument& e) {
        throw CLI::ValidationError(what, e.what());
    }
}

std::string sidecar_path(const std::string& csv) { return csv + ".json"; }

// ---------------------------------------------------------------------------

struct ErrorFlags {
    std::string gb2 = "1,1,2";
    double lognormal = 0.0;
    bool constant = false;
};

ErrorDistribution make_errors(const ErrorFlags& f, CLI::Option* ln_opt, CLI::Option* const_opt, json& spec) {
    if ((ln_opt && ln_opt->count()) && !(f.lognormal > 0.0))
        throw CLI::ValidationError("--lognormal", "sigma must be positive");
    if (ln_opt && ln_opt->count()) {
        spec = {{"type", "lognormal"}, {"sigma", f.lognormal}};
        return ErrorDistribution::standardized_lognormal(f.lognormal);
    }
    if (const_opt && const_opt->count()) {
        spec = {{"type", "constant"}, {"value", 1.0}};
        return ErrorDistribution::constant(1.0);
    }
    const auto s = parse_coefs(f.gb2, "--gb2");
    if (s.size() != 3) throw CLI::ValidationError("--gb2", "expected a,p,q");
    try {
        auto d = ErrorDistribution::standardized_gb2(s[0], s[1], s[2]);
        spec = {{"type", "gb2"}, {"a", s[0]}, {"p", s[1]}, {"q", s[2]}};
        return d;
    } catch (const std::exception& e) {
        throw CLI::ValidationError("--gb2", e.what());
    }
}

CarrParams make_params(double omega, const std::string& alpha, const std::string& beta) {
    CarrParams p{omega, parse_coefs(alpha, "--alpha"), parse_coefs(beta, "--beta")};
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw CLI::ValidationError("parameters", e.what());
    }
    return p;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    double omega = 0.2;
    std::string alpha = "0.3", beta = "0.4";
    double psi1 = 0.5;
    ErrorFlags errors;
    std::size_t T = 0;
    std::uint64_t seed = 1;
    std::string out, meta;
};

int cmd_simulate(const SimulateArgs& a, CLI::Option* ln, CLI::Option* cst,
                 std::ostream& out) {
    const CarrParams params = make_params(a.omega, a.alpha, a.beta);
    json spec;
    const ErrorDistribution errors = make_errors(a.errors, ln, cst, spec);
    if (!(a.psi1 > 0.0)) throw CLI::ValidationError("--psi1", "must be positive");

    const RangeSeries series = simulate(params, errors, a.T, a.psi1, a.seed);
    std::ostringstream csv;
    csv << "t,range\n";
    for (std::size_t t = 0; t < series.size(); ++t) csv << (t + 1) << ',' << io::fmt6(series[t]) << '\n';
    io::write_text_file(a.out, csv.str());

    json meta;
    meta["schema_version"] = kSchemaVersion;
    meta["command"] = "simulate";
    meta["params"] = theta_json(params.to_vector(), params.u(), params.v());
    meta["psi1"] = a.psi1;
    meta["errors"] = spec;
    meta["errors_description"] = errors.describe();
    meta["T"] = a.T;
    meta["seed"] = a.seed;
    meta["rng"] = kRngAlgorithm;
    const std::string meta_path = a.meta.empty() ? sidecar_path(a.out) : a.meta;
    io::write_text_file(meta_path, meta.dump(2) + "\n");
    out << "wrote " << a.T << " ranges to " << a.out << " (design in " << meta_path << ")\n";
    return kOk;
}

// ---------------------------------------------------------------------------

struct FitArgs {
    std::string input, out_json, out_csv;
    std::string method = "cef";
    std::string order = "1,1";
    std::size_t holdout = 0;
    bool unconstrained = false;
    std::size_t max_iter = 200;
    double tol = 1e-8;
    double presample = 0.0;
};

std::optional<std::uint64_t> sidecar_seed(const std::string& input) {
    std::ifstream in(sidecar_path(input));
    if (!in) return std::nullopt;
    try {
        const json j = json::parse(in);
        if (j.contains("seed")) return j["seed"].get<std::uint64_t>();
    } catch (const std::exception&) {
    }
    return std::nullopt;
}

int cmd_fit(const FitArgs& a, bool has_presample, std::ostream& out, std::ostream& err) {
    FitConfig cfg;
    std::tie(cfg.u, cfg.v) = parse_order(a.order);
    try {
        cfg.method = method_from_string(a.method);
    } catch (const std::invalid_argument& e) {
        throw CLI::ValidationError("--method", e.what());
    }
    cfg.max_iterations = a.max_iter;
    cfg.tolerance = a.tol;
    cfg.bounds.nonnegative = !a.unconstrained;
    if (has_presample) cfg.presample = a.presample;
    cfg.validate();

    const auto data = io::read_range_csv_file(a.input);
    const RangeSeries& full = data.series;
    if (a.holdout >= full.size())
        throw std::invalid_argument("holdout of " + std::to_string(a.holdout) + " leaves no data to fit (" +
                                    std::to_string(full.size()) + " rows)");
    const RangeSeries sample = full.head(full.size() - a.holdout);

    FitResult fr;
    bool converged = true;
    try {
        fr = fit(sample, cfg);
    } catch (const FitError& e) {
        fr = e.best();
        converged = false;
        err << "warning: " << e.what() << "; writing the best iterate with converged=false\n";
    }
    fr.convergence.converged = converged;

    json j = fit_to_json(fr, sample.size(), a.holdout, sidecar_seed(a.input));
    j["input"] = a.input;
    io::write_text_file(a.out_json, j.dump(2) + "\n");

    const std::string csv_path = a.out_csv.empty() ? a.out_json + ".csv" : a.out_csv;
    std::ostringstream csv;
    csv << "t,range,psi_hat,residual\n";
    const auto& labels = sample.labels();
    for (std::size_t t = 0; t < sample.size(); ++t) {
        csv << (labels.empty() ? std::to_string(t + 1) : labels[t]) << ',' << io::fmt6(sample[t]) << ',';
        if (t < fr.psi_hat.psi.size())
            csv << io::fmt6(fr.psi_hat.psi[t]) << ',' << io::fmt6(fr.residuals[t]);
        else
            csv << ',';
        csv << '\n';
    }
    io::write_text_file(csv_path, csv.str());

    const auto names = fr.params.names();
    const Eigen::VectorXd th = fr.params.to_vector();
    out << "CARR(" << cfg.u << "," << cfg.v << ") " << to_string(cfg.method) << " fit on " << sample.size()
        << " observations" << (converged ? "" : " (NOT converged)") << "\n";
    for (std::size_t i = 0; i < names.size(); ++i) {
        out << "  " << names[i] << " = " << io::fmt6(th[static_cast<Eigen::Index>(i)]);
        if (fr.std_errors.size() == th.size()) out << "  (se " << io::fmt6(fr.std_errors[static_cast<Eigen::Index>(i)]) << ")";
        out << "\n";
    }
    out << "  sigma_eps = " << io::fmt6(fr.error_moments.sigma) << "  RMSPE = " << io::fmt6(fr.rmspe)
        << "  MAPE = " << io::fmt6(fr.mape) << "\n";
    for (const auto& w : fr.convergence.warnings) err << "warning: " << w << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------

struct ForecastArgs {
    std::string fit_json, input, out;
    std::size_t horizon = 14;
};

int cmd_forecast(const ForecastArgs& a, std::ostream& out) {
    std::ifstream in(a.fit_json);
    if (!in) throw std::runtime_error("cannot open " + a.fit_json);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(a.fit_json + ": " + e.what());
    }
    const StoredFit stored = fit_from_json(j);
    const auto data = io::read_range_csv_file(a.input);
    if (data.series.size() < stored.n_obs)
        throw std::invalid_argument(a.input + " has " + std::to_string(data.series.size()) +
                                    " rows but the fit used " + std::to_string(stored.n_obs));
    const RangeSeries sample = data.series.head(stored.n_obs);
    const std::size_t available = data.series.size() - stored.n_obs;
    if (available > 0 && a.horizon > available)
        throw std::invalid_argument("horizon " + std::to_string(a.horizon) + " exceeds the " +
                                    std::to_string(available) + " held-out observations available for coverage");

    ForecastResult fc = forecast(stored.fit, sample, a.horizon);
    fc = forecast_variance(stored.fit, std::move(fc));
    if (available > 0) {
        const auto tail = data.series.values().subspan(stored.n_obs, a.horizon);
        attach_actuals(fc, tail);
    }

    std::ostringstream csv;
    csv << "h,point,var,lo95,hi95" << (fc.actual ? ",actual" : "") << "\n";
    for (std::size_t h = 0; h < fc.horizon; ++h) {
        csv << (h + 1) << ',' << io::fmt6(fc.point[h]) << ',' << io::fmt6(fc.variance[h]) << ','
            << io::fmt6(fc.lower[h]) << ',' << io::fmt6(fc.upper[h]);
        if (fc.actual) csv << ',' << io::fmt6((*fc.actual)[h]);
        csv << '\n';
    }
    io::write_text_file(a.out, csv.str());

    out << "wrote " << fc.horizon << "-step forecast to " << a.out << "\n";
    if (fc.actual) {
        const auto pm = prediction_metrics(*fc.actual, fc.point);
        out << "RMSFE = " << io::fmt6(pm.rmse) << "  MAFE = " << io::fmt6(pm.mae)
            << "  coverage = " << io::fmt6(*fc.coverage) << "\n";
    }
    return kOk;
}

// ---------------------------------------------------------------------------

struct DiagnoseArgs {
    std::string input, out_json, out_acf;
    std::size_t lags = 30;
};

int cmd_diagnose(const DiagnoseArgs& a, std::ostream& out) {
    const auto data = io::read_range_csv_file(a.input);
    const DiagnosticsReport rep = summarize(data.series, a.lags, {6, 12});

    json j;
    j["schema_version"] = kSchemaVersion;
    j["command"] = "diagnose";
    j["input"] = a.input;
    j["n"] = rep.n;
    j["mean"] = rep.mean;
    j["median"] = rep.median;
    j["variance"] = rep.variance;
    j["std_dev"] = std::sqrt(rep.variance);
    j["skewness"] = rep.skewness;
    j["excess_kurtosis"] = rep.kurtosis;
    j["min"] = rep.min;
    j["max"] = rep.max;
    json lb = json::array();
    for (const auto& q : rep.ljung_box) lb.push_back({{"lag", q.lag}, {"q", q.q}, {"p_value", q.p_value}});
    j["ljung_box"] = lb;
    j["acf"] = rep.acf;
    io::write_text_file(a.out_json, j.dump(2) + "\n");

    const std::string acf_path = a.out_acf.empty() ? a.out_json + ".acf.csv" : a.out_acf;
    std::ostringstream csv;
    csv << "lag,acf\n";
    for (std::size_t k = 0; k < rep.acf.size(); ++k) csv << k << ',' << io::fmt6(rep.acf[k]) << '\n';
    io::write_text_file(acf_path, csv.str());

    out << "n = " << rep.n << "  mean = " << io::fmt6(rep.mean) << "  median = " << io::fmt6(rep.median)
        << "  sd = " << io::fmt6(std::sqrt(rep.variance)) << "\n"
        << "skewness = " << io::fmt6(rep.skewness) << "  excess kurtosis = " << io::fmt6(rep.kurtosis)
        << "  min = " << io::fmt6(rep.min) << "  max = " << io::fmt6(rep.max) << "\n";
    for (const auto& q : rep.ljung_box)
        out << "Q" << q.lag << " = " << io::fmt6(q.q) << "  (p = " << io::fmt6(q.p_value) << ")\n";
    return kOk;
}

// ---------------------------------------------------------------------------

struct McArgs {
    std::string design = "gb2";
    std::string gb2 = "1,1,2";
    double sigma = 0.5;
    double omega = 0.2;
    std::string alpha = "0.3", beta = "0.4";
    double psi1 = 0.5;
    std::size_t N = 100;
    std::string T = "2000";
    std::uint64_t seed = 1;
    std::string methods = "ml,lef,cef";
    std::string out, records, hist_dir;
    std::size_t bins = 30;
    int threads = 0;
};

int cmd_mc(const McArgs& a, std::ostream& out) {
    StudyDesign d;
    d.truth = make_params(a.omega, a.alpha, a.beta);
    d.psi1 = a.psi1;
    if (a.design == "gb2") {
        const auto s = parse_coefs(a.gb2, "--gb2");
        if (s.size() != 3) throw CLI::ValidationError("--gb2", "expected a,p,q");
        d.errors = ErrorDistribution::standardized_gb2(s[0], s[1], s[2]);
    } else if (a.design == "lognormal") {
        if (!(a.sigma > 0.0)) throw CLI::ValidationError("--sigma", "must be positive");
        d.errors = ErrorDistribution::standardized_lognormal(a.sigma);
    } else {
        throw CLI::ValidationError("--design", "expected gb2 or lognormal");
    }
    d.T_grid = parse_sizes(a.T, "--T");
    d.replications = a.N;
    d.base_seed = a.seed;
    d.methods.clear();
    std::stringstream ms(a.methods);
    for (std::string m; std::getline(ms, m, ',');) {
        try {
            d.methods.push_back(method_from_string(m));
        } catch (const std::invalid_argument& e) {
            throw CLI::ValidationError("--methods", e.what());
        }
    }
    d.fit.u = d.truth.u();
    d.fit.v = d.truth.v();
    d.threads = a.threads;
    try {
        d.validate();
    } catch (const std::invalid_argument& e) {
        throw CLI::ValidationError("design", e.what());
    }

    const StudyTable table = run_study(d);

    std::ostringstream csv;
    csv << "T,method,param,truth,mean,bias,sd,rmse,se,n_ok,n_failed\n";
    for (const auto& r : table.rows) {
        csv << r.T << ',' << to_string(r.method) << ',' << r.parameter << ',' << io::fmt6(r.truth) << ','
            << io::fmt6(r.mean) << ',' << io::fmt6(r.bias) << ',' << io::fmt6(r.sd) << ',' << io::fmt6(r.rmse)
            << ',' << (r.se ? io::fmt6(*r.se) : std::string()) << ',' << r.n_ok << ',' << r.n_failed << '\n';
    }
    io::write_text_file(a.out, csv.str());

    if (!a.records.empty()) {
        std::ostringstream rc;
        rc << "T,method,replication,seed,ok";
        for (const auto& n : d.truth.names()) rc << ',' << n << ",se_" << n;
        rc << ",info_gain_min_eig,error\n";
        for (const auto& r : table.records) {
            rc << r.T << ',' << to_string(r.method) << ',' << r.replication << ',' << r.seed << ',' << (r.ok ? 1 : 0);
            for (Eigen::Index p = 0; p < static_cast<Eigen::Index>(d.truth.size()); ++p) {
                rc << ',' << (r.estimate.size() > p ? io::fmt6(r.estimate[p]) : "") << ','
                   << (r.std_error.size() > p ? io::fmt6(r.std_error[p]) : "");
            }
            std::string msg = r.error;
            std::replace(msg.begin(), msg.end(), ',', ';');
            rc << ',' << io::fmt6(r.info_gain_min_eigenvalue) << ',' << msg << '\n';
        }
        io::write_text_file(a.records, rc.str());
    }

    std::size_t nhist = 0;
    if (!a.hist_dir.empty()) {
        std::filesystem::create_directories(a.hist_dir);
        for (std::size_t T : d.T_grid) {
            for (Method m : d.methods) {
                for (const auto& h : export_histograms(table, d.truth, T, m, a.bins)) {
                    std::ostringstream hc;
                    hc << "lower,upper,count,normal_density,normal_count\n";
                    for (std::size_t b = 0; b < h.count.size(); ++b)
                        hc << io::fmt6(h.lower[b]) << ',' << io::fmt6(h.upper[b]) << ',' << h.count[b] << ','
                           << io::fmt6(h.normal_density[b]) << ',' << io::fmt6(h.normal_count[b]) << '\n';
                    const auto path = std::filesystem::path(a.hist_dir) /
                                      ("hist_T" + std::to_string(T) + "_" + to_string(m) + "_" + h.parameter + ".csv");
                    io::write_text_file(path.string(), hc.str());
                    ++nhist;
                }
            }
        }
    }

    out << "wrote " << table.rows.size() << " rows to " << a.out;
    if (nhist) out << " and " << nhist << " histograms to " << a.hist_dir;
    out << "\nminimum eigenvalue of I_cef - I_lef: " << io::fmt6(table.min_info_gain_eigenvalue) << "\n";
    return kOk;
}

}  // namespace

json fit_to_json(const FitResult& fr, std::size_t n_obs, std::size_t holdout, std::optional<std::uint64_t> seed) {
    const std::size_t u = fr.params.u(), v = fr.params.v();
    json j;
    j["schema_version"] = kSchemaVersion;
    j["command"] = "fit";
    j["order"] = {u, v};
    j["method"] = to_string(fr.method);
    j["estimates"] = theta_json(fr.params.to_vector(), u, v);
    const Eigen::Index k = static_cast<Eigen::Index>(fr.params.size());
    const Eigen::VectorXd se = fr.std_errors.size() == k
                                   ? fr.std_errors
                                   : Eigen::VectorXd::Constant(k, std::numeric_limits<double>::quiet_NaN());
    j["std_errors"] = theta_json(se, u, v);
    j["sigma_eps"] = fr.error_moments.sigma;
    j["moments"] = {{"mu", fr.error_moments.mu},
                    {"sigma", fr.error_moments.sigma},
                    {"gamma", fr.error_moments.gamma},
                    {"kappa", fr.error_moments.kappa}};
    if (fr.gb2) {
        j["gb2_shape"] = {{"a", fr.gb2->a}, {"p", fr.gb2->p}, {"q", fr.gb2->q}, {"b", fr.gb2->b}};
        if (fr.gb2_std_errors)
            j["gb2_shape"]["std_errors"] = {{"a", (*fr.gb2_std_errors)[0]},
                                            {"p", (*fr.gb2_std_errors)[1]},
                                            {"q", (*fr.gb2_std_errors)[2]}};
    }
    j["rmspe"] = fr.rmspe;
    j["mape"] = fr.mape;
    if (fr.loglik) j["loglik"] = *fr.loglik;
    j["converged"] = fr.convergence.converged;
    j["iterations"] = fr.convergence.outer_iterations;
    j["inner_iterations"] = fr.convergence.inner_iterations;
    j["equation_norm"] = fr.convergence.equation_norm;
    j["warnings"] = fr.convergence.warnings;
    if (seed) j["seed"] = *seed;
    json info = json::array();
    for (Eigen::Index r = 0; r < fr.info_matrix.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < fr.info_matrix.cols(); ++c) row.push_back(fr.info_matrix(r, c));
        info.push_back(row);
    }
    j["info_matrix"] = info;
    j["presample"] = fr.presample;
    j["n_obs"] = n_obs;
    j["holdout"] = holdout;
    return j;
}

StoredFit fit_from_json(const json& j) {
    try {
        if (j.at("schema_version").get<int>() != kSchemaVersion)
            throw std::runtime_error("unsupported fit schema version " + j.at("schema_version").dump());
        StoredFit s;
        FitResult& f = s.fit;
        f.method = method_from_string(j.at("method").get<std::string>());
        const auto& e = j.at("estimates");
        f.params.omega = e.at("omega").get<double>();
        f.params.alpha = e.at("alpha").get<std::vector<double>>();
        f.params.beta = e.at("beta").get<std::vector<double>>();
        const auto& m = j.at("moments");
        f.error_moments = {num(m.at("mu")), num(m.at("sigma")), num(m.at("gamma")), num(m.at("kappa"))};
        const auto& info = j.at("info_matrix");
        const auto k = static_cast<Eigen::Index>(f.params.size());
        if (info.size() != static_cast<std::size_t>(k))
            throw std::runtime_error("info_matrix has " + std::to_string(info.size()) + " rows, expected " +
                                     std::to_string(k));
        f.info_matrix.resize(k, k);
        for (Eigen::Index r = 0; r < k; ++r) {
            if (info[static_cast<std::size_t>(r)].size() != static_cast<std::size_t>(k))
                throw std::runtime_error("info_matrix is not square");
            for (Eigen::Index c = 0; c < k; ++c)
                f.info_matrix(r, c) = num(info[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]);
        }
        f.presample = j.at("presample").get<double>();
        f.convergence.converged = j.at("converged").get<bool>();
        s.n_obs = j.at("n_obs").get<std::size_t>();
        s.holdout = j.value("holdout", std::size_t{0});
        return s;
    } catch (const json::exception& ex) {
        throw std::runtime_error(std::string("malformed fit JSON: ") + ex.what());
    }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"CARR range-volatility models: simulation, ML/LEF/CEF fitting, forecasts and Monte Carlo studies",
                 args.empty() ? "carr" : args[0]};
    app.require_subcommand(1);

    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "Simulate a CARR range series");
    sim->add_option("--omega", sa.omega, "omega")->capture_default_str();
    sim->add_option("--alpha", sa.alpha, "comma-separated alpha_1..alpha_u")->capture_default_str();
    sim->add_option("--beta", sa.beta, "comma-separated beta_1..beta_v (may be empty)")->capture_default_str();
    sim->add_option("--psi1", sa.psi1, "pre-sample psi and r level")->capture_default_str();
    auto* sim_gb2 = sim->add_option("--gb2", sa.errors.gb2, "standardized GB2 shapes a,p,q")->capture_default_str();
    auto* sim_ln = sim->add_option("--lognormal", sa.errors.lognormal, "standardized lognormal sigma");
    auto* sim_cst = sim->add_flag("--constant", sa.errors.constant, "errors identically one");
    sim_gb2->excludes(sim_ln)->excludes(sim_cst);
    sim_ln->excludes(sim_cst);
    sim->add_option("--T", sa.T, "series length")->required()->check(CLI::PositiveNumber);
    sim->add_option("--seed", sa.seed, "RNG seed")->capture_default_str();
    sim->add_option("--out", sa.out, "output CSV (t,range)")->required();
    sim->add_option("--meta", sa.meta, "design sidecar JSON (default: <out>.json)");

    FitArgs fa;
    auto* fit_cmd = app.add_subcommand("fit", "Fit a CARR(u,v) model by ML, LEF or CEF");
    fit_cmd->add_option("--input", fa.input, "range CSV (t,range / date,range / date,high,low)")
        ->required()
        ->check(CLI::ExistingFile);
    fit_cmd->add_option("--method", fa.method, "ml, lef or cef")->capture_default_str();
    fit_cmd->add_option("--order", fa.order, "u,v")->capture_default_str();
    fit_cmd->add_option("--holdout", fa.holdout, "trailing observations excluded from the fit")->capture_default_str();
    fit_cmd->add_flag("--unconstrained", fa.unconstrained, "allow negative alpha/beta (only omega > 0, psi > 0 enforced)");
    fit_cmd->add_option("--max-iter", fa.max_iter, "outer iteration limit")->capture_default_str()->check(CLI::PositiveNumber);
    fit_cmd->add_option("--tol", fa.tol, "parameter-change tolerance")->capture_default_str()->check(CLI::PositiveNumber);
    auto* fit_pre = fit_cmd->add_option("--presample", fa.presample, "pre-sample psi and r (default: sample mean)")
                        ->check(CLI::PositiveNumber);
    fit_cmd->add_option("--out-json", fa.out_json, "fit JSON")->required();
    fit_cmd->add_option("--out-csv", fa.out_csv, "fitted series CSV (default: <out-json>.csv)");

    ForecastArgs fc;
    auto* fc_cmd = app.add_subcommand("forecast", "Multi-step forecasts with 95% limits from a fit JSON");
    fc_cmd->add_option("--fit", fc.fit_json, "fit JSON written by `fit`")->required()->check(CLI::ExistingFile);
    fc_cmd->add_option("--input", fc.input, "the CSV the fit was computed on")->required()->check(CLI::ExistingFile);
    fc_cmd->add_option("--horizon", fc.horizon, "forecast steps")->capture_default_str()->check(CLI::PositiveNumber);
    fc_cmd->add_option("--out", fc.out, "forecast CSV")->required();

    DiagnoseArgs da;
    auto* dg = app.add_subcommand("diagnose", "Summary statistics, Ljung-Box tests and ACF");
    dg->add_option("--input", da.input, "range CSV")->required()->check(CLI::ExistingFile);
    dg->add_option("--lags", da.lags, "ACF lags")->capture_default_str()->check(CLI::PositiveNumber);
    dg->add_option("--out-json", da.out_json, "diagnostics JSON")->required();
    dg->add_option("--out-acf", da.out_acf, "ACF CSV (default: <out-json>.acf.csv)");

    McArgs ma;
    auto* mc = app.add_subcommand("mc", "Monte Carlo study of the ML, LEF and CEF estimators");
    mc->add_option("--design", ma.design, "gb2 or lognormal")->capture_default_str();
    mc->add_option("--gb2", ma.gb2, "GB2 shapes a,p,q")->capture_default_str();
    mc->add_option("--sigma", ma.sigma, "lognormal sigma")->capture_default_str();
    mc->add_option("--omega", ma.omega)->capture_default_str();
    mc->add_option("--alpha", ma.alpha)->capture_default_str();
    mc->add_option("--beta", ma.beta)->capture_default_str();
    mc->add_option("--psi1", ma.psi1)->capture_default_str();
    mc->add_option("--N", ma.N, "replications")->capture_default_str()->check(CLI::Range(2, 1000000));
    mc->add_option("--T", ma.T, "comma-separated sample sizes")->capture_default_str();
    mc->add_option("--seed", ma.seed, "base seed; replication i uses seed + i")->capture_default_str();
    mc->add_option("--methods", ma.methods)->capture_default_str();
    mc->add_option("--out", ma.out, "summary CSV")->required();
    mc->add_option("--records", ma.records, "per-replication CSV");
    mc->add_option("--hist-dir", ma.hist_dir, "directory for histogram CSVs");
    mc->add_option("--bins", ma.bins)->capture_default_str()->check(CLI::PositiveNumber);
    mc->add_option("--threads", ma.threads, "worker threads (overrides CARR_NUM_THREADS)")->check(CLI::NonNegativeNumber);

    // CLI11 consumes a reversed argument vector without the program name
    std::vector<std::string> rev(args.begin() + (args.empty() ? 0 : 1), args.end());
    std::reverse(rev.begin(), rev.end());
    try {
        app.parse(rev);
        if (*sim) return cmd_simulate(sa, sim_ln, sim_cst, out);
        if (*fit_cmd) return cmd_fit(fa, fit_pre->count() > 0, out, err);
        if (*fc_cmd) return cmd_forecast(fc, out);
        if (*dg) return cmd_diagnose(da, out);
        if (*mc) return cmd_mc(ma, out);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        err << "run with --help for usage\n";
        return kUsageError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kUsageError;
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args(argv, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace carr::cli
