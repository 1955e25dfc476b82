#pragma once

// The fit / simulate / bootstrap commands as library calls that return
// their textual output, so the executable stays a thin argument parser and
// the outputs are testable byte for byte.

#include <cstdint>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tobitm/bootstrap.hpp"
#include "tobitm/core_data.hpp"
#include "tobitm/covariance.hpp"
#include "tobitm/csv.hpp"
#include "tobitm/error.hpp"
#include "tobitm/loss.hpp"
#include "tobitm/m_estimator.hpp"
#include "tobitm/monte_carlo.hpp"
#include "tobitm/nelder_mead.hpp"
#include "tobitm/parallel.hpp"

namespace tobitm {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kReportSchemaVersion = 1;

enum ExitCode : int { kExitOk = 0, kExitUserError = 1, kExitNumerical = 2 };

inline int exit_code_for(const Error& e) {
    return e.kind() == ErrorKind::invalid_input ? kExitUserError : kExitNumerical;
}

struct FitRequest {
    std::string csv_path;
    ColumnRoles roles;
    std::string loss = "clad";
    double threshold = 0.0;
    double ci_level = 0.95;
    SimplexConfig simplex;
    std::uint64_t seed = 0;  // recorded; the fit itself is deterministic
    bool standardize = false;
};

inline std::vector<std::string> coefficient_names(const ColumnNames& nm) {
    std::vector<std::string> out{"(intercept)"};
    out.insert(out.end(), nm.exogenous.begin(), nm.exogenous.end());
    out.push_back(nm.endogenous);
    out.push_back("residual");
    return out;
}

inline nlohmann::json matrix_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline nlohmann::json error_json(const Error& e) {
    return {{"schema_version", kReportSchemaVersion},
            {"error",
             {{"kind", e.kind() == ErrorKind::invalid_input ? "invalid_input" : "numerical"},
              {"module", e.module()},
              {"message", e.what()}}}};
}

// Fits an already loaded dataset and builds the JSON report.
inline nlohmann::json fit_report(const Dataset& ds, const FitRequest& req) {
    const LossSpec loss = default_loss_registry().parse(req.loss);
    if (!(req.ci_level > 0.0 && req.ci_level < 1.0)) throw invalid_input("cli-io", "--ci-level must lie in (0,1)");
    const MEstimateFit f = fit(ds, loss, req.simplex);

    nlohmann::json j;
    j["schema_version"] = kReportSchemaVersion;
    j["command"] = "fit";
    j["version"] = kVersion;
    j["input"] = {{"csv", req.csv_path},
                  {"response", ds.names().response},
                  {"exogenous", ds.names().exogenous},
                  {"endogenous", ds.names().endogenous},
                  {"instrument", ds.names().instrument},
                  {"threshold", ds.threshold()},
                  {"standardized", req.standardize}};
    j["loss"] = {{"name", loss.name}, {"params", loss.params}, {"label", loss.label()}};
    j["seed"] = req.seed;
    j["n"] = ds.n();
    j["p"] = ds.p();
    j["censoring_fraction"] = censoring_fraction(ds);

    nlohmann::json fs = nlohmann::json::array();
    {
        std::vector<std::string> names{ds.names().instrument, "(intercept)"};
        names.insert(names.end(), ds.names().exogenous.begin(), ds.names().exogenous.end());
        const Vector& d = f.first_stage.delta_hat.delta;
        for (Eigen::Index k = 0; k < d.size(); ++k) fs.push_back({{"name", names[static_cast<std::size_t>(k)]}, {"estimate", d[k]}});
    }
    j["first_stage"] = {{"coefficients", fs}};

    const auto names = coefficient_names(ds.names());
    const Vector beta = f.beta_hat.flat();
    std::optional<CovarianceReport> cov;
    try {
        cov = covariance(f);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::invalid_input) throw;
        j["covariance_error"] = e.what();
    }
    nlohmann::json coefs = nlohmann::json::array();
    std::vector<Interval> ci;
    if (cov) ci = wald_intervals(*cov, req.ci_level);
    for (Eigen::Index k = 0; k < beta.size(); ++k) {
        nlohmann::json c = {{"name", names[static_cast<std::size_t>(k)]}, {"estimate", beta[k]}};
        if (cov) {
            c["se"] = cov->se[k];
            c["se_unadjusted"] = cov->se_unadjusted[k];
            c["ci_lower"] = ci[static_cast<std::size_t>(k)].lo;
            c["ci_upper"] = ci[static_cast<std::size_t>(k)].hi;
        } else {
            c["se"] = nullptr;
            c["se_unadjusted"] = nullptr;
            c["ci_lower"] = nullptr;
            c["ci_upper"] = nullptr;
        }
        coefs.push_back(std::move(c));
    }
    j["coefficients"] = coefs;
    j["ci_level"] = req.ci_level;
    j["objective"] = f.objective_value;
    j["score_norm"] = f.score_norm;
    if (cov) {
        j["covariance"] = {{"bandwidth_h", cov->bandwidth_h},
                           {"beta_cov", matrix_json(cov->beta_cov)},
                           {"adjustment", matrix_json(cov->adjustment)},
                           {"min_eigenvalue", cov->min_eig_beta_cov},
                           {"joint_block_gap", cov->joint_block_gap}};
    } else {
        j["covariance"] = nullptr;
    }
    nlohmann::json start_errors = f.opt.start_errors;
    j["optimizer"] = {{"method", "nelder-mead"},
                      {"starts", f.starts.size()},
                      {"runs", f.opt.restart_history.size()},
                      {"iterations", f.opt.iters},
                      {"evaluations", f.opt.evals},
                      {"converged", f.opt.converged},
                      {"f_min", f.opt.f_min},
                      {"start_errors", start_errors}};
    return j;
}

inline Dataset load_request_data(const FitRequest& req) {
    Dataset ds = read_csv(req.csv_path, req.roles, req.threshold);
    return req.standardize ? standardized(ds) : ds;
}

inline std::string fit_command(const FitRequest& req) { return fit_report(load_request_data(req), req).dump(2) + "\n"; }

inline std::string format_number(double v) {
    if (!std::isfinite(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

struct SimulateRequest {
    std::vector<std::string> losses{"clad"};
    std::vector<ErrorFamily> families{ErrorFamily::normal_std};
    std::vector<Eigen::Index> sizes{100};
    int reps = 200;
    std::uint64_t seed = 1;
    int threads = 1;
    SimplexConfig simplex;
    double ci_level = 0.95;
};

inline std::string simulate_config_string(const SimulateRequest& req) {
    std::ostringstream s;
    s << "losses=";
    for (const auto& l : req.losses) s << l << ';';
    s << " families=";
    for (auto f : req.families) s << to_string(f) << ';';
    s << " n=";
    for (auto n : req.sizes) s << n << ';';
    s << " reps=" << req.reps << " seed=" << req.seed << " ci=" << format_number(req.ci_level)
      << " nm=" << format_number(req.simplex.f_tol) << ',' << format_number(req.simplex.x_tol) << ','
      << req.simplex.max_iters << ',' << req.simplex.n_restarts;
    return s.str();
}

// Datasets depend on (family, n, seed) only, so every estimator in a run
// sees the same replications.
inline std::uint64_t cell_seed(std::uint64_t seed, ErrorFamily family, Eigen::Index n) {
    return child_seed(seed, fnv1a64(to_string(family) + ":" + std::to_string(n)));
}

inline std::vector<SimReport> simulate_reports(const SimulateRequest& req) {
    if (req.reps < 1) throw invalid_input("cli-io", "--reps must be at least 1");
    if (req.losses.empty() || req.families.empty() || req.sizes.empty())
        throw invalid_input("cli-io", "simulate needs at least one loss, family and sample size");
    std::vector<SimReport> out;
    ExperimentOptions opt;
    opt.simplex = req.simplex;
    opt.threads = req.threads;
    opt.ci_level = req.ci_level;
    for (const auto& label : req.losses) {
        const LossSpec loss = default_loss_registry().parse(label);
        for (auto family : req.families)
            for (auto n : req.sizes) {
                DgpConfig cfg;
                cfg.family = family;
                cfg.n = n;
                cfg.seed = cell_seed(req.seed, family, n);
                out.push_back(run_experiment(cfg, loss, req.reps, opt));
            }
    }
    return out;
}

inline std::string metadata_line(const std::string& command, std::uint64_t seed, const std::string& config) {
    char hash[24];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(config)));
    return "# tobitm " + command + " version=" + kVersion + " seed=" + std::to_string(seed) + " config_hash=" + hash +
           "\n";
}

inline std::string simulate_csv(const SimulateRequest& req, const std::vector<SimReport>& reports) {
    std::ostringstream out;
    out << metadata_line("simulate", req.seed, simulate_config_string(req));
    out << "estimator,family,n,parameter,bias,mse,censoring_probability,coverage,coverage_unadjusted,reps,failures\n";
    for (const auto& r : reports)
        for (std::size_t j = 0; j < kSimParamNames.size(); ++j) {
            const auto k = static_cast<Eigen::Index>(j);
            out << r.loss_label << ',' << to_string(r.family) << ',' << r.n << ',' << kSimParamNames[j] << ','
                << format_number(r.bias[k]) << ',' << format_number(r.mse[k]) << ','
                << format_number(r.censoring_probability) << ',' << format_number(r.coverage[k]) << ','
                << format_number(r.coverage_unadjusted[k]) << ',' << r.r << ',' << r.failures << '\n';
        }
    return out.str();
}

inline nlohmann::json simulate_json(const SimulateRequest& req, const std::vector<SimReport>& reports) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : reports)
        for (std::size_t j = 0; j < kSimParamNames.size(); ++j) {
            const auto k = static_cast<Eigen::Index>(j);
            rows.push_back({{"estimator", r.loss_label},
                            {"family", to_string(r.family)},
                            {"n", r.n},
                            {"parameter", kSimParamNames[j]},
                            {"bias", r.bias[k]},
                            {"mse", r.mse[k]},
                            {"censoring_probability", r.censoring_probability},
                            {"coverage", r.coverage[k]},
                            {"coverage_unadjusted", r.coverage_unadjusted[k]},
                            {"reps", r.r},
                            {"failures", r.failures}});
        }
    return {{"schema_version", kReportSchemaVersion},
            {"command", "simulate"},
            {"version", kVersion},
            {"seed", req.seed},
            {"config", simulate_config_string(req)},
            {"rows", rows}};
}

struct BootstrapRequest {
    FitRequest data;  // csv, roles, threshold, standardize, simplex
    std::vector<std::string> losses{"clad"};
    int B = 500;
    std::uint64_t seed = 1;
    int threads = 1;
};

inline std::string bootstrap_config_string(const BootstrapRequest& req) {
    std::ostringstream s;
    s << "csv=" << req.data.csv_path << " y=" << req.data.roles.response << " x=";
    for (const auto& x : req.data.roles.exogenous) s << x << ';';
    s << " w=" << req.data.roles.endogenous << " z=" << req.data.roles.instrument
      << " c=" << format_number(req.data.threshold) << " std=" << req.data.standardize << " losses=";
    for (const auto& l : req.losses) s << l << ';';
    s << " B=" << req.B << " seed=" << req.seed << " nm=" << format_number(req.data.simplex.f_tol) << ','
      << format_number(req.data.simplex.x_tol) << ',' << req.data.simplex.max_iters << ','
      << req.data.simplex.n_restarts;
    return s.str();
}

inline std::string bootstrap_command(const BootstrapRequest& req) {
    const Dataset ds = load_request_data(req.data);
    const auto names = coefficient_names(ds.names());
    std::ostringstream out;
    out << metadata_line("bootstrap", req.seed, bootstrap_config_string(req));
    out << "estimator,parameter,estimate,bmse,B,failures\n";
    BootstrapOptions opt;
    opt.simplex = req.data.simplex;
    opt.threads = req.threads;
    for (const auto& label : req.losses) {
        const LossSpec loss = default_loss_registry().parse(label);
        const BootReport rep = bootstrap_bmse(ds, loss, req.B, req.seed, opt);
        for (Eigen::Index k = 0; k < rep.theta_hat.size(); ++k)
            out << loss.label() << ',' << names[static_cast<std::size_t>(k)] << ','
                << format_number(rep.theta_hat[k]) << ',' << format_number(rep.bmse[k]) << ',' << rep.B << ','
                << rep.failures << '\n';
    }
    return out.str();
}

}  // namespace tobitm
