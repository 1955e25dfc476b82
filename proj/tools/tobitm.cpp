// tobitm fit|simulate|bootstrap
//
// Exit status: 0 success, 1 invalid input or flags, 2 numerical failure.
// Errors are written to stderr as a JSON object.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tobitm/tobitm.hpp"

namespace {

struct Common {
    double nm_ftol = tobitm::SimplexConfig{}.f_tol;
    int nm_maxit = 0;
    int nm_restarts = tobitm::SimplexConfig{}.n_restarts;
    int threads = 0;
    std::uint64_t seed = 1;
    std::string out;

    tobitm::SimplexConfig simplex() const {
        tobitm::SimplexConfig cfg;
        cfg.f_tol = nm_ftol;
        cfg.max_iters = nm_maxit;
        cfg.n_restarts = nm_restarts;
        cfg.validate();
        return cfg;
    }
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--nm-ftol", c.nm_ftol, "Nelder-Mead relative function tolerance");
    app->add_option("--nm-maxit", c.nm_maxit, "Nelder-Mead iteration cap per run (0 = 500 * dim)");
    app->add_option("--nm-restarts", c.nm_restarts, "Nelder-Mead restarts around the incumbent");
    app->add_option("--threads", c.threads, std::string("worker threads (default $") + tobitm::kThreadsEnv + " or all cores)");
    app->add_option("--seed", c.seed, "master seed");
    app->add_option("--out", c.out, "output file (default stdout)");
}

void add_data(CLI::App* app, tobitm::FitRequest& r) {
    app->add_option("--csv", r.csv_path, "input CSV with a header row")->required();
    app->add_option("--response", r.roles.response, "censored response column")->required();
    app->add_option("--exog", r.roles.exogenous, "exogenous regressors (comma separated; intercept is added)")
        ->delimiter(',');
    app->add_option("--endog", r.roles.endogenous, "endogenous regressor column")->required();
    app->add_option("--instrument", r.roles.instrument, "excluded instrument column")->required();
    app->add_option("--threshold", r.threshold, "censoring point c");
    app->add_flag("--standardize", r.standardize, "z-score the regressors and scale the response by its sd");
}

void emit(const std::string& text, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << text;
        std::cout.flush();
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw tobitm::invalid_input("cli-io", "cannot write '" + path + "'");
    f << text;
    if (!f) throw tobitm::invalid_input("cli-io", "write to '" + path + "' failed");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-stage M-estimation for censored regression with an endogenous regressor", "tobitm"};
    app.set_version_flag("--version", tobitm::kVersion);
    app.require_subcommand(1);

    Common common;
    tobitm::FitRequest fit_req;
    std::vector<std::string> losses{"clad"};
    std::vector<std::string> families{"normal"};
    std::vector<long> sizes{100};
    int reps = 200;
    int B = 500;
    std::string format = "csv";

    auto* fit = app.add_subcommand("fit", "fit one dataset and print a JSON report");
    add_data(fit, fit_req);
    add_common(fit, common);
    fit->add_option("--loss", fit_req.loss, "clad | wme[:d=<v>] | logcosh");
    fit->add_option("--ci-level", fit_req.ci_level, "Wald interval level");

    auto* sim = app.add_subcommand("simulate", "Monte Carlo bias / MSE table");
    add_common(sim, common);
    sim->add_option("--loss", losses, "losses (comma separated)")->delimiter(',');
    sim->add_option("--family", families, "normal | laplace | t3 | hetero | all (comma separated)")->delimiter(',');
    sim->add_option("--n", sizes, "sample sizes (comma separated)")->delimiter(',');
    sim->add_option("--reps", reps, "replications per cell");
    sim->add_option("--ci-level", fit_req.ci_level, "Wald interval level for coverage columns");
    sim->add_option("--format", format, "csv | json")->check(CLI::IsMember({"csv", "json"}));

    auto* boot = app.add_subcommand("bootstrap", "pairs-bootstrap BMSE table");
    add_data(boot, fit_req);
    add_common(boot, common);
    boot->add_option("--loss", losses, "losses (comma separated)")->delimiter(',');
    boot->add_option("--B", B, "number of resamples");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : tobitm::kExitUserError;
    }

    try {
        const int threads = tobitm::resolve_threads(common.threads);
        if (*fit) {
            fit_req.simplex = common.simplex();
            fit_req.seed = common.seed;
            emit(tobitm::fit_command(fit_req), common.out);
        } else if (*sim) {
            tobitm::SimulateRequest req;
            req.losses = losses;
            req.families.clear();
            for (const auto& f : families) {
                if (f == "all") {
                    req.families.insert(req.families.end(), tobitm::kAllFamilies.begin(), tobitm::kAllFamilies.end());
                } else {
                    req.families.push_back(tobitm::parse_error_family(f));
                }
            }
            req.sizes.clear();
            for (long n : sizes) req.sizes.push_back(static_cast<Eigen::Index>(n));
            req.reps = reps;
            req.seed = common.seed;
            req.threads = threads;
            req.simplex = common.simplex();
            req.ci_level = fit_req.ci_level;
            const auto reports = tobitm::simulate_reports(req);
            for (const auto& r : reports)
                if (!r.warning.empty())
                    std::cerr << "warning: " << r.loss_label << '/' << tobitm::to_string(r.family) << "/n=" << r.n
                              << ": " << r.warning << '\n';
            emit(format == "json" ? tobitm::simulate_json(req, reports).dump(2) + "\n"
                                  : tobitm::simulate_csv(req, reports),
                 common.out);
        } else {
            tobitm::BootstrapRequest req;
            req.data = fit_req;
            req.data.simplex = common.simplex();
            req.losses = losses;
            req.B = B;
            req.seed = common.seed;
            req.threads = threads;
            emit(tobitm::bootstrap_command(req), common.out);
        }
    } catch (const tobitm::Error& e) {
        std::cerr << tobitm::error_json(e).dump() << '\n';
        return tobitm::exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "{\"schema_version\":1,\"error\":{\"kind\":\"internal\",\"message\":" << nlohmann::json(e.what()).dump()
                  << "}}\n";
        return tobitm::kExitNumerical;
    }
    return tobitm::kExitOk;
}
