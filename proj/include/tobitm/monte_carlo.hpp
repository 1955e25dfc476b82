#pragma once

// Simulation design for the endogenous Tobit model and the replication
// harness that reports empirical bias, MSE and censoring rates.
//
//   x2 = alpha * z + e2,          z ~ U(0,1), e2 ~ N(0,1), x1 ~ N(0,1)
//   y  = max(0, b0 + b1 x1 + b2 x2 + rho1 e2 + eta)
//
// eta is N(0,1), Laplace(0,1), t_3, or N(0, (b1 x1 + b2 x2)^2).

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "tobitm/core_data.hpp"
#include "tobitm/covariance.hpp"
#include "tobitm/error.hpp"
#include "tobitm/loss.hpp"
#include "tobitm/m_estimator.hpp"
#include "tobitm/nelder_mead.hpp"
#include "tobitm/parallel.hpp"

namespace tobitm {

using Rng = std::mt19937_64;

enum class ErrorFamily { normal_std, laplace_std, student_t3, hetero_normal };

inline constexpr std::array<ErrorFamily, 4> kAllFamilies = {ErrorFamily::normal_std, ErrorFamily::laplace_std,
                                                            ErrorFamily::student_t3, ErrorFamily::hetero_normal};

inline std::string to_string(ErrorFamily f) {
    switch (f) {
    case ErrorFamily::normal_std: return "normal";
    case ErrorFamily::laplace_std: return "laplace";
    case ErrorFamily::student_t3: return "t3";
    case ErrorFamily::hetero_normal: return "hetero";
    }
    return "?";
}

inline ErrorFamily parse_error_family(const std::string& s) {
    if (s == "normal" || s == "normal_std") return ErrorFamily::normal_std;
    if (s == "laplace" || s == "laplace_std") return ErrorFamily::laplace_std;
    if (s == "t3" || s == "student_t3") return ErrorFamily::student_t3;
    if (s == "hetero" || s == "hetero_normal") return ErrorFamily::hetero_normal;
    throw invalid_input("monte-carlo", "unknown error family '" + s + "' (normal|laplace|t3|hetero)");
}

struct DgpConfig {
    std::array<double, 3> beta_true{1.0, 2.0, 3.0};
    double rho1_true = 0.5;
    double alpha_iv = 1.0;
    Eigen::Index n = 100;
    ErrorFamily family = ErrorFamily::normal_std;
    std::uint64_t seed = 1;
    // Multiplies eta; 0 gives the noiseless outcome equation used in checks.
    double eta_scale = 1.0;

    void validate() const {
        if (n < 10) throw invalid_input("monte-carlo", "sample size must be at least 10");
        for (double b : beta_true)
            if (!std::isfinite(b)) throw invalid_input("monte-carlo", "non-finite true coefficient");
        if (!std::isfinite(rho1_true) || !std::isfinite(alpha_iv) || !std::isfinite(eta_scale))
            throw invalid_input("monte-carlo", "non-finite design constant");
    }

    // True second-stage vector (b0, b1, b2, rho1).
    Vector truth() const { return Vector{{beta_true[0], beta_true[1], beta_true[2], rho1_true}}; }
};

// Laplace(0,1) inverse CDF.
inline double laplace_quantile(double u) {
    const double c = u - 0.5;
    const double s = c > 0.0 ? 1.0 : (c < 0.0 ? -1.0 : 0.0);
    return -s * std::log(1.0 - 2.0 * std::abs(c));
}

// One standardized draw. For hetero_normal the caller scales by sigma_i.
inline double sample_error(ErrorFamily family, Rng& rng) {
    switch (family) {
    case ErrorFamily::normal_std:
    case ErrorFamily::hetero_normal:
        return std::normal_distribution<double>(0.0, 1.0)(rng);
    case ErrorFamily::laplace_std: {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        double u = 0.0;
        do u = unif(rng);
        while (u == 0.0);
        return laplace_quantile(u);
    }
    case ErrorFamily::student_t3: {
        const double z = std::normal_distribution<double>(0.0, 1.0)(rng);
        const double chi2 = std::chi_squared_distribution<double>(3.0)(rng);
        return z / std::sqrt(chi2 / 3.0);
    }
    }
    return 0.0;
}

inline Dataset generate(const DgpConfig& cfg) {
    cfg.validate();
    Rng rng(splitmix64(cfg.seed));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> norm(0.0, 1.0);

    const Eigen::Index n = cfg.n;
    Vector y(n), w(n), z(n);
    Matrix x(n, 2);
    const auto& b = cfg.beta_true;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double zi = unif(rng);
        const double x1 = norm(rng);
        const double e2 = norm(rng);
        const double x2 = cfg.alpha_iv * zi + e2;
        double eta = sample_error(cfg.family, rng);
        if (cfg.family == ErrorFamily::hetero_normal) eta *= std::abs(b[1] * x1 + b[2] * x2);
        eta *= cfg.eta_scale;
        y[i] = std::max(0.0, b[0] + b[1] * x1 + b[2] * x2 + cfg.rho1_true * e2 + eta);
        x(i, 0) = 1.0;
        x(i, 1) = x1;
        w[i] = x2;
        z[i] = zi;
    }
    ColumnNames names;
    names.response = "y";
    names.exogenous = {"x1"};
    names.endogenous = "x2";
    names.instrument = "z";
    return Dataset::from_columns(std::move(y), std::move(x), std::move(w), std::move(z), 0.0, InterceptPolicy::require,
                                 std::move(names));
}

inline const std::array<std::string, 4> kSimParamNames = {"beta0", "beta1", "beta2", "rho1"};

struct ExperimentOptions {
    SimplexConfig simplex;
    int threads = 1;
    double ci_level = 0.95;
};

struct SimReport {
    std::string loss_label;
    ErrorFamily family = ErrorFamily::normal_std;
    Eigen::Index n = 0;
    int r = 0;
    int failures = 0;
    Vector truth;
    Vector bias;  // per parameter, over successful replications
    Vector mse;
    double censoring_probability = 0.0;  // mean over all replications
    Vector coverage;                      // adjusted Wald intervals
    Vector coverage_unadjusted;
    Matrix estimates;  // successful replications x 4
    std::string warning;
};

struct ReplicationOutcome {
    bool ok = false;
    Vector estimate;
    double censoring = 0.0;
    std::array<bool, 4> covered{};
    std::array<bool, 4> covered_unadjusted{};
};

inline ReplicationOutcome run_replication(const DgpConfig& cfg, const LossSpec& loss, const ExperimentOptions& opt) {
    ReplicationOutcome out;
    const Dataset ds = generate(cfg);
    out.censoring = censoring_fraction(ds);
    try {
        const MEstimateFit f = fit(ds, loss, opt.simplex);
        if (!f.opt.converged) return out;
        const CovarianceReport cov = covariance(f);
        const Vector truth = cfg.truth();
        const auto ci = wald_intervals(cov, opt.ci_level, true);
        const auto ci_raw = wald_intervals(cov, opt.ci_level, false);
        for (std::size_t j = 0; j < 4; ++j) {
            out.covered[j] = ci[j].contains(truth[static_cast<Eigen::Index>(j)]);
            out.covered_unadjusted[j] = ci_raw[j].contains(truth[static_cast<Eigen::Index>(j)]);
        }
        out.estimate = f.beta_hat.flat();
        out.ok = true;
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::invalid_input) throw;
    }
    return out;
}

inline SimReport run_experiment(const DgpConfig& cfg, const LossSpec& loss, int r, const ExperimentOptions& opt = {}) {
    cfg.validate();
    opt.simplex.validate();
    if (r < 1) throw invalid_input("monte-carlo", "replication count must be at least 1");

    std::vector<ReplicationOutcome> outcomes(static_cast<std::size_t>(r));
    parallel_for(outcomes.size(), opt.threads, [&](std::size_t k) {
        DgpConfig c = cfg;
        c.seed = child_seed(cfg.seed, k);
        outcomes[k] = run_replication(c, loss, opt);
    });

    SimReport rep;
    rep.loss_label = loss.label();
    rep.family = cfg.family;
    rep.n = cfg.n;
    rep.r = r;
    rep.truth = cfg.truth();
    rep.bias = Vector::Zero(4);
    rep.mse = Vector::Zero(4);
    rep.coverage = Vector::Zero(4);
    rep.coverage_unadjusted = Vector::Zero(4);

    int ok = 0;
    double cens = 0.0;
    for (const auto& o : outcomes) {
        cens += o.censoring;
        if (o.ok) ++ok;
    }
    rep.failures = r - ok;
    rep.censoring_probability = cens / r;
    rep.estimates.resize(ok, 4);
    int row = 0;
    for (const auto& o : outcomes) {
        if (!o.ok) continue;
        const Vector dev = o.estimate - rep.truth;
        rep.bias += dev;
        rep.mse += dev.cwiseProduct(dev);
        for (std::size_t j = 0; j < 4; ++j) {
            rep.coverage[static_cast<Eigen::Index>(j)] += o.covered[j] ? 1.0 : 0.0;
            rep.coverage_unadjusted[static_cast<Eigen::Index>(j)] += o.covered_unadjusted[j] ? 1.0 : 0.0;
        }
        rep.estimates.row(row++) = o.estimate.transpose();
    }
    if (ok > 0) {
        rep.bias /= ok;
        rep.mse /= ok;
        rep.coverage /= ok;
        rep.coverage_unadjusted /= ok;
    } else {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        rep.bias.setConstant(nan);
        rep.mse.setConstant(nan);
        rep.coverage.setConstant(nan);
        rep.coverage_unadjusted.setConstant(nan);
    }
    if (rep.failures * 100 > r)
        rep.warning = std::to_string(rep.failures) + " of " + std::to_string(r) +
                      " replications failed (non-convergence or singular covariance) and were excluded";
    return rep;
}

}  // namespace tobitm
