#pragma once

// Derivative-free Nelder-Mead simplex minimizer with restarts around the
// incumbent and a multi-start driver.
//
// The objective is any callable double(const Vector&). Everything is
// deterministic given (objective, starting points, config).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "tobitm/core_data.hpp"
#include "tobitm/error.hpp"

namespace tobitm {

struct SimplexConfig {
    // Initial simplex edge along coordinate j: init_step_scale * max(1, |x0_j|),
    // unless init_step supplies explicit per-coordinate edges.
    double init_step_scale = 0.1;
    std::vector<double> init_step;

    double reflection = 1.0;
    double expansion = 2.0;
    double contraction = 0.5;
    double shrink = 0.5;

    double f_tol = 1e-10;  // relative spread of vertex values
    double x_tol = 1e-8;   // absolute spread of vertices around the best one
    int max_iters = 0;     // per run; 0 means 500 * dim
    int n_restarts = 4;

    bool record_trace = false;

    void validate() const {
        static const std::string mod = "optimizer";
        if (!(reflection > 0.0)) throw invalid_input(mod, "reflection coefficient must be > 0");
        if (!(expansion > 1.0)) throw invalid_input(mod, "expansion coefficient must be > 1");
        if (!(contraction > 0.0 && contraction < 1.0)) throw invalid_input(mod, "contraction coefficient must be in (0,1)");
        if (!(shrink > 0.0 && shrink < 1.0)) throw invalid_input(mod, "shrink coefficient must be in (0,1)");
        if (!(f_tol >= 0.0) || !(x_tol >= 0.0)) throw invalid_input(mod, "tolerances must be nonnegative");
        if (max_iters < 0) throw invalid_input(mod, "max_iters must be nonnegative");
        if (n_restarts < 0) throw invalid_input(mod, "n_restarts must be nonnegative");
        if (!(init_step_scale > 0.0)) throw invalid_input(mod, "init_step_scale must be positive");
        for (double s : init_step)
            if (!(s > 0.0) || !std::isfinite(s)) throw invalid_input(mod, "init_step entries must be positive");
    }

    int iteration_cap(Eigen::Index dim) const { return max_iters > 0 ? max_iters : 500 * static_cast<int>(dim); }
};

struct RestartRecord {
    Vector x;
    double f = 0.0;
    int iters = 0;
    bool converged = false;
};

struct OptResult {
    Vector x_min;
    double f_min = std::numeric_limits<double>::infinity();
    int iters = 0;  // total simplex iterations over all runs
    int evals = 0;  // total objective evaluations
    bool converged = false;
    std::vector<RestartRecord> restart_history;
    std::vector<double> best_trace;  // best vertex value per iteration (record_trace only)
    std::vector<std::string> start_errors;
};

namespace detail {

inline std::string format_point(const Vector& x) {
    std::string s = "(";
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%s%.6g", j ? ", " : "", x[j]);
        s += buf;
    }
    return s + ")";
}

template <typename F>
double checked_eval(F& f, const Vector& x, int& evals) {
    const double v = f(x);
    ++evals;
    if (!std::isfinite(v)) throw numerical_failure("optimizer", "non-finite objective value at " + format_point(x));
    return v;
}

template <typename F>
RestartRecord simplex_run(F& f, const Vector& x0, const Vector& steps, const SimplexConfig& cfg, int& evals,
                          std::vector<double>* trace) {
    const Eigen::Index dim = x0.size();
    const auto m = static_cast<std::size_t>(dim + 1);
    std::vector<Vector> x(m, x0);
    std::vector<double> fx(m);
    for (Eigen::Index j = 0; j < dim; ++j) x[static_cast<std::size_t>(j + 1)][j] += steps[j];
    for (std::size_t i = 0; i < m; ++i) fx[i] = checked_eval(f, x[i], evals);

    std::vector<std::size_t> order(m);
    Vector centroid(dim), xr(dim), xe(dim), xc(dim);
    const int cap = cfg.iteration_cap(dim);

    RestartRecord rec;
    int it = 0;
    for (;; ++it) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fx[a] < fx[b]; });
        const std::size_t best = order.front();
        const std::size_t worst = order.back();
        const std::size_t second_worst = order[m - 2];
        if (trace) trace->push_back(fx[best]);

        const double fspread = fx[worst] - fx[best];
        double xspread = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            if (i != best) xspread = std::max(xspread, (x[i] - x[best]).cwiseAbs().maxCoeff());
        if (fspread <= cfg.f_tol * (std::abs(fx[best]) + cfg.f_tol) || xspread <= cfg.x_tol) {
            rec.converged = true;
            break;
        }
        if (it >= cap) break;

        centroid.setZero();
        for (std::size_t k = 0; k + 1 < m; ++k) centroid += x[order[k]];
        centroid /= static_cast<double>(dim);

        xr = centroid + cfg.reflection * (centroid - x[worst]);
        const double fr = checked_eval(f, xr, evals);
        if (fr < fx[best]) {
            xe = centroid + cfg.expansion * (xr - centroid);
            const double fe = checked_eval(f, xe, evals);
            if (fe < fr) {
                x[worst] = xe;
                fx[worst] = fe;
            } else {
                x[worst] = xr;
                fx[worst] = fr;
            }
            continue;
        }
        if (fr < fx[second_worst]) {
            x[worst] = xr;
            fx[worst] = fr;
            continue;
        }
        bool accepted = false;
        if (fr < fx[worst]) {
            xc = centroid + cfg.contraction * (xr - centroid);
            const double fc = checked_eval(f, xc, evals);
            if (fc <= fr) {
                x[worst] = xc;
                fx[worst] = fc;
                accepted = true;
            }
        } else {
            xc = centroid + cfg.contraction * (x[worst] - centroid);
            const double fc = checked_eval(f, xc, evals);
            if (fc < fx[worst]) {
                x[worst] = xc;
                fx[worst] = fc;
                accepted = true;
            }
        }
        if (!accepted) {
            for (std::size_t i = 0; i < m; ++i) {
                if (i == best) continue;
                x[i] = x[best] + cfg.shrink * (x[i] - x[best]);
                fx[i] = checked_eval(f, x[i], evals);
            }
        }
    }

    const auto best_it = std::min_element(fx.begin(), fx.end());
    const auto b = static_cast<std::size_t>(best_it - fx.begin());
    rec.x = x[b];
    rec.f = fx[b];
    rec.iters = it;
    return rec;
}

}  // namespace detail

// Nelder-Mead from x0 followed by cfg.n_restarts restarts. Restart k rebuilds
// the simplex around the incumbent with edges scaled by 0.5^k. All restarts
// run: on piecewise-linear objectives a restart that stalls is often followed
// by a smaller one that still makes progress.
template <typename F>
OptResult nelder_mead(F&& f, const Vector& x0, const SimplexConfig& cfg = {}) {
    cfg.validate();
    const Eigen::Index dim = x0.size();
    if (dim < 1) throw invalid_input("optimizer", "start vector must be non-empty");
    if (!x0.allFinite()) throw invalid_input("optimizer", "start vector has non-finite entries");
    if (!cfg.init_step.empty() && static_cast<Eigen::Index>(cfg.init_step.size()) != dim)
        throw invalid_input("optimizer", "init_step length does not match the start vector");

    Vector steps(dim);
    for (Eigen::Index j = 0; j < dim; ++j)
        steps[j] = cfg.init_step.empty() ? cfg.init_step_scale * std::max(1.0, std::abs(x0[j]))
                                         : cfg.init_step[static_cast<std::size_t>(j)];

    OptResult out;
    std::vector<double>* trace = cfg.record_trace ? &out.best_trace : nullptr;
    RestartRecord rec = detail::simplex_run(f, x0, steps, cfg, out.evals, trace);
    out.restart_history.push_back(rec);
    out.iters = rec.iters;
    out.x_min = rec.x;
    out.f_min = rec.f;
    out.converged = rec.converged;

    double scale = 1.0;
    for (int k = 1; k <= cfg.n_restarts; ++k) {
        scale *= 0.5;
        rec = detail::simplex_run(f, out.x_min, steps * scale, cfg, out.evals, trace);
        out.restart_history.push_back(rec);
        out.iters += rec.iters;
        out.converged = rec.converged;
        if (rec.f < out.f_min) {
            out.x_min = rec.x;
            out.f_min = rec.f;
        }
    }
    return out;
}

// Runs nelder_mead from every start and keeps the best. Results whose values
// tie within f_tol are resolved towards the smallest Euclidean norm. A
// failing start is recorded in start_errors; only all starts failing is an
// error.
template <typename F>
OptResult multi_start(F&& f, const std::vector<Vector>& starts, const SimplexConfig& cfg = {}) {
    if (starts.empty()) throw invalid_input("optimizer", "multi_start needs at least one start");
    std::vector<OptResult> runs;
    std::vector<std::string> errors;
    Error last_error = numerical_failure("optimizer", "no start succeeded");
    for (std::size_t s = 0; s < starts.size(); ++s) {
        try {
            runs.push_back(nelder_mead(f, starts[s], cfg));
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::invalid_input && starts.size() == 1) throw;
            errors.push_back("start " + std::to_string(s) + ": " + e.what());
            last_error = e;
        }
    }
    if (runs.empty()) throw last_error;

    double fbest = std::numeric_limits<double>::infinity();
    for (const auto& r : runs) fbest = std::min(fbest, r.f_min);
    const double tie = cfg.f_tol * (std::abs(fbest) + cfg.f_tol);
    std::size_t pick = runs.size();
    for (std::size_t i = 0; i < runs.size(); ++i) {
        if (runs[i].f_min > fbest + tie) continue;
        if (pick == runs.size() || runs[i].x_min.norm() < runs[pick].x_min.norm()) pick = i;
    }

    OptResult out = runs[pick];
    out.iters = 0;
    out.evals = 0;
    out.restart_history.clear();
    out.best_trace.clear();
    for (const auto& r : runs) {
        out.iters += r.iters;
        out.evals += r.evals;
        out.restart_history.insert(out.restart_history.end(), r.restart_history.begin(), r.restart_history.end());
    }
    if (cfg.record_trace) out.best_trace = runs[pick].best_trace;
    out.start_errors = std::move(errors);
    return out;
}

}  // namespace tobitm
