#pragma once

// Pairs bootstrap of the full two-stage estimator. Every resample re-runs
// the first-stage regression before the censored M-estimation, and the
// bootstrap MSE is centred at the full-sample estimate:
//
//   BMSE_j = (1/B) sum_b (theta_bj - theta_j)^2

#include <cstdint>
#include <limits>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tobitm/core_data.hpp"
#include "tobitm/error.hpp"
#include "tobitm/loss.hpp"
#include "tobitm/m_estimator.hpp"
#include "tobitm/nelder_mead.hpp"
#include "tobitm/parallel.hpp"

namespace tobitm {

inline constexpr int kMaxResampleAttempts = 10;

// Draws n row indices for resample b, attempt a.
using Resampler = std::function<std::vector<std::size_t>(std::size_t n, std::uint64_t seed, std::size_t b, int attempt)>;

inline std::vector<std::size_t> resample_indices(std::size_t n, std::uint64_t seed, std::size_t b, int attempt) {
    std::mt19937_64 rng(child_seed(child_seed(seed, b), static_cast<std::uint64_t>(attempt)));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) r = pick(rng);
    return rows;
}

struct BootstrapOptions {
    SimplexConfig simplex;
    int threads = 1;
    Resampler resampler = resample_indices;
};

struct BootReport {
    Vector theta_hat;
    int B = 0;
    Vector bmse;
    Matrix boot_estimates;  // successful resamples x (p+2), in resample order
    int failures = 0;
    int redraws = 0;
    std::string loss_label;
};

// Mean squared deviation of each column from theta.
inline Vector bmse_from_estimates(const Matrix& estimates, const Vector& theta) {
    Vector out = Vector::Zero(theta.size());
    if (estimates.rows() == 0) return out.setConstant(std::numeric_limits<double>::quiet_NaN());
    for (Eigen::Index b = 0; b < estimates.rows(); ++b) {
        const Vector dev = estimates.row(b).transpose() - theta;
        out += dev.cwiseProduct(dev);
    }
    return out / static_cast<double>(estimates.rows());
}

inline BootReport bootstrap_bmse(const Dataset& ds, const LossSpec& loss, int B, std::uint64_t seed,
                                 const BootstrapOptions& opt = {}) {
    if (B < 1) throw invalid_input("bootstrap", "resample count B must be at least 1");
    opt.simplex.validate();

    const MEstimateFit full = fit(ds, loss, opt.simplex);
    BootReport rep;
    rep.theta_hat = full.beta_hat.flat();
    rep.B = B;
    rep.loss_label = loss.label();

    struct Slot {
        bool ok = false;
        int attempts = 0;
        Vector estimate;
    };
    std::vector<Slot> slots(static_cast<std::size_t>(B));
    const auto n = static_cast<std::size_t>(ds.n());
    parallel_for(slots.size(), opt.threads, [&](std::size_t b) {
        Slot& s = slots[b];
        for (int a = 0; a < kMaxResampleAttempts; ++a) {
            ++s.attempts;
            const auto rows = opt.resampler(n, seed, b, a);
            if (rows.size() != n) throw invalid_input("bootstrap", "resampler returned the wrong number of rows");
            try {
                const MEstimateFit f = fit(ds.select_rows(rows), loss, opt.simplex);
                s.estimate = f.beta_hat.flat();
                s.ok = true;
                return;
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::invalid_input) throw;
            }
        }
    });

    int ok = 0;
    for (const auto& s : slots) {
        ok += s.ok ? 1 : 0;
        rep.redraws += s.attempts - 1;
    }
    rep.failures = B - ok;
    rep.boot_estimates.resize(ok, rep.theta_hat.size());
    int row = 0;
    for (const auto& s : slots)
        if (s.ok) rep.boot_estimates.row(row++) = s.estimate.transpose();
    rep.bmse = bmse_from_estimates(rep.boot_estimates, rep.theta_hat);
    return rep;
}

}  // namespace tobitm
