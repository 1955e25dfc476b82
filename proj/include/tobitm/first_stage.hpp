#pragma once

// Control-function first stage: least squares of the endogenous regressor
// on z = (z1, x_exo), its residuals, and the ingredients of the
// first-stage sandwich covariance.

#include <cmath>
#include <cstdio>
#include <string>

#include <Eigen/Dense>

#include "tobitm/core_data.hpp"
#include "tobitm/error.hpp"

namespace tobitm {

// Ceiling on cond(Z'Z); equivalently cond(Z) <= 1e6.
inline constexpr double kMaxConditionNumber = 1e12;

struct FirstStageCov {
    Matrix sigma1_delta;  // (1/n) sum z z'
    Matrix d1;            // (1/n) sum e^2 z z'
    Matrix omega1;        // sigma1^-1 d1 sigma1^-T
};

struct FirstStageFit {
    InstrumentVector delta_hat;
    Vector residuals;
    Matrix z;  // n x (p+1), columns (z1, x_exo)
    Matrix sigma1_delta_hat;
    Matrix d1_hat;
    Matrix omega1_hat;
};

inline Matrix instrument_matrix(const Dataset& ds) {
    Matrix z(ds.n(), ds.p() + 1);
    z.col(0) = ds.z1();
    z.rightCols(ds.p()) = ds.x_exo();
    return z;
}

inline FirstStageCov first_stage_cov(const Matrix& z, const Vector& residuals) {
    static const std::string mod = "first-stage-ols";
    const double n = static_cast<double>(z.rows());
    FirstStageCov cov;
    cov.sigma1_delta = (z.transpose() * z) / n;
    cov.d1 = (z.transpose() * residuals.array().square().matrix().asDiagonal() * z) / n;

    Eigen::JacobiSVD<Matrix> svd(cov.sigma1_delta);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || !(sv[sv.size() - 1] > 0.0) || sv[0] / sv[sv.size() - 1] > kMaxConditionNumber) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "first-stage Gram matrix is singular (smallest singular value %.3g)",
                      sv.size() ? sv[sv.size() - 1] : 0.0);
        throw numerical_failure(mod, buf);
    }
    const Eigen::LDLT<Matrix> ldlt(cov.sigma1_delta);
    const Matrix inv_d1 = ldlt.solve(cov.d1);                       // S^-1 D
    Matrix omega = ldlt.solve(inv_d1.transpose()).transpose();      // (S^-1 (S^-1 D)')' = S^-1 D S^-1
    cov.omega1 = 0.5 * (omega + omega.transpose());
    return cov;
}

inline FirstStageCov first_stage_cov(const FirstStageFit& fit) { return first_stage_cov(fit.z, fit.residuals); }

inline FirstStageFit fit_first_stage(const Dataset& ds) {
    static const std::string mod = "first-stage-ols";
    FirstStageFit fit;
    fit.z = instrument_matrix(ds);
    const auto k = fit.z.cols();
    if (ds.n() < k)
        throw numerical_failure(mod, "fewer rows (" + std::to_string(ds.n()) + ") than first-stage regressors (" +
                                         std::to_string(k) + ")");

    Eigen::ColPivHouseholderQR<Matrix> qr(fit.z);
    const Vector diag = qr.matrixQR().diagonal().cwiseAbs();
    const double rmax = diag.size() ? diag.maxCoeff() : 0.0;
    const double rmin = diag.size() ? diag.minCoeff() : 0.0;
    // |R_kk| ratio approximates cond(Z); its square approximates cond(Z'Z).
    if (qr.rank() < k || !(rmin > 0.0) || (rmax / rmin) * (rmax / rmin) > kMaxConditionNumber)
        throw numerical_failure(mod,
                                "instrument matrix is rank deficient: the instrument is collinear with the "
                                "exogenous columns, so the endogenous coefficient is not identified");

    fit.delta_hat.delta = qr.solve(ds.w());
    fit.residuals = ds.w() - fit.z * fit.delta_hat.delta;

    auto cov = first_stage_cov(fit.z, fit.residuals);
    fit.sigma1_delta_hat = std::move(cov.sigma1_delta);
    fit.d1_hat = std::move(cov.d1);
    fit.omega1_hat = std::move(cov.omega1);
    return fit;
}

}  // namespace tobitm
