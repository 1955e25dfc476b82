#pragma once

// Sandwich covariance of the second-stage estimator, including the
// correction for first-stage estimation error, and Wald intervals.
//
//   beta_cov = S2b^-1 (D2 + S2d Omega1 S2d') S2b^-T / n
//
// The joint (beta, delta) covariance Sigma^-1 D Sigma^-T / n with
// Sigma = [[S2b, S2d], [0, S1d]] and D = diag(D2, D1) is always assembled as
// well, and its beta block must agree with beta_cov.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <Eigen/Dense>

#include "tobitm/core_data.hpp"
#include "tobitm/error.hpp"
#include "tobitm/first_stage.hpp"
#include "tobitm/loss.hpp"
#include "tobitm/m_estimator.hpp"

namespace tobitm {

struct CovarianceBlocks {
    Matrix sigma2_beta;   // (p+2) x (p+2)
    Matrix sigma2_delta;  // (p+2) x (p+1)
    Matrix d2;            // (p+2) x (p+2)
    double bandwidth_h = 0.0;  // 0 when the loss has a classical psi'
};

struct CovarianceReport {
    Vector beta_hat;
    Matrix sigma2_beta_hat;
    Matrix sigma2_delta_hat;
    Matrix d2_hat;
    Matrix omega1_hat;
    Matrix beta_cov;
    Matrix beta_cov_unadjusted;  // S2b^-1 D2 S2b^-T / n
    Matrix adjustment;           // S2b^-1 S2d Omega1 S2d' S2b^-T / n
    Matrix joint_cov;            // (2p+3) x (2p+3), order (beta, delta)
    Vector se;
    Vector se_unadjusted;
    double bandwidth_h = 0.0;
    double min_eig_beta_cov = 0.0;
    double min_eig_adjustment = 0.0;
    double joint_block_gap = 0.0;  // max |joint beta block - beta_cov|
};

// Default bandwidth for the smoothed psi': 1.06 * sd(resid) * n^(-1/5).
inline double default_bandwidth(const Vector& residuals, Eigen::Index n) {
    const double rate = std::pow(static_cast<double>(n), -0.2);
    if (residuals.size() < 2) return 1.06 * rate;
    const double mean = residuals.mean();
    const double var = (residuals.array() - mean).square().sum() / static_cast<double>(residuals.size() - 1);
    const double sd = std::sqrt(var);
    return 1.06 * (sd > 0.0 ? sd : 1.0) * rate;
}

inline CovarianceBlocks estimate_blocks(const MEstimateFit& fit, std::optional<double> h = std::nullopt) {
    const Matrix& x = fit.design.xhat;
    const Matrix& z = fit.first_stage.z;
    const Eigen::Index n = x.rows();
    const Eigen::Index k = x.cols();
    const Vector beta = fit.beta_hat.flat();
    const Vector index = x * beta;

    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < n; ++i)
        if (index[i] > 0.0) active.push_back(i);
    Vector resid(static_cast<Eigen::Index>(active.size()));
    for (std::size_t a = 0; a < active.size(); ++a)
        resid[static_cast<Eigen::Index>(a)] = fit.y_shifted[active[a]] - index[active[a]];

    CovarianceBlocks b;
    b.sigma2_beta = Matrix::Zero(k, k);
    b.sigma2_delta = Matrix::Zero(k, z.cols());
    b.d2 = Matrix::Zero(k, k);

    std::function<double(double)> psi_prime;
    if (fit.loss.smooth) {
        psi_prime = [&loss = fit.loss](double e) { return loss.psi_prime(e); };
    } else {
        b.bandwidth_h = h ? *h : default_bandwidth(resid, n);
        psi_prime = smoothed_psi_prime(fit.loss, b.bandwidth_h);
    }

    const double rho1 = fit.beta_hat.rho1;
    for (std::size_t a = 0; a < active.size(); ++a) {
        const Eigen::Index i = active[a];
        const double e = resid[static_cast<Eigen::Index>(a)];
        const double pp = psi_prime(e);
        const double ps = fit.loss.psi(e);
        const auto xi = x.row(i).transpose();
        b.sigma2_beta.noalias() += pp * xi * xi.transpose();
        b.sigma2_delta.noalias() += (pp * rho1) * xi * z.row(i);
        b.d2.noalias() += (ps * ps) * xi * xi.transpose();
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    b.sigma2_beta *= inv_n;
    b.sigma2_delta *= inv_n;
    b.d2 *= inv_n;
    return b;
}

namespace detail {

inline void require_well_conditioned(const Matrix& a, const std::string& what) {
    Eigen::JacobiSVD<Matrix> svd(a);
    const Vector& sv = svd.singularValues();
    const double smin = sv.size() ? sv[sv.size() - 1] : 0.0;
    if (!(smin > 0.0) || sv[0] / smin > kMaxConditionNumber) {
        char buf[200];
        std::snprintf(buf, sizeof buf,
                      "%s is numerically singular (smallest singular value %.3g); identification fails or "
                      "censoring is too severe",
                      what.c_str(), smin);
        throw numerical_failure("covariance", buf);
    }
}

// A^-1 M A^-T for a square nonsingular A.
inline Matrix sandwich(const Eigen::FullPivLU<Matrix>& a, const Matrix& middle) {
    const Matrix left = a.solve(middle);               // A^-1 M
    return a.solve(left.transpose()).transpose();      // (A^-1 (A^-1 M)')' = A^-1 M A^-T
}

inline Matrix checked_symmetric(const Matrix& m, const std::string& what) {
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10 * scale) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%s is not symmetric (max asymmetry %.3g)", what.c_str(), asym);
        throw numerical_failure("covariance", buf);
    }
    return 0.5 * (m + m.transpose());
}

inline double min_eigenvalue(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().size() ? es.eigenvalues()[0] : 0.0;
}

}  // namespace detail

inline CovarianceReport beta_covariance(const MEstimateFit& fit, const CovarianceBlocks& blocks,
                                        const Matrix& omega1_hat) {
    const Eigen::Index k = blocks.sigma2_beta.rows();
    const Eigen::Index m = blocks.sigma2_delta.cols();
    const double n = static_cast<double>(fit.n);
    detail::require_well_conditioned(blocks.sigma2_beta, "Sigma2_beta");

    const Eigen::FullPivLU<Matrix> a(blocks.sigma2_beta);
    const Matrix bob = blocks.sigma2_delta * omega1_hat * blocks.sigma2_delta.transpose();

    CovarianceReport r;
    r.beta_hat = fit.beta_hat.flat();
    r.sigma2_beta_hat = blocks.sigma2_beta;
    r.sigma2_delta_hat = blocks.sigma2_delta;
    r.d2_hat = blocks.d2;
    r.omega1_hat = omega1_hat;
    r.bandwidth_h = blocks.bandwidth_h;
    r.beta_cov = detail::checked_symmetric(detail::sandwich(a, blocks.d2 + bob) / n, "beta covariance");
    r.beta_cov_unadjusted = detail::checked_symmetric(detail::sandwich(a, blocks.d2) / n, "unadjusted covariance");
    r.adjustment = detail::checked_symmetric(detail::sandwich(a, bob) / n, "adjustment term");

    // Joint system of both stages.
    const Matrix& s1 = fit.first_stage.sigma1_delta_hat;
    Matrix sigma = Matrix::Zero(k + m, k + m);
    sigma.topLeftCorner(k, k) = blocks.sigma2_beta;
    sigma.topRightCorner(k, m) = blocks.sigma2_delta;
    sigma.bottomRightCorner(m, m) = s1;
    Matrix d = Matrix::Zero(k + m, k + m);
    d.topLeftCorner(k, k) = blocks.d2;
    d.bottomRightCorner(m, m) = fit.first_stage.d1_hat;
    detail::require_well_conditioned(sigma, "joint Jacobian");
    const Eigen::FullPivLU<Matrix> joint(sigma);
    r.joint_cov = detail::checked_symmetric(detail::sandwich(joint, d) / n, "joint covariance");

    r.joint_block_gap = (r.joint_cov.topLeftCorner(k, k) - r.beta_cov).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, r.beta_cov.cwiseAbs().maxCoeff());
    if (r.joint_block_gap > 1e-8 * scale) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "joint covariance beta block disagrees with the direct expression by %.3g",
                      r.joint_block_gap);
        throw numerical_failure("covariance", buf);
    }

    r.min_eig_beta_cov = detail::min_eigenvalue(r.beta_cov);
    r.min_eig_adjustment = detail::min_eigenvalue(r.adjustment);
    r.se = r.beta_cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    r.se_unadjusted = r.beta_cov_unadjusted.diagonal().cwiseMax(0.0).cwiseSqrt();
    return r;
}

inline CovarianceReport covariance(const MEstimateFit& fit, std::optional<double> h = std::nullopt) {
    return beta_covariance(fit, estimate_blocks(fit, h), fit.first_stage.omega1_hat);
}

inline double normal_quantile(double p) {
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double v) const { return lo <= v && v <= hi; }
};

inline std::vector<Interval> wald_intervals(const Vector& estimate, const Vector& se, double level) {
    if (!(level > 0.0 && level < 1.0)) throw invalid_input("covariance", "confidence level must lie in (0,1)");
    const double q = normal_quantile(0.5 + 0.5 * level);
    std::vector<Interval> out;
    out.reserve(static_cast<std::size_t>(estimate.size()));
    for (Eigen::Index j = 0; j < estimate.size(); ++j) out.push_back({estimate[j] - q * se[j], estimate[j] + q * se[j]});
    return out;
}

// Intervals from the adjusted covariance, or from the unadjusted one when
// adjusted is false.
inline std::vector<Interval> wald_intervals(const CovarianceReport& report, double level, bool adjusted = true) {
    return wald_intervals(report.beta_hat, adjusted ? report.se : report.se_unadjusted, level);
}

}  // namespace tobitm
