#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"
#include "tobitm/covariance.hpp"
#include "tobitm/monte_carlo.hpp"

using tobitm::Dataset;
using tobitm::Matrix;
using tobitm::Vector;

namespace {

tobitm::MEstimateFit simulated_fit(const tobitm::LossSpec& loss, Eigen::Index n, std::uint64_t seed) {
    tobitm::DgpConfig cfg;
    cfg.n = n;
    cfg.seed = seed;
    return tobitm::fit(tobitm::generate(cfg), loss);
}

double min_eig(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    return es.eigenvalues().minCoeff();
}

}  // namespace

TEST(Blocks, WmeInteriorGivesGramMatrix) {
    // Residuals tiny relative to d and every index positive.
    std::mt19937_64 rng(1);
    const Dataset base = support::random_dataset(rng, 40, 1, 20.0);
    const auto fs = tobitm::fit_first_stage(base);
    const auto ad = tobitm::augment_design(base, fs);
    const Vector beta{{20.0, 1.0, 0.5, 0.2}};
    std::normal_distribution<double> nd(0.0, 0.01);
    Vector y = ad.xhat * beta;
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += nd(rng);
    const Dataset ds = Dataset::from_columns(y, base.x_exo(), base.w(), base.z1());
    const auto f = tobitm::fit(ds, tobitm::wme());
    ASSERT_TRUE(((f.design.xhat * f.beta_hat.flat()).array() > 0).all());
    const auto b = tobitm::estimate_blocks(f);
    const Matrix gram = f.design.xhat.transpose() * f.design.xhat / 40.0;
    EXPECT_LT((b.sigma2_beta - gram).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(b.bandwidth_h, 0.0);
}

TEST(Blocks, AllIndicesNonPositiveGiveZeroBlocks) {
    auto f = simulated_fit(tobitm::log_cosh(), 100, 2);
    Vector neg = Vector::Zero(4);
    neg[0] = -1e6;
    f.beta_hat = tobitm::ParamVector::from_flat(neg);
    const auto b = tobitm::estimate_blocks(f);
    EXPECT_TRUE(b.sigma2_beta.isZero(0.0));
    EXPECT_TRUE(b.sigma2_delta.isZero(0.0));
    EXPECT_TRUE(b.d2.isZero(0.0));
    try {
        tobitm::covariance(f);
        FAIL();
    } catch (const tobitm::Error& e) {
        EXPECT_EQ(e.kind(), tobitm::ErrorKind::numerical);
        EXPECT_NE(std::string(e.what()).find("smallest singular value"), std::string::npos);
    }
}

TEST(Blocks, LogCoshMatchesDirectSummation) {
    const auto f = simulated_fit(tobitm::log_cosh(), 200, 3);
    const auto b = tobitm::estimate_blocks(f);
    const auto x = support::to_mat(f.design.xhat);
    const auto z = support::to_mat(f.first_stage.z);
    const auto beta = support::to_vec(f.beta_hat.flat());
    const double rho1 = beta[3];
    oracle::Mat s2b(4, oracle::Vec(4, 0.0)), d2(4, oracle::Vec(4, 0.0)), s2d(4, oracle::Vec(z[0].size(), 0.0));
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double idx = oracle::dot(x[i], beta);
        if (!(idx > 0.0)) continue;
        const double e = f.y_shifted[static_cast<Eigen::Index>(i)] - idx;
        const double t = std::tanh(e);
        for (std::size_t a = 0; a < 4; ++a) {
            for (std::size_t c = 0; c < 4; ++c) {
                s2b[a][c] += (1.0 - t * t) * x[i][a] * x[i][c] / 200.0;
                d2[a][c] += t * t * x[i][a] * x[i][c] / 200.0;
            }
            for (std::size_t c = 0; c < z[0].size(); ++c) s2d[a][c] += (1.0 - t * t) * rho1 * x[i][a] * z[i][c] / 200.0;
        }
    }
    EXPECT_LT(support::max_abs_diff(s2b, b.sigma2_beta), 1e-10);
    EXPECT_LT(support::max_abs_diff(d2, b.d2), 1e-10);
    EXPECT_LT(support::max_abs_diff(s2d, b.sigma2_delta), 1e-10);

    // Sandwich assembled from the oracle blocks.
    const auto inv = oracle::inverse(s2b);
    const auto omega = support::to_mat(f.first_stage.omega1_hat);
    const auto mid = oracle::add(d2, oracle::matmul(oracle::matmul(s2d, omega), oracle::transpose(s2d)));
    auto cov = oracle::matmul(oracle::matmul(inv, mid), oracle::transpose(inv));
    for (auto& row : cov)
        for (auto& v : row) v /= 200.0;
    const auto rep = tobitm::covariance(f);
    EXPECT_LT(support::max_abs_diff(cov, rep.beta_cov), 1e-10 * std::max(1.0, rep.beta_cov.cwiseAbs().maxCoeff()));
}

TEST(Blocks, CladUsesBandwidthRule) {
    const auto f = simulated_fit(tobitm::clad(), 300, 4);
    const auto b = tobitm::estimate_blocks(f);
    const Vector idx = f.design.xhat * f.beta_hat.flat();
    std::vector<double> resid;
    for (Eigen::Index i = 0; i < idx.size(); ++i)
        if (idx[i] > 0) resid.push_back(f.y_shifted[i] - idx[i]);
    const double h = 1.06 * std::sqrt(oracle::sample_variance(resid)) * std::pow(300.0, -0.2);
    EXPECT_NEAR(b.bandwidth_h, h, 1e-12);
    const auto b2 = tobitm::estimate_blocks(f, 0.25);
    EXPECT_EQ(b2.bandwidth_h, 0.25);
}

TEST(BetaCovariance, IdentityBlocks) {
    auto f = simulated_fit(tobitm::wme(), 100, 5);
    tobitm::CovarianceBlocks b;
    b.sigma2_beta = Matrix::Identity(4, 4);
    b.d2 = Matrix::Identity(4, 4);
    b.sigma2_delta = Matrix::Zero(4, 3);
    const auto r = tobitm::beta_covariance(f, b, f.first_stage.omega1_hat);
    EXPECT_LT((r.beta_cov - Matrix::Identity(4, 4) / 100.0).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_TRUE(r.adjustment.isZero(0.0));
}

TEST(BetaCovariance, NoEndogeneityMeansNoAdjustment) {
    auto f = simulated_fit(tobitm::wme(), 300, 6);
    Vector b = f.beta_hat.flat();
    b[3] = 0.0;
    f.beta_hat = tobitm::ParamVector::from_flat(b);
    const auto blocks = tobitm::estimate_blocks(f);
    EXPECT_TRUE(blocks.sigma2_delta.isZero(0.0));
    const auto r = tobitm::beta_covariance(f, blocks, f.first_stage.omega1_hat);
    EXPECT_LT((r.beta_cov - r.beta_cov_unadjusted).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(BetaCovariance, StructureOnSimulatedFits) {
    for (const auto& l : {tobitm::clad(), tobitm::wme(), tobitm::log_cosh()})
        for (std::uint64_t seed = 10; seed < 13; ++seed) {
            const auto f = simulated_fit(l, 500, seed);
            const auto r = tobitm::covariance(f);
            const double scale = r.beta_cov.trace();
            EXPECT_LT((r.beta_cov - r.beta_cov.transpose()).cwiseAbs().maxCoeff(), 1e-10 * scale);
            EXPECT_GE(min_eig(r.beta_cov), -1e-8 * scale);
            EXPECT_GE(min_eig(r.adjustment), -1e-8 * scale);
            EXPECT_GE(min_eig(r.joint_cov), -1e-8 * r.joint_cov.trace());
            EXPECT_GE(min_eig(r.beta_cov - r.beta_cov_unadjusted), -1e-8 * scale);
            EXPECT_LE(r.joint_block_gap, 1e-8 * std::max(1.0, r.beta_cov.cwiseAbs().maxCoeff()));
            for (Eigen::Index j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(r.se[j], std::sqrt(r.beta_cov(j, j)));
        }
}

// Partitioned inverse: the beta rows of Sigma^-1 are [S2b^-1, -S2b^-1 S2d S1^-1].
TEST(BetaCovariance, JointBlockMatchesPartitionedInverse) {
    const auto f = simulated_fit(tobitm::wme(), 500, 7);
    const auto b = tobitm::estimate_blocks(f);
    const auto r = tobitm::beta_covariance(f, b, f.first_stage.omega1_hat);
    const auto a_inv = oracle::inverse(support::to_mat(b.sigma2_beta));
    const auto s1_inv = oracle::inverse(support::to_mat(f.first_stage.sigma1_delta_hat));
    auto cross = oracle::matmul(oracle::matmul(a_inv, support::to_mat(b.sigma2_delta)), s1_inv);
    for (auto& row : cross)
        for (auto& v : row) v = -v;
    const auto d2 = support::to_mat(b.d2);
    const auto d1 = support::to_mat(f.first_stage.d1_hat);
    auto beta_block = oracle::add(oracle::matmul(oracle::matmul(a_inv, d2), oracle::transpose(a_inv)),
                                  oracle::matmul(oracle::matmul(cross, d1), oracle::transpose(cross)));
    for (auto& row : beta_block)
        for (auto& v : row) v /= 500.0;
    EXPECT_LT(support::max_abs_diff(beta_block, r.beta_cov), 1e-8 * std::max(1.0, r.beta_cov.cwiseAbs().maxCoeff()));
    EXPECT_LT(support::max_abs_diff(beta_block, r.joint_cov.topLeftCorner(4, 4)), 1e-8);
}

TEST(BetaCovariance, ScaleEquivarianceForWme) {
    tobitm::DgpConfig cfg;
    cfg.n = 400;
    cfg.seed = 8;
    const Dataset ds = tobitm::generate(cfg);
    const double s = 2.0;
    const Dataset scaled = Dataset::from_columns((ds.y() * s).eval(), ds.x_exo(), ds.w(), ds.z1(), 0.0);
    // Both minima must be resolved well below the comparison tolerance.
    tobitm::SimplexConfig tight;
    tight.f_tol = 1e-15;
    tight.x_tol = 1e-12;
    const auto f1 = tobitm::fit(ds, tobitm::wme(1.35), tight);
    const auto f2 = tobitm::fit(scaled, tobitm::wme(1.35 * s), tight);
    EXPECT_LT((f2.beta_hat.flat() - s * f1.beta_hat.flat()).cwiseAbs().maxCoeff(), 1e-5);
    const auto r1 = tobitm::covariance(f1);
    const auto r2 = tobitm::covariance(f2);
    EXPECT_LT((r2.beta_cov - s * s * r1.beta_cov).cwiseAbs().maxCoeff(), 1e-4 * r2.beta_cov.cwiseAbs().maxCoeff());
}

TEST(Wald, Intervals) {
    const auto ci = tobitm::wald_intervals(Vector{{0.0, 3.0}}, Vector{{1.0, 0.0}}, 0.95);
    EXPECT_NEAR(ci[0].lo, -1.959963984540054, 1e-12);
    EXPECT_NEAR(ci[0].hi, 1.959963984540054, 1e-12);
    EXPECT_EQ(ci[1].lo, 3.0);
    EXPECT_EQ(ci[1].hi, 3.0);
    EXPECT_TRUE(ci[1].contains(3.0));
    EXPECT_THROW(tobitm::wald_intervals(Vector{{0.0}}, Vector{{1.0}}, 1.0), tobitm::Error);
    EXPECT_THROW(tobitm::wald_intervals(Vector{{0.0}}, Vector{{1.0}}, 0.0), tobitm::Error);
}
