#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"
#include "tobitm/m_estimator.hpp"
#include "tobitm/monte_carlo.hpp"

using tobitm::Dataset;
using tobitm::Matrix;
using tobitm::Vector;

namespace {

oracle::Loss oracle_loss(const tobitm::LossSpec& l) {
    if (l.kind == tobitm::LossKind::clad) return oracle::Loss::clad;
    if (l.kind == tobitm::LossKind::wme) return oracle::Loss::wme;
    return oracle::Loss::logcosh;
}

// Uncensored data whose response is an exact linear function of the
// augmented design built from its own first stage.
Dataset noiseless(std::mt19937_64& rng, Eigen::Index n, const Vector& beta, double c) {
    const Dataset base = support::random_dataset(rng, n, 1);
    const auto fs = tobitm::fit_first_stage(base);
    const auto x = tobitm::augment_design(base, fs);
    const Vector y = (x.xhat * beta).array() + c;
    return Dataset::from_columns(y, base.x_exo(), base.w(), base.z1(), c);
}

}  // namespace

TEST(AugmentDesign, RowAssembly) {
    Matrix x(1, 2);
    x << 1.0, 0.5;
    const Dataset ds = Dataset::from_columns(Vector{{1.0}}, x, Vector{{2.0}}, Vector{{0.7}});
    tobitm::FirstStageFit fs;
    fs.residuals = Vector{{-0.3}};
    const auto a = tobitm::augment_design(ds, fs);
    ASSERT_EQ(a.cols(), 4);
    EXPECT_EQ(a.xhat.row(0), (Eigen::RowVectorXd(4) << 1.0, 0.5, 2.0, -0.3).finished());
    fs.residuals = Vector::Zero(1);
    EXPECT_TRUE(tobitm::augment_design(ds, fs).xhat.col(3).isZero(0.0));
}

TEST(AugmentDesign, MatchesHandAssembly) {
    tobitm::DgpConfig cfg;
    cfg.n = 10;
    const Dataset ds = tobitm::generate(cfg);
    const auto fs = tobitm::fit_first_stage(ds);
    const auto a = tobitm::augment_design(ds, fs);
    for (Eigen::Index i = 0; i < 10; ++i) {
        EXPECT_EQ(a.xhat(i, 0), 1.0);
        EXPECT_EQ(a.xhat(i, 1), ds.x_exo()(i, 1));
        EXPECT_EQ(a.xhat(i, 2), ds.w()[i]);
        EXPECT_EQ(a.xhat(i, 3), ds.w()[i] - fs.z.row(i).dot(fs.delta_hat.delta));
    }
}

TEST(Objective, Examples) {
    Matrix x(1, 4);
    x << 1.0, 0.0, 0.0, 0.0;
    const tobitm::AugmentedDesign a{x};
    EXPECT_EQ(tobitm::objective(Vector{{-2.0, 0, 0, 0}}, a, Vector{{5.0}}, 0.0, tobitm::clad()), 5.0);

    std::mt19937_64 rng(1);
    const Vector beta{{8.0, 0.5, -0.2, 0.3}};
    const Dataset ds = noiseless(rng, 15, beta, 0.0);
    const auto fs = tobitm::fit_first_stage(ds);
    const auto ad = tobitm::augment_design(ds, fs);
    for (const auto& l : {tobitm::clad(), tobitm::wme(), tobitm::log_cosh()})
        EXPECT_EQ(tobitm::objective(beta, ad, ds.y(), 0.0, l), 0.0);
}

TEST(Objective, MatchesDirectSummation) {
    std::mt19937_64 rng(2);
    const Dataset ds = support::random_dataset(rng, 20, 1);
    const auto ad = tobitm::augment_design(ds, tobitm::fit_first_stage(ds));
    const Vector beta{{0.9, 1.1, 0.4, -0.2}};
    for (const auto& l : {tobitm::clad(), tobitm::wme(), tobitm::log_cosh()}) {
        const double ref = oracle::censored_objective(support::to_mat(ad.xhat), support::to_vec(ds.y()),
                                                      support::to_vec(beta), oracle_loss(l));
        EXPECT_NEAR(tobitm::objective(beta, ad, ds.y(), 0.0, l), ref, 1e-12) << l.name;
    }
    EXPECT_THROW(tobitm::objective(Vector::Zero(3), ad, ds.y(), 0.0, tobitm::clad()), tobitm::Error);
}

TEST(Objective, LocationShiftIdentity) {
    std::mt19937_64 rng(3);
    const Dataset base = support::random_dataset(rng, 40, 1);
    const double c = 2.25;
    const Vector y = (base.y().array() + c).matrix();
    const auto ad = tobitm::augment_design(base, tobitm::fit_first_stage(base));
    const Vector yc = (y.array() - c).matrix();
    const Vector beta{{0.2, 1.0, 0.6, 0.1}};
    Vector beta_raw = beta;
    beta_raw[0] += c;
    for (const auto& l : {tobitm::clad(), tobitm::wme(), tobitm::log_cosh()}) {
        const double shifted = tobitm::objective(beta, ad, y, c, l);
        EXPECT_EQ(shifted, tobitm::objective(beta, ad, yc, 0.0, l));
        // Same value in the unshifted parametrisation: rho(y - max(c, x'beta_raw)).
        double raw = 0.0;
        for (Eigen::Index i = 0; i < y.size(); ++i) raw += l.rho(y[i] - std::max(c, ad.xhat.row(i).dot(beta_raw)));
        EXPECT_NEAR(shifted, raw / static_cast<double>(y.size()), 1e-12);
    }
}

TEST(Fit, LocationShiftGivesSameEstimates) {
    std::mt19937_64 rng(4);
    const Dataset base = support::random_dataset(rng, 80, 1);
    const double c = -1.5;
    const Vector y = (base.y().array() + c).matrix();
    const Dataset shifted = Dataset::from_columns(y, base.x_exo(), base.w(), base.z1(), c);
    const Dataset zeroed = Dataset::from_columns((y.array() - c).matrix(), base.x_exo(), base.w(), base.z1(), 0.0);
    for (const auto& l : {tobitm::clad(), tobitm::wme(), tobitm::log_cosh()}) {
        const auto a = tobitm::fit(shifted, l);
        const auto b = tobitm::fit(zeroed, l);
        EXPECT_EQ(a.beta_hat.flat(), b.beta_hat.flat()) << l.name;
        EXPECT_EQ(a.objective_value, b.objective_value);
    }
}

TEST(Fit, NoiselessRecoversTruth) {
    std::mt19937_64 rng(5);
    const Vector beta{{8.0, 1.0, 0.5, -0.7}};
    for (double c : {0.0, 3.0}) {
        const Dataset ds = noiseless(rng, 60, beta, c);
        for (const auto& l : {tobitm::clad(), tobitm::wme(), tobitm::log_cosh()}) {
            const auto f = tobitm::fit(ds, l);
            EXPECT_LT((f.beta_hat.flat() - beta).cwiseAbs().maxCoeff(), 1e-4) << l.name;
            EXPECT_LE(f.objective_value, 1e-8);
        }
    }
}

TEST(Fit, Invariants) {
    tobitm::DgpConfig cfg;
    cfg.n = 200;
    cfg.seed = 9;
    const Dataset ds = tobitm::generate(cfg);
    for (const auto& l : {tobitm::clad(), tobitm::wme(), tobitm::log_cosh()}) {
        const auto f = tobitm::fit(ds, l);
        const double q = tobitm::objective(f.beta_hat, f.design, ds.y(), 0.0, l);
        EXPECT_NEAR(f.objective_value, q, 1e-12);
        EXPECT_GE(f.objective_value, 0.0);
        for (const auto& s : f.starts) EXPECT_LE(f.objective_value, tobitm::objective(s, f.design, ds.y(), 0.0, l));
        EXPECT_EQ(f.starts.size(), 3U);
        EXPECT_TRUE(f.opt.converged);
    }
}

TEST(Fit, WmeWithLargeDIsLeastSquares) {
    std::mt19937_64 rng(6);
    const Dataset ds = support::random_dataset(rng, 60, 1, 10.0);
    ASSERT_EQ(tobitm::censoring_fraction(ds), 0.0);
    const auto fs = tobitm::fit_first_stage(ds);
    const auto ad = tobitm::augment_design(ds, fs);
    const auto ls = oracle::normal_equations(support::to_mat(ad.xhat), support::to_vec(ds.y()));
    const auto f = tobitm::fit(ds, tobitm::wme(1e3));
    for (std::size_t j = 0; j < ls.size(); ++j) EXPECT_NEAR(f.beta_hat.flat()[static_cast<Eigen::Index>(j)], ls[j], 1e-4);
}

TEST(Fit, CladOnUncensoredDataIsLad) {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 3; ++rep) {
        const Dataset ds = support::random_dataset(rng, 50, 1, 10.0);
        ASSERT_EQ(tobitm::censoring_fraction(ds), 0.0);
        const auto f = tobitm::fit(ds, tobitm::clad());
        const double lad = oracle::lad_min(support::to_mat(f.design.xhat), support::to_vec(ds.y()));
        EXPECT_NEAR(f.objective_value, lad, 1e-6);
    }
}

TEST(Fit, RejectsUnidentifiedData) {
    const Matrix x = Matrix::Ones(5, 1);
    const Vector w{{1.0, 2.0, 0.5, 1.5, 3.0}};
    const Vector z{{0.1, 0.4, 0.3, 0.8, 0.9}};
    try {
        tobitm::fit(Dataset::from_columns(Vector::Zero(5), x, w, z), tobitm::clad());
        FAIL();
    } catch (const tobitm::Error& e) {
        EXPECT_EQ(e.kind(), tobitm::ErrorKind::numerical);
        EXPECT_NE(std::string(e.what()).find("all observations are censored"), std::string::npos);
    }
    EXPECT_THROW(tobitm::fit(Dataset::from_columns(Vector{{0, 0, 0, 1.0, 0}}, x, w, z), tobitm::clad()), tobitm::Error);
    const Dataset ok = Dataset::from_columns(Vector{{0, 2.0, 0, 1.0, 0.5}}, x, w, z);
    EXPECT_THROW(tobitm::fit(ok, tobitm::clad(), {}, std::vector<Vector>{Vector::Zero(2)}), tobitm::Error);
}

TEST(ScoreNorm, ZeroCases) {
    std::mt19937_64 rng(8);
    const Vector beta{{8.0, 1.0, 0.5, -0.7}};
    const Dataset ds = noiseless(rng, 30, beta, 0.0);
    const auto ad = tobitm::augment_design(ds, tobitm::fit_first_stage(ds));
    for (const auto& l : {tobitm::clad(), tobitm::wme(), tobitm::log_cosh()}) {
        EXPECT_EQ(tobitm::empirical_score(beta, ad.xhat, ds.y(), l).norm(), 0.0);
        const Vector all_negative{{-1e6, 0.0, 0.0, 0.0}};
        EXPECT_EQ(tobitm::empirical_score(all_negative, ad.xhat, ds.y(), l).norm(), 0.0);
    }
}

TEST(ScoreNorm, SimulatedWmeMatchesDirectSummation) {
    tobitm::DgpConfig cfg;
    cfg.n = 500;
    cfg.seed = 21;
    const Dataset ds = tobitm::generate(cfg);
    const auto f = tobitm::fit(ds, tobitm::wme());
    const auto x = support::to_mat(f.design.xhat);
    const auto b = support::to_vec(f.beta_hat.flat());
    oracle::Vec j(4, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double idx = oracle::dot(x[i], b);
        if (!(idx > 0.0)) continue;
        const double p = oracle::psi(oracle::Loss::wme, ds.y()[static_cast<Eigen::Index>(i)] - idx);
        for (std::size_t k = 0; k < 4; ++k) j[k] -= p * x[i][k] / 500.0;
    }
    EXPECT_NEAR(f.score_norm, std::sqrt(oracle::dot(j, j)), 1e-12);
    EXPECT_LE(f.score_norm, 0.05 * 4);
}
