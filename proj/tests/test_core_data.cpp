#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "test_support.hpp"
#include "tobitm/core_data.hpp"

using tobitm::Dataset;
using tobitm::Matrix;
using tobitm::Vector;

namespace {

Matrix ones_col(Eigen::Index n) { return Matrix::Ones(n, 1); }

std::string message_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const tobitm::Error& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Dataset, ThreeValidRows) {
    const Dataset ds = Dataset::from_columns(Vector{{0.0, 1.0, 2.0}}, ones_col(3), Vector{{1.0, 2.0, 3.0}},
                                             Vector{{0.5, 0.1, 0.2}});
    EXPECT_EQ(ds.n(), 3);
    EXPECT_EQ(ds.p(), 1);
    EXPECT_EQ(ds.threshold(), 0.0);
}

TEST(Dataset, ResponseBelowThresholdNamesRow) {
    const auto msg = message_of(
        [] { Dataset::from_columns(Vector{{-1.0, 2.0}}, ones_col(2), Vector{{1.0, 2.0}}, Vector{{1.0, 3.0}}); });
    EXPECT_NE(msg.find("response below threshold at row 0"), std::string::npos) << msg;
}

TEST(Dataset, PrependAddsInterceptColumn) {
    Matrix x(3, 1);
    x << 0.3, -1.0, 2.0;
    const Dataset ds = Dataset::from_columns(Vector{{0.0, 1.0, 2.0}}, x, Vector{{1.0, 2.0, 3.0}}, Vector{{0.5, 0.1, 0.2}},
                                             0.0, tobitm::InterceptPolicy::prepend);
    EXPECT_EQ(ds.p(), 2);
    EXPECT_TRUE((ds.x_exo().col(0).array() == 1.0).all());
    EXPECT_EQ(ds.x_exo()(2, 1), 2.0);
}

TEST(Dataset, RequirePolicyRejectsMissingIntercept) {
    Matrix x(2, 1);
    x << 0.3, -1.0;
    EXPECT_THROW(Dataset::from_columns(Vector{{0.0, 1.0}}, x, Vector{{1.0, 2.0}}, Vector{{0.5, 0.1}}), tobitm::Error);
}

TEST(Dataset, LengthMismatchAndNonFinite) {
    EXPECT_THROW(Dataset::from_columns(Vector{{0.0, 1.0}}, ones_col(3), Vector{{1.0, 2.0}}, Vector{{0.5, 0.1}}),
                 tobitm::Error);
    const auto msg = message_of([] {
        Dataset::from_columns(Vector{{0.0, 1.0, 2.0}}, ones_col(3), Vector{{1.0, NAN, 3.0}}, Vector{{0.5, 0.1, 0.2}});
    });
    EXPECT_NE(msg.find("row 1"), std::string::npos) << msg;
    try {
        Dataset::from_columns(Vector{{0.0, 1.0}}, ones_col(2), Vector{{1.0, 2.0}}, Vector{{0.5, INFINITY}});
        FAIL();
    } catch (const tobitm::Error& e) {
        EXPECT_EQ(e.kind(), tobitm::ErrorKind::invalid_input);
        EXPECT_EQ(e.module(), "core-data");
    }
}

TEST(CensoringFraction, CountsExactThresholdValues) {
    const Dataset a = Dataset::from_columns(Vector{{0.0, 0.0, 5.0}}, ones_col(3), Vector{{1, 2, 3}}, Vector{{3, 1, 2}});
    EXPECT_DOUBLE_EQ(tobitm::censoring_fraction(a), 2.0 / 3.0);
    const Dataset b = Dataset::from_columns(Vector{{0.1, 1e-300, 5.0}}, ones_col(3), Vector{{1, 2, 3}}, Vector{{3, 1, 2}});
    EXPECT_EQ(tobitm::censoring_fraction(b), 0.0);
    const Dataset c = Dataset::from_columns(Vector{{2.0, 2.5, 2.0, 3.0}}, ones_col(4), Vector{{1, 2, 3, 4}},
                                            Vector{{3, 1, 2, 0}}, 2.0);
    EXPECT_DOUBLE_EQ(tobitm::censoring_fraction(c), 0.5);
}

TEST(CensoringFraction, PermutationInvariant) {
    std::mt19937_64 rng(3);
    const Dataset ds = support::random_dataset(rng, 200, 2);
    std::vector<std::size_t> perm(200);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    EXPECT_EQ(tobitm::censoring_fraction(ds), tobitm::censoring_fraction(ds.select_rows(perm)));
    EXPECT_GT(tobitm::censoring_fraction(ds), 0.0);
}

TEST(Dataset, SelectRowsCopiesTuples) {
    std::mt19937_64 rng(5);
    const Dataset ds = support::random_dataset(rng, 10, 1);
    const std::vector<std::size_t> rows{3, 3, 9};
    const Dataset sub = ds.select_rows(rows);
    ASSERT_EQ(sub.n(), 3);
    EXPECT_EQ(sub.y()[1], ds.y()[3]);
    EXPECT_EQ(sub.x_exo()(2, 1), ds.x_exo()(9, 1));
    EXPECT_EQ(sub.w()[0], ds.w()[3]);
    EXPECT_EQ(sub.z1()[2], ds.z1()[9]);
    const std::vector<std::size_t> bad{10};
    EXPECT_THROW(ds.select_rows(bad), tobitm::Error);
}

TEST(ParamVector, FlatRoundTrip) {
    const Vector v{{1.0, 2.0, 3.0, 0.5}};
    const auto b = tobitm::ParamVector::from_flat(v);
    EXPECT_EQ(b.alpha.size(), 2);
    EXPECT_EQ(b.gamma, 3.0);
    EXPECT_EQ(b.rho1, 0.5);
    EXPECT_EQ(b.flat(), v);
    EXPECT_THROW(tobitm::ParamVector::from_flat(Vector{{1.0, 2.0}}), tobitm::Error);
}
