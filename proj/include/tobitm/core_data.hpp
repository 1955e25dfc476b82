#pragma once

// Observational data and parameter types shared by every estimation stage.
//
// A Dataset holds one left-censored response, the exogenous design (first
// column is the intercept), a single endogenous regressor and a single
// excluded instrument. Everything is validated once at construction and
// immutable afterwards.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tobitm/error.hpp"

namespace tobitm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class InterceptPolicy {
    require,  // column 0 of the exogenous block must already be all ones
    prepend,  // prepend a ones column unless column 0 already is one
};

struct ColumnNames {
    std::string response = "y";
    std::vector<std::string> exogenous;  // excludes the intercept
    std::string endogenous = "w";
    std::string instrument = "z1";
};

class Dataset {
public:
    static Dataset from_columns(Vector y, Matrix x_exo, Vector w, Vector z1, double c = 0.0,
                                InterceptPolicy policy = InterceptPolicy::require,
                                ColumnNames names = {}) {
        static const std::string mod = "core-data";
        const auto n = y.size();
        if (n < 1) throw invalid_input(mod, "dataset must contain at least one row");
        if (x_exo.rows() != n || w.size() != n || z1.size() != n)
            throw invalid_input(mod, "column length mismatch: y has " + std::to_string(n) +
                                         " rows, X_exo " + std::to_string(x_exo.rows()) +
                                         ", w " + std::to_string(w.size()) + ", z1 " +
                                         std::to_string(z1.size()));
        if (!std::isfinite(c)) throw invalid_input(mod, "censoring threshold must be finite");

        for (Eigen::Index i = 0; i < n; ++i) {
            if (!std::isfinite(y[i])) throw invalid_input(mod, "non-finite response at row " + std::to_string(i));
            if (!std::isfinite(w[i])) throw invalid_input(mod, "non-finite endogenous value at row " + std::to_string(i));
            if (!std::isfinite(z1[i])) throw invalid_input(mod, "non-finite instrument value at row " + std::to_string(i));
            for (Eigen::Index j = 0; j < x_exo.cols(); ++j)
                if (!std::isfinite(x_exo(i, j)))
                    throw invalid_input(mod, "non-finite exogenous value at row " + std::to_string(i) +
                                                 ", column " + std::to_string(j));
            if (y[i] < c) throw invalid_input(mod, "response below threshold at row " + std::to_string(i));
        }

        const bool has_intercept = x_exo.cols() > 0 && (x_exo.col(0).array() == 1.0).all();
        if (!has_intercept) {
            if (policy == InterceptPolicy::require)
                throw invalid_input(mod, "column 0 of the exogenous block must be identically 1");
            Matrix with_ones(n, x_exo.cols() + 1);
            with_ones.col(0).setOnes();
            with_ones.rightCols(x_exo.cols()) = x_exo;
            x_exo = std::move(with_ones);
        }
        if (names.exogenous.size() + 1 != static_cast<std::size_t>(x_exo.cols())) {
            names.exogenous.clear();
            for (Eigen::Index j = 1; j < x_exo.cols(); ++j) names.exogenous.push_back("x" + std::to_string(j));
        }

        Dataset ds;
        ds.y_ = std::move(y);
        ds.x_exo_ = std::move(x_exo);
        ds.w_ = std::move(w);
        ds.z1_ = std::move(z1);
        ds.c_ = c;
        ds.names_ = std::move(names);
        return ds;
    }

    const Vector& y() const noexcept { return y_; }
    const Matrix& x_exo() const noexcept { return x_exo_; }
    const Vector& w() const noexcept { return w_; }
    const Vector& z1() const noexcept { return z1_; }
    double threshold() const noexcept { return c_; }
    const ColumnNames& names() const noexcept { return names_; }

    Eigen::Index n() const noexcept { return y_.size(); }
    // Number of exogenous columns including the intercept.
    Eigen::Index p() const noexcept { return x_exo_.cols(); }

    // Row subset (with repetition allowed). Invariants are preserved by
    // construction so no revalidation happens.
    Dataset select_rows(std::span<const std::size_t> rows) const {
        const auto m = static_cast<Eigen::Index>(rows.size());
        if (m < 1) throw invalid_input("core-data", "row selection must be non-empty");
        Dataset out;
        out.y_.resize(m);
        out.x_exo_.resize(m, p());
        out.w_.resize(m);
        out.z1_.resize(m);
        for (Eigen::Index k = 0; k < m; ++k) {
            const auto i = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(k)]);
            if (i < 0 || i >= n()) throw invalid_input("core-data", "row index out of range: " + std::to_string(i));
            out.y_[k] = y_[i];
            out.x_exo_.row(k) = x_exo_.row(i);
            out.w_[k] = w_[i];
            out.z1_[k] = z1_[i];
        }
        out.c_ = c_;
        out.names_ = names_;
        return out;
    }

    // Identical data and threshold (names are ignored).
    bool same_values(const Dataset& o) const {
        return c_ == o.c_ && y_ == o.y_ && x_exo_ == o.x_exo_ && w_ == o.w_ && z1_ == o.z1_;
    }

private:
    Dataset() = default;

    Vector y_;
    Matrix x_exo_;
    Vector w_;
    Vector z1_;
    double c_ = 0.0;
    ColumnNames names_;
};

// Share of responses sitting exactly at the threshold.
inline double censoring_fraction(const Dataset& ds) {
    const auto censored = (ds.y().array() == ds.threshold()).count();
    return static_cast<double>(censored) / static_cast<double>(ds.n());
}

// Second-stage coefficients: exogenous (alpha, incl. intercept), the
// endogenous coefficient gamma and the control-function coefficient rho1.
struct ParamVector {
    Vector alpha;
    double gamma = 0.0;
    double rho1 = 0.0;

    Eigen::Index size() const noexcept { return alpha.size() + 2; }

    Vector flat() const {
        Vector v(size());
        v.head(alpha.size()) = alpha;
        v[alpha.size()] = gamma;
        v[alpha.size() + 1] = rho1;
        return v;
    }

    static ParamVector from_flat(const Vector& v) {
        if (v.size() < 3) throw invalid_input("core-data", "parameter vector needs at least 3 entries");
        if (!v.allFinite()) throw invalid_input("core-data", "parameter vector has non-finite entries");
        ParamVector b;
        b.alpha = v.head(v.size() - 2);
        b.gamma = v[v.size() - 2];
        b.rho1 = v[v.size() - 1];
        return b;
    }
};

// First-stage coefficients ordered as (instrument, exogenous columns...).
struct InstrumentVector {
    Vector delta;

    double instrument_coef() const { return delta[0]; }
    Vector exogenous_coefs() const { return delta.tail(delta.size() - 1); }
};

// Rows (x_exo_i, w_i, e_i); column order is fixed.
struct AugmentedDesign {
    Matrix xhat;

    Eigen::Index rows() const noexcept { return xhat.rows(); }
    Eigen::Index cols() const noexcept { return xhat.cols(); }
};

}  // namespace tobitm
