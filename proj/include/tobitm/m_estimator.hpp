#pragma once

// Second stage: the censored M-estimation objective on the control-function
// augmented design, its minimization, and the empirical score diagnostic.
//
// Threshold handling: responses are shifted to y - c once, so the model is
// y - c = max(0, xhat' beta + eps) and every loss sees (y - c) - max(0, xhat' beta).

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tobitm/core_data.hpp"
#include "tobitm/error.hpp"
#include "tobitm/first_stage.hpp"
#include "tobitm/loss.hpp"
#include "tobitm/nelder_mead.hpp"

namespace tobitm {

inline AugmentedDesign augment_design(const Dataset& ds, const FirstStageFit& fs) {
    if (fs.residuals.size() != ds.n())
        throw invalid_input("m-estimator", "first-stage residuals do not match the dataset");
    AugmentedDesign d;
    d.xhat.resize(ds.n(), ds.p() + 2);
    d.xhat.leftCols(ds.p()) = ds.x_exo();
    d.xhat.col(ds.p()) = ds.w();
    d.xhat.col(ds.p() + 1) = fs.residuals;
    return d;
}

// Q_n(beta) with a reusable buffer for the linear index. Not safe for
// concurrent calls on one instance; make one per thread.
class CensoredObjective {
public:
    CensoredObjective(const Matrix& xhat, Vector y_shifted, const LossSpec& loss)
        : xhat_(xhat), y_(std::move(y_shifted)), loss_(loss), index_(xhat.rows()) {}

    double operator()(const Vector& beta) const {
        if (beta.size() != xhat_.cols())
            throw invalid_input("m-estimator", "parameter length " + std::to_string(beta.size()) +
                                                   " does not match design width " + std::to_string(xhat_.cols()));
        index_.noalias() = xhat_ * beta;
        const Eigen::Index n = y_.size();
        double sum = 0.0;
        switch (loss_.kind) {
        case LossKind::clad:
            for (Eigen::Index i = 0; i < n; ++i) sum += std::abs(y_[i] - std::max(0.0, index_[i]));
            break;
        default:
            for (Eigen::Index i = 0; i < n; ++i) sum += loss_.rho(y_[i] - std::max(0.0, index_[i]));
            break;
        }
        if (!std::isfinite(sum)) {
            for (Eigen::Index i = 0; i < n; ++i)
                if (!std::isfinite(index_[i]))
                    throw numerical_failure("m-estimator", "non-finite linear predictor at row " + std::to_string(i));
        }
        return sum / static_cast<double>(n);
    }

    const Vector& y_shifted() const noexcept { return y_; }

private:
    const Matrix& xhat_;
    Vector y_;
    const LossSpec& loss_;
    mutable Vector index_;
};

inline double objective(const Vector& beta, const AugmentedDesign& x, const Vector& y, double c, const LossSpec& loss) {
    if (y.size() != x.rows()) throw invalid_input("m-estimator", "response length does not match the design");
    CensoredObjective q(x.xhat, (y.array() - c).matrix(), loss);
    return q(beta);
}

inline double objective(const ParamVector& beta, const AugmentedDesign& x, const Vector& y, double c,
                        const LossSpec& loss) {
    return objective(beta.flat(), x, y, c, loss);
}

// J_2n(beta) = -(1/n) sum 1(x'b > 0) psi(y - x'b) x
inline Vector empirical_score(const Vector& beta, const Matrix& xhat, const Vector& y_shifted, const LossSpec& loss) {
    Vector score = Vector::Zero(xhat.cols());
    const Vector index = xhat * beta;
    for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
        if (!(index[i] > 0.0)) continue;
        score -= loss.psi(y_shifted[i] - index[i]) * xhat.row(i).transpose();
    }
    return score / static_cast<double>(xhat.rows());
}

struct MEstimateFit {
    ParamVector beta_hat;
    double objective_value = 0.0;
    FirstStageFit first_stage;
    AugmentedDesign design;
    Vector y_shifted;  // y - c
    double threshold = 0.0;
    LossSpec loss;
    double score_norm = 0.0;
    OptResult opt;
    std::vector<Vector> starts;
    Eigen::Index n = 0;
    Eigen::Index p = 0;
};

inline double score_norm(const MEstimateFit& fit) {
    return empirical_score(fit.beta_hat.flat(), fit.design.xhat, fit.y_shifted, fit.loss).norm();
}

namespace detail {

inline std::optional<Vector> least_squares(const Matrix& x, const Vector& y) {
    if (x.rows() < x.cols()) return std::nullopt;
    Eigen::ColPivHouseholderQR<Matrix> qr(x);
    if (qr.rank() < x.cols()) return std::nullopt;
    Vector b = qr.solve(y);
    if (!b.allFinite()) return std::nullopt;
    return b;
}

}  // namespace detail

// Least squares ignoring censoring, least squares on the uncensored rows,
// and the zero vector. Starts that cannot be computed are skipped.
inline std::vector<Vector> default_starts(const AugmentedDesign& x, const Vector& y_shifted) {
    std::vector<Vector> starts;
    if (auto b = detail::least_squares(x.xhat, y_shifted)) starts.push_back(*b);

    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < y_shifted.size(); ++i)
        if (y_shifted[i] > 0.0) keep.push_back(i);
    Matrix xu(static_cast<Eigen::Index>(keep.size()), x.cols());
    Vector yu(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
        xu.row(static_cast<Eigen::Index>(k)) = x.xhat.row(keep[k]);
        yu[static_cast<Eigen::Index>(k)] = y_shifted[keep[k]];
    }
    if (auto b = detail::least_squares(xu, yu)) starts.push_back(*b);

    starts.push_back(Vector::Zero(x.cols()));
    return starts;
}

inline MEstimateFit fit(const Dataset& ds, const LossSpec& loss, const SimplexConfig& cfg = {},
                        const std::optional<std::vector<Vector>>& starts = std::nullopt) {
    static const std::string mod = "m-estimator";
    const auto uncensored = (ds.y().array() > ds.threshold()).count();
    if (uncensored == 0) throw numerical_failure(mod, "all observations are censored; coefficients are not identified");
    if (uncensored == 1)
        throw numerical_failure(mod, "only one uncensored observation; coefficients are not identified");

    MEstimateFit out;
    out.first_stage = fit_first_stage(ds);
    out.design = augment_design(ds, out.first_stage);
    out.y_shifted = (ds.y().array() - ds.threshold()).matrix();
    out.threshold = ds.threshold();
    out.loss = loss;
    out.n = ds.n();
    out.p = ds.p();

    out.starts = starts ? *starts : default_starts(out.design, out.y_shifted);
    for (const auto& s : out.starts)
        if (s.size() != out.design.cols())
            throw invalid_input(mod, "start vector length does not match p+2 = " + std::to_string(out.design.cols()));

    CensoredObjective q(out.design.xhat, out.y_shifted, out.loss);
    out.opt = multi_start(q, out.starts, cfg);
    out.beta_hat = ParamVector::from_flat(out.opt.x_min);
    out.objective_value = q(out.opt.x_min);
    out.score_norm = score_norm(out);
    return out;
}

}  // namespace tobitm
