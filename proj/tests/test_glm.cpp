#include <gtest/gtest.h>

#include <prewhiten/glm.hpp>
#include <prewhiten/rng.hpp>
#include <prewhiten/sim.hpp>

#include "test_util.hpp"

using namespace prewhiten;
using testutil::vec;

namespace {

DesignMatrix two_column_design(Eigen::Index T) {
    Eigen::VectorXd task(T);
    for (Eigen::Index t = 0; t < T; ++t)
        task[t] = (t / 10) % 2 == 0 ? 0.0 : 1.0;  // slow on/off block
    std::vector<NamedColumn> cols;
    cols.push_back({task, ColumnRole::task, "task"});
    return assemble_design(T, cols);
}

BoldMatrix wrap(const Eigen::MatrixXd& data, double tr = 0.72) {
    BoldMatrix b;
    b.data = data;
    b.tr = tr;
    validate_bold(b);
    return b;
}

} // namespace

TEST(Ols, ExactFitHasZeroResiduals) {
    const Eigen::Index T = 60;
    const DesignMatrix X = two_column_design(T);
    Eigen::MatrixXd y(T, 2);
    y.col(0) = X.matrix * vec({1.0, 2.0});
    y.col(1) = X.matrix * vec({-3.0, 0.5});
    const GlmFit f = fit_ols(wrap(y), X);
    EXPECT_LT(f.residuals.cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT(f.sigma2.maxCoeff(), 1e-20);
    EXPECT_NEAR(f.beta(0, 0), 1.0, 1e-10);
    EXPECT_NEAR(f.beta(1, 1), 0.5, 1e-10);
}

TEST(Ols, InterceptOnlyRecoversMean) {
    const Eigen::Index T = 101;
    const DesignMatrix X = assemble_design(T, {});
    ASSERT_EQ(X.K(), 1);
    Rng rng(17);
    Eigen::MatrixXd y(T, 3);
    for (Eigen::Index v = 0; v < 3; ++v)
        for (Eigen::Index t = 0; t < T; ++t) y(t, v) = 5.0 * rng.normal() + double(v);
    const GlmFit f = fit_ols(wrap(y), X);
    for (Eigen::Index v = 0; v < 3; ++v) {
        EXPECT_NEAR(f.beta(0, v), y.col(v).mean(), 1e-12);
        EXPECT_NEAR((f.residuals.col(v) - (y.col(v).array() - y.col(v).mean()).matrix()).norm(),
                    0.0, 1e-10);
    }
}

TEST(Ols, ResidualsOrthogonalToDesign) {
    const Eigen::Index T = 120;
    const DesignMatrix X = two_column_design(T);
    Rng rng(29);
    Eigen::MatrixXd y(T, 5);
    for (Eigen::Index v = 0; v < 5; ++v)
        for (Eigen::Index t = 0; t < T; ++t) y(t, v) = rng.normal();
    const GlmFit f = fit_ols(wrap(y), X);
    const Eigen::MatrixXd xr = X.matrix.transpose() * f.residuals;
    EXPECT_LT(xr.cwiseAbs().maxCoeff() / y.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Ols, TaskBetaRecoveredUnderArNoise) {
    // y = X (0,2)' + AR(3) noise; the mean recovered task beta over 500
    // replications must land within 3 standard errors of 2.
    const Eigen::Index T = 200;
    const DesignMatrix X = two_column_design(T);
    const Eigen::VectorXd phi = vec({0.425, 0.25, 0.1});
    const int reps = 500;
    std::vector<double> betas(reps);
    for (int r = 0; r < reps; ++r) {
        const Eigen::VectorXd noise = gen_ar_series(phi, 1.0, T, derive_seed(404, r));
        Eigen::MatrixXd y = X.matrix * vec({0.0, 2.0});
        y += noise;
        const GlmFit f = fit_ols(wrap(y), X);
        betas[static_cast<std::size_t>(r)] = f.beta(1, 0);
    }
    double mean = 0.0;
    for (double b : betas) mean += b;
    mean /= reps;
    double var = 0.0;
    for (double b : betas) var += (b - mean) * (b - mean);
    var /= (reps - 1);
    const double se_mean = std::sqrt(var / reps);
    EXPECT_LT(std::abs(mean - 2.0), 3.0 * se_mean)
        << "mean=" << mean << " se=" << se_mean;
}

TEST(Gls, IdentityWhitenerMatchesOls) {
    const Eigen::Index T = 80;
    const DesignMatrix X = two_column_design(T);
    Rng rng(5);
    Eigen::MatrixXd y(T, 4);
    for (Eigen::Index v = 0; v < 4; ++v)
        for (Eigen::Index t = 0; t < T; ++t) y(t, v) = rng.normal();
    const BoldMatrix b = wrap(y);
    const GlmFit ols = fit_ols(b, X);
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(T, T);
    const GlmFit gls = fit_gls(b, X, [&](Eigen::Index) -> const Eigen::MatrixXd& { return I; });
    EXPECT_LT((gls.beta - ols.beta).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((gls.tstats - ols.tstats).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((gls.residuals - ols.residuals).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Gls, ScalarWhitenerLeavesBetaAndTstats) {
    const Eigen::Index T = 80;
    const DesignMatrix X = two_column_design(T);
    Rng rng(6);
    Eigen::MatrixXd y(T, 2);
    for (Eigen::Index v = 0; v < 2; ++v)
        for (Eigen::Index t = 0; t < T; ++t) y(t, v) = rng.normal();
    const BoldMatrix b = wrap(y);
    const GlmFit ols = fit_ols(b, X);
    const Eigen::MatrixXd W = 3.0 * Eigen::MatrixXd::Identity(T, T);
    const GlmFit gls = fit_gls(b, X, [&](Eigen::Index) -> const Eigen::MatrixXd& { return W; });
    EXPECT_LT((gls.beta - ols.beta).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((gls.tstats - ols.tstats).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Gls, TrueWhitenerVarianceMatchesPrediction) {
    // AR(1) phi=0.5 noise whitened by the exact covariance inverse square
    // root: the Monte-Carlo variance of the task beta must match the
    // analytic (X~'X~)^-1 prediction within 10%.
    const Eigen::Index T = 100;
    const double phi = 0.5;
    const DesignMatrix X = two_column_design(T);
    Eigen::MatrixXd cov(T, T);
    for (Eigen::Index i = 0; i < T; ++i)
        for (Eigen::Index j = 0; j < T; ++j)
            cov(i, j) = std::pow(phi, std::abs(double(i - j))) / (1.0 - phi * phi);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::MatrixXd W = eig.operatorInverseSqrt();
    const Eigen::MatrixXd Xt = W * X.matrix;
    const Eigen::MatrixXd xtx_inv =
        (Xt.transpose() * Xt).ldlt().solve(Eigen::MatrixXd::Identity(2, 2));
    const double predicted = xtx_inv(1, 1);

    const int reps = 1000;
    std::vector<double> betas(reps);
    const Eigen::VectorXd phivec = vec({phi});
    for (int r = 0; r < reps; ++r) {
        Eigen::MatrixXd y = gen_ar_series(phivec, 1.0, T, derive_seed(777, r));
        const GlmFit f = fit_gls(wrap(y), X,
                                 [&](Eigen::Index) -> const Eigen::MatrixXd& { return W; });
        betas[static_cast<std::size_t>(r)] = f.beta(1, 0);
    }
    double mean = 0.0;
    for (double b : betas) mean += b;
    mean /= reps;
    double var = 0.0;
    for (double b : betas) var += (b - mean) * (b - mean);
    var /= (reps - 1);
    EXPECT_NEAR(var / predicted, 1.0, 0.10) << "empirical=" << var << " predicted=" << predicted;
}

TEST(Gls, SingularWhitenedDesignFlagsVertex) {
    const Eigen::Index T = 40;
    const DesignMatrix X = two_column_design(T);
    Rng rng(9);
    Eigen::MatrixXd y(T, 2);
    for (Eigen::Index v = 0; v < 2; ++v)
        for (Eigen::Index t = 0; t < T; ++t) y(t, v) = rng.normal();
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(T, T);
    const Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(T, T);
    const GlmFit f = fit_gls(wrap(y), X, [&](Eigen::Index v) -> const Eigen::MatrixXd& {
        return v == 1 ? Z : I;
    });
    EXPECT_EQ(f.failed[0], 0);
    EXPECT_EQ(f.failed[1], 1);
    EXPECT_DOUBLE_EQ(f.beta.col(1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Ttest, PinnedValues) {
    GlmFit f;
    f.dof = 276;
    f.beta.resize(1, 3);
    f.tstats.resize(1, 3);
    f.tstats << 0.0, 1.9687, -1.9687;
    f.se = Eigen::MatrixXd::Ones(1, 3);
    f.sigma2 = Eigen::VectorXd::Ones(3);
    f.residuals = Eigen::MatrixXd::Zero(2, 3);
    const Eigen::VectorXd p = ttest(f, 0);
    EXPECT_DOUBLE_EQ(p[0], 1.0);
    EXPECT_NEAR(p[1], 0.05, 1e-3);
    EXPECT_NEAR(p[2], 0.05, 1e-3);  // two-sided symmetry
}

TEST(Ttest, MonotoneInAbsT) {
    GlmFit f;
    f.dof = 30;
    f.tstats.resize(1, 5);
    f.tstats << 0.0, 0.5, 1.0, 2.0, 10.0;
    f.beta = f.tstats;
    f.se = Eigen::MatrixXd::Ones(1, 5);
    f.sigma2 = Eigen::VectorXd::Ones(5);
    f.residuals = Eigen::MatrixXd::Zero(2, 5);
    const Eigen::VectorXd p = ttest(f, 0);
    for (int i = 1; i < 5; ++i) EXPECT_LT(p[i], p[i - 1]);
    EXPECT_LT(p[4], 1e-9);
    EXPECT_THROW(ttest(f, 7), ConfigError);
}

TEST(Ttest, JointScaleInvariance) {
    const Eigen::Index T = 90;
    const DesignMatrix X = two_column_design(T);
    Rng rng(13);
    Eigen::MatrixXd y(T, 2);
    for (Eigen::Index v = 0; v < 2; ++v)
        for (Eigen::Index t = 0; t < T; ++t) y(t, v) = rng.normal() + 0.3 * X.matrix(t, 1);
    DesignMatrix Xs = X;
    Xs.matrix *= 7.0;
    const GlmFit a = fit_ols(wrap(y), X);
    const GlmFit b = fit_ols(wrap(Eigen::MatrixXd(7.0 * y)), Xs);
    EXPECT_LT((a.tstats - b.tstats).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Ttest, DofGuard) {
    GlmFit f;
    f.dof = 0;
    f.tstats = Eigen::MatrixXd::Zero(1, 1);
    f.beta = f.tstats;
    EXPECT_THROW(ttest(f, 0), ConfigError);
}
