#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "prewhiten/data.hpp"
#include "prewhiten/design.hpp"
#include "prewhiten/error.hpp"
#include "prewhiten/parallel.hpp"
#include "prewhiten/special.hpp"

namespace prewhiten {

/// Per-vertex regression results. `failed[v]` is set when a whitened design
/// became numerically singular at vertex v; such vertices carry zero
/// estimates and must be excluded from summaries.
struct GlmFit {
    Eigen::MatrixXd beta;       // K x V
    Eigen::MatrixXd residuals;  // T x V
    Eigen::VectorXd sigma2;     // V
    Eigen::MatrixXd tstats;     // K x V
    Eigen::MatrixXd se;         // K x V
    Eigen::Index dof = 0;       // T - K
    std::vector<std::uint8_t> failed;

    Eigen::Index K() const { return beta.rows(); }
    Eigen::Index V() const { return beta.cols(); }
};

/// OLS at every vertex with one shared factorization of X.
inline GlmFit fit_ols(const BoldMatrix& y, const DesignMatrix& X, int threads = 0) {
    if (y.T() != X.T()) throw DataError("fit_ols: design and data disagree on T");
    const Eigen::Index T = y.T(), V = y.V(), K = X.K();
    if (T - K < 1) throw DataError("fit_ols: dof = T - K must be >= 1");
    GlmFit f;
    f.dof = T - K;
    f.failed.assign(static_cast<std::size_t>(V), 0);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X.matrix);
    if (qr.rank() < K) throw ConfigError("fit_ols: design is rank deficient");
    f.beta = qr.solve(y.data);
    f.residuals = y.data - X.matrix * f.beta;
    f.sigma2 = f.residuals.colwise().squaredNorm() / static_cast<double>(f.dof);
    const Eigen::MatrixXd xtx_inv =
        (X.matrix.transpose() * X.matrix).llt().solve(Eigen::MatrixXd::Identity(K, K));
    const Eigen::VectorXd diag = xtx_inv.diagonal();
    f.se.resize(K, V);
    f.tstats.resize(K, V);
    for (Eigen::Index v = 0; v < V; ++v) {
        f.se.col(v) = (f.sigma2[v] * diag.array()).sqrt();
        for (Eigen::Index k = 0; k < K; ++k)
            f.tstats(k, v) = (f.se(k, v) > 0.0) ? f.beta(k, v) / f.se(k, v) : 0.0;
    }
    return f;
}

/// Prewhitened GLS: for each vertex solves OLS on (W_v y_v, W_v X) where the
/// provider yields the T x T whitening operator for vertex v. Single pass;
/// residuals returned are the whitened residuals.
template <typename WhitenerProvider>
GlmFit fit_gls(const BoldMatrix& y, const DesignMatrix& X, WhitenerProvider&& whitener_of,
               int threads = 0) {
    if (y.T() != X.T()) throw DataError("fit_gls: design and data disagree on T");
    const Eigen::Index T = y.T(), V = y.V(), K = X.K();
    if (T - K < 1) throw DataError("fit_gls: dof = T - K must be >= 1");
    GlmFit f;
    f.dof = T - K;
    f.failed.assign(static_cast<std::size_t>(V), 0);
    f.beta.setZero(K, V);
    f.residuals.setZero(T, V);
    f.sigma2.setZero(V);
    f.se.setZero(K, V);
    f.tstats.setZero(K, V);
    parallel_for_chunks(static_cast<std::size_t>(V), [&](std::size_t begin, std::size_t end) {
        Eigen::MatrixXd Xt(T, K);
        Eigen::VectorXd yt(T);
        for (std::size_t vi = begin; vi < end; ++vi) {
            const auto v = static_cast<Eigen::Index>(vi);
            const Eigen::MatrixXd& W = whitener_of(v);
            Xt.noalias() = W * X.matrix;
            yt.noalias() = W * y.data.col(v);
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xt);
            if (qr.rank() < K) {
                f.failed[vi] = 1;
                continue;
            }
            const Eigen::VectorXd b = qr.solve(yt);
            const Eigen::VectorXd r = yt - Xt * b;
            const double s2 = r.squaredNorm() / static_cast<double>(f.dof);
            const Eigen::MatrixXd xtx_inv =
                (Xt.transpose() * Xt).ldlt().solve(Eigen::MatrixXd::Identity(K, K));
            f.beta.col(v) = b;
            f.residuals.col(v) = r;
            f.sigma2[v] = s2;
            for (Eigen::Index k = 0; k < K; ++k) {
                const double var_k = s2 * xtx_inv(k, k);
                f.se(k, v) = var_k > 0.0 ? std::sqrt(var_k) : 0.0;
                f.tstats(k, v) = (f.se(k, v) > 0.0) ? b[k] / f.se(k, v) : 0.0;
            }
        }
    }, threads);
    return f;
}

/// Two-sided per-vertex p-values for one design column.
inline Eigen::VectorXd ttest(const GlmFit& fit, Eigen::Index column) {
    if (column < 0 || column >= fit.K()) throw ConfigError("ttest: column index out of range");
    if (fit.dof < 1) throw ConfigError("ttest: dof must be >= 1");
    Eigen::VectorXd p(fit.V());
    for (Eigen::Index v = 0; v < fit.V(); ++v)
        p[v] = student_t_p2(fit.tstats(column, v), static_cast<double>(fit.dof));
    return p;
}

} // namespace prewhiten
