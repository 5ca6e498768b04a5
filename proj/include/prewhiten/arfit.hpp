#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "prewhiten/error.hpp"
#include "prewhiten/parallel.hpp"

namespace prewhiten {

/// Empirical autocorrelation functions, lag 0..L, one column per vertex.
struct AcfField {
    Eigen::MatrixXd acf;  // (L+1) x V
    int L = 0;
    std::vector<std::uint8_t> zero_variance;  // V flags

    Eigen::Index V() const { return acf.cols(); }
};

/// Per-vertex AR(p) parameter field. Coefficients above order[v] are exactly
/// zero; `nonstationary[v]` marks vertices where reflection-coefficient
/// clamping was required.
struct ArField {
    Eigen::MatrixXd phi;  // p_max x V
    Eigen::VectorXd s;    // V, innovation variance in data^2 units
    std::vector<int> order;
    int p_max = 0;
    std::vector<std::uint8_t> nonstationary;

    Eigen::Index V() const { return phi.cols(); }
};

struct AciField {
    Eigen::VectorXd aci;  // V, each >= 1 - 1e-9
};

struct LevinsonResult {
    Eigen::VectorXd phi;
    double s = 0.0;
    bool clamped = false;
};

/// Levinson-Durbin recursion for the order-p Yule-Walker system.
/// `r` holds autocovariances (or autocorrelations) at lags 0..p (at least);
/// the innovation variance is returned on the scale of r[0].
/// Reflection coefficients with |k| >= 1 are clamped to +/-(1 - 1e-6).
inline LevinsonResult levinson_durbin(const Eigen::VectorXd& r, int p) {
    if (p < 0) throw ConfigError("levinson_durbin: order must be >= 0");
    if (r.size() < p + 1) throw ConfigError("levinson_durbin: need lags 0..p");
    if (!(r[0] > 0.0)) throw NumericError("levinson_durbin: lag-0 term must be positive");
    LevinsonResult out;
    out.phi.setZero(p);
    out.s = r[0];
    Eigen::VectorXd a = Eigen::VectorXd::Zero(p);
    for (int j = 1; j <= p; ++j) {
        double acc = r[j];
        for (int i = 1; i < j; ++i) acc -= a[i - 1] * r[j - i];
        double k = acc / out.s;
        if (std::abs(k) >= 1.0) {
            k = (k > 0.0 ? 1.0 : -1.0) * (1.0 - 1e-6);
            out.clamped = true;
        }
        for (int i = 0; i < (j - 1) / 2 + ((j - 1) % 2); ++i) {
            const double lo = a[i], hi = a[j - 2 - i];
            a[i] = lo - k * hi;
            a[j - 2 - i] = hi - k * lo;
        }
        a[j - 1] = k;
        out.s *= (1.0 - k * k);
    }
    out.phi = a;
    return out;
}

/// Centered, biased-denominator empirical ACF (divide by T, not T-u), which
/// keeps the sequence positive semidefinite. Zero-variance columns get a
/// flagged row of zeros beyond lag 0.
inline AcfField empirical_acf(const Eigen::MatrixXd& residuals, int max_lag, int threads = 0) {
    const Eigen::Index T = residuals.rows(), V = residuals.cols();
    if (max_lag < 0 || max_lag >= T) throw ConfigError("empirical_acf: need 0 <= max_lag < T");
    AcfField f;
    f.L = max_lag;
    f.acf.setZero(max_lag + 1, V);
    f.zero_variance.assign(static_cast<std::size_t>(V), 0);
    parallel_for_chunks(static_cast<std::size_t>(V), [&](std::size_t begin, std::size_t end) {
        Eigen::VectorXd e(T);
        for (std::size_t vi = begin; vi < end; ++vi) {
            const auto v = static_cast<Eigen::Index>(vi);
            e = residuals.col(v).array() - residuals.col(v).mean();
            const double g0 = e.squaredNorm();
            f.acf(0, v) = 1.0;
            if (g0 <= 0.0) {
                f.zero_variance[vi] = 1;
                continue;
            }
            for (int u = 1; u <= max_lag; ++u)
                f.acf(u, v) = e.head(T - u).dot(e.tail(T - u)) / g0;
        }
    }, threads);
    return f;
}

/// Autocorrelation index: tau(v) = sum of squared ACF values over the lags
/// present in the field (0..L). Feed a full-lag field (L = T-1) for the
/// reference definition; smaller L gives the truncated variant.
inline AciField aci(const AcfField& f) {
    AciField out;
    out.aci = f.acf.colwise().squaredNorm();
    return out;
}

/// Reference ACI of residual columns: full-lag ACF, u = 0..T-1.
inline AciField aci_full(const Eigen::MatrixXd& residuals, int threads = 0) {
    return aci(empirical_acf(residuals, static_cast<int>(residuals.rows()) - 1, threads));
}

/// Truncated ACI (clearly labeled variant): sums lags 0..L only.
inline AciField aci_truncated(const Eigen::MatrixXd& residuals, int L, int threads = 0) {
    return aci(empirical_acf(residuals, L, threads));
}

namespace detail {

/// Runs Levinson-Durbin once to p_max, recording the innovation variance and
/// coefficient snapshot at every intermediate order.
struct LevinsonLadder {
    std::vector<Eigen::VectorXd> phi_at;  // phi_at[p] has length p
    std::vector<double> s_at;             // s_at[p]
    bool clamped = false;
};

inline LevinsonLadder levinson_ladder(const Eigen::VectorXd& r, int p_max) {
    LevinsonLadder lad;
    lad.phi_at.resize(p_max + 1);
    lad.s_at.resize(p_max + 1);
    lad.phi_at[0] = Eigen::VectorXd();
    lad.s_at[0] = r[0];
    Eigen::VectorXd a = Eigen::VectorXd::Zero(p_max);
    double s = r[0];
    for (int j = 1; j <= p_max; ++j) {
        double acc = r[j];
        for (int i = 1; i < j; ++i) acc -= a[i - 1] * r[j - i];
        double k = acc / s;
        if (std::abs(k) >= 1.0) {
            k = (k > 0.0 ? 1.0 : -1.0) * (1.0 - 1e-6);
            lad.clamped = true;
        }
        for (int i = 0; i < (j - 1) / 2 + ((j - 1) % 2); ++i) {
            const double lo = a[i], hi = a[j - 2 - i];
            a[i] = lo - k * hi;
            a[j - 2 - i] = hi - k * lo;
        }
        a[j - 1] = k;
        s *= (1.0 - k * k);
        lad.phi_at[j] = a.head(j);
        lad.s_at[j] = s;
    }
    return lad;
}

/// Centered autocovariances gamma_0..gamma_L with the biased 1/T denominator.
inline Eigen::VectorXd autocovariances(const Eigen::VectorXd& column, int L) {
    const Eigen::Index T = column.size();
    Eigen::VectorXd e = column.array() - column.mean();
    Eigen::VectorXd g(L + 1);
    for (int u = 0; u <= L; ++u)
        g[u] = e.head(T - u).dot(e.tail(T - u)) / static_cast<double>(T);
    return g;
}

} // namespace detail

struct OrderSelection {
    int order = 0;
    Eigen::VectorXd phi;  // length p_max, zero above selected order
    double s = 0.0;       // data^2 units
    bool clamped = false;
};

/// AIC order selection over p = 0..p_max with AIC(p) = T ln(s_p) + 2(p+1);
/// ties break to the lowest order, and coefficients above the winner are
/// imputed as zero.
inline OrderSelection select_order_aic(const Eigen::VectorXd& residual_column, int p_max = 10) {
    const auto T = static_cast<int>(residual_column.size());
    if (p_max < 0) throw ConfigError("select_order_aic: p_max must be >= 0");
    if (T <= 3 * p_max) throw ConfigError("select_order_aic: need T > 3 * p_max");
    const Eigen::VectorXd g = detail::autocovariances(residual_column, p_max);
    OrderSelection sel;
    sel.phi.setZero(p_max);
    if (!(g[0] > 0.0)) {
        sel.s = 0.0;
        return sel;
    }
    const auto lad = detail::levinson_ladder(g, p_max);
    sel.clamped = lad.clamped;
    double best = std::numeric_limits<double>::infinity();
    int best_p = 0;
    for (int p = 0; p <= p_max; ++p) {
        if (!(lad.s_at[p] > 0.0)) continue;
        const double aic = T * std::log(lad.s_at[p]) + 2.0 * (p + 1);
        if (aic < best) {
            best = aic;
            best_p = p;
        }
    }
    sel.order = best_p;
    sel.phi.head(best_p) = lad.phi_at[best_p];
    sel.s = lad.s_at[best_p];
    return sel;
}

enum class OrderMode { fixed, aic };

/// Fits the per-vertex AR field on residual columns: either a fixed order
/// p_max at every vertex, or AIC selection among 0..p_max.
inline ArField fit_ar_field(const Eigen::MatrixXd& residuals, int p_max, OrderMode mode,
                            int threads = 0) {
    const Eigen::Index V = residuals.cols();
    const auto T = static_cast<int>(residuals.rows());
    if (p_max < 0) throw ConfigError("fit_ar_field: p_max must be >= 0");
    if (T <= 3 * p_max) throw ConfigError("fit_ar_field: need T > 3 * p_max");
    ArField f;
    f.p_max = p_max;
    f.phi.setZero(p_max, V);
    f.s.setZero(V);
    f.order.assign(static_cast<std::size_t>(V), 0);
    f.nonstationary.assign(static_cast<std::size_t>(V), 0);
    parallel_for_chunks(static_cast<std::size_t>(V), [&](std::size_t begin, std::size_t end) {
        for (std::size_t vi = begin; vi < end; ++vi) {
            const auto v = static_cast<Eigen::Index>(vi);
            if (mode == OrderMode::aic) {
                const OrderSelection sel = select_order_aic(residuals.col(v), p_max);
                f.phi.col(v) = sel.phi;
                f.s[v] = sel.s;
                f.order[vi] = sel.order;
                f.nonstationary[vi] = sel.clamped ? 1 : 0;
            } else {
                const Eigen::VectorXd g = detail::autocovariances(residuals.col(v), p_max);
                if (!(g[0] > 0.0)) {
                    f.s[v] = 0.0;
                    continue;
                }
                const LevinsonResult lr = levinson_durbin(g, p_max);
                f.phi.col(v) = lr.phi;
                f.s[v] = lr.s;
                f.order[vi] = p_max;
                f.nonstationary[vi] = lr.clamped ? 1 : 0;
            }
        }
    }, threads);
    return f;
}

/// Spectral radius of the AR companion matrix; < 1 means stationary.
inline double companion_spectral_radius(const Eigen::VectorXd& phi) {
    int p = static_cast<int>(phi.size());
    while (p > 0 && phi[p - 1] == 0.0) --p;
    if (p == 0) return 0.0;
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(p, p);
    C.row(0) = phi.head(p).transpose();
    for (int i = 1; i < p; ++i) C(i, i - 1) = 1.0;
    return C.eigenvalues().cwiseAbs().maxCoeff();
}

} // namespace prewhiten
