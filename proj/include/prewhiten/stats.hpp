#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "prewhiten/arfit.hpp"
#include "prewhiten/error.hpp"
#include "prewhiten/special.hpp"

namespace prewhiten {

enum class LbDofMode { intercept_only, ar_adjusted };

struct LjungBoxOutcome {
    double Q = 0.0;
    int dof = 1;
    double p = 1.0;
    bool dof_clamped = false;
};

/// Ljung-Box portmanteau test on one series: Q = n(n+2) sum r_u^2/(n-u) over
/// u = 1..h, with the centered biased ACF. dof is h-1 (intercept-only) or
/// h - round(p*n/T_full) - 1 (ar-adjusted), floored at 1.
inline LjungBoxOutcome ljung_box(const Eigen::VectorXd& series, int h,
                                 LbDofMode mode = LbDofMode::intercept_only, int p = 0,
                                 int T_full = 0) {
    const auto n = static_cast<int>(series.size());
    if (n <= h) throw ConfigError("ljung_box: need n > h");
    if (h < 1) throw ConfigError("ljung_box: need h >= 1");
    Eigen::VectorXd e = series.array() - series.mean();
    const double g0 = e.squaredNorm();
    LjungBoxOutcome out;
    if (mode == LbDofMode::ar_adjusted) {
        if (T_full < 1) throw ConfigError("ljung_box: ar-adjusted mode needs T_full");
        const int adj = static_cast<int>(std::llround(static_cast<double>(p) * n / T_full));
        out.dof = h - adj - 1;
    } else {
        out.dof = h - 1;
    }
    if (out.dof < 1) {
        out.dof = 1;
        out.dof_clamped = true;
    }
    if (g0 <= 0.0) {
        out.Q = 0.0;
        out.p = 1.0;
        return out;
    }
    double Q = 0.0;
    for (int u = 1; u <= h; ++u) {
        const double r = e.head(n - u).dot(e.tail(n - u)) / g0;
        Q += r * r / static_cast<double>(n - u);
    }
    out.Q = static_cast<double>(n) * (n + 2.0) * Q;
    out.p = chi2_sf(out.Q, static_cast<double>(out.dof));
    return out;
}

/// Vertex-wise Ljung-Box results plus a post-correction significance mask.
struct LjungBoxResult {
    Eigen::VectorXd statistic;  // V
    std::vector<int> dof;       // V
    Eigen::VectorXd pvalue;     // V
    int lags = 0;
    std::vector<std::uint8_t> significant_mask;  // filled by the caller's correction
};

/// Runs ljung_box down the columns of a T x V residual block (optionally the
/// leading n_use rows only, e.g. the first 100 volumes of a session).
inline LjungBoxResult ljung_box_field(const Eigen::MatrixXd& residuals, int h, LbDofMode mode,
                                      const std::vector<int>& order, int T_full, int n_use = 0) {
    const Eigen::Index V = residuals.cols();
    const Eigen::Index n = (n_use > 0 && n_use <= residuals.rows()) ? n_use : residuals.rows();
    LjungBoxResult r;
    r.lags = h;
    r.statistic.resize(V);
    r.pvalue.resize(V);
    r.dof.resize(static_cast<std::size_t>(V));
    r.significant_mask.assign(static_cast<std::size_t>(V), 0);
    for (Eigen::Index v = 0; v < V; ++v) {
        const int p = order.empty() ? 0 : order[static_cast<std::size_t>(v)];
        const auto o = ljung_box(residuals.col(v).head(n), h, mode, p, T_full);
        r.statistic[v] = o.Q;
        r.pvalue[v] = o.p;
        r.dof[static_cast<std::size_t>(v)] = o.dof;
    }
    return r;
}

/// Benjamini-Hochberg step-up at level q: reject the i smallest p-values
/// where i is the largest index with p_(i) <= i*q/m.
inline std::vector<std::uint8_t> fdr_bh(const Eigen::VectorXd& pvalues, double q) {
    const auto m = static_cast<std::size_t>(pvalues.size());
    if (m == 0) throw ConfigError("fdr_bh: empty input");
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("fdr_bh: q must be in (0,1)");
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return pvalues[static_cast<Eigen::Index>(a)] <
                                                         pvalues[static_cast<Eigen::Index>(b)]; });
    std::size_t cut = 0;
    for (std::size_t i = 1; i <= m; ++i)
        if (pvalues[static_cast<Eigen::Index>(idx[i - 1])] <=
            static_cast<double>(i) * q / static_cast<double>(m))
            cut = i;
    std::vector<std::uint8_t> mask(m, 0);
    for (std::size_t i = 0; i < cut; ++i) mask[idx[i]] = 1;
    return mask;
}

/// Bonferroni: reject where p < alpha/m (strict inequality).
inline std::vector<std::uint8_t> bonferroni(const Eigen::VectorXd& pvalues, double alpha) {
    const auto m = static_cast<std::size_t>(pvalues.size());
    if (m == 0) throw ConfigError("bonferroni: empty input");
    const double thresh = alpha / static_cast<double>(m);
    std::vector<std::uint8_t> mask(m, 0);
    for (std::size_t i = 0; i < m; ++i)
        if (pvalues[static_cast<Eigen::Index>(i)] < thresh) mask[i] = 1;
    return mask;
}

/// Agresti-Coull 95% interval: z = 1.95996, n~ = n + z^2,
/// p~ = (x + z^2/2)/n~, bounds p~ +/- z sqrt(p~(1-p~)/n~), clipped to [0,1].
inline std::pair<double, double> agresti_coull(double successes, double trials) {
    if (trials <= 0.0) throw ConfigError("agresti_coull: need n > 0");
    if (successes < 0.0 || successes > trials)
        throw ConfigError("agresti_coull: need 0 <= x <= n");
    const double z = 1.95996;
    const double nt = trials + z * z;
    const double pt = (successes + z * z / 2.0) / nt;
    const double half = z * std::sqrt(pt * (1.0 - pt) / nt);
    return {std::max(0.0, pt - half), std::min(1.0, pt + half)};
}

struct ErrorRateSummary {
    std::vector<double> fpr_per_scan;
    double fwer = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

/// FPR per scan (fraction of vertices flagged) and FWER across scans
/// (fraction of scans with at least one flag), with its Agresti-Coull band.
inline ErrorRateSummary summarize_error_rates(
    const std::vector<std::vector<std::uint8_t>>& masks) {
    if (masks.empty()) throw ConfigError("summarize_error_rates: need at least one scan");
    ErrorRateSummary s;
    std::size_t hits = 0;
    for (const auto& row : masks) {
        std::size_t c = 0;
        for (auto b : row) c += (b != 0);
        s.fpr_per_scan.push_back(row.empty() ? 0.0 : static_cast<double>(c) / row.size());
        hits += (c > 0);
    }
    s.fwer = static_cast<double>(hits) / masks.size();
    std::tie(s.ci_low, s.ci_high) =
        agresti_coull(static_cast<double>(hits), static_cast<double>(masks.size()));
    return s;
}

} // namespace prewhiten
