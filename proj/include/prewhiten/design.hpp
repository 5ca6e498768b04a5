#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "prewhiten/data.hpp"
#include "prewhiten/error.hpp"
#include "prewhiten/special.hpp"

namespace prewhiten {

enum class ColumnRole { intercept, task, temporal_derivative, dispersion_derivative, drift, nuisance };

inline const char* role_name(ColumnRole r) {
    switch (r) {
        case ColumnRole::intercept: return "intercept";
        case ColumnRole::task: return "task";
        case ColumnRole::temporal_derivative: return "temporal-derivative";
        case ColumnRole::dispersion_derivative: return "dispersion-derivative";
        case ColumnRole::drift: return "drift";
        case ColumnRole::nuisance: return "nuisance";
    }
    return "?";
}

struct DesignMatrix {
    Eigen::MatrixXd matrix;          // T x K
    std::vector<ColumnRole> roles;   // K
    std::vector<std::string> names;  // K

    Eigen::Index T() const { return matrix.rows(); }
    Eigen::Index K() const { return matrix.cols(); }

    int column_of_role(ColumnRole r) const {
        for (std::size_t k = 0; k < roles.size(); ++k)
            if (roles[k] == r) return static_cast<int>(k);
        return -1;
    }
};

enum class HrfVariant { canonical, temporal_derivative, dispersion_derivative };

struct HrfBasis {
    std::vector<double> kernel;  // sampled at dt over [0, duration)
    double dt = 0.0;
    HrfVariant variant = HrfVariant::canonical;
};

namespace detail {

/// Difference-of-gammas response with both scales inflated by (1 + eps).
inline std::vector<double> double_gamma(double dt, double duration, double eps) {
    const double shape1 = 6.0, shape2 = 16.0, ratio = 1.0 / 6.0;
    const double scale1 = 1.0 * (1.0 + eps), scale2 = 1.0 * (1.0 + eps);
    const std::size_t n = static_cast<std::size_t>(std::ceil(duration / dt));
    std::vector<double> h(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * dt;
        h[i] = gamma_pdf(t, shape1, scale1) - ratio * gamma_pdf(t, shape2, scale2);
    }
    double peak = 0.0;
    for (double v : h) peak = std::max(peak, v);
    if (peak <= 0.0) throw NumericError("HRF kernel has nonpositive peak");
    for (double& v : h) v /= peak;
    return h;
}

} // namespace detail

/// Canonical HRF: difference of two gamma densities (shapes 6 and 16, unit
/// scales, undershoot ratio 1/6), sampled at dt over [0, duration), peak 1.
inline HrfBasis canonical_hrf(double dt, double duration = 32.0) {
    if (dt <= 0.0) throw ConfigError("canonical_hrf: dt must be > 0");
    if (duration <= dt) throw ConfigError("canonical_hrf: duration too short");
    HrfBasis b;
    b.dt = dt;
    b.variant = HrfVariant::canonical;
    b.kernel = detail::double_gamma(dt, duration, 0.0);
    return b;
}

/// Temporal derivative (1 s backward difference of the canonical kernel) and
/// dispersion derivative ((h - h_d)/delta with both gamma scales inflated by
/// the relative delta = 0.01).
inline std::pair<HrfBasis, HrfBasis> hrf_derivatives(const HrfBasis& h, double delta = 0.01) {
    if (h.variant != HrfVariant::canonical)
        throw ConfigError("hrf_derivatives: input must be the canonical basis");
    if (delta == 0.0) throw ConfigError("hrf_derivatives: dispersion delta must be nonzero");
    const double shift_s = 1.0;
    const auto lag = static_cast<std::ptrdiff_t>(std::llround(shift_s / h.dt));
    HrfBasis td;
    td.dt = h.dt;
    td.variant = HrfVariant::temporal_derivative;
    td.kernel.resize(h.kernel.size());
    for (std::size_t i = 0; i < h.kernel.size(); ++i) {
        const double prev =
            (static_cast<std::ptrdiff_t>(i) >= lag) ? h.kernel[i - static_cast<std::size_t>(lag)] : 0.0;
        td.kernel[i] = (h.kernel[i] - prev) / shift_s;
    }
    const double duration = h.dt * static_cast<double>(h.kernel.size());
    const auto inflated = detail::double_gamma(h.dt, duration, delta);
    HrfBasis dd;
    dd.dt = h.dt;
    dd.variant = HrfVariant::dispersion_derivative;
    dd.kernel.resize(h.kernel.size());
    for (std::size_t i = 0; i < h.kernel.size(); ++i)
        dd.kernel[i] = (h.kernel[i] - inflated[i]) / delta;
    return {td, dd};
}

/// Convolves one condition's boxcar stick function with an HRF kernel on a
/// 16x oversampled grid and decimates at the scan times s*tr, s = 0..T-1.
/// Events reaching past the scan end are truncated silently.
inline Eigen::VectorXd convolve_events(const EventCondition& cond, const HrfBasis& hrf,
                                       Eigen::Index T, double tr) {
    if (tr <= 0.0) throw ConfigError("convolve_events: tr must be > 0");
    const int oversample = 16;
    const double dt = tr / oversample;
    if (std::fabs(hrf.dt - dt) > 1e-12 * dt)
        throw ConfigError("convolve_events: HRF kernel sampled at a different dt");
    const std::size_t n_grid = static_cast<std::size_t>(T) * oversample;
    std::vector<double> stim(n_grid, 0.0);
    for (std::size_t e = 0; e < cond.onsets.size(); ++e) {
        const double lo = cond.onsets[e];
        const double hi = lo + cond.durations[e];
        const auto i0 = static_cast<std::size_t>(std::max(0.0, std::ceil(lo / dt)));
        for (std::size_t i = i0; i < n_grid; ++i) {
            const double t = static_cast<double>(i) * dt;
            if (t >= hi) break;
            stim[i] += cond.amplitudes[e];
        }
    }
    std::vector<double> conv(n_grid, 0.0);
    for (std::size_t i = 0; i < n_grid; ++i) {
        if (stim[i] == 0.0) continue;
        const std::size_t jmax = std::min(n_grid - i, hrf.kernel.size());
        for (std::size_t j = 0; j < jmax; ++j) conv[i + j] += stim[i] * hrf.kernel[j] * dt;
    }
    Eigen::VectorXd col(T);
    for (Eigen::Index s = 0; s < T; ++s)
        col[s] = conv[static_cast<std::size_t>(s) * oversample];
    return col;
}

/// DCT high-pass drift bases: K = floor(2*T*tr*cutoff) cosine columns
/// c_k(t) = cos(pi*k*(2t+1)/(2T)), k = 1..K, each normalized to unit length.
inline Eigen::MatrixXd dct_bases(Eigen::Index T, double tr, double cutoff_hz) {
    if (cutoff_hz <= 0.0) throw ConfigError("dct_bases: cutoff must be > 0");
    const auto K = static_cast<Eigen::Index>(std::floor(2.0 * static_cast<double>(T) * tr * cutoff_hz));
    Eigen::MatrixXd cols(T, std::max<Eigen::Index>(K, 0));
    for (Eigen::Index k = 1; k <= K; ++k) {
        for (Eigen::Index t = 0; t < T; ++t)
            cols(t, k - 1) = std::cos(M_PI * static_cast<double>(k) *
                                      (2.0 * static_cast<double>(t) + 1.0) /
                                      (2.0 * static_cast<double>(T)));
        cols.col(k - 1) /= cols.col(k - 1).norm();
    }
    return cols;
}

struct NamedColumn {
    Eigen::VectorXd values;
    ColumnRole role;
    std::string name;
};

/// Assembles the design: intercept first, then the supplied columns in
/// order. Verifies full column rank (tolerance 1e-10 * largest singular
/// value) and names the first dependent column on failure.
inline DesignMatrix assemble_design(Eigen::Index T, const std::vector<NamedColumn>& columns) {
    DesignMatrix d;
    d.matrix.resize(T, static_cast<Eigen::Index>(columns.size()) + 1);
    d.matrix.col(0).setOnes();
    d.roles.push_back(ColumnRole::intercept);
    d.names.push_back("intercept");
    for (std::size_t c = 0; c < columns.size(); ++c) {
        if (columns[c].values.size() != T)
            throw ConfigError("design column '" + columns[c].name + "' has wrong length");
        d.matrix.col(static_cast<Eigen::Index>(c) + 1) = columns[c].values;
        d.roles.push_back(columns[c].role);
        d.names.push_back(columns[c].name);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(d.matrix);
    const double tol = 1e-10 * svd.singularValues()(0);
    if (svd.singularValues().minCoeff() <= tol) {
        for (Eigen::Index k = 1; k < d.K(); ++k) {
            Eigen::JacobiSVD<Eigen::MatrixXd> sub(d.matrix.leftCols(k + 1));
            if (sub.singularValues().minCoeff() <= 1e-10 * sub.singularValues()(0))
                throw ConfigError("design is rank deficient: column " + std::to_string(k) + " ('" +
                                  d.names[static_cast<std::size_t>(k)] + "') is linearly dependent");
        }
        throw ConfigError("design is rank deficient");
    }
    return d;
}

} // namespace prewhiten
