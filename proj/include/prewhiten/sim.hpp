#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "prewhiten/arfit.hpp"
#include "prewhiten/data.hpp"
#include "prewhiten/design.hpp"
#include "prewhiten/error.hpp"
#include "prewhiten/rng.hpp"

namespace prewhiten {

/// One homogeneous tissue region of a simulation scenario. `latent_share`
/// is the fraction of each vertex's noise variance carried by a single
/// region-wide latent series (spatially correlated noise, as in real data);
/// 0 makes vertices independent.
struct SimRegion {
    std::string name;
    std::vector<int> vertices;
    Eigen::VectorXd phi;
    double variance = 1.0;
    double latent_share = 0.0;
    double signal_amplitude = 0.0;
};

struct SimScenario {
    std::vector<SimRegion> regions;
    Eigen::Index T = 0;
    double tr = 0.72;
    std::uint64_t seed = 0;
    Eigen::VectorXd signal_column;  // optional, scaled per region

    Eigen::Index V() const {
        Eigen::Index v = 0;
        for (const auto& r : regions)
            for (int u : r.vertices) v = std::max<Eigen::Index>(v, u + 1);
        return v;
    }
};

/// Stationary AR(p) series with Gaussian innovations of variance s; a
/// burn-in of 10 p + 100 samples is generated and discarded. Deterministic
/// in the supplied generator state.
inline Eigen::VectorXd gen_ar_series(const Eigen::VectorXd& phi, double s, Eigen::Index T,
                                     Rng& rng) {
    int p = static_cast<int>(phi.size());
    while (p > 0 && phi[p - 1] == 0.0) --p;
    if (p > 0 && companion_spectral_radius(phi) >= 1.0)
        throw ConfigError("gen_ar_series: non-stationary AR coefficients");
    if (s < 0.0) throw ConfigError("gen_ar_series: variance must be >= 0");
    const Eigen::Index burn = 10 * p + 100;
    const double sd = std::sqrt(s);
    Eigen::VectorXd x(T + burn);
    for (Eigen::Index t = 0; t < T + burn; ++t) {
        double acc = sd * rng.normal();
        for (int q = 1; q <= p && t - q >= 0; ++q) acc += phi[q - 1] * x[t - q];
        x[t] = acc;
    }
    return x.tail(T);
}

inline Eigen::VectorXd gen_ar_series(const Eigen::VectorXd& phi, double s, Eigen::Index T,
                                     std::uint64_t seed) {
    Rng rng(seed);
    return gen_ar_series(phi, s, T, rng);
}

/// Renders a scenario into a BOLD matrix. Per-vertex noise streams are
/// seeded as derive_seed(seed, vertex) and per-region latent streams as
/// derive_seed(seed, V + region-index), so output is independent of
/// evaluation order. An optional scan index offsets all stream ids, giving
/// independent replicate scans under one master seed.
inline BoldMatrix gen_scenario(const SimScenario& sc, std::uint64_t scan_index = 0) {
    const Eigen::Index V = sc.V();
    if (V == 0) throw ConfigError("gen_scenario: scenario has no vertices");
    if (sc.T < 2) throw ConfigError("gen_scenario: need T >= 2");
    BoldMatrix b;
    b.tr = sc.tr;
    b.data.setZero(sc.T, V);
    const std::uint64_t base = derive_seed(sc.seed, scan_index);
    for (std::size_t ri = 0; ri < sc.regions.size(); ++ri) {
        const auto& r = sc.regions[ri];
        if (r.latent_share < 0.0 || r.latent_share >= 1.0 + 1e-12)
            throw ConfigError("gen_scenario: latent_share must be in [0, 1]");
        Eigen::VectorXd latent;
        if (r.latent_share > 0.0) {
            Rng lrng(derive_seed(base, static_cast<std::uint64_t>(V) + ri));
            latent = gen_ar_series(r.phi, r.variance, sc.T, lrng);
        }
        for (int v : r.vertices) {
            if (v < 0 || v >= V) throw ConfigError("gen_scenario: vertex index out of range");
            Rng vrng(derive_seed(base, static_cast<std::uint64_t>(v)));
            Eigen::VectorXd own = gen_ar_series(r.phi, r.variance, sc.T, vrng);
            if (r.latent_share > 0.0)
                b.data.col(v) =
                    std::sqrt(r.latent_share) * latent + std::sqrt(1.0 - r.latent_share) * own;
            else
                b.data.col(v) = own;
            if (sc.signal_column.size() == sc.T && r.signal_amplitude != 0.0)
                b.data.col(v) += r.signal_amplitude * sc.signal_column;
        }
    }
    b.vertex_ids.resize(static_cast<std::size_t>(V));
    for (Eigen::Index v = 0; v < V; ++v) b.vertex_ids[static_cast<std::size_t>(v)] = static_cast<int>(v);
    return b;
}

namespace detail {

inline Eigen::VectorXd phi3(double a, double b, double c) {
    Eigen::VectorXd p(3);
    p << a, b, c;
    return p;
}

} // namespace detail

/// The four tissue classes of the AR(3) simulation: name, coefficients.
inline std::vector<std::pair<std::string, Eigen::VectorXd>> tissue_classes() {
    return {{"BG", Eigen::VectorXd::Zero(3)},
            {"CSF", detail::phi3(0.5, 0.3, 0.1)},
            {"GM", detail::phi3(0.425, 0.25, 0.1)},
            {"WM", detail::phi3(0.1, 0.0, 0.0)}};
}

/// Line mesh of collinear vertices (triangle strip over a straight line, so
/// geodesic distances equal path distances).
inline SurfaceMesh build_line_mesh(Eigen::Index V, double spacing) {
    SurfaceMesh m;
    m.coords.setZero(V, 3);
    for (Eigen::Index v = 0; v < V; ++v) m.coords(v, 0) = static_cast<double>(v) * spacing;
    for (Eigen::Index v = 0; v + 2 < V; ++v)
        m.faces.push_back({static_cast<int>(v), static_cast<int>(v) + 1, static_cast<int>(v) + 2});
    return m;
}

/// Planar nx x ny grid mesh with two triangles per cell.
inline SurfaceMesh build_grid_mesh(Eigen::Index nx, Eigen::Index ny, double spacing) {
    SurfaceMesh m;
    m.coords.setZero(nx * ny, 3);
    auto id = [ny](Eigen::Index i, Eigen::Index j) { return static_cast<int>(i * ny + j); };
    for (Eigen::Index i = 0; i < nx; ++i)
        for (Eigen::Index j = 0; j < ny; ++j) {
            m.coords(id(i, j), 0) = static_cast<double>(i) * spacing;
            m.coords(id(i, j), 1) = static_cast<double>(j) * spacing;
        }
    for (Eigen::Index i = 0; i + 1 < nx; ++i)
        for (Eigen::Index j = 0; j + 1 < ny; ++j) {
            m.faces.push_back({id(i, j), id(i + 1, j), id(i, j + 1)});
            m.faces.push_back({id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    return m;
}

struct TissueFieldScenario {
    BoldMatrix bold;
    SimScenario scenario;
    SurfaceMesh mesh;
    std::vector<std::string> labels;  // per-vertex class name
};

namespace detail {

/// Assigns contiguous vertex blocks to the tissue classes in order.
inline SimScenario block_scenario(const std::vector<std::pair<std::string, Eigen::Index>>& blocks,
                                  Eigen::Index T, double tr, std::uint64_t seed,
                                  double latent_share, std::vector<std::string>* labels_out) {
    SimScenario sc;
    sc.T = T;
    sc.tr = tr;
    sc.seed = seed;
    const auto classes = tissue_classes();
    Eigen::Index v0 = 0;
    for (const auto& [name, count] : blocks) {
        SimRegion r;
        r.name = name;
        for (const auto& [cname, cphi] : classes)
            if (cname == name) r.phi = cphi;
        if (r.phi.size() == 0) throw ConfigError("unknown tissue class '" + name + "'");
        r.variance = 1.0;
        r.latent_share = latent_share;
        for (Eigen::Index v = v0; v < v0 + count; ++v) {
            r.vertices.push_back(static_cast<int>(v));
            if (labels_out) labels_out->push_back(name);
        }
        v0 += count;
        sc.regions.push_back(std::move(r));
    }
    return sc;
}

} // namespace detail

/// AR(3) tissue-class scenario: 27-vertex line mesh, 11 background, 3 CSF,
/// 2 GM, 11 WM vertices, unit noise variance, 2 mm spacing.
inline TissueFieldScenario tissue_line_scenario(Eigen::Index T, std::uint64_t seed) {
    if (T < 100) throw ConfigError("tissue_line_scenario: need T >= 100");
    TissueFieldScenario out;
    out.scenario = detail::block_scenario(
        {{"BG", 11}, {"CSF", 3}, {"GM", 2}, {"WM", 11}}, T, 0.72, seed, 0.0, &out.labels);
    out.mesh = build_line_mesh(27, 2.0);
    out.bold = gen_scenario(out.scenario);
    return out;
}

/// The tissue-class field extended to a 1000-vertex 50 x 20 grid (2 mm
/// spacing): class columns in the line-mesh proportions, 20/6/4/20.
inline TissueFieldScenario tissue_grid_scenario(Eigen::Index T, std::uint64_t seed) {
    TissueFieldScenario out;
    const Eigen::Index ny = 20;
    out.scenario = detail::block_scenario(
        {{"BG", 20 * ny}, {"CSF", 6 * ny}, {"GM", 4 * ny}, {"WM", 20 * ny}}, T, 0.72, seed, 0.0,
        &out.labels);
    out.mesh = build_grid_mesh(50, ny, 2.0);
    out.bold = gen_scenario(out.scenario);
    return out;
}

/// Null "false boxcar" experiment: replicate null scans over a fixed design
/// with the boxcar task column (onsets 20/40/60 s, 10 s each), DCT drift at
/// 0.01 Hz, an intercept, and no HRF derivatives.
struct NullBoxcarExperiment {
    SimScenario scenario;
    SurfaceMesh mesh;
    DesignMatrix design;
    int n_scans = 0;

    BoldMatrix scan(int i) const {
        if (i < 0 || i >= n_scans) throw ConfigError("scan index out of range");
        return gen_scenario(scenario, static_cast<std::uint64_t>(i) + 1);
    }
};

inline DesignMatrix boxcar_design(Eigen::Index T, double tr) {
    EventCondition cond;
    cond.name = "boxcar";
    cond.onsets = {20.0, 40.0, 60.0};
    cond.durations = {10.0, 10.0, 10.0};
    cond.amplitudes = {1.0, 1.0, 1.0};
    const HrfBasis hrf = canonical_hrf(tr / 16.0);
    std::vector<NamedColumn> cols;
    const Eigen::MatrixXd drift = dct_bases(T, tr, 0.01);
    for (Eigen::Index k = 0; k < drift.cols(); ++k)
        cols.push_back({drift.col(k), ColumnRole::drift, "dct" + std::to_string(k + 1)});
    cols.push_back({convolve_events(cond, hrf, T, tr), ColumnRole::task, "boxcar"});
    return assemble_design(T, cols);
}

inline NullBoxcarExperiment null_boxcar_experiment(const SurfaceMesh& mesh,
                                                   const SimScenario& field_spec, int n_scans,
                                                   std::uint64_t seed) {
    if (field_spec.V() > mesh.V()) throw ConfigError("field spec exceeds mesh size");
    NullBoxcarExperiment e;
    e.scenario = field_spec;
    e.scenario.seed = seed;
    if (e.scenario.T == 0) e.scenario.T = 284;
    e.mesh = mesh;
    e.n_scans = n_scans;
    e.design = boxcar_design(e.scenario.T, e.scenario.tr);
    return e;
}

/// The heterogeneous-noise grid used for false-positive-control runs:
/// 20 x 10 grid (2 mm), class columns 8 BG / 2 CSF / 2 GM / 8 WM, with 80%
/// of each region's noise variance carried by a region-wide latent series.
inline NullBoxcarExperiment null_grid_experiment(int n_scans, std::uint64_t seed,
                                                 double latent_share = 0.8) {
    const Eigen::Index ny = 10;
    std::vector<std::string> labels;
    SimScenario sc = detail::block_scenario(
        {{"BG", 8 * ny}, {"CSF", 2 * ny}, {"GM", 2 * ny}, {"WM", 8 * ny}}, 284, 0.72, seed,
        latent_share, &labels);
    return null_boxcar_experiment(build_grid_mesh(20, ny, 2.0), sc, n_scans, seed);
}

/// Population ACI from the Yule-Walker forward recursion: solve for
/// rho_1..rho_p, extend by rho_u = sum phi_k rho_{u-k}, and accumulate
/// squared terms until the increment falls below 1e-12.
inline double analytic_aci(const Eigen::VectorXd& phi_in) {
    Eigen::VectorXd phi = phi_in;
    int p = static_cast<int>(phi.size());
    while (p > 0 && phi[p - 1] == 0.0) --p;
    if (p == 0) return 1.0;
    phi.conservativeResize(p);
    if (companion_spectral_radius(phi) >= 1.0)
        throw ConfigError("analytic_aci: non-stationary AR coefficients");
    // rho_u - sum_k phi_k rho_{|u-k|} = phi_u (the rho_0 = 1 term), u = 1..p
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(p, p);
    Eigen::VectorXd rhs(p);
    for (int u = 1; u <= p; ++u) {
        rhs[u - 1] = phi[u - 1];
        for (int k = 1; k <= p; ++k) {
            if (k == u) continue;
            const int lag = std::abs(u - k);
            A(u - 1, lag - 1) -= phi[k - 1];
        }
    }
    const Eigen::VectorXd rho_p = A.fullPivLu().solve(rhs);
    std::vector<double> rho(static_cast<std::size_t>(p) + 1);
    rho[0] = 1.0;
    for (int u = 1; u <= p; ++u) rho[static_cast<std::size_t>(u)] = rho_p[u - 1];
    double tau = 1.0;
    for (int u = 1; u <= p; ++u) tau += rho[static_cast<std::size_t>(u)] * rho[static_cast<std::size_t>(u)];
    for (std::size_t u = static_cast<std::size_t>(p) + 1;; ++u) {
        double r = 0.0;
        for (int k = 1; k <= p; ++k) r += phi[k - 1] * rho[u - static_cast<std::size_t>(k)];
        rho.push_back(r);
        const double inc = r * r;
        tau += inc;
        if (inc < 1e-12) break;
        if (u > 1000000) throw NumericError("analytic_aci: ACF sum failed to converge");
    }
    return tau;
}

/// Finite-sample ACI measurement for mean-zero simulated series: uncentered
/// biased ACF plus a per-lag debias that removes the O(1/T) variance of each
/// squared ACF term, truncated at L lags (default 42).
///   tau_hat = 1 + sum_{u=1..L} (r_u^2 - (T-u)/T^2)
inline double measure_aci(const Eigen::VectorXd& x, int L = 42) {
    const Eigen::Index T = x.size();
    if (L < 1 || L >= T) throw ConfigError("measure_aci: need 1 <= L < T");
    const double g0 = x.squaredNorm();
    if (g0 <= 0.0) return 1.0;
    double tau = 1.0;
    for (int u = 1; u <= L; ++u) {
        const double r = x.head(T - u).dot(x.tail(T - u)) / g0;
        tau += r * r - static_cast<double>(T - u) / (static_cast<double>(T) * T);
    }
    return tau;
}

} // namespace prewhiten
