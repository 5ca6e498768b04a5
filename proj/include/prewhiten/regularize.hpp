#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <queue>
#include <string>
#include <vector>

#include "prewhiten/arfit.hpp"
#include "prewhiten/data.hpp"
#include "prewhiten/error.hpp"

namespace prewhiten {

/// Row-stochastic geodesic-Gaussian smoothing weights on a mesh.
struct SmoothingOperator {
    Eigen::SparseMatrix<double, Eigen::RowMajor> weights;  // V x V
    double fwhm = 0.0;
    double neighborhood_radius = 0.0;  // 3 sigma, mm
    std::vector<std::uint8_t> disconnected;  // self-weight-1 fallback flags
};

enum class RegularizeMode { none, local, global };

namespace detail {

struct EdgeList {
    std::vector<std::vector<std::pair<int, double>>> adj;
};

inline EdgeList mesh_edges(const SurfaceMesh& mesh) {
    EdgeList e;
    e.adj.resize(static_cast<std::size_t>(mesh.V()));
    auto add = [&](int a, int b) {
        const double d = (mesh.coords.row(a) - mesh.coords.row(b)).norm();
        e.adj[static_cast<std::size_t>(a)].push_back({b, d});
        e.adj[static_cast<std::size_t>(b)].push_back({a, d});
    };
    for (const auto& f : mesh.faces) {
        add(f[0], f[1]);
        add(f[1], f[2]);
        add(f[0], f[2]);
    }
    return e;
}

/// Single-source Dijkstra truncated at max_dist; returns (vertex, distance)
/// pairs for all vertices within range of `src`.
inline std::vector<std::pair<int, double>> dijkstra_within(const EdgeList& edges, int src,
                                                           double max_dist) {
    const std::size_t V = edges.adj.size();
    std::vector<double> dist(V, std::numeric_limits<double>::infinity());
    std::priority_queue<std::pair<double, int>, std::vector<std::pair<double, int>>,
                        std::greater<>> pq;
    dist[static_cast<std::size_t>(src)] = 0.0;
    pq.push({0.0, src});
    std::vector<std::pair<int, double>> reached;
    while (!pq.empty()) {
        const auto [d, u] = pq.top();
        pq.pop();
        if (d > dist[static_cast<std::size_t>(u)]) continue;
        reached.push_back({u, d});
        for (const auto& [w, len] : edges.adj[static_cast<std::size_t>(u)]) {
            const double nd = d + len;
            if (nd <= max_dist && nd < dist[static_cast<std::size_t>(w)]) {
                dist[static_cast<std::size_t>(w)] = nd;
                pq.push({nd, w});
            }
        }
    }
    return reached;
}

} // namespace detail

/// Geodesic-Gaussian smoother: sigma = fwhm/(2 sqrt(2 ln 2)), graph-geodesic
/// distances (Dijkstra over mesh edges) truncated at 3 sigma, Gaussian
/// weights row-normalized. Vertices with no in-range neighbors (or no edges
/// at all) fall back to self-weight 1 and are flagged. Masked vertices
/// neither receive nor contribute weight.
inline SmoothingOperator build_smoother(const SurfaceMesh& mesh, double fwhm) {
    if (fwhm <= 0.0) throw ConfigError("build_smoother: fwhm must be > 0");
    const Eigen::Index V = mesh.V();
    SmoothingOperator op;
    op.fwhm = fwhm;
    const double sigma = fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    op.neighborhood_radius = 3.0 * sigma;
    op.disconnected.assign(static_cast<std::size_t>(V), 0);
    const auto edges = detail::mesh_edges(mesh);
    std::vector<Eigen::Triplet<double>> trips;
    for (Eigen::Index v = 0; v < V; ++v) {
        if (mesh.masked(v)) continue;
        auto reached = detail::dijkstra_within(edges, static_cast<int>(v), op.neighborhood_radius);
        double total = 0.0;
        std::vector<std::pair<int, double>> kept;
        for (const auto& [u, d] : reached) {
            if (mesh.masked(u)) continue;
            const double w = std::exp(-d * d / (2.0 * sigma * sigma));
            kept.push_back({u, w});
            total += w;
        }
        if (kept.size() <= 1 || total <= 0.0) {
            if (edges.adj[static_cast<std::size_t>(v)].empty())
                op.disconnected[static_cast<std::size_t>(v)] = 1;
            trips.emplace_back(static_cast<int>(v), static_cast<int>(v), 1.0);
            continue;
        }
        for (const auto& [u, w] : kept)
            trips.emplace_back(static_cast<int>(v), u, w / total);
    }
    for (Eigen::Index v = 0; v < V; ++v)
        if (mesh.masked(v)) trips.emplace_back(static_cast<int>(v), static_cast<int>(v), 1.0);
    op.weights.resize(V, V);
    op.weights.setFromTriplets(trips.begin(), trips.end());
    return op;
}

/// Applies the smoother to each row of a p x V field (or a 1 x V vector).
inline Eigen::MatrixXd smooth_field(const SmoothingOperator& op, const Eigen::MatrixXd& field) {
    if (field.cols() != op.weights.rows())
        throw ConfigError("smooth_field: field width does not match smoother size");
    return field * op.weights.transpose();
}

/// Replaces every unmasked column with the mean over unmasked columns.
inline Eigen::MatrixXd global_average(const Eigen::MatrixXd& field,
                                      const std::vector<std::uint8_t>& mask = {}) {
    const Eigen::Index V = field.cols();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(field.rows());
    Eigen::Index n = 0;
    for (Eigen::Index v = 0; v < V; ++v) {
        if (!mask.empty() && mask[static_cast<std::size_t>(v)]) continue;
        mean += field.col(v);
        ++n;
    }
    if (n == 0) throw DataError("global_average: no unmasked vertices");
    mean /= static_cast<double>(n);
    Eigen::MatrixXd out = field;
    for (Eigen::Index v = 0; v < V; ++v) {
        if (!mask.empty() && mask[static_cast<std::size_t>(v)]) continue;
        out.col(v) = mean;
    }
    return out;
}

namespace detail {

/// Step-down to reflection coefficients, clamp |k| >= 1 to +/-(1 - 1e-6),
/// and rebuild; returns true when clamping was needed.
inline bool stabilize_column(Eigen::VectorXd& phi) {
    int p = static_cast<int>(phi.size());
    while (p > 0 && phi[p - 1] == 0.0) --p;
    if (p == 0) return false;
    std::vector<Eigen::VectorXd> a(p + 1);
    a[p] = phi.head(p);
    bool clamped = false;
    std::vector<double> k(p + 1, 0.0);
    for (int j = p; j >= 1; --j) {
        k[j] = a[j][j - 1];
        if (std::abs(k[j]) >= 1.0) {
            k[j] = (k[j] > 0.0 ? 1.0 : -1.0) * (1.0 - 1e-6);
            clamped = true;
        }
        if (j == 1) break;
        a[j - 1].resize(j - 1);
        const double denom = 1.0 - k[j] * k[j];
        for (int i = 0; i < j - 1; ++i)
            a[j - 1][i] = (a[j][i] + k[j] * a[j][j - 2 - i]) / denom;
    }
    if (!clamped) return false;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    for (int j = 1; j <= p; ++j) {
        Eigen::VectorXd nb = b;
        for (int i = 0; i < j - 1; ++i) nb[i] = b[i] - k[j] * b[j - 2 - i];
        nb[j - 1] = k[j];
        b = nb;
    }
    phi.head(p) = b;
    return true;
}

} // namespace detail

/// Spatial regularization of an AR field. Local mode smooths each
/// coefficient row and the innovation variance identically; global mode
/// replaces them with the cross-vertex mean. The per-vertex order becomes
/// the count of nonzero coefficient rows, and stationarity is re-checked
/// (reflection-coefficient clamping, as in the fitting step).
inline ArField regularize_ar(const ArField& ar, RegularizeMode mode, const SurfaceMesh& mesh,
                             double fwhm = 5.0) {
    if (mode == RegularizeMode::none) return ar;
    ArField out = ar;
    if (mode == RegularizeMode::local) {
        if (static_cast<Eigen::Index>(mesh.V()) != ar.V())
            throw ConfigError("regularize_ar: mesh and field disagree on V");
        const SmoothingOperator op = build_smoother(mesh, fwhm);
        if (ar.p_max > 0) out.phi = smooth_field(op, ar.phi);
        out.s = smooth_field(op, ar.s.transpose()).transpose();
    } else {
        std::vector<std::uint8_t> mask;
        if (!mesh.boundary_mask.empty())
            mask.assign(mesh.boundary_mask.begin(), mesh.boundary_mask.end());
        if (ar.p_max > 0) out.phi = global_average(ar.phi, mask);
        out.s = global_average(ar.s.transpose(), mask).transpose();
    }
    for (Eigen::Index v = 0; v < out.V(); ++v) {
        Eigen::VectorXd col = out.phi.col(v);
        const bool clamped = detail::stabilize_column(col);
        out.phi.col(v) = col;
        if (clamped) out.nonstationary[static_cast<std::size_t>(v)] = 1;
        int nz = 0;
        for (Eigen::Index q = 0; q < out.phi.rows(); ++q)
            if (out.phi(q, v) != 0.0) ++nz;
        out.order[static_cast<std::size_t>(v)] = nz;
    }
    return out;
}

/// Writes the smoother as "row col weight" triplets for inspection.
inline void save_smoother_triplets(const SmoothingOperator& op, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.precision(17);
    for (int r = 0; r < op.weights.outerSize(); ++r)
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(op.weights, r); it;
             ++it)
            out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
    if (!out) throw DataError("failed while writing '" + path + "'");
}

} // namespace prewhiten
