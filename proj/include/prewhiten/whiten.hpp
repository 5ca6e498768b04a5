#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "prewhiten/arfit.hpp"
#include "prewhiten/data.hpp"
#include "prewhiten/design.hpp"
#include "prewhiten/error.hpp"

namespace prewhiten {

/// Count of eigendecompositions performed by build_whitener since the last
/// reset (caching contract instrumentation).
inline std::atomic<std::uint64_t>& eig_count() {
    static std::atomic<std::uint64_t> n{0};
    return n;
}
inline void reset_eig_count() { eig_count().store(0); }

/// Symmetric banded whitening operator, stored as the lower diagonals
/// band(d, i) = W(i + d, i), d = 0..p.
struct WhitenOperator {
    Eigen::MatrixXd band;  // (p+1) x T
    int p = 0;
    bool identity_fallback = false;  // eigendecomposition failed
    bool s_clamped = false;          // nonpositive innovation variance

    Eigen::Index T() const { return band.cols(); }

    Eigen::VectorXd apply(const Eigen::VectorXd& y) const {
        const Eigen::Index n = T();
        Eigen::VectorXd out(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            double acc = band(0, i) * y[i];
            for (int d = 1; d <= p; ++d) {
                if (i + d < n) acc += band(d, i) * y[i + d];          // W(i, i+d) = W(i+d, i)
                if (i - d >= 0) acc += band(d, i - d) * y[i - d];     // W(i, i-d)
            }
            out[i] = acc;
        }
        return out;
    }

    Eigen::MatrixXd apply_matrix(const Eigen::MatrixXd& X) const {
        Eigen::MatrixXd out(X.rows(), X.cols());
        for (Eigen::Index k = 0; k < X.cols(); ++k) out.col(k) = apply(Eigen::VectorXd(X.col(k)));
        return out;
    }

    Eigen::MatrixXd dense() const {
        const Eigen::Index n = T();
        Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            W(i, i) = band(0, i);
            for (int d = 1; d <= p; ++d)
                if (i + d < n) W(i + d, i) = W(i, i + d) = band(d, i);
        }
        return W;
    }
};

/// Banded AR precision: ones on the diagonal, -phi_q at offsets +/-q, the
/// whole matrix scaled by 1/s. Nonpositive s is clamped to machine epsilon
/// times the data variance and flagged via the out-parameter.
inline Eigen::MatrixXd build_precision(const Eigen::VectorXd& phi, double s, Eigen::Index T,
                                       double data_variance = 1.0, bool* s_clamped = nullptr) {
    int p = static_cast<int>(phi.size());
    while (p > 0 && phi[p - 1] == 0.0) --p;
    if (T <= p) throw ConfigError("build_precision: need T > p");
    if (s_clamped) *s_clamped = false;
    if (!(s > 0.0)) {
        const double floor_var = data_variance > 0.0 ? data_variance : 1.0;
        s = std::numeric_limits<double>::epsilon() * floor_var;
        if (s_clamped) *s_clamped = true;
    }
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(T, T);
    M.diagonal().setOnes();
    for (int q = 1; q <= p; ++q) {
        M.diagonal(q).setConstant(-phi[q - 1]);
        M.diagonal(-q).setConstant(-phi[q - 1]);
    }
    return M / s;
}

/// Whitening operator from a symmetric precision matrix: eigendecomposition
/// S^-1 = U D U', eigenvalues clamped below at 1e-6 * lambda_max, then
/// W = U D^(1/2) U' (or U D U' when `literal_spectrum` reproduces the
/// no-square-root variant), and band truncation W_ij = 0 for |i - j| > p.
inline WhitenOperator build_whitener(const Eigen::MatrixXd& precision, int p,
                                     bool literal_spectrum = false, bool truncate = true) {
    const Eigen::Index T = precision.rows();
    if (precision.cols() != T) throw ConfigError("build_whitener: precision must be square");
    if (p < 0 || p >= T) throw ConfigError("build_whitener: need 0 <= p < T");
    WhitenOperator op;
    op.p = truncate ? p : static_cast<int>(T - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(precision);
    Eigen::MatrixXd W;
    if (eig.info() != Eigen::Success) {
        op.identity_fallback = true;
        W = Eigen::MatrixXd::Identity(T, T);
    } else {
        Eigen::VectorXd lam = eig.eigenvalues();  // ascending
        const double floor = 1e-6 * lam[T - 1];
        lam = lam.cwiseMax(floor);
        const Eigen::VectorXd d = literal_spectrum ? lam : Eigen::VectorXd(lam.cwiseSqrt());
        W = eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
        ++eig_count();
    }
    op.band.setZero(op.p + 1, T);
    for (Eigen::Index i = 0; i < T; ++i) {
        op.band(0, i) = W(i, i);
        for (int dd = 1; dd <= op.p; ++dd)
            if (i + dd < T) op.band(dd, i) = 0.5 * (W(i + dd, i) + W(i, i + dd));
    }
    return op;
}

/// Per-vertex whitening operators for a dataset. Identical AR columns share
/// one operator (so global-mode fields trigger exactly one
/// eigendecomposition), and order-0 vertices get the scalar whitener
/// 1/sqrt(s_v) with no eigendecomposition at all.
struct WhitenerField {
    std::vector<WhitenOperator> unique_ops;
    std::vector<int> index_of;  // V -> unique_ops slot
    std::vector<std::uint8_t> eig_failed;
    std::vector<std::uint8_t> s_clamped;

    const WhitenOperator& at(Eigen::Index v) const {
        return unique_ops[static_cast<std::size_t>(index_of[static_cast<std::size_t>(v)])];
    }
    Eigen::Index V() const { return static_cast<Eigen::Index>(index_of.size()); }
};

inline WhitenerField whiten_dataset(const BoldMatrix& y, const ArField& ar,
                                    bool literal_spectrum = false, bool truncate = true) {
    const Eigen::Index T = y.T(), V = y.V();
    if (ar.V() != V) throw DataError("whiten_dataset: AR field does not cover all vertices");
    WhitenerField f;
    f.index_of.resize(static_cast<std::size_t>(V));
    f.eig_failed.assign(static_cast<std::size_t>(V), 0);
    f.s_clamped.assign(static_cast<std::size_t>(V), 0);
    std::map<std::string, int> cache;
    for (Eigen::Index v = 0; v < V; ++v) {
        const Eigen::VectorXd phi = ar.p_max > 0 ? Eigen::VectorXd(ar.phi.col(v)) : Eigen::VectorXd();
        const double s = ar.s[v];
        std::string key(reinterpret_cast<const char*>(phi.data()),
                        static_cast<std::size_t>(phi.size()) * sizeof(double));
        key.append(reinterpret_cast<const char*>(&s), sizeof(double));
        auto it = cache.find(key);
        if (it != cache.end()) {
            f.index_of[static_cast<std::size_t>(v)] = it->second;
            const auto& op = f.unique_ops[static_cast<std::size_t>(it->second)];
            f.eig_failed[static_cast<std::size_t>(v)] = op.identity_fallback ? 1 : 0;
            f.s_clamped[static_cast<std::size_t>(v)] = op.s_clamped ? 1 : 0;
            continue;
        }
        int bandwidth = static_cast<int>(phi.size());
        while (bandwidth > 0 && phi[bandwidth - 1] == 0.0) --bandwidth;
        const double data_var =
            (y.data.col(v).array() - y.data.col(v).mean()).square().sum() / static_cast<double>(T);
        WhitenOperator op;
        if (bandwidth == 0) {
            double s_eff = s;
            if (!(s_eff > 0.0)) {
                s_eff = std::numeric_limits<double>::epsilon() * (data_var > 0.0 ? data_var : 1.0);
                op.s_clamped = true;
            }
            op.p = 0;
            const double w = literal_spectrum ? 1.0 / s_eff : 1.0 / std::sqrt(s_eff);
            op.band.setConstant(1, T, w);
        } else {
            bool clamped = false;
            const Eigen::MatrixXd prec = build_precision(phi, s, T, data_var, &clamped);
            op = build_whitener(prec, bandwidth, literal_spectrum, truncate);
            op.s_clamped = clamped;
        }
        const int slot = static_cast<int>(f.unique_ops.size());
        f.unique_ops.push_back(std::move(op));
        cache.emplace(std::move(key), slot);
        f.index_of[static_cast<std::size_t>(v)] = slot;
        f.eig_failed[static_cast<std::size_t>(v)] = f.unique_ops.back().identity_fallback ? 1 : 0;
        f.s_clamped[static_cast<std::size_t>(v)] = f.unique_ops.back().s_clamped ? 1 : 0;
    }
    return f;
}

/// Dumps one vertex's whitening matrix as dense text for debugging.
inline void dump_whitener(const WhitenOperator& op, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.precision(17);
    const Eigen::MatrixXd W = op.dense();
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
        for (Eigen::Index j = 0; j < W.cols(); ++j) out << W(i, j) << (j + 1 < W.cols() ? " " : "");
        out << '\n';
    }
    if (!out) throw DataError("failed while writing '" + path + "'");
}

} // namespace prewhiten
