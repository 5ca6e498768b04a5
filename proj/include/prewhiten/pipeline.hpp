#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "prewhiten/arfit.hpp"
#include "prewhiten/data.hpp"
#include "prewhiten/design.hpp"
#include "prewhiten/error.hpp"
#include "prewhiten/glm.hpp"
#include "prewhiten/regularize.hpp"
#include "prewhiten/stats.hpp"
#include "prewhiten/whiten.hpp"

namespace prewhiten {

inline constexpr const char* library_version = "1.0.0";

enum class HrfModel { canonical, canonical_td, canonical_td_dd };
enum class CorrectionKind { bonferroni, fdr };

/// Declarative pipeline configuration. Defaults: fixed AR order 6, local
/// regularization at 5 mm FWHM, Ljung-Box over 20 lags on the first 100
/// volumes with intercept-only dof, Bonferroni at 0.05.
struct PipelineConfig {
    std::string bold_path, mesh_path, events_path, nuisance_path, output_dir;
    double tr_override = 0.0;
    HrfModel hrf = HrfModel::canonical;
    double drift_cutoff_hz = 0.01;
    OrderMode ar_mode = OrderMode::fixed;
    int ar_order = 6;        // fixed mode: 1..6; aic mode: cap (default 10)
    RegularizeMode regularization = RegularizeMode::local;
    double fwhm = 5.0;
    int lb_lags = 20;
    int lb_volumes = 100;
    LbDofMode lb_dof = LbDofMode::intercept_only;
    CorrectionKind correction = CorrectionKind::bonferroni;
    double alpha = 0.05;
    double fdr_q = 0.05;
    int threads = 0;
    std::uint64_t seed = 0;
    bool appendix_literal = false;  // reproduce the no-square-root spectrum

    int effective_order() const { return ar_mode == OrderMode::aic ? ar_order : ar_order; }
};

inline void validate_config(const PipelineConfig& c) {
    if (c.ar_mode == OrderMode::fixed && (c.ar_order < 0 || c.ar_order > 6))
        throw ConfigError("ar order must be in 0..6 (use aic mode for higher caps)");
    if (c.ar_mode == OrderMode::aic && (c.ar_order < 1 || c.ar_order > 10))
        throw ConfigError("aic max order must be in 1..10");
    if (c.regularization == RegularizeMode::local && c.fwhm <= 0.0)
        throw ConfigError("local regularization needs fwhm > 0");
    if (c.lb_lags < 1) throw ConfigError("lb lags must be >= 1");
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("alpha must be in (0,1)");
    if (!(c.fdr_q > 0.0 && c.fdr_q < 1.0)) throw ConfigError("fdr q must be in (0,1)");
    if (c.drift_cutoff_hz < 0.0) throw ConfigError("drift cutoff must be >= 0");
    if (c.threads < 0) throw ConfigError("threads must be >= 0");
}

/// In-memory pipeline inputs (the CLI fills these from files).
struct PipelineInputs {
    BoldMatrix bold;
    SurfaceMesh mesh;
    EventSchedule events;
    std::optional<Eigen::MatrixXd> nuisance;
};

struct AciSummary {
    double mean = 0.0;
    double q95 = 0.0;
};

struct PipelineResult {
    DesignMatrix design;
    GlmFit ols;
    ArField ar_raw;
    ArField ar_reg;
    GlmFit gls;
    AciField aci_pre;
    AciField aci_post;
    LjungBoxResult lb_pre;
    LjungBoxResult lb_post;
    Eigen::VectorXd task_p;               // two-sided t-test p per vertex
    std::vector<std::uint8_t> task_sig;   // after the configured correction
    int task_column = -1;
    AciSummary aci_pre_summary, aci_post_summary;
    double lb_sig_frac_pre = 0.0, lb_sig_frac_post = 0.0;
    std::uint64_t eig_decompositions = 0;
};

namespace detail {

inline AciSummary summarize_aci(const AciField& f) {
    AciSummary s;
    s.mean = f.aci.mean();
    std::vector<double> v(f.aci.data(), f.aci.data() + f.aci.size());
    std::sort(v.begin(), v.end());
    const double pos = 0.95 * (static_cast<double>(v.size()) - 1.0);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    s.q95 = v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    return s;
}

inline double mask_fraction(const std::vector<std::uint8_t>& m) {
    if (m.empty()) return 0.0;
    std::size_t c = 0;
    for (auto b : m) c += (b != 0);
    return static_cast<double>(c) / static_cast<double>(m.size());
}

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("stage ") + name + ": " + e.what());
    } catch (const DataError& e) {
        throw DataError(std::string("stage ") + name + ": " + e.what());
    } catch (const NumericError& e) {
        throw NumericError(std::string("stage ") + name + ": " + e.what());
    }
}

} // namespace detail

/// Builds the design for a dataset: intercept, task regressors (canonical
/// HRF convolution per condition, optional temporal/dispersion derivative
/// columns), DCT drift columns, then any nuisance columns.
inline DesignMatrix build_design(const BoldMatrix& bold, const EventSchedule& events,
                                 HrfModel hrf_model, double cutoff_hz,
                                 const std::optional<Eigen::MatrixXd>& nuisance = std::nullopt) {
    const Eigen::Index T = bold.T();
    const double tr = bold.tr;
    const HrfBasis hrf = canonical_hrf(tr / 16.0);
    std::vector<NamedColumn> cols;
    for (const auto& cond : events.conditions)
        cols.push_back({convolve_events(cond, hrf, T, tr), ColumnRole::task, cond.name});
    if (hrf_model != HrfModel::canonical) {
        const auto [td, dd] = hrf_derivatives(hrf);
        for (const auto& cond : events.conditions)
            cols.push_back({convolve_events(cond, td, T, tr), ColumnRole::temporal_derivative,
                            cond.name + ".td"});
        if (hrf_model == HrfModel::canonical_td_dd)
            for (const auto& cond : events.conditions)
                cols.push_back({convolve_events(cond, dd, T, tr),
                                ColumnRole::dispersion_derivative, cond.name + ".dd"});
    }
    const Eigen::MatrixXd drift = dct_bases(T, tr, cutoff_hz);
    for (Eigen::Index k = 0; k < drift.cols(); ++k)
        cols.push_back({drift.col(k), ColumnRole::drift, "dct" + std::to_string(k + 1)});
    if (nuisance) {
        if (nuisance->rows() != T) throw DataError("nuisance matrix row count differs from T");
        for (Eigen::Index k = 0; k < nuisance->cols(); ++k)
            cols.push_back({nuisance->col(k), ColumnRole::nuisance,
                            "nuisance" + std::to_string(k + 1)});
    }
    return assemble_design(T, cols);
}

/// Runs the full pipeline on in-memory inputs:
/// load -> design -> OLS -> ACF/ACI(pre) -> AR fit (+AIC) -> regularize ->
/// whiten -> GLS -> ACF/ACI(post) -> Ljung-Box -> corrections -> summaries.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, const PipelineInputs& in) {
    validate_config(cfg);
    PipelineResult r;
    r.design = detail::stage("design", [&] {
        return build_design(in.bold, in.events, cfg.hrf, cfg.drift_cutoff_hz, in.nuisance);
    });
    r.task_column = r.design.column_of_role(ColumnRole::task);
    r.ols = detail::stage("ols", [&] { return fit_ols(in.bold, r.design, cfg.threads); });
    r.aci_pre = detail::stage("aci-pre", [&] { return aci_full(r.ols.residuals, cfg.threads); });
    r.ar_raw = detail::stage("ar-fit", [&] {
        return fit_ar_field(r.ols.residuals, cfg.ar_mode == OrderMode::aic ? cfg.ar_order : cfg.ar_order,
                            cfg.ar_mode, cfg.threads);
    });
    r.ar_reg = detail::stage("regularize", [&] {
        return regularize_ar(r.ar_raw, cfg.regularization, in.mesh, cfg.fwhm);
    });
    reset_eig_count();
    const WhitenerField wf = detail::stage("whiten", [&] {
        return whiten_dataset(in.bold, r.ar_reg, cfg.appendix_literal);
    });
    r.eig_decompositions = eig_count().load();
    r.gls = detail::stage("gls", [&] {
        return fit_gls(in.bold, r.design,
                       [&](Eigen::Index v) { return wf.at(v).dense(); }, cfg.threads);
    });
    r.aci_post = detail::stage("aci-post", [&] { return aci_full(r.gls.residuals, cfg.threads); });
    detail::stage("ljung-box", [&] {
        r.lb_pre = ljung_box_field(r.ols.residuals, cfg.lb_lags, cfg.lb_dof, r.ar_reg.order,
                                   static_cast<int>(in.bold.T()), cfg.lb_volumes);
        r.lb_post = ljung_box_field(r.gls.residuals, cfg.lb_lags, cfg.lb_dof, r.ar_reg.order,
                                    static_cast<int>(in.bold.T()), cfg.lb_volumes);
        return 0;
    });
    detail::stage("corrections", [&] {
        r.lb_pre.significant_mask = fdr_bh(r.lb_pre.pvalue, cfg.fdr_q);
        r.lb_post.significant_mask = fdr_bh(r.lb_post.pvalue, cfg.fdr_q);
        if (r.task_column >= 0) {
            r.task_p = ttest(r.gls, r.task_column);
            r.task_sig = cfg.correction == CorrectionKind::bonferroni
                             ? bonferroni(r.task_p, cfg.alpha)
                             : fdr_bh(r.task_p, cfg.fdr_q);
        }
        return 0;
    });
    r.aci_pre_summary = detail::summarize_aci(r.aci_pre);
    r.aci_post_summary = detail::summarize_aci(r.aci_post);
    r.lb_sig_frac_pre = detail::mask_fraction(r.lb_pre.significant_mask);
    r.lb_sig_frac_post = detail::mask_fraction(r.lb_post.significant_mask);
    return r;
}

/// FNV-1a 64-bit content hash, used for manifest entries and config hashes.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline std::string hex64(std::uint64_t x) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
    return buf;
}

/// Canonical config serialization (the config hash is the FNV-1a of this).
inline std::string config_string(const PipelineConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << "bold=" << c.bold_path << ";mesh=" << c.mesh_path << ";events=" << c.events_path
       << ";nuisance=" << c.nuisance_path << ";tr_override=" << c.tr_override
       << ";hrf=" << static_cast<int>(c.hrf) << ";cutoff=" << c.drift_cutoff_hz
       << ";ar_mode=" << (c.ar_mode == OrderMode::aic ? "aic" : "fixed")
       << ";ar_order=" << c.ar_order << ";reg=" << static_cast<int>(c.regularization)
       << ";fwhm=" << c.fwhm << ";lb_lags=" << c.lb_lags << ";lb_volumes=" << c.lb_volumes
       << ";lb_dof=" << (c.lb_dof == LbDofMode::intercept_only ? "intercept" : "ar")
       << ";correction=" << (c.correction == CorrectionKind::bonferroni ? "bonferroni" : "fdr")
       << ";alpha=" << c.alpha << ";q=" << c.fdr_q << ";seed=" << c.seed
       << ";literal=" << (c.appendix_literal ? 1 : 0);
    return os.str();
}

namespace detail {

inline std::string json_escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        if (ch == '"' || ch == '\\') out.push_back('\\');
        out.push_back(ch);
    }
    return out;
}

} // namespace detail

/// Writes the result bundle into `dir`: dense matrix files, a per-vertex
/// CSV, and manifest.json listing every file with its content hash plus the
/// config hash, seed, and versions. Returns the manifest text.
inline std::string write_outputs(const PipelineConfig& cfg, const PipelineResult& r,
                                 const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<std::pair<std::string, std::uint64_t>> files;
    auto put_matrix = [&](const std::string& name, const Eigen::MatrixXd& m) {
        const std::string path = dir + "/" + name;
        save_matrix(m, path);
        std::ifstream in(path, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        files.push_back({name, fnv1a64(ss.str())});
    };
    put_matrix("design.mat", r.design.matrix);
    put_matrix("beta.mat", r.gls.beta);
    put_matrix("se.mat", r.gls.se);
    put_matrix("tstats.mat", r.gls.tstats);
    put_matrix("ar_phi.mat", r.ar_reg.phi);
    put_matrix("ar_s.mat", r.ar_reg.s.transpose());
    put_matrix("aci_pre.mat", r.aci_pre.aci.transpose());
    put_matrix("aci_post.mat", r.aci_post.aci.transpose());
    if (r.task_p.size() > 0) put_matrix("task_p.mat", r.task_p.transpose());
    {
        const std::string path = dir + "/vertices.csv";
        std::ofstream csv(path);
        csv.precision(10);
        csv << "vertex,aci_pre,aci_post,lb_q_pre,lb_p_pre,lb_sig_pre,lb_q_post,lb_p_post,"
               "lb_sig_post,task_t,task_p,task_sig\n";
        for (Eigen::Index v = 0; v < r.aci_pre.aci.size(); ++v) {
            csv << v << ',' << r.aci_pre.aci[v] << ',' << r.aci_post.aci[v] << ','
                << r.lb_pre.statistic[v] << ',' << r.lb_pre.pvalue[v] << ','
                << int(r.lb_pre.significant_mask[static_cast<std::size_t>(v)]) << ','
                << r.lb_post.statistic[v] << ',' << r.lb_post.pvalue[v] << ','
                << int(r.lb_post.significant_mask[static_cast<std::size_t>(v)]);
            if (r.task_column >= 0)
                csv << ',' << r.gls.tstats(r.task_column, v) << ',' << r.task_p[v] << ','
                    << int(r.task_sig[static_cast<std::size_t>(v)]);
            else
                csv << ",,,";
            csv << '\n';
        }
        csv.close();
        std::ifstream in(path, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        files.push_back({"vertices.csv", fnv1a64(ss.str())});
    }
    std::ostringstream m;
    m.precision(17);
    m << "{\n";
    m << "  \"config_hash\": \"" << hex64(fnv1a64(config_string(cfg))) << "\",\n";
    m << "  \"seed\": " << cfg.seed << ",\n";
    m << "  \"generator\": \"mt19937_64+splitmix64-streams\",\n";
    m << "  \"versions\": {\"library\": \"" << library_version << "\", \"eigen\": \""
      << EIGEN_WORLD_VERSION << "." << EIGEN_MAJOR_VERSION << "." << EIGEN_MINOR_VERSION
      << "\"},\n";
    m << "  \"summary\": {\"aci_pre_mean\": " << r.aci_pre_summary.mean
      << ", \"aci_pre_q95\": " << r.aci_pre_summary.q95
      << ", \"aci_post_mean\": " << r.aci_post_summary.mean
      << ", \"aci_post_q95\": " << r.aci_post_summary.q95
      << ", \"lb_sig_frac_pre\": " << r.lb_sig_frac_pre
      << ", \"lb_sig_frac_post\": " << r.lb_sig_frac_post
      << ", \"eig_decompositions\": " << r.eig_decompositions << "},\n";
    m << "  \"files\": {\n";
    for (std::size_t i = 0; i < files.size(); ++i)
        m << "    \"" << detail::json_escape(files[i].first) << "\": \""
          << hex64(files[i].second) << (i + 1 < files.size() ? "\",\n" : "\"\n");
    m << "  }\n}\n";
    std::ofstream mf(dir + "/manifest.json");
    mf << m.str();
    if (!mf) throw DataError("failed writing manifest.json");
    return m.str();
}

/// One prewhitening strategy for side-by-side comparison.
struct Strategy {
    std::string name;
    OrderMode ar_mode = OrderMode::fixed;
    int ar_order = 6;
    RegularizeMode regularization = RegularizeMode::local;
    double fwhm = 5.0;
};

struct StrategyRow {
    std::string strategy;
    int scan = 0;
    double aci_mean = 0.0, aci_q95 = 0.0;
    double lb_sig_frac = 0.0;
    double fpr = 0.0;
    bool any_positive = false;
};

struct ComparisonTable {
    std::vector<StrategyRow> rows;
    // Per-strategy FWER across scans with Agresti-Coull bounds.
    std::vector<std::tuple<std::string, double, double, double>> fwer;
};

/// Runs each strategy over a set of scans sharing one design and mesh.
template <typename ScanProvider>
ComparisonTable compare_strategies(const PipelineConfig& base, const SurfaceMesh& mesh,
                                   const EventSchedule& events,
                                   const std::vector<Strategy>& strategies, int n_scans,
                                   ScanProvider&& scan_of) {
    if (strategies.size() < 2) throw ConfigError("compare_strategies: need >= 2 strategies");
    if (n_scans < 1) throw ConfigError("compare_strategies: need >= 1 scan");
    ComparisonTable tab;
    for (const auto& st : strategies) {
        PipelineConfig cfg = base;
        cfg.ar_mode = st.ar_mode;
        cfg.ar_order = st.ar_order;
        cfg.regularization = st.regularization;
        cfg.fwhm = st.fwhm;
        int hits = 0;
        for (int i = 0; i < n_scans; ++i) {
            PipelineInputs in;
            in.bold = scan_of(i);
            in.mesh = mesh;
            in.events = events;
            const PipelineResult r = run_pipeline(cfg, in);
            StrategyRow row;
            row.strategy = st.name;
            row.scan = i;
            row.aci_mean = r.aci_post_summary.mean;
            row.aci_q95 = r.aci_post_summary.q95;
            row.lb_sig_frac = r.lb_sig_frac_post;
            row.fpr = detail::mask_fraction(r.task_sig);
            row.any_positive = row.fpr > 0.0;
            hits += row.any_positive ? 1 : 0;
            tab.rows.push_back(row);
        }
        const auto [lo, hi] = agresti_coull(hits, n_scans);
        tab.fwer.push_back({st.name, static_cast<double>(hits) / n_scans, lo, hi});
    }
    return tab;
}

inline void write_comparison(const ComparisonTable& tab, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        std::ofstream csv(dir + "/comparison.csv");
        csv.precision(10);
        csv << "strategy,scan,aci_mean,aci_q95,lb_sig_frac,fpr,any_positive\n";
        for (const auto& r : tab.rows)
            csv << r.strategy << ',' << r.scan << ',' << r.aci_mean << ',' << r.aci_q95 << ','
                << r.lb_sig_frac << ',' << r.fpr << ',' << (r.any_positive ? 1 : 0) << '\n';
        if (!csv) throw DataError("failed writing comparison.csv");
    }
    std::ofstream js(dir + "/comparison.json");
    js.precision(10);
    js << "{\n  \"strategies\": [\n";
    for (std::size_t i = 0; i < tab.fwer.size(); ++i) {
        const auto& [name, fwer, lo, hi] = tab.fwer[i];
        js << "    {\"name\": \"" << detail::json_escape(name) << "\", \"fwer\": " << fwer
           << ", \"ci_low\": " << lo << ", \"ci_high\": " << hi << "}"
           << (i + 1 < tab.fwer.size() ? ",\n" : "\n");
    }
    js << "  ]\n}\n";
    if (!js) throw DataError("failed writing comparison.json");
}

} // namespace prewhiten
