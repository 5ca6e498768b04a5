// Command-line front end: fit / compare / simulate / diagnose.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
// failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <prewhiten/prewhiten.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

using nlohmann::json;
using namespace prewhiten;

namespace {

json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config file '" + path + "': " + e.what());
    }
    return j;
}

HrfModel parse_hrf(const std::string& s) {
    if (s == "canonical") return HrfModel::canonical;
    if (s == "td" || s == "canonical+td") return HrfModel::canonical_td;
    if (s == "td+dd" || s == "canonical+td+dd") return HrfModel::canonical_td_dd;
    throw ConfigError("unknown hrf model '" + s + "' (expected canonical | td | td+dd)");
}

OrderMode parse_ar_mode(const std::string& s) {
    if (s == "fixed") return OrderMode::fixed;
    if (s == "aic") return OrderMode::aic;
    throw ConfigError("unknown ar mode '" + s + "' (expected fixed | aic)");
}

RegularizeMode parse_reg(const std::string& s) {
    if (s == "local") return RegularizeMode::local;
    if (s == "global") return RegularizeMode::global;
    if (s == "none") return RegularizeMode::none;
    throw ConfigError("unknown regularization '" + s + "' (expected local | global | none)");
}

LbDofMode parse_lb_dof(const std::string& s) {
    if (s == "intercept") return LbDofMode::intercept_only;
    if (s == "ar") return LbDofMode::ar_adjusted;
    throw ConfigError("unknown lb dof mode '" + s + "' (expected intercept | ar)");
}

CorrectionKind parse_correction(const std::string& s) {
    if (s == "bonferroni") return CorrectionKind::bonferroni;
    if (s == "fdr") return CorrectionKind::fdr;
    throw ConfigError("unknown correction '" + s + "' (expected bonferroni | fdr)");
}

/// File-level config: JSON fields fill a PipelineConfig (defaults apply for
/// missing fields). Flags are layered on top by the caller.
PipelineConfig config_from_json(const json& j) {
    PipelineConfig c;
    try {
        if (j.contains("bold")) c.bold_path = j["bold"].get<std::string>();
        if (j.contains("mesh")) c.mesh_path = j["mesh"].get<std::string>();
        if (j.contains("events")) c.events_path = j["events"].get<std::string>();
        if (j.contains("nuisance")) c.nuisance_path = j["nuisance"].get<std::string>();
        if (j.contains("output")) c.output_dir = j["output"].get<std::string>();
        if (j.contains("tr")) c.tr_override = j["tr"].get<double>();
        if (j.contains("hrf")) c.hrf = parse_hrf(j["hrf"].get<std::string>());
        if (j.contains("drift_cutoff_hz")) c.drift_cutoff_hz = j["drift_cutoff_hz"].get<double>();
        if (j.contains("ar")) {
            const auto& a = j["ar"];
            if (a.contains("mode")) c.ar_mode = parse_ar_mode(a["mode"].get<std::string>());
            if (a.contains("order")) c.ar_order = a["order"].get<int>();
            else if (c.ar_mode == OrderMode::aic) c.ar_order = 10;
        }
        if (j.contains("regularization")) {
            const auto& r = j["regularization"];
            if (r.contains("mode")) c.regularization = parse_reg(r["mode"].get<std::string>());
            if (r.contains("fwhm")) c.fwhm = r["fwhm"].get<double>();
        }
        if (j.contains("lb")) {
            const auto& l = j["lb"];
            if (l.contains("lags")) c.lb_lags = l["lags"].get<int>();
            if (l.contains("volumes")) c.lb_volumes = l["volumes"].get<int>();
            if (l.contains("dof")) c.lb_dof = parse_lb_dof(l["dof"].get<std::string>());
        }
        if (j.contains("correction")) {
            const auto& k = j["correction"];
            if (k.contains("mode")) c.correction = parse_correction(k["mode"].get<std::string>());
            if (k.contains("alpha")) c.alpha = k["alpha"].get<double>();
            if (k.contains("q")) c.fdr_q = k["q"].get<double>();
        }
        if (j.contains("threads")) c.threads = j["threads"].get<int>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("appendix_literal")) c.appendix_literal = j["appendix_literal"].get<bool>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config file: ") + e.what());
    }
    return c;
}

PipelineInputs load_inputs(const PipelineConfig& c) {
    PipelineInputs in;
    if (c.bold_path.empty()) throw ConfigError("no BOLD input given (--bold or config)");
    if (c.mesh_path.empty()) throw ConfigError("no mesh input given (--mesh or config)");
    if (c.events_path.empty()) throw ConfigError("no events input given (--events or config)");
    in.bold = load_bold(c.bold_path, c.tr_override);
    in.mesh = load_mesh(c.mesh_path);
    in.events = load_events(c.events_path);
    if (static_cast<Eigen::Index>(in.mesh.V()) != in.bold.V())
        throw DataError("mesh and BOLD disagree on vertex count");
    if (!c.nuisance_path.empty()) in.nuisance = load_matrix(c.nuisance_path);
    return in;
}

struct CommonFlags {
    std::string config_path, bold, mesh, events, nuisance, output, hrf, ar_mode, reg, lb_dof,
        correction;
    double tr = 0.0, cutoff = 0.0, fwhm = 0.0, alpha = 0.0, q = 0.0;
    int ar_order = 0, lb_lags = 0, lb_volumes = 0, threads = -1;
    std::uint64_t seed = 0;
    bool appendix_literal = false;
};

void add_common_flags(CLI::App* app, CommonFlags& f) {
    app->add_option("--config", f.config_path, "JSON config file");
    app->add_option("--bold", f.bold, "BOLD matrix file (text or .bmat)");
    app->add_option("--mesh", f.mesh, "surface mesh file");
    app->add_option("--events", f.events, "event schedule CSV");
    app->add_option("--nuisance", f.nuisance, "nuisance regressor matrix file");
    app->add_option("--out", f.output, "output directory");
    app->add_option("--tr", f.tr, "repetition time override (seconds)");
    app->add_option("--hrf", f.hrf, "hrf model: canonical | td | td+dd");
    app->add_option("--cutoff", f.cutoff, "drift high-pass cutoff (Hz)");
    app->add_option("--ar-mode", f.ar_mode, "ar order mode: fixed | aic");
    app->add_option("--ar-order", f.ar_order, "fixed AR order 0..6, or AIC cap 1..10");
    app->add_option("--reg", f.reg, "regularization: local | global | none");
    app->add_option("--fwhm", f.fwhm, "smoothing FWHM in mm");
    app->add_option("--lb-lags", f.lb_lags, "Ljung-Box lag count");
    app->add_option("--lb-volumes", f.lb_volumes, "volumes used by the Ljung-Box test");
    app->add_option("--lb-dof", f.lb_dof, "Ljung-Box dof mode: intercept | ar");
    app->add_option("--correction", f.correction, "multiplicity correction: bonferroni | fdr");
    app->add_option("--alpha", f.alpha, "Bonferroni level");
    app->add_option("--q", f.q, "FDR level");
    app->add_option("--threads", f.threads, "worker threads (0 = auto)");
    app->add_option("--seed", f.seed, "master seed");
    app->add_flag("--appendix-literal", f.appendix_literal,
                  "use the literal U D U' spectrum (no square root)");
}

/// Precedence: flags > config file > defaults.
PipelineConfig merge_config(const CLI::App* app, const CommonFlags& f) {
    PipelineConfig c;
    if (!f.config_path.empty()) c = config_from_json(load_config_file(f.config_path));
    auto set = [&](const char* name) { return app->count(name) > 0; };
    if (set("--bold")) c.bold_path = f.bold;
    if (set("--mesh")) c.mesh_path = f.mesh;
    if (set("--events")) c.events_path = f.events;
    if (set("--nuisance")) c.nuisance_path = f.nuisance;
    if (set("--out")) c.output_dir = f.output;
    if (set("--tr")) c.tr_override = f.tr;
    if (set("--hrf")) c.hrf = parse_hrf(f.hrf);
    if (set("--cutoff")) c.drift_cutoff_hz = f.cutoff;
    if (set("--ar-mode")) c.ar_mode = parse_ar_mode(f.ar_mode);
    if (set("--ar-order")) c.ar_order = f.ar_order;
    if (set("--reg")) c.regularization = parse_reg(f.reg);
    if (set("--fwhm")) c.fwhm = f.fwhm;
    if (set("--lb-lags")) c.lb_lags = f.lb_lags;
    if (set("--lb-volumes")) c.lb_volumes = f.lb_volumes;
    if (set("--lb-dof")) c.lb_dof = parse_lb_dof(f.lb_dof);
    if (set("--correction")) c.correction = parse_correction(f.correction);
    if (set("--alpha")) c.alpha = f.alpha;
    if (set("--q")) c.fdr_q = f.q;
    if (set("--threads")) c.threads = f.threads;
    if (set("--seed")) c.seed = f.seed;
    if (set("--appendix-literal")) c.appendix_literal = f.appendix_literal;
    return c;
}

int cmd_fit(const CLI::App* app, const CommonFlags& f) {
    PipelineConfig cfg = merge_config(app, f);
    if (cfg.output_dir.empty()) throw ConfigError("fit: no output directory (--out or config)");
    const PipelineInputs in = load_inputs(cfg);
    const PipelineResult r = run_pipeline(cfg, in);
    write_outputs(cfg, r, cfg.output_dir);
    std::cout << "fit: V=" << in.bold.V() << " T=" << in.bold.T() << " K=" << r.design.K()
              << "\n  ACI mean pre=" << r.aci_pre_summary.mean
              << " post=" << r.aci_post_summary.mean
              << "\n  LB significant (FDR " << cfg.fdr_q << "): pre=" << r.lb_sig_frac_pre
              << " post=" << r.lb_sig_frac_post
              << "\n  outputs in " << cfg.output_dir << "\n";
    return 0;
}

std::vector<Strategy> strategies_from_json(const json& j) {
    std::vector<Strategy> out;
    if (!j.contains("strategies")) return out;
    for (const auto& s : j["strategies"]) {
        Strategy st;
        st.name = s.value("name", std::string("strategy") + std::to_string(out.size() + 1));
        if (s.contains("ar_mode")) st.ar_mode = parse_ar_mode(s["ar_mode"].get<std::string>());
        if (s.contains("order")) st.ar_order = s["order"].get<int>();
        if (s.contains("regularization"))
            st.regularization = parse_reg(s["regularization"].get<std::string>());
        if (s.contains("fwhm")) st.fwhm = s["fwhm"].get<double>();
        out.push_back(st);
    }
    return out;
}

int cmd_compare(const CLI::App* app, const CommonFlags& f) {
    if (f.config_path.empty()) throw ConfigError("compare: --config with a strategy list is required");
    const json j = load_config_file(f.config_path);
    PipelineConfig cfg = merge_config(app, f);
    if (cfg.output_dir.empty()) throw ConfigError("compare: no output directory");
    const std::vector<Strategy> strategies = strategies_from_json(j);
    if (strategies.size() < 2) throw ConfigError("compare: need at least 2 strategies in config");
    ComparisonTable tab;
    if (j.contains("simulate")) {
        const auto& s = j["simulate"];
        const std::string scen = s.value("scenario", std::string("tissue-line"));
        const int n_scans = s.value("n_scans", 1);
        const auto T = static_cast<Eigen::Index>(s.value("T", 284));
        if (scen == "null-grid") {
            const auto e = null_grid_experiment(n_scans, cfg.seed, s.value("latent_share", 0.8));
            tab = compare_strategies(cfg, e.mesh, EventSchedule{{{
                                          "boxcar", {20.0, 40.0, 60.0}, {10.0, 10.0, 10.0},
                                          {1.0, 1.0, 1.0}}}},
                                      strategies, n_scans, [&](int i) { return e.scan(i); });
        } else {
            SimScenario base;
            SurfaceMesh mesh;
            if (scen == "tissue-line") {
                auto t2 = tissue_line_scenario(T, cfg.seed);
                base = t2.scenario;
                mesh = t2.mesh;
            } else if (scen == "tissue-grid") {
                auto t2 = tissue_grid_scenario(T, cfg.seed);
                base = t2.scenario;
                mesh = t2.mesh;
            } else {
                throw ConfigError("unknown scenario '" + scen + "'");
            }
            const auto e = null_boxcar_experiment(mesh, base, n_scans, cfg.seed);
            tab = compare_strategies(cfg, mesh, EventSchedule{{{
                                          "boxcar", {20.0, 40.0, 60.0}, {10.0, 10.0, 10.0},
                                          {1.0, 1.0, 1.0}}}},
                                      strategies, n_scans, [&](int i) { return e.scan(i); });
        }
    } else {
        const PipelineInputs in = load_inputs(cfg);
        tab = compare_strategies(cfg, in.mesh, in.events, strategies, 1,
                                 [&](int) { return in.bold; });
    }
    write_comparison(tab, cfg.output_dir);
    std::cout << "compare: " << strategies.size() << " strategies\n";
    for (const auto& [name, fwer, lo, hi] : tab.fwer)
        std::cout << "  " << name << ": FWER=" << fwer << " [" << lo << ", " << hi << "]\n";
    std::cout << "  outputs in " << cfg.output_dir << "\n";
    return 0;
}

int cmd_simulate(const CLI::App* app, const CommonFlags& f, const std::string& scenario,
                 Eigen::Index T, int n_scans, double latent_share) {
    PipelineConfig cfg = merge_config(app, f);
    if (cfg.output_dir.empty()) throw ConfigError("simulate: no output directory");
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    SurfaceMesh mesh;
    EventSchedule events;
    events.conditions.push_back({"boxcar", {20.0, 40.0, 60.0}, {10.0, 10.0, 10.0}, {1.0, 1.0, 1.0}});
    if (scenario == "tissue-line") {
        auto t2 = tissue_line_scenario(T, cfg.seed);
        save_bold(t2.bold, cfg.output_dir + "/bold.txt");
        mesh = t2.mesh;
    } else if (scenario == "tissue-grid") {
        auto t2 = tissue_grid_scenario(T, cfg.seed);
        save_bold(t2.bold, cfg.output_dir + "/bold.txt");
        mesh = t2.mesh;
    } else if (scenario == "null-grid") {
        auto e = null_grid_experiment(n_scans, cfg.seed, latent_share);
        for (int i = 0; i < n_scans; ++i)
            save_bold(e.scan(i), cfg.output_dir + "/bold_scan" + std::to_string(i) + ".txt");
        mesh = e.mesh;
    } else {
        throw ConfigError("unknown scenario '" + scenario +
                          "' (expected tissue-line | tissue-grid | null-grid)");
    }
    save_mesh(mesh, cfg.output_dir + "/mesh.txt");
    save_events(events, cfg.output_dir + "/events.csv");
    std::cout << "simulate: scenario=" << scenario << " V=" << mesh.V() << " T=" << T
              << " seed=" << cfg.seed << "\n  outputs in " << cfg.output_dir << "\n";
    return 0;
}

int cmd_diagnose(const CLI::App* app, const CommonFlags& f, const std::string& residuals_path,
                 int ar_order_used) {
    PipelineConfig cfg = merge_config(app, f);
    if (residuals_path.empty()) throw ConfigError("diagnose: --residuals is required");
    if (cfg.output_dir.empty()) throw ConfigError("diagnose: no output directory");
    Eigen::MatrixXd resid;
    if (residuals_path.size() > 4 &&
        residuals_path.compare(residuals_path.size() - 4, 4, ".mat") == 0)
        resid = load_matrix(residuals_path);
    else
        resid = load_bold(residuals_path, 1.0).data;
    const Eigen::Index V = resid.cols();
    std::vector<int> orders(static_cast<std::size_t>(V), ar_order_used);
    const auto lb = ljung_box_field(resid, cfg.lb_lags, cfg.lb_dof, orders,
                                    static_cast<int>(resid.rows()), cfg.lb_volumes);
    const auto mask = fdr_bh(lb.pvalue, cfg.fdr_q);
    const AciField tau = aci_full(resid, cfg.threads);
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    std::ofstream csv(cfg.output_dir + "/diagnose.csv");
    csv.precision(10);
    csv << "vertex,aci,lb_q,lb_dof,lb_p,lb_sig_fdr\n";
    for (Eigen::Index v = 0; v < V; ++v)
        csv << v << ',' << tau.aci[v] << ',' << lb.statistic[v] << ','
            << lb.dof[static_cast<std::size_t>(v)] << ',' << lb.pvalue[v] << ','
            << int(mask[static_cast<std::size_t>(v)]) << '\n';
    if (!csv) throw DataError("failed writing diagnose.csv");
    std::size_t nsig = 0;
    for (auto b : mask) nsig += (b != 0);
    std::cout << "diagnose: V=" << V << " n=" << std::min<Eigen::Index>(resid.rows(), cfg.lb_volumes)
              << " lags=" << cfg.lb_lags << "\n  LB significant (FDR " << cfg.fdr_q
              << "): " << nsig << "/" << V << "\n  outputs in " << cfg.output_dir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatially varying AR prewhitening for vertex-wise time-series regression"};
    app.require_subcommand(1);

    CommonFlags fit_f, cmp_f, sim_f, diag_f;
    auto* fit = app.add_subcommand("fit", "run the full prewhitening pipeline");
    add_common_flags(fit, fit_f);
    auto* cmp = app.add_subcommand("compare", "compare prewhitening strategies");
    add_common_flags(cmp, cmp_f);
    auto* sim = app.add_subcommand("simulate", "generate synthetic scenario data");
    add_common_flags(sim, sim_f);
    std::string scenario = "tissue-line";
    int sim_T = 284, sim_scans = 1;
    double latent_share = 0.8;
    sim->add_option("--scenario", scenario, "tissue-line | tissue-grid | null-grid");
    sim->add_option("--T", sim_T, "samples per series");
    sim->add_option("--n-scans", sim_scans, "replicate scans (null-grid)");
    sim->add_option("--latent-share", latent_share, "regionwide noise share (null-grid)");
    auto* diag = app.add_subcommand("diagnose", "autocorrelation diagnostics on residuals");
    add_common_flags(diag, diag_f);
    std::string residuals_path;
    int order_used = 0;
    diag->add_option("--residuals", residuals_path, "residual matrix (.mat or BOLD format)");
    diag->add_option("--ar-order-used", order_used, "AR order for the ar-adjusted dof mode");

    try {
        app.parse(argc, argv);
        if (fit->parsed()) return cmd_fit(fit, fit_f);
        if (cmp->parsed()) return cmd_compare(cmp, cmp_f);
        if (sim->parsed())
            return cmd_simulate(sim, sim_f, scenario, sim_T, sim_scans, latent_share);
        if (diag->parsed()) return cmd_diagnose(diag, diag_f, residuals_path, order_used);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
