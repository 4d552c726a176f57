#include "cli.hpp"

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "sls_robust/config.hpp"
#include "sls_robust/errors.hpp"
#include "sls_robust/experiment.hpp"
#include "sls_robust/io.hpp"

namespace sls::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
    std::string config;
    std::string out = ".";
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "Experiment config (JSON)");
    app->add_option("--out", c.out, "Output directory")->capture_default_str();
    app->add_option("--seed", c.seed, "Base seed, overrides the config");
    app->add_flag("--quiet", c.quiet, "Only print errors");
}

ExperimentConfig load(const Common& c) {
    ExperimentConfig cfg = c.config.empty() ? default_config() : load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    return cfg;
}

// Writes files below the output directory and lists each in the manifest.
class Output {
public:
    Output(const Common& c, const ExperimentConfig& cfg, std::string command) : dir_(c.out) {
        manifest_.command = std::move(command);
        manifest_.tool_version = std::string(tool_version());
        manifest_.config_hash = config_hash(cfg);
        manifest_.started_utc = utc_timestamp();
    }
    void text(const std::string& name, const std::string& content) {
        io::write_text(dir_ / name, content);
        manifest_.add(name);
    }
    void json_file(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }
    fs::path path(const std::string& name) const { return dir_ / name; }
    void finish() {
        manifest_.finished_utc = utc_timestamp();
        manifest_.add("manifest.json");
        io::write_json(dir_ / "manifest.json", manifest_.to_json());
    }

private:
    fs::path dir_;
    RunManifest manifest_;
};

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(6) << v;
    return s.str();
}

int fit_error(const Common& c, const std::string& dataset, std::optional<double> radius,
              std::optional<double> quantile, std::ostream& out) {
    ExperimentConfig cfg = load(c);
    if (radius) cfg.error_model.radius = *radius;
    if (quantile) cfg.error_model.quantile_slope = *quantile;
    cfg.validate();
    const TrajectoryDataset data = io::read_dataset_csv(dataset);
    const DiscreteLtiSystem sys = cfg.system();
    if (data.measurements.rows() != sys.outputs() || data.states.rows() != sys.states()) {
        throw ParseError("dataset dimensions do not match the plant");
    }
    const auto& e = cfg.error_model;
    const ErrorModel em = fit(data, sys.C, e.radius, e.quantile_eps, e.quantile_slope);
    Output o(c, cfg, "fit-error");
    o.json_file("error_model.json", io::to_json(em));
    o.finish();
    if (!c.quiet) {
        out << "eps_e = " << fmt(em.epsilon_e) << "\n"
            << "S(q=1) = " << fmt(em.s_hat_max) << "\n"
            << "S(q=" << fmt(em.quantile_slope) << ") = " << fmt(em.s_hat) << "\n"
            << "pairs within r = " << em.pair_count << "\n";
    }
    return kOk;
}

int synthesize_cmd(const Common& c, const std::string& em_path, const std::string& cost, bool no_robust,
                   bool lp_debug, std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg = load(c);
    if (!em_path.empty()) {
        cfg.error_model.source = ErrorModelSource::File;
        cfg.error_model.path = em_path;
    }
    if (cost == "quadratic") cfg.cost = CostKind::QuadraticL1;
    if (cost == "imitation") cfg.cost = CostKind::Imitation;
    if (no_robust) cfg.robustness_enabled = false;
    cfg.validate();

    const ErrorModel em = resolve_error_model(cfg);
    SynthesisProblem pb = make_problem(cfg, em);
    Output o(c, cfg, "synthesize");
    o.json_file("error_model.json", io::to_json(em));

    AchievableSet ach;
    try {
        ach = parametrize_achievable(pb.sys, pb.horizon);
    } catch (const std::runtime_error& e) {
        o.finish();
        err << "infeasible: " << e.what() << "\n";
        return kInfeasible;
    }
    if (pb.cost.kind == CostKind::Imitation) {
        pb.cost.nominal = nominal_l1_responses(pb, ach);
        o.json_file("nominal_responses.json", io::to_json(*pb.cost.nominal));
    }
    if (lp_debug) o.json_file("lp.json", io::to_json(compile(pb, ach).lp));

    try {
        const SynthesisResult res = synthesize(pb, ach);
        const FirController k = realize_controller(res.responses, 2 * pb.horizon);
        o.json_file("responses.json", io::to_json(res.responses));
        o.json_file("controller.json", io::to_json(k));
        o.json_file("guarantee.json", io::to_json(res.report));
        o.json_file("synthesis.json", json{{"cost", res.cost},
                                           {"status", std::string(lp::to_string(res.status))},
                                           {"iterations", res.iterations},
                                           {"kkt",
                                            {{"primal", res.kkt.primal},
                                             {"dual", res.kkt.dual},
                                             {"complementarity", res.kkt.complementarity},
                                             {"gap", res.kkt.gap}}}});
        o.finish();
        if (!c.quiet) {
            const auto& r = res.report;
            out << "optimal, cost " << fmt(res.cost) << " after " << res.iterations << " iterations\n"
                << "|Phi_xe| = " << fmt(r.phi_xe_norm) << ", |Phi_xw| = " << fmt(r.phi_xw_norm) << "\n"
                << "robustness " << (r.robustness_enabled ? "on" : "off") << ": lhs " << fmt(r.robustness_lhs)
                << " rhs " << fmt(r.robustness_rhs) << "\n"
                << "gamma = " << (r.gamma ? fmt(*r.gamma) : std::string("void")) << "\n"
                << "controller tail beyond " << k.gain.horizon() << " taps: " << fmt(k.truncation_tail) << "\n";
        }
        return kOk;
    } catch (const SynthesisInfeasible& e) {
        o.json_file("diagnostic.json", io::to_json(e.diagnostic));
        o.finish();
        err << e.what() << "\n";
        return kInfeasible;
    } catch (const SolverFailure& e) {
        if (!lp_debug) o.json_file("lp.json", io::to_json(compile(pb, ach).lp));
        o.finish();
        err << e.what() << "\n";
        return kSolverFailure;
    }
}

std::string impulse_csv(const FirOperator& x, const FirOperator& u) {
    io::CsvTable t;
    t.header = {"channel", "k"};
    for (Eigen::Index i = 0; i < x.rows(); ++i) t.header.push_back("x" + std::to_string(i));
    for (Eigen::Index i = 0; i < u.rows(); ++i) t.header.push_back("u" + std::to_string(i));
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        for (int k = 1; k <= x.horizon(); ++k) {
            std::vector<double> row{static_cast<double>(j), static_cast<double>(k)};
            for (Eigen::Index i = 0; i < x.rows(); ++i) row.push_back(x.tap(k)(i, j));
            for (Eigen::Index i = 0; i < u.rows(); ++i) row.push_back(u.tap(k)(i, j));
            t.rows.push_back(std::move(row));
        }
    }
    return io::format_csv(t);
}

struct SimulateArgs {
    std::string responses;
    std::string controller;
    std::string guarantee;
    bool impulse = false;
    bool ideal = false;
    bool degraded = false;
    std::optional<int> steps;
};

int simulate_cmd(const Common& c, const SimulateArgs& a, std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg = load(c);
    cfg.validate();
    SimSetup setup = make_setup(cfg);

    std::unique_ptr<Controller> ctrl;
    int horizon = cfg.horizon;
    if (!a.responses.empty()) {
        const SystemResponses resp = io::responses_from_json(io::read_json(a.responses));
        resp.check_shapes(setup.sys.states(), setup.sys.inputs(), setup.sys.outputs());
        horizon = resp.horizon();
        ctrl = make_feedback(cfg, resp, "sls");
    } else if (!a.controller.empty()) {
        const FirController k = io::controller_from_json(io::read_json(a.controller));
        ctrl = std::make_unique<FirFeedback>(k, "fir");
    } else {
        ctrl = std::make_unique<PdController>(cfg.pd, cfg.params);
    }

    Output o(c, cfg, "simulate");
    if (a.impulse) {
        const SystemResponses r = closed_loop_impulse(setup.sys, *ctrl, horizon);
        o.text("impulse_w.csv", impulse_csv(r.phi_xw, r.phi_uw));
        o.text("impulse_e.csv", impulse_csv(r.phi_xe, r.phi_ue));
        o.json_file("impulse_responses.json", io::to_json(r));
        o.finish();
        if (!c.quiet) out << "impulse responses over " << horizon << " steps written\n";
        return kOk;
    }

    if (a.ideal) setup.perception = ideal_perception(setup.sys.states(), setup.sys.outputs());
    if (a.degraded) setup.perception.degradation_factor *= cfg.degraded_factor;
    const std::uint64_t seed = cfg.require_seed();
    setup.perception.seed = seed;
    std::optional<double> gamma;
    if (!a.guarantee.empty()) gamma = io::guarantee_from_json(io::read_json(a.guarantee)).gamma;
    const int steps = a.steps.value_or(cfg.sim_steps());
    try {
        const SimLog log = simulate(setup, *ctrl, steps, seed);
        const MetricsSummary m = metrics(log, gamma);
        o.text("simlog.csv", io::simlog_csv(log));
        o.text("dataset.csv", io::dataset_csv(dataset_from_log(log)));
        o.json_file("metrics.json", io::to_json(m));
        o.finish();
        if (!c.quiet) {
            out << ctrl->name() << ": " << steps << " steps, position rmse " << fmt(m.rmse_position) << ", max |e| "
                << fmt(m.max_e);
            if (m.gamma) out << ", gamma " << fmt(*m.gamma) << (m.bound_satisfied ? " (held)" : " (violated)");
            out << "\n";
        }
        return kOk;
    } catch (const SimulationAborted& e) {
        o.text("simlog_partial.csv", io::simlog_csv(e.log));
        o.finish();
        err << "simulation aborted at step " << e.step << ": " << e.what() << "\n";
        return kSolverFailure;
    }
}

int experiment_cmd(const Common& c, std::ostream& out) {
    ExperimentConfig cfg = load(c);
    cfg.validate();
    const ExperimentReport rep = run_experiment(cfg);
    Output o(c, cfg, "experiment");
    o.json_file("config.json", to_json(cfg));
    for (const auto& a : experiment_artifacts(rep)) o.text(a.file, a.content);
    o.finish();
    if (!c.quiet) {
        out << "S = " << fmt(rep.error_model.s_hat) << " (q=1: " << fmt(rep.error_model.s_hat_max)
            << "), eps_e = " << fmt(rep.error_model.epsilon_e) << "\n";
        for (const auto& ctrl : rep.controllers) {
            out << std::left << std::setw(18) << ctrl.name;
            if (ctrl.status != "ok") {
                out << ctrl.status << ": " << ctrl.message << "\n";
                continue;
            }
            for (const auto& cell : ctrl.cells) {
                out << " " << to_string(cell.condition) << " mean max|e| " << fmt(cell.mean_max_e) << " rmse "
                    << fmt(cell.mean_rmse) << (cell.all_bounds_satisfied ? "" : " [bound violated]");
            }
            out << "\n";
        }
    }
    return kOk;
}

int verify_cmd(const Common& c, const std::string& responses, const std::string& em_path, bool no_robust,
               double tol, std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg = load(c);
    if (!em_path.empty()) {
        cfg.error_model.source = ErrorModelSource::File;
        cfg.error_model.path = em_path;
    }
    if (no_robust) cfg.robustness_enabled = false;
    cfg.validate();
    const SystemResponses resp = io::responses_from_json(io::read_json(responses));
    const DiscreteLtiSystem sys = cfg.system();
    resp.check_shapes(sys.states(), sys.inputs(), sys.outputs());

    const double time_res = achievability_residual(sys, resp);
    std::mt19937_64 rng(cfg.seed.value_or(0));
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    double z_left = 0.0, z_right = 0.0;
    for (int i = 0; i < 10; ++i) {
        const auto r = z_domain_residual(sys, resp, std::polar(1.0, angle(rng)));
        z_left = std::max(z_left, r.left);
        z_right = std::max(z_right, r.right);
    }
    json report{{"achievability_residual", time_res}, {"z_residual_left", z_left}, {"z_residual_right", z_right}};
    bool ok = time_res <= tol && z_left <= tol && z_right <= tol;
    if (cfg.robustness_enabled) {
        const GuaranteeReport g = evaluate_guarantee(make_problem(cfg, resolve_error_model(cfg)), resp);
        const bool robust_ok = g.robustness_lhs <= g.robustness_rhs + tol;
        ok = ok && robust_ok;
        report["robustness_lhs"] = g.robustness_lhs;
        report["robustness_rhs"] = g.robustness_rhs;
        report["robustness_satisfied"] = robust_ok;
        report["gamma"] = g.gamma ? json(*g.gamma) : json(nullptr);
    }
    report["tolerance"] = tol;
    report["passed"] = ok;
    Output o(c, cfg, "verify");
    o.json_file("verify.json", report);
    o.finish();
    if (!c.quiet) {
        out << "achievability residual " << fmt(time_res) << ", z-domain " << fmt(z_left) << " / " << fmt(z_right)
            << "\n";
        if (report.contains("robustness_lhs")) {
            out << "robustness lhs " << fmt(report["robustness_lhs"].get<double>()) << " <= rhs "
                << fmt(report["robustness_rhs"].get<double>()) << "\n";
        }
        out << (ok ? "verified" : "FAILED") << "\n";
    }
    if (!ok) err << "verification failed\n";
    return ok ? kOk : kInfeasible;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Robust output-feedback synthesis with learned perception error models", "sls-robust"};
    app.require_subcommand(1);

    Common fit_c, syn_c, sim_c, exp_c, ver_c;

    auto* fit_cmd = app.add_subcommand("fit-error", "Fit eps_e and the S-slope to a dataset CSV");
    add_common(fit_cmd, fit_c);
    std::string dataset;
    std::optional<double> radius, quantile;
    fit_cmd->add_option("--dataset", dataset, "Dataset CSV (t,x0..,y0..)")->required();
    fit_cmd->add_option("--radius", radius, "Neighbourhood radius r");
    fit_cmd->add_option("--quantile", quantile, "Slope quantile");

    auto* syn_cmd = app.add_subcommand("synthesize", "Synthesize system responses and the controller");
    add_common(syn_cmd, syn_c);
    std::string syn_em, cost;
    bool syn_no_robust = false, lp_debug = false;
    syn_cmd->add_option("--error-model", syn_em, "ErrorModel JSON");
    syn_cmd->add_option("--cost", cost, "quadratic or imitation")->check(CLI::IsMember({"quadratic", "imitation"}));
    syn_cmd->add_flag("--no-robust", syn_no_robust, "Drop the robustness constraint");
    syn_cmd->add_flag("--lp-debug", lp_debug, "Write the linear program as lp.json");

    auto* sim_cmd = app.add_subcommand("simulate", "Closed-loop simulation of one controller");
    add_common(sim_cmd, sim_c);
    SimulateArgs sa;
    sim_cmd->add_option("--responses", sa.responses, "System responses JSON (exact realization)");
    sim_cmd->add_option("--controller", sa.controller, "FIR controller JSON");
    sim_cmd->add_option("--guarantee", sa.guarantee, "Guarantee JSON supplying gamma");
    sim_cmd->add_option("--steps", sa.steps, "Number of steps");
    sim_cmd->add_flag("--impulse", sa.impulse, "Impulse-test mode: write the closed-loop responses");
    sim_cmd->add_flag("--ideal", sa.ideal, "Ideal perception");
    sim_cmd->add_flag("--degraded", sa.degraded, "Degraded perception");

    auto* exp_cmd = app.add_subcommand("experiment", "Four controllers under nominal and degraded perception");
    add_common(exp_cmd, exp_c);

    auto* ver_cmd = app.add_subcommand("verify", "Re-check achievability and robustness of a responses file");
    add_common(ver_cmd, ver_c);
    std::string ver_resp, ver_em;
    bool ver_no_robust = false;
    double tol = 1e-7;
    ver_cmd->add_option("--responses", ver_resp, "System responses JSON")->required();
    ver_cmd->add_option("--error-model", ver_em, "ErrorModel JSON");
    ver_cmd->add_flag("--no-robust", ver_no_robust, "Skip the robustness check");
    ver_cmd->add_option("--tol", tol, "Tolerance")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n";
        return kIoError;
    }

    try {
        if (*fit_cmd) return fit_error(fit_c, dataset, radius, quantile, out);
        if (*syn_cmd) return synthesize_cmd(syn_c, syn_em, cost, syn_no_robust, lp_debug, out, err);
        if (*sim_cmd) return simulate_cmd(sim_c, sa, out, err);
        if (*exp_cmd) return experiment_cmd(exp_c, out);
        if (*ver_cmd) return verify_cmd(ver_c, ver_resp, ver_em, ver_no_robust, tol, out, err);
    } catch (const NoNeighborsError& e) {
        err << "no-neighbors: " << e.what() << "\n";
        return kIoError;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << "\n";
        return kIoError;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kIoError;
    } catch (const io::IoError& e) {
        err << "i/o error: " << e.what() << "\n";
        return kIoError;
    } catch (const json::exception& e) {
        err << "schema error: " << e.what() << "\n";
        return kIoError;
    } catch (const fs::filesystem_error& e) {
        err << "i/o error: " << e.what() << "\n";
        return kIoError;
    } catch (const SynthesisInfeasible& e) {
        err << e.what() << "\n";
        return kInfeasible;
    } catch (const SolverFailure& e) {
        err << e.what() << "\n";
        return kSolverFailure;
    } catch (const std::invalid_argument& e) {
        err << "invalid input: " << e.what() << "\n";
        return kIoError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kSolverFailure;
    }
    return kIoError;
}

}  // namespace sls::cli
