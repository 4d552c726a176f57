#include "sls_robust/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>

#include "sls_robust/io.hpp"

#include <sstream>

namespace sls {

namespace {

// Horizon used to read the PD controller's infinite responses.
constexpr int kPdImpulseHorizon = 200;

struct Candidate {
    ControllerReport report;
    std::unique_ptr<Controller> controller;
    std::optional<SystemResponses> responses;
};

Candidate synthesized(const ExperimentConfig& cfg, const SynthesisProblem& pb, const AchievableSet& ach,
                      const std::string& name) {
    Candidate c;
    c.report.name = name;
    try {
        const SynthesisResult res = synthesize(pb, ach);
        c.report.guarantee = res.report;
        c.controller = make_feedback(cfg, res.responses, name);
        c.responses = res.responses;
    } catch (const SynthesisInfeasible& e) {
        c.report.status = "infeasible";
        c.report.message = e.what();
        c.report.diagnostic = e.diagnostic;
    } catch (const SolverFailure& e) {
        c.report.status = "solver-failure";
        c.report.message = e.what();
    }
    return c;
}

}  // namespace

std::string_view to_string(Condition c) { return c == Condition::Nominal ? "nominal" : "degraded"; }

SimSetup make_setup(const ExperimentConfig& cfg) {
    if (!cfg.quadrotor()) throw ConfigError("system", "simulation needs the quadrotor plant");
    SimSetup s;
    s.sys = cfg.system();
    s.params = cfg.params;
    s.reference = cfg.reference;
    s.perception = cfg.perception;
    s.eps_w = cfg.eps_w;
    return s;
}

SimLog training_flight(const ExperimentConfig& cfg, std::uint64_t seed) {
    SimSetup s = make_setup(cfg);
    s.perception.seed = seed;
    PdController pd(cfg.pd, cfg.params);
    return simulate(s, pd, cfg.reference.steps(), seed);
}

ErrorModel resolve_error_model(const ExperimentConfig& cfg) {
    const auto& e = cfg.error_model;
    const DiscreteLtiSystem sys = cfg.system();
    switch (e.source) {
        case ErrorModelSource::Training: {
            const SimLog log = training_flight(cfg, cfg.require_seed());
            return fit(dataset_from_log(log), sys.C, e.radius, e.quantile_eps, e.quantile_slope);
        }
        case ErrorModelSource::Dataset:
            return fit(io::read_dataset_csv(e.path), sys.C, e.radius, e.quantile_eps, e.quantile_slope);
        case ErrorModelSource::File:
            return io::error_model_from_json(io::read_json(e.path));
        case ErrorModelSource::Explicit: {
            ErrorModel em;
            em.epsilon_e = e.epsilon_e;
            em.s_hat = e.s_hat;
            em.s_hat_max = e.s_hat;
            em.radius_r = e.radius;
            em.quantile_eps = e.quantile_eps;
            em.quantile_slope = e.quantile_slope;
            return em;
        }
    }
    throw ConfigError("error_model.source", "unknown source");
}

SynthesisProblem make_problem(const ExperimentConfig& cfg, const ErrorModel& em) {
    SynthesisProblem pb;
    pb.sys = cfg.system();
    pb.horizon = cfg.horizon;
    pb.eps_w = cfg.eps_w;
    pb.error_model = em;
    pb.d_max = cfg.d_max;
    pb.robustness_enabled = cfg.robustness_enabled;
    pb.margin = cfg.margin;
    pb.r0 = cfg.r0;
    pb.cost.kind = cfg.cost;
    pb.cost.q_diag = cfg.q_diag;
    pb.cost.r_diag = cfg.r_diag;
    pb.solver = cfg.solver;
    return pb;
}

std::unique_ptr<Controller> make_feedback(const ExperimentConfig& cfg, const SystemResponses& resp,
                                          const std::string& name) {
    auto fb = std::make_unique<SlsFeedback>(resp, name);
    if (!cfg.z_axis_pd) return fb;
    return std::make_unique<ZAxisPdMix>(std::move(fb), PdController(cfg.pd, cfg.params));
}

unsigned worker_count() {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SLS_ROBUST_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1) n = std::min(n, static_cast<unsigned>(cap));
    }
    return n;
}

void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& task) {
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(count);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    task(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::uint64_t base = cfg.require_seed();
    ExperimentReport rep;
    rep.error_model = resolve_error_model(cfg);
    rep.dt = cfg.dt;
    for (int i = 0; i < cfg.runs; ++i) rep.seeds.push_back(base + 1 + static_cast<std::uint64_t>(i));

    const SynthesisProblem base_pb = make_problem(cfg, rep.error_model);
    const AchievableSet ach = parametrize_achievable(base_pb.sys, base_pb.horizon);

    std::vector<Candidate> cands;
    {
        Candidate pd;
        pd.report.name = "pd";
        auto ctrl = std::make_unique<PdController>(cfg.pd, cfg.params);
        SynthesisProblem pb = base_pb;
        pb.robustness_enabled = false;
        const SystemResponses resp = closed_loop_impulse(pb.sys, *ctrl, kPdImpulseHorizon);
        pd.report.guarantee = evaluate_guarantee(pb, resp);
        pd.controller = std::move(ctrl);
        cands.push_back(std::move(pd));
    }

    SynthesisProblem nominal_pb = base_pb;
    nominal_pb.cost.kind = CostKind::QuadraticL1;
    nominal_pb.robustness_enabled = false;
    Candidate nominal = synthesized(cfg, nominal_pb, ach, "nominal_l1");

    SynthesisProblem robust_pb = base_pb;
    robust_pb.cost.kind = CostKind::QuadraticL1;
    robust_pb.robustness_enabled = true;
    Candidate robust = synthesized(cfg, robust_pb, ach, "robust_quadratic");

    Candidate imitation;
    imitation.report.name = "robust_imitation";
    if (nominal.responses) {
        SynthesisProblem imit_pb = base_pb;
        imit_pb.cost.kind = CostKind::Imitation;
        imit_pb.cost.nominal = nominal.responses;
        imit_pb.robustness_enabled = true;
        imitation = synthesized(cfg, imit_pb, ach, "robust_imitation");
    } else {
        imitation.report.status = nominal.report.status;
        imitation.report.message = "no nominal target: " + nominal.report.message;
    }
    cands.push_back(std::move(nominal));
    cands.push_back(std::move(robust));
    cands.push_back(std::move(imitation));

    // One task per (controller, condition, seed), merged by index.
    struct Task {
        std::size_t cand;
        std::size_t cell;
        std::size_t run;
    };
    const Condition conditions[] = {Condition::Nominal, Condition::Degraded};
    std::vector<Task> tasks;
    for (std::size_t c = 0; c < cands.size(); ++c) {
        if (!cands[c].controller) continue;
        auto& cr = cands[c].report;
        for (std::size_t k = 0; k < 2; ++k) {
            CellReport cell;
            cell.condition = conditions[k];
            cell.degradation_factor =
                cfg.perception.degradation_factor * (conditions[k] == Condition::Degraded ? cfg.degraded_factor : 1.0);
            cell.runs.resize(rep.seeds.size());
            cr.cells.push_back(std::move(cell));
            for (std::size_t r = 0; r < rep.seeds.size(); ++r) tasks.push_back({c, k, r});
        }
    }

    std::vector<std::string> aborted(tasks.size());
    const SimSetup setup = make_setup(cfg);
    const int steps = cfg.sim_steps();
    parallel_for(tasks.size(), worker_count(), [&](std::size_t i) {
        const Task& t = tasks[i];
        auto& cr = cands[t.cand].report;
        CellReport& cell = cr.cells[t.cell];
        const std::uint64_t seed = rep.seeds[t.run];
        SimSetup s = setup;
        s.perception.degradation_factor = cell.degradation_factor;
        s.perception.seed = seed;
        auto ctrl = cands[t.cand].controller->clone();
        try {
            SimLog log = simulate(s, *ctrl, steps, seed);
            std::optional<double> gamma;
            if (cr.guarantee) gamma = cr.guarantee->gamma;
            cell.runs[t.run] = RunResult{seed, metrics(log, gamma)};
            if (t.run == 0) cell.first_log = std::move(log);
        } catch (const SimulationAborted& e) {
            aborted[i] = e.what();
        }
    });

    for (std::size_t i = 0; i < tasks.size(); ++i) {
        auto& cr = cands[tasks[i].cand].report;
        if (!aborted[i].empty() && cr.status == "ok") {
            cr.status = "aborted";
            cr.message = aborted[i];
        }
    }
    for (auto& cand : cands) {
        auto& cr = cand.report;
        if (cr.status == "aborted") cr.cells.clear();
        for (auto& cell : cr.cells) {
            double sum_e = 0.0, sum_rmse = 0.0;
            for (const auto& r : cell.runs) {
                sum_e += r.metrics.max_e;
                sum_rmse += r.metrics.rmse_position;
                cell.all_bounds_satisfied = cell.all_bounds_satisfied && r.metrics.bound_satisfied;
            }
            const auto n = static_cast<double>(cell.runs.size());
            cell.mean_max_e = sum_e / n;
            cell.mean_rmse = sum_rmse / n;
        }
        rep.controllers.push_back(std::move(cr));
    }
    return rep;
}

std::vector<Artifact> experiment_artifacts(const ExperimentReport& rep, double tc) {
    using nlohmann::json;
    std::vector<Artifact> out;

    json controllers = json::array();
    for (const auto& c : rep.controllers) {
        json cells = json::array();
        for (const auto& cell : c.cells) {
            json runs = json::array();
            for (const auto& r : cell.runs) {
                json m = io::to_json(r.metrics);
                m["seed"] = r.seed;
                runs.push_back(std::move(m));
            }
            cells.push_back(json{{"condition", std::string(to_string(cell.condition))},
                                 {"degradation_factor", cell.degradation_factor},
                                 {"mean_max_e", cell.mean_max_e},
                                 {"mean_rmse_position", cell.mean_rmse},
                                 {"all_bounds_satisfied", cell.all_bounds_satisfied},
                                 {"runs", std::move(runs)}});
        }
        json entry{{"name", c.name}, {"status", c.status}, {"message", c.message}, {"cells", std::move(cells)}};
        entry["guarantee"] = c.guarantee ? io::to_json(*c.guarantee) : json(nullptr);
        entry["diagnostic"] = c.diagnostic ? io::to_json(*c.diagnostic) : json(nullptr);
        controllers.push_back(std::move(entry));
    }
    json em = io::to_json(rep.error_model);
    em.erase("training_states");
    const json summary{{"error_model", em}, {"seeds", rep.seeds}, {"controllers", std::move(controllers)}};
    out.push_back({"summary.json", summary.dump(2) + "\n"});

    std::ostringstream runs;
    runs << "controller,condition,seed,rmse_position,max_e,mean_e,gamma,bound_satisfied\n";
    for (const auto& c : rep.controllers) {
        for (const auto& cell : c.cells) {
            for (const auto& r : cell.runs) {
                const auto& m = r.metrics;
                runs << c.name << ',' << to_string(cell.condition) << ',' << r.seed << ','
                     << io::format_double(m.rmse_position) << ',' << io::format_double(m.max_e) << ','
                     << io::format_double(m.mean_e) << ',' << (m.gamma ? io::format_double(*m.gamma) : "") << ','
                     << (m.bound_satisfied ? 1 : 0) << '\n';
            }
        }
    }
    out.push_back({"runs.csv", runs.str()});

    for (const Condition cond : {Condition::Nominal, Condition::Degraded}) {
        std::vector<std::pair<const ControllerReport*, const CellReport*>> cols;
        for (const auto& c : rep.controllers) {
            for (const auto& cell : c.cells) {
                if (cell.condition == cond && cell.first_log.size() > 0) cols.emplace_back(&c, &cell);
            }
        }
        if (cols.empty()) continue;
        const SimLog& ref = cols.front().second->first_log;
        const std::string suffix = "_" + std::string(to_string(cond)) + ".csv";

        io::CsvTable tracking;
        tracking.header = {"t", "xr0", "xr1", "xr2"};
        io::CsvTable errors;
        errors.header = {"t"};
        std::vector<std::vector<double>> smoothed;
        for (const auto& [c, cell] : cols) {
            for (int i = 0; i < 3; ++i) tracking.header.push_back(c->name + "_x" + std::to_string(i));
            errors.header.push_back(c->name + "_enorm");
            if (c->guarantee && c->guarantee->gamma) errors.header.push_back(c->name + "_gamma");
            smoothed.push_back(smooth(cell->first_log.e_norm, rep.dt, std::max(tc, rep.dt)));
        }
        for (std::size_t k = 0; k < ref.size(); ++k) {
            const auto col = static_cast<Eigen::Index>(k);
            std::vector<double> trow{ref.times[k], ref.x_ref(0, col), ref.x_ref(1, col), ref.x_ref(2, col)};
            std::vector<double> erow{ref.times[k]};
            for (std::size_t j = 0; j < cols.size(); ++j) {
                const SimLog& log = cols[j].second->first_log;
                for (Eigen::Index i = 0; i < 3; ++i) trow.push_back(log.x(i, col));
                erow.push_back(smoothed[j][k]);
                const auto& g = cols[j].first->guarantee;
                if (g && g->gamma) erow.push_back(*g->gamma);
            }
            tracking.rows.push_back(std::move(trow));
            errors.rows.push_back(std::move(erow));
        }
        out.push_back({"tracking" + suffix, io::format_csv(tracking)});
        out.push_back({"error_norm" + suffix, io::format_csv(errors)});
    }
    return out;
}

}  // namespace sls
