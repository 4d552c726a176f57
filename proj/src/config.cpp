#include "sls_robust/config.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <set>

#include "sls_robust/io.hpp"

namespace sls {

using json = nlohmann::json;
using Eigen::VectorXd;

namespace {

constexpr std::string_view kVersion = "0.1.0";

// Walks one JSON object, remembering which keys were consumed so that
// unknown keys can be reported.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_, "expected an object");
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key) && !j_[key].is_null();
    }
    std::string key_path(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
    const json& at(const char* key) { return (seen_.insert(key), j_[key]); }

    void number(const char* key, double& out) {
        if (!has(key)) return;
        const json& v = j_[key];
        if (!v.is_number()) throw ConfigError(key_path(key), "expected a number");
        out = v.get<double>();
        if (!std::isfinite(out)) throw ConfigError(key_path(key), "must be finite");
    }
    void optional_number(const char* key, std::optional<double>& out) {
        if (!has(key)) return;
        double v = 0.0;
        number(key, v);
        out = v;
    }
    void integer(const char* key, int& out) {
        if (!has(key)) return;
        const json& v = j_[key];
        if (!v.is_number_integer()) throw ConfigError(key_path(key), "expected an integer");
        out = v.get<int>();
    }
    void boolean(const char* key, bool& out) {
        if (!has(key)) return;
        const json& v = j_[key];
        if (!v.is_boolean()) throw ConfigError(key_path(key), "expected a boolean");
        out = v.get<bool>();
    }
    void string(const char* key, std::string& out) {
        if (!has(key)) return;
        const json& v = j_[key];
        if (!v.is_string()) throw ConfigError(key_path(key), "expected a string");
        out = v.get<std::string>();
    }
    void vector(const char* key, VectorXd& out) {
        if (!has(key)) return;
        try {
            out = io::vector_from_json(j_[key], key_path(key));
        } catch (const std::exception& e) {
            throw ConfigError(key_path(key), e.what());
        }
    }
    void matrix(const char* key, Eigen::MatrixXd& out) {
        if (!has(key)) return;
        try {
            out = io::matrix_from_json(j_[key], key_path(key));
        } catch (const std::exception& e) {
            throw ConfigError(key_path(key), e.what());
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError(key_path(it.key().c_str()), "unknown key");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

std::string_view source_name(ErrorModelSource s) {
    switch (s) {
        case ErrorModelSource::Training: return "training";
        case ErrorModelSource::Dataset: return "dataset";
        case ErrorModelSource::File: return "file";
        case ErrorModelSource::Explicit: return "explicit";
    }
    return "training";
}

ErrorModelSource parse_source(const std::string& s) {
    if (s == "training") return ErrorModelSource::Training;
    if (s == "dataset") return ErrorModelSource::Dataset;
    if (s == "file") return ErrorModelSource::File;
    if (s == "explicit") return ErrorModelSource::Explicit;
    throw ConfigError("error_model.source", "expected training, dataset, file or explicit");
}

void check(bool ok, const char* key, const char* msg) {
    if (!ok) throw ConfigError(key, msg);
}

}  // namespace

DiscreteLtiSystem ExperimentConfig::system() const {
    if (custom_system) return *custom_system;
    return discretize(quadrotor_hover_model(params), dt);
}

std::uint64_t ExperimentConfig::require_seed() const {
    if (!seed) throw ConfigError("seed", "required (set it in the config or pass --seed)");
    return *seed;
}

void ExperimentConfig::validate() const {
    const DiscreteLtiSystem sys = system();
    const auto n = sys.states(), m = sys.inputs(), p = sys.outputs();
    check(horizon >= 2, "horizon", "must be at least 2");
    check(eps_w >= 0.0, "robustness.eps_w", "must be non-negative");
    check(d_max >= 0.0, "robustness.d_max", "must be non-negative");
    check(margin > 0.0, "robustness.margin", "must be positive");
    check(!r0 || *r0 >= 0.0, "robustness.r0", "must be non-negative");
    check(q_diag.size() == n && (q_diag.array() >= 0.0).all(), "cost.q_diag", "needs one non-negative weight per state");
    check(r_diag.size() == m && (r_diag.array() >= 0.0).all(), "cost.r_diag", "needs one non-negative weight per input");
    check(error_model.radius > 0.0, "error_model.radius", "must be positive");
    check(error_model.quantile_eps > 0.0 && error_model.quantile_eps <= 1.0, "error_model.quantile_eps",
          "must lie in (0, 1]");
    check(error_model.quantile_slope > 0.0 && error_model.quantile_slope <= 1.0, "error_model.quantile_slope",
          "must lie in (0, 1]");
    check(error_model.s_hat >= 0.0 && error_model.epsilon_e >= 0.0, "error_model", "S and eps_e must be non-negative");
    if (error_model.source == ErrorModelSource::Dataset || error_model.source == ErrorModelSource::File) {
        check(!error_model.path.empty(), "error_model.path", "required for this source");
    }
    check(degraded_factor >= 1.0, "perception.degraded_factor", "must be at least 1");
    check(runs >= 1, "runs.count", "must be at least 1");
    check(steps >= 0, "runs.steps", "must be non-negative");
    check(solver.tol > 0.0 && solver.max_iters > 0, "solver", "tol and max_iters must be positive");
    try {
        params.validate();
        pd.validate();
        reference.validate();
    } catch (const std::exception& e) {
        throw ConfigError("system", e.what());
    }
    check(std::abs(reference.dt - sys.dt) <= 1e-12, "reference.dt", "must match the plant sampling period");
    if (quadrotor()) {
        try {
            perception.validate(n, p);
        } catch (const std::exception& e) {
            throw ConfigError("perception", e.what());
        }
    }
}

ExperimentConfig default_config() {
    ExperimentConfig cfg;
    cfg.q_diag = VectorXd::Ones(6);
    cfg.r_diag = VectorXd::Ones(3);
    auto& pm = cfg.perception;
    pm = ideal_perception(6, 6);
    pm.bias_amplitudes << 0.07, 0.07, 0.07, 0.0, 0.0, 0.0;
    pm.bias_frequencies.setConstant(3.0);
    pm.directions.setIdentity();
    for (Eigen::Index i = 0; i < 6; ++i) pm.phases[i] = 0.7 * static_cast<double>(i);
    pm.noise_amplitude = 0.01;
    pm.degradation_factor = 1.0;
    cfg.reference.dt = cfg.dt;
    return cfg;
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig cfg = default_config();
    ObjectReader root(j, "");

    if (root.has("seed")) {
        const json& s = root.at("seed");
        if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0)) {
            throw ConfigError("seed", "expected a non-negative integer");
        }
        cfg.seed = s.get<std::uint64_t>();
    }
    if (root.has("system")) {
        ObjectReader r(root.at("system"), "system");
        r.number("mass", cfg.params.mass);
        r.number("g", cfg.params.g);
        r.number("dt", cfg.dt);
        if (r.has("A")) {
            DiscreteLtiSystem sys;
            r.matrix("A", sys.A);
            r.matrix("B", sys.B);
            r.matrix("C", sys.C);
            sys.H = Eigen::MatrixXd::Identity(sys.A.rows(), sys.A.rows());
            r.matrix("H", sys.H);
            sys.dt = cfg.dt;
            try {
                sys.validate();
            } catch (const std::exception& e) {
                throw ConfigError("system", e.what());
            }
            cfg.custom_system = sys;
            cfg.q_diag = VectorXd::Ones(sys.states());
            cfg.r_diag = VectorXd::Ones(sys.inputs());
        }
        r.finish();
    }
    cfg.reference.dt = cfg.dt;
    root.integer("horizon", cfg.horizon);

    if (root.has("error_model")) {
        ObjectReader r(root.at("error_model"), "error_model");
        std::string source(source_name(cfg.error_model.source));
        r.string("source", source);
        cfg.error_model.source = parse_source(source);
        r.string("path", cfg.error_model.path);
        r.number("radius", cfg.error_model.radius);
        r.number("quantile_eps", cfg.error_model.quantile_eps);
        r.number("quantile_slope", cfg.error_model.quantile_slope);
        r.number("s_hat", cfg.error_model.s_hat);
        r.number("epsilon_e", cfg.error_model.epsilon_e);
        r.finish();
    }
    if (root.has("robustness")) {
        ObjectReader r(root.at("robustness"), "robustness");
        r.boolean("enabled", cfg.robustness_enabled);
        r.number("eps_w", cfg.eps_w);
        r.number("d_max", cfg.d_max);
        r.number("margin", cfg.margin);
        r.optional_number("r0", cfg.r0);
        r.finish();
    }
    if (root.has("cost")) {
        ObjectReader r(root.at("cost"), "cost");
        std::string kind = "quadratic";
        r.string("kind", kind);
        if (kind == "quadratic") {
            cfg.cost = CostKind::QuadraticL1;
        } else if (kind == "imitation") {
            cfg.cost = CostKind::Imitation;
        } else {
            throw ConfigError("cost.kind", "expected quadratic or imitation");
        }
        r.vector("q_diag", cfg.q_diag);
        r.vector("r_diag", cfg.r_diag);
        r.finish();
    }
    if (root.has("perception")) {
        ObjectReader r(root.at("perception"), "perception");
        auto& pm = cfg.perception;
        r.vector("bias_amplitudes", pm.bias_amplitudes);
        r.vector("bias_frequencies", pm.bias_frequencies);
        r.matrix("directions", pm.directions);
        r.vector("phases", pm.phases);
        r.number("noise_amplitude", pm.noise_amplitude);
        r.number("degradation_factor", pm.degradation_factor);
        r.number("degraded_factor", cfg.degraded_factor);
        r.finish();
    }
    if (root.has("reference")) {
        ObjectReader r(root.at("reference"), "reference");
        r.number("radius", cfg.reference.radius);
        r.number("period", cfg.reference.period);
        r.number("height", cfg.reference.height);
        r.integer("laps", cfg.reference.laps);
        r.finish();
    }
    if (root.has("pd")) {
        ObjectReader r(root.at("pd"), "pd");
        VectorXd kp = cfg.pd.kp, kd = cfg.pd.kd;
        r.vector("kp", kp);
        r.vector("kd", kd);
        if (kp.size() != 3 || kd.size() != 3) throw ConfigError("pd", "kp and kd need three entries");
        cfg.pd.kp = kp;
        cfg.pd.kd = kd;
        r.boolean("z_axis_pd", cfg.z_axis_pd);
        r.finish();
    }
    if (root.has("runs")) {
        ObjectReader r(root.at("runs"), "runs");
        r.integer("count", cfg.runs);
        r.integer("steps", cfg.steps);
        r.finish();
    }
    if (root.has("solver")) {
        ObjectReader r(root.at("solver"), "solver");
        r.number("tol", cfg.solver.tol);
        r.integer("max_iters", cfg.solver.max_iters);
        r.finish();
    }
    root.finish();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return config_from_json(io::read_json(path)); }

json to_json(const ExperimentConfig& cfg) {
    json sys{{"mass", cfg.params.mass}, {"g", cfg.params.g}, {"dt", cfg.dt}};
    if (cfg.custom_system) {
        sys["A"] = io::to_json(cfg.custom_system->A);
        sys["B"] = io::to_json(cfg.custom_system->B);
        sys["C"] = io::to_json(cfg.custom_system->C);
        sys["H"] = io::to_json(cfg.custom_system->H);
    }
    const auto& em = cfg.error_model;
    const auto& pm = cfg.perception;
    json out{
        {"system", sys},
        {"horizon", cfg.horizon},
        {"error_model",
         {{"source", std::string(source_name(em.source))},
          {"path", em.path},
          {"radius", em.radius},
          {"quantile_eps", em.quantile_eps},
          {"quantile_slope", em.quantile_slope},
          {"s_hat", em.s_hat},
          {"epsilon_e", em.epsilon_e}}},
        {"robustness",
         {{"enabled", cfg.robustness_enabled},
          {"eps_w", cfg.eps_w},
          {"d_max", cfg.d_max},
          {"margin", cfg.margin},
          {"r0", cfg.r0 ? json(*cfg.r0) : json(nullptr)}}},
        {"cost",
         {{"kind", cfg.cost == CostKind::Imitation ? "imitation" : "quadratic"},
          {"q_diag", io::to_json(cfg.q_diag)},
          {"r_diag", io::to_json(cfg.r_diag)}}},
        {"perception",
         {{"bias_amplitudes", io::to_json(pm.bias_amplitudes)},
          {"bias_frequencies", io::to_json(pm.bias_frequencies)},
          {"directions", io::to_json(pm.directions)},
          {"phases", io::to_json(pm.phases)},
          {"noise_amplitude", pm.noise_amplitude},
          {"degradation_factor", pm.degradation_factor},
          {"degraded_factor", cfg.degraded_factor}}},
        {"reference",
         {{"radius", cfg.reference.radius},
          {"period", cfg.reference.period},
          {"height", cfg.reference.height},
          {"laps", cfg.reference.laps}}},
        {"pd",
         {{"kp", io::to_json(VectorXd(cfg.pd.kp))},
          {"kd", io::to_json(VectorXd(cfg.pd.kd))},
          {"z_axis_pd", cfg.z_axis_pd}}},
        {"runs", {{"count", cfg.runs}, {"steps", cfg.steps}}},
        {"solver", {{"tol", cfg.solver.tol}, {"max_iters", cfg.solver.max_iters}}},
    };
    if (cfg.seed) out["seed"] = *cfg.seed;
    return out;
}

std::string config_hash(const ExperimentConfig& cfg) {
    const std::string text = to_json(cfg).dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void RunManifest::add(const std::string& file) {
    for (const auto& f : files) {
        if (f == file) return;
    }
    files.push_back(file);
}

json RunManifest::to_json() const {
    return json{{"command", command},         {"tool_version", tool_version}, {"config_hash", config_hash},
                {"started_utc", started_utc}, {"finished_utc", finished_utc}, {"files", files}};
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string_view tool_version() { return kVersion; }

}  // namespace sls
