#include <filesystem>
#include <random>
#include <unistd.h>

#include "doctest.h"
#include "sls_robust/config.hpp"
#include "sls_robust/errors.hpp"
#include "sls_robust/io.hpp"

using namespace sls;
using io::json;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
    std::normal_distribution<double> g;
    return MatrixXd::NullaryExpr(r, c, [&] { return g(rng) * 1e3 / 7.0; });
}

FirOperator random_fir(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, int T) {
    std::vector<MatrixXd> taps;
    for (int t = 0; t < T; ++t) taps.push_back(random_matrix(rng, r, c));
    return FirOperator(taps);
}

std::filesystem::path scratch_dir() {
    auto dir = std::filesystem::temp_directory_path() / ("sls_io_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("doubles format to round-trip text") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0, 123456789.0}) {
        CHECK(std::stod(io::format_double(v)) == v);
    }
    CHECK(io::format_double(0.5) == "0.5");
}

TEST_CASE("matrix and system round-trips through text") {
    std::mt19937_64 rng(1);
    const MatrixXd m = random_matrix(rng, 3, 4);
    CHECK(io::matrix_from_json(json::parse(io::to_json(m).dump()), "m") == m);
    const VectorXd v = random_matrix(rng, 5, 1);
    CHECK(io::vector_from_json(json::parse(io::to_json(v).dump()), "v") == v);
    CHECK_THROWS_AS(io::matrix_from_json(json::parse("[[1,2],[3]]"), "m"), ParseError);
    CHECK_THROWS_AS(io::matrix_from_json(json::parse("[[1,\"a\"]]"), "m"), ParseError);

    const auto sys = discretize(quadrotor_hover_model({}), 0.1);
    const auto back = io::system_from_json(json::parse(io::to_json(sys).dump()));
    CHECK(back.A == sys.A);
    CHECK(back.B == sys.B);
    CHECK(back.C == sys.C);
    CHECK(back.H == sys.H);
    CHECK(back.dt == sys.dt);

    const auto minimal = io::system_from_json(json::parse(R"({"A":[[0]],"B":[[1]],"C":[[1]]})"));
    CHECK(minimal.H == MatrixXd::Identity(1, 1));
}

TEST_CASE("response, controller and report round-trips") {
    std::mt19937_64 rng(2);
    SystemResponses r;
    r.phi_xw = random_fir(rng, 3, 3, 4);
    r.phi_xe = random_fir(rng, 3, 2, 4);
    r.phi_uw = random_fir(rng, 1, 3, 4);
    r.phi_ue = random_fir(rng, 1, 2, 4);
    const auto rb = io::responses_from_json(json::parse(io::to_json(r).dump()));
    CHECK(rb.phi_xw.stacked() == r.phi_xw.stacked());
    CHECK(rb.phi_xe.stacked() == r.phi_xe.stacked());
    CHECK(rb.phi_uw.stacked() == r.phi_uw.stacked());
    CHECK(rb.phi_ue.stacked() == r.phi_ue.stacked());

    FirController k;
    k.gain = random_fir(rng, 2, 3, 5);
    k.truncation_tail = 0.125;
    const auto kb = io::controller_from_json(json::parse(io::to_json(k).dump()));
    CHECK(kb.gain.stacked() == k.gain.stacked());
    CHECK(kb.truncation_tail == 0.125);

    ErrorModel em;
    em.epsilon_e = 0.0812;
    em.s_hat = 0.37;
    em.s_hat_max = 1.1;
    em.radius_r = 2.0;
    em.quantile_slope = 0.9;
    em.pair_count = 17;
    em.training_states = random_matrix(rng, 6, 5);
    const auto eb = io::error_model_from_json(json::parse(io::to_json(em).dump()));
    CHECK(eb.epsilon_e == em.epsilon_e);
    CHECK(eb.s_hat == em.s_hat);
    CHECK(eb.s_hat_max == em.s_hat_max);
    CHECK(eb.quantile_slope == em.quantile_slope);
    CHECK(eb.pair_count == em.pair_count);
    CHECK(eb.training_states == em.training_states);

    GuaranteeReport g;
    g.phi_xe_norm = 1.7;
    g.s_used = 0.2;
    g.r0 = 0.08;
    g.gamma = 0.08 / (1.0 - 0.34);
    g.robustness_enabled = true;
    const auto gb = io::guarantee_from_json(json::parse(io::to_json(g).dump()));
    CHECK(gb.gamma == g.gamma);
    CHECK(gb.phi_xe_norm == g.phi_xe_norm);
    g.gamma.reset();
    g.guarantee_void = true;
    const json void_json = io::to_json(g);
    CHECK(void_json.at("gamma").is_null());
    CHECK_FALSE(io::guarantee_from_json(void_json).gamma.has_value());

    MetricsSummary ms{0.1, 0.2, 0.05, 0.3, true};
    const auto mb = io::metrics_from_json(json::parse(io::to_json(ms).dump()));
    CHECK(mb.rmse_position == ms.rmse_position);
    CHECK(mb.gamma == ms.gamma);
}

TEST_CASE("linear program dump round-trips") {
    lp::LinearProgram prog;
    prog.c = VectorXd{{1.0, -2.0}};
    prog.lower = VectorXd{{0.0, -std::numeric_limits<double>::infinity()}};
    prog.upper = VectorXd{{std::numeric_limits<double>::infinity(), 3.0}};
    prog.a_in = lp::SparseRowMatrix(1, 2);
    prog.a_in.insert(0, 1) = 2.0;
    prog.a_in.makeCompressed();
    prog.b_in = VectorXd{{4.0}};
    prog.a_eq = lp::SparseRowMatrix(0, 2);
    prog.b_eq = VectorXd(0);
    const json j = io::to_json(prog);
    CHECK(j.at("lower")[1].is_null());
    const auto back = io::program_from_json(json::parse(j.dump()));
    CHECK(back.c == prog.c);
    CHECK(back.lower(1) == -std::numeric_limits<double>::infinity());
    CHECK(back.upper(0) == std::numeric_limits<double>::infinity());
    CHECK(MatrixXd(back.a_in) == MatrixXd(prog.a_in));
    CHECK(back.b_in == prog.b_in);
}

TEST_CASE("csv parsing and errors") {
    const auto t = io::parse_csv("a,b\n1,2\n3.5,-4e-3\n");
    CHECK(t.header == std::vector<std::string>{"a", "b"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[1][1] == -4e-3);
    CHECK(io::parse_csv(io::format_csv(t)).rows == t.rows);

    auto line_of = [](const std::string& text) -> std::size_t {
        try {
            io::parse_csv(text);
        } catch (const ParseError& e) {
            return e.line;
        }
        return 0;
    };
    CHECK(line_of("a,b\n1,2\n3\n") == 3);
    CHECK(line_of("a,b\n1,2\n3,x\n") == 3);
    CHECK(line_of("a,b\n1,nan\n") == 2);
    CHECK(line_of("a,b\n1,inf\n") == 2);
    CHECK_THROWS_AS(io::parse_csv(""), ParseError);
}

TEST_CASE("dataset and simulation log csv round-trips") {
    std::mt19937_64 rng(3);
    TrajectoryDataset d;
    d.times = {0.0, 0.1, 0.2};
    d.states = random_matrix(rng, 6, 3);
    d.measurements = random_matrix(rng, 6, 3);
    const auto db = io::parse_dataset_csv(io::dataset_csv(d));
    CHECK(db.times == d.times);
    CHECK(db.states == d.states);
    CHECK(db.measurements == d.measurements);
    CHECK_THROWS_AS(io::parse_dataset_csv("t,q0\n0,1\n"), ParseError);

    SimLog log;
    log.times = {0.0, 0.1};
    log.x = random_matrix(rng, 6, 2);
    log.x_ref = random_matrix(rng, 6, 2);
    log.y = random_matrix(rng, 6, 2);
    log.u = random_matrix(rng, 3, 2);
    log.e = log.y - log.x;
    log.e_norm = {log.e.col(0).cwiseAbs().maxCoeff(), log.e.col(1).cwiseAbs().maxCoeff()};
    const SimLog lb = io::parse_simlog_csv(io::simlog_csv(log));
    CHECK(lb.x == log.x);
    CHECK(lb.x_ref == log.x_ref);
    CHECK(lb.u == log.u);
    CHECK(lb.e == log.e);
    CHECK(lb.e_norm == log.e_norm);
}

TEST_CASE("files") {
    const auto dir = scratch_dir();
    const json j{{"k", 1.5}};
    io::write_json(dir / "nested" / "a.json", j);
    CHECK(io::read_json(dir / "nested" / "a.json") == j);
    CHECK_THROWS_AS(io::read_json(dir / "missing.json"), io::IoError);
    io::write_text(dir / "bad.json", "{not json");
    CHECK_THROWS(io::read_json(dir / "bad.json"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("config defaults, overrides and schema") {
    const ExperimentConfig def = default_config();
    CHECK(def.horizon == 20);
    CHECK(def.eps_w == 0.05);
    CHECK(def.margin == 1e-3);
    CHECK(def.error_model.radius == 2.0);
    CHECK(def.sim_steps() == 300);
    CHECK_FALSE(def.seed.has_value());
    CHECK_THROWS_AS(def.require_seed(), ConfigError);

    const auto cfg = config_from_json(json::parse(
        R"({"seed": 9, "horizon": 12, "robustness": {"eps_w": 0.02, "enabled": false},
            "perception": {"noise_amplitude": 0.03}, "runs": {"count": 3}})"));
    CHECK(cfg.require_seed() == 9);
    CHECK(cfg.horizon == 12);
    CHECK(cfg.eps_w == 0.02);
    CHECK_FALSE(cfg.robustness_enabled);
    CHECK(cfg.perception.noise_amplitude == 0.03);
    CHECK(cfg.runs == 3);
    CHECK(cfg.dt == def.dt);

    const auto round = config_from_json(json::parse(to_json(cfg).dump()));
    CHECK(config_hash(round) == config_hash(cfg));
    CHECK(config_hash(cfg) != config_hash(def));
    CHECK(config_hash(cfg).size() == 16);

    auto key_of = [](const char* text) -> std::string {
        try {
            config_from_json(json::parse(text)).validate();
        } catch (const ConfigError& e) {
            return e.path;
        }
        return "";
    };
    CHECK(key_of(R"({"horizn": 3})").find("horizn") != std::string::npos);
    CHECK(key_of(R"({"robustness": {"epsw": 3}})").find("epsw") != std::string::npos);
    CHECK_FALSE(key_of(R"({"horizon": "x"})").empty());
    CHECK_FALSE(key_of(R"({"robustness": {"margin": 0}})").empty());

    const auto custom = config_from_json(json::parse(R"({"system": {"A": [[0]], "B": [[1]], "C": [[1]]}})"));
    CHECK_FALSE(custom.quadrotor());
    CHECK(custom.system().A(0, 0) == 0.0);
}

TEST_CASE("manifest") {
    RunManifest m;
    m.command = "synthesize";
    m.add("a.json");
    m.add("b.csv");
    m.add("a.json");
    const json j = m.to_json();
    CHECK(j.at("files").size() == 2);
    CHECK(j.at("command") == "synthesize");
    CHECK(utc_timestamp().back() == 'Z');
}
