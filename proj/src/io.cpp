#include "sls_robust/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "sls_robust/errors.hpp"

namespace sls::io {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

const json& field(const json& j, const char* key, const std::string& what) {
    if (!j.is_object()) throw ParseError(what + ": expected an object");
    const auto it = j.find(key);
    if (it == j.end()) throw ParseError(what + ": missing field '" + key + "'");
    return *it;
}

double number(const json& j, const std::string& what) {
    if (!j.is_number()) throw ParseError(what + ": expected a number");
    return j.get<double>();
}

double number_field(const json& j, const char* key, const std::string& what) {
    return number(field(j, key, what), what + "." + key);
}

std::optional<double> optional_number(const json& j, const char* key, const std::string& what) {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return number(*it, what + "." + key);
}

bool bool_field(const json& j, const char* key, const std::string& what) {
    const json& v = field(j, key, what);
    if (!v.is_boolean()) throw ParseError(what + "." + key + ": expected a boolean");
    return v.get<bool>();
}

json bound_to_json(const VectorXd& v) {
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) {
        if (std::isfinite(v[i])) {
            out.push_back(v[i]);
        } else {
            out.push_back(nullptr);
        }
    }
    return out;
}

VectorXd bound_from_json(const json& j, double missing, const std::string& what) {
    if (!j.is_array()) throw ParseError(what + ": expected an array");
    VectorXd v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        v[static_cast<Index>(i)] = j[i].is_null() ? missing : number(j[i], what);
    }
    return v;
}

json sparse_to_json(const lp::SparseRowMatrix& a) {
    json entries = json::array();
    for (Index r = 0; r < a.outerSize(); ++r) {
        for (lp::SparseRowMatrix::InnerIterator it(a, r); it; ++it) {
            entries.push_back(json::array({it.row(), it.col(), it.value()}));
        }
    }
    return json{{"rows", a.rows()}, {"cols", a.cols()}, {"entries", std::move(entries)}};
}

lp::SparseRowMatrix sparse_from_json(const json& j, const std::string& what) {
    const auto rows = field(j, "rows", what).get<Index>();
    const auto cols = field(j, "cols", what).get<Index>();
    std::vector<Eigen::Triplet<double>> trips;
    for (const auto& e : field(j, "entries", what)) {
        if (!e.is_array() || e.size() != 3) throw ParseError(what + ": entries must be [row, col, value]");
        const auto r = e[0].get<Index>();
        const auto c = e[1].get<Index>();
        if (r < 0 || r >= rows || c < 0 || c >= cols) throw ParseError(what + ": entry index out of range");
        trips.emplace_back(r, c, number(e[2], what));
    }
    lp::SparseRowMatrix a(rows, cols);
    a.setFromTriplets(trips.begin(), trips.end());
    return a;
}

std::string column_name(const char* prefix, Index i) { return prefix + std::to_string(i); }

void expect_columns(const CsvTable& table, const std::vector<std::string>& names) {
    if (table.header != names) {
        std::string want;
        for (const auto& n : names) want += (want.empty() ? "" : ",") + n;
        throw ParseError("unexpected CSV header, want: " + want, 1);
    }
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

json to_json(const MatrixXd& m) {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        rows.push_back(std::move(row));
    }
    return rows;
}

json to_json(const VectorXd& v) {
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

MatrixXd matrix_from_json(const json& j, const std::string& what) {
    if (!j.is_array()) throw ParseError(what + ": expected an array of rows");
    const auto rows = static_cast<Index>(j.size());
    if (rows == 0) return MatrixXd(0, 0);
    if (!j[0].is_array()) throw ParseError(what + ": expected an array of rows");
    const auto cols = static_cast<Index>(j[0].size());
    MatrixXd m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const json& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
            throw ParseError(what + ": ragged matrix at row " + std::to_string(i));
        }
        for (Index k = 0; k < cols; ++k) m(i, k) = number(row[static_cast<std::size_t>(k)], what);
    }
    return m;
}

VectorXd vector_from_json(const json& j, const std::string& what) {
    if (!j.is_array()) throw ParseError(what + ": expected an array");
    VectorXd v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Index>(i)] = number(j[i], what);
    return v;
}

json to_json(const DiscreteLtiSystem& sys) {
    return json{{"A", to_json(sys.A)}, {"B", to_json(sys.B)}, {"C", to_json(sys.C)},
                {"H", to_json(sys.H)}, {"dt", sys.dt}};
}

DiscreteLtiSystem system_from_json(const json& j) {
    const std::string what = "system";
    DiscreteLtiSystem sys;
    sys.A = matrix_from_json(field(j, "A", what), "system.A");
    sys.B = matrix_from_json(field(j, "B", what), "system.B");
    sys.C = matrix_from_json(field(j, "C", what), "system.C");
    sys.H = j.contains("H") ? matrix_from_json(j["H"], "system.H") : MatrixXd::Identity(sys.A.rows(), sys.A.rows());
    sys.dt = j.contains("dt") ? number(j["dt"], "system.dt") : 1.0;
    try {
        sys.validate();
    } catch (const std::exception& e) {
        throw ParseError(std::string("system: ") + e.what());
    }
    return sys;
}

json to_json(const FirOperator& op) {
    json taps = json::array();
    for (const auto& t : op.taps()) taps.push_back(to_json(t));
    return json{{"rows", op.rows()}, {"cols", op.cols()}, {"taps", std::move(taps)}};
}

FirOperator fir_from_json(const json& j, const std::string& what) {
    const auto rows = field(j, "rows", what).get<Index>();
    const auto cols = field(j, "cols", what).get<Index>();
    const json& taps = field(j, "taps", what);
    if (!taps.is_array() || taps.empty()) throw ParseError(what + ": taps must be a non-empty array");
    std::vector<MatrixXd> out;
    for (std::size_t t = 0; t < taps.size(); ++t) {
        const std::string name = what + ".taps[" + std::to_string(t) + "]";
        MatrixXd m = matrix_from_json(taps[t], name);
        if (m.size() == 0 && rows * cols == 0) m.resize(rows, cols);
        if (m.rows() != rows || m.cols() != cols) throw ParseError(name + ": shape does not match rows/cols");
        out.push_back(std::move(m));
    }
    return FirOperator(std::move(out));
}

json to_json(const SystemResponses& resp) {
    return json{{"horizon", resp.horizon()},
                {"phi_xw", to_json(resp.phi_xw)},
                {"phi_xe", to_json(resp.phi_xe)},
                {"phi_uw", to_json(resp.phi_uw)},
                {"phi_ue", to_json(resp.phi_ue)}};
}

SystemResponses responses_from_json(const json& j) {
    const std::string what = "responses";
    SystemResponses r;
    r.phi_xw = fir_from_json(field(j, "phi_xw", what), "phi_xw");
    r.phi_xe = fir_from_json(field(j, "phi_xe", what), "phi_xe");
    r.phi_uw = fir_from_json(field(j, "phi_uw", what), "phi_uw");
    r.phi_ue = fir_from_json(field(j, "phi_ue", what), "phi_ue");
    try {
        r.check_shapes(r.phi_xw.rows(), r.phi_uw.rows(), r.phi_xe.cols());
    } catch (const std::exception& e) {
        throw ParseError(std::string("responses: ") + e.what());
    }
    return r;
}

json to_json(const FirController& ctrl) {
    return json{{"gain", to_json(ctrl.gain)}, {"truncation_tail", ctrl.truncation_tail}};
}

FirController controller_from_json(const json& j) {
    FirController c;
    c.gain = fir_from_json(field(j, "gain", "controller"), "controller.gain");
    c.truncation_tail = number_field(j, "truncation_tail", "controller");
    return c;
}

json to_json(const ErrorModel& em) {
    return json{{"epsilon_e", em.epsilon_e},
                {"s_hat", em.s_hat},
                {"s_hat_max", em.s_hat_max},
                {"radius_r", em.radius_r},
                {"quantile_eps", em.quantile_eps},
                {"quantile_slope", em.quantile_slope},
                {"pair_count", em.pair_count},
                {"training_states", to_json(em.training_states)}};
}

ErrorModel error_model_from_json(const json& j) {
    const std::string what = "error_model";
    ErrorModel em;
    em.epsilon_e = number_field(j, "epsilon_e", what);
    em.s_hat = number_field(j, "s_hat", what);
    em.s_hat_max = j.contains("s_hat_max") ? number(j["s_hat_max"], what) : em.s_hat;
    em.radius_r = number_field(j, "radius_r", what);
    em.quantile_eps = j.contains("quantile_eps") ? number(j["quantile_eps"], what) : 1.0;
    em.quantile_slope = j.contains("quantile_slope") ? number(j["quantile_slope"], what) : 1.0;
    em.pair_count = j.contains("pair_count") ? j["pair_count"].get<std::size_t>() : 0;
    if (j.contains("training_states")) em.training_states = matrix_from_json(j["training_states"], what);
    try {
        em.validate();
    } catch (const std::exception& e) {
        throw ParseError(std::string("error_model: ") + e.what());
    }
    return em;
}

json to_json(const GuaranteeReport& r) {
    return json{{"phi_xe_norm", r.phi_xe_norm},
                {"phi_xw_norm", r.phi_xw_norm},
                {"s_used", r.s_used},
                {"r0", r.r0},
                {"gamma", r.gamma ? json(*r.gamma) : json(nullptr)},
                {"guarantee_void", r.guarantee_void},
                {"robustness_enabled", r.robustness_enabled},
                {"robustness_lhs", r.robustness_lhs},
                {"robustness_rhs", r.robustness_rhs},
                {"feasibility_margin", r.feasibility_margin}};
}

GuaranteeReport guarantee_from_json(const json& j) {
    const std::string what = "guarantee";
    GuaranteeReport r;
    r.phi_xe_norm = number_field(j, "phi_xe_norm", what);
    r.phi_xw_norm = number_field(j, "phi_xw_norm", what);
    r.s_used = number_field(j, "s_used", what);
    r.r0 = number_field(j, "r0", what);
    r.gamma = optional_number(j, "gamma", what);
    r.guarantee_void = bool_field(j, "guarantee_void", what);
    r.robustness_enabled = bool_field(j, "robustness_enabled", what);
    r.robustness_lhs = number_field(j, "robustness_lhs", what);
    r.robustness_rhs = number_field(j, "robustness_rhs", what);
    r.feasibility_margin = number_field(j, "feasibility_margin", what);
    return r;
}

json to_json(const MetricsSummary& m) {
    return json{{"rmse_position", m.rmse_position},
                {"max_e", m.max_e},
                {"mean_e", m.mean_e},
                {"gamma", m.gamma ? json(*m.gamma) : json(nullptr)},
                {"bound_satisfied", m.bound_satisfied}};
}

MetricsSummary metrics_from_json(const json& j) {
    const std::string what = "metrics";
    MetricsSummary m;
    m.rmse_position = number_field(j, "rmse_position", what);
    m.max_e = number_field(j, "max_e", what);
    m.mean_e = number_field(j, "mean_e", what);
    m.gamma = optional_number(j, "gamma", what);
    m.bound_satisfied = bool_field(j, "bound_satisfied", what);
    return m;
}

json to_json(const InfeasibilityDiagnostic& d) {
    return json{{"rhs", d.rhs},
                {"min_lhs", d.min_lhs},
                {"s_term", d.s_term},
                {"eps_e_term", d.eps_e_term},
                {"eps_w_term", d.eps_w_term},
                {"d_max_term", d.d_max_term},
                {"margin", d.margin},
                {"binding", d.binding}};
}

json to_json(const lp::LinearProgram& prog) {
    return json{{"c", to_json(prog.c)},
                {"a_eq", sparse_to_json(prog.a_eq)},
                {"b_eq", to_json(prog.b_eq)},
                {"a_in", sparse_to_json(prog.a_in)},
                {"b_in", to_json(prog.b_in)},
                {"lower", bound_to_json(prog.lower)},
                {"upper", bound_to_json(prog.upper)}};
}

lp::LinearProgram program_from_json(const json& j) {
    const std::string what = "lp";
    constexpr double inf = std::numeric_limits<double>::infinity();
    lp::LinearProgram prog;
    prog.c = vector_from_json(field(j, "c", what), "lp.c");
    prog.a_eq = sparse_from_json(field(j, "a_eq", what), "lp.a_eq");
    prog.b_eq = vector_from_json(field(j, "b_eq", what), "lp.b_eq");
    prog.a_in = sparse_from_json(field(j, "a_in", what), "lp.a_in");
    prog.b_in = vector_from_json(field(j, "b_in", what), "lp.b_in");
    prog.lower = bound_from_json(field(j, "lower", what), -inf, "lp.lower");
    prog.upper = bound_from_json(field(j, "upper", what), inf, "lp.upper");
    try {
        prog.validate();
    } catch (const std::exception& e) {
        throw ParseError(std::string("lp: ") + e.what());
    }
    return prog;
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

CsvTable parse_csv(const std::string& text) {
    CsvTable table;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split(line);
        if (!have_header) {
            for (auto& c : cells) table.header.push_back(trim(c));
            have_header = true;
            continue;
        }
        if (cells.size() != table.header.size()) {
            throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(table.header.size()) +
                                 " fields, found " + std::to_string(cells.size()),
                             line_no);
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const std::string cell = trim(cells[i]);
            double v = 0.0;
            const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
                throw ParseError("line " + std::to_string(line_no) + ", column '" + table.header[i] +
                                     "': not a number: '" + cell + "'",
                                 line_no);
            }
            if (!std::isfinite(v)) {
                throw ParseError("line " + std::to_string(line_no) + ", column '" + table.header[i] +
                                     "': non-finite value",
                                 line_no);
            }
            row.push_back(v);
        }
        table.rows.push_back(std::move(row));
    }
    if (!have_header) throw ParseError("empty CSV", 0);
    return table;
}

std::string format_csv(const CsvTable& table) {
    std::string out;
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (i) out += ',';
        out += table.header[i];
    }
    out += '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += format_double(row[i]);
        }
        out += '\n';
    }
    return out;
}

std::string dataset_csv(const TrajectoryDataset& data) {
    data.validate();
    CsvTable t;
    t.header.push_back("t");
    for (Index i = 0; i < data.states.rows(); ++i) t.header.push_back(column_name("x", i));
    for (Index i = 0; i < data.measurements.rows(); ++i) t.header.push_back(column_name("y", i));
    for (std::size_t k = 0; k < data.size(); ++k) {
        std::vector<double> row{data.times[k]};
        const auto c = static_cast<Index>(k);
        for (Index i = 0; i < data.states.rows(); ++i) row.push_back(data.states(i, c));
        for (Index i = 0; i < data.measurements.rows(); ++i) row.push_back(data.measurements(i, c));
        t.rows.push_back(std::move(row));
    }
    return format_csv(t);
}

TrajectoryDataset parse_dataset_csv(const std::string& text) {
    const CsvTable t = parse_csv(text);
    Index n = 0, p = 0;
    for (std::size_t i = 1; i < t.header.size(); ++i) {
        if (t.header[i] == column_name("x", n) && p == 0) {
            ++n;
        } else if (t.header[i] == column_name("y", p)) {
            ++p;
        } else {
            throw ParseError("unexpected dataset column '" + t.header[i] + "'", 1);
        }
    }
    if (t.header.empty() || t.header[0] != "t" || n == 0 || p == 0) {
        throw ParseError("dataset header must be t,x0..,y0..", 1);
    }
    TrajectoryDataset d;
    const auto rows = static_cast<Index>(t.rows.size());
    d.states.resize(n, rows);
    d.measurements.resize(p, rows);
    for (Index k = 0; k < rows; ++k) {
        const auto& r = t.rows[static_cast<std::size_t>(k)];
        d.times.push_back(r[0]);
        for (Index i = 0; i < n; ++i) d.states(i, k) = r[static_cast<std::size_t>(1 + i)];
        for (Index i = 0; i < p; ++i) d.measurements(i, k) = r[static_cast<std::size_t>(1 + n + i)];
    }
    return d;
}

TrajectoryDataset read_dataset_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_dataset_csv(buf.str());
}

std::string simlog_csv(const SimLog& log) {
    log.validate();
    const Index n = log.x.rows(), p = log.y.rows(), m = log.u.rows();
    CsvTable t;
    t.header.push_back("t");
    for (Index i = 0; i < n; ++i) t.header.push_back(column_name("x", i));
    for (Index i = 0; i < n; ++i) t.header.push_back(column_name("xr", i));
    for (Index i = 0; i < p; ++i) t.header.push_back(column_name("y", i));
    for (Index i = 0; i < m; ++i) t.header.push_back(column_name("u", i));
    for (Index i = 0; i < p; ++i) t.header.push_back(column_name("e", i));
    t.header.push_back("enorm");
    for (std::size_t k = 0; k < log.size(); ++k) {
        const auto c = static_cast<Index>(k);
        std::vector<double> row{log.times[k]};
        for (Index i = 0; i < n; ++i) row.push_back(log.x(i, c));
        for (Index i = 0; i < n; ++i) row.push_back(log.x_ref(i, c));
        for (Index i = 0; i < p; ++i) row.push_back(log.y(i, c));
        for (Index i = 0; i < m; ++i) row.push_back(log.u(i, c));
        for (Index i = 0; i < p; ++i) row.push_back(log.e(i, c));
        row.push_back(log.e_norm[k]);
        t.rows.push_back(std::move(row));
    }
    return format_csv(t);
}

SimLog parse_simlog_csv(const std::string& text) {
    const CsvTable t = parse_csv(text);
    auto count = [&](const char* prefix) {
        Index c = 0;
        for (const auto& h : t.header) {
            if (h == column_name(prefix, c)) ++c;
        }
        return c;
    };
    const Index n = count("x"), p = count("y"), m = count("u");
    std::vector<std::string> names{"t"};
    for (Index i = 0; i < n; ++i) names.push_back(column_name("x", i));
    for (Index i = 0; i < n; ++i) names.push_back(column_name("xr", i));
    for (Index i = 0; i < p; ++i) names.push_back(column_name("y", i));
    for (Index i = 0; i < m; ++i) names.push_back(column_name("u", i));
    for (Index i = 0; i < p; ++i) names.push_back(column_name("e", i));
    names.push_back("enorm");
    expect_columns(t, names);

    SimLog log;
    const auto rows = static_cast<Index>(t.rows.size());
    log.x.resize(n, rows);
    log.x_ref.resize(n, rows);
    log.y.resize(p, rows);
    log.u.resize(m, rows);
    log.e.resize(p, rows);
    for (Index k = 0; k < rows; ++k) {
        const auto& r = t.rows[static_cast<std::size_t>(k)];
        std::size_t c = 0;
        log.times.push_back(r[c++]);
        for (Index i = 0; i < n; ++i) log.x(i, k) = r[c++];
        for (Index i = 0; i < n; ++i) log.x_ref(i, k) = r[c++];
        for (Index i = 0; i < p; ++i) log.y(i, k) = r[c++];
        for (Index i = 0; i < m; ++i) log.u(i, k) = r[c++];
        for (Index i = 0; i < p; ++i) log.e(i, k) = r[c++];
        log.e_norm.push_back(r[c]);
    }
    return log;
}

}  // namespace sls::io
