#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "sls_robust/error_model.hpp"
#include "sls_robust/fir.hpp"
#include "sls_robust/lp_solver.hpp"
#include "sls_robust/lti_model.hpp"
#include "sls_robust/simulate.hpp"
#include "sls_robust/synthesis.hpp"

namespace sls::io {

using json = nlohmann::json;

// File could not be opened, read or written.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

// Matrices are nested row arrays.
json to_json(const Eigen::MatrixXd& m);
json to_json(const Eigen::VectorXd& v);
Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what);
Eigen::VectorXd vector_from_json(const json& j, const std::string& what);

json to_json(const DiscreteLtiSystem& sys);
DiscreteLtiSystem system_from_json(const json& j);

// {"rows", "cols", "taps": [tap 1, ..., tap T]}
json to_json(const FirOperator& op);
FirOperator fir_from_json(const json& j, const std::string& what);

json to_json(const SystemResponses& resp);
SystemResponses responses_from_json(const json& j);

json to_json(const FirController& ctrl);
FirController controller_from_json(const json& j);

json to_json(const ErrorModel& em);
ErrorModel error_model_from_json(const json& j);

json to_json(const GuaranteeReport& report);
GuaranteeReport guarantee_from_json(const json& j);

json to_json(const MetricsSummary& m);
MetricsSummary metrics_from_json(const json& j);

json to_json(const InfeasibilityDiagnostic& d);

// Linear program debug dump. Sparse matrices as [row, col, value] triplets,
// infinite bounds as null.
json to_json(const lp::LinearProgram& prog);
lp::LinearProgram program_from_json(const json& j);

json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

// Dataset CSV: header "t,x0..x{n-1},y0..y{p-1}".
std::string dataset_csv(const TrajectoryDataset& data);
TrajectoryDataset parse_dataset_csv(const std::string& text);
TrajectoryDataset read_dataset_csv(const std::filesystem::path& path);

// SimLog CSV: "t,x0..,xr0..,y0..,u0..,e0..,enorm".
std::string simlog_csv(const SimLog& log);
SimLog parse_simlog_csv(const std::string& text);

// Generic numeric table; throws ParseError naming the 1-based line.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};
CsvTable parse_csv(const std::string& text);
std::string format_csv(const CsvTable& table);

}  // namespace sls::io
