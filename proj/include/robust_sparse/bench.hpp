#pragma once

#include "robust_sparse/contamination.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rs {

// Bad flags, names or spec files (CLI exit code 1).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr int kReportSchema = 1;

struct RunSpec {
  Task task = Task::mean;
  int d = 100, k = 5;
  int64_t n = 0;  // 0: 40 k^2 ln(d) / eps^2 at max(eps, 0.05)
  double eps = 0.05;
  double rho = 1.0;    // pca
  double sigma = 1.0;  // regression
  Adversary adversary = Adversary::none;
  std::optional<double> delta;
  uint64_t seed = 0;
  std::string estimator = "paper";
  nlohmann::json config = nlohmann::json::object();  // estimator overrides

  int64_t rows() const;
  // epsilon handed to the estimators: the config's "epsilon", else eps, else 0.05 at eps = 0
  double estimator_epsilon() const;
  nlohmann::json to_json() const;
  static RunSpec from_json(const nlohmann::json& j);
};

std::vector<std::string> estimators_for(Task t);

Dataset make_dataset(const RunSpec& s);

// One report row: the full spec, error metrics against the dataset's truth (when known),
// iteration counts, the removed-mass ledger (when labels are known) and wall time.
nlohmann::json run_estimator(const Dataset& ds, const RunSpec& s);

struct ExperimentSpec {
  Task task = Task::mean;
  std::vector<int> d, k;
  std::vector<int64_t> n;  // empty or 0: the default sample size
  std::vector<double> eps, rho, sigma;
  ContaminationSpec adversary;
  std::vector<std::string> estimators;
  int repeats = 1;
  uint64_t seed = 0;
  std::string output = "sweep_out";
  nlohmann::json config = nlohmann::json::object();

  static ExperimentSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  std::vector<RunSpec> cells() const;  // one RunSpec per grid point, estimator "paper"
};

// Dataset seed of (cell, repeat): an independent Philox stream per cell.
uint64_t derive_seed(uint64_t seed, size_t cell, int repeat);

// Least-squares slope of log(y) against log(x); needs two distinct positive x values.
double loglog_slope(const std::vector<std::pair<double, double>>& xy);

struct SweepOutput {
  std::string report_jsonl, summary_csv, plot_script;
  std::vector<std::string> plot_data;
  std::map<std::string, double> slope;  // per estimator, when the grid has two or more eps
  int failed_runs = 0;
};

// Runs grid x repeats x estimators. A failing run is recorded as an error row and the sweep
// continues. Writes report.jsonl, summary.csv (mean and standard error per cell and
// estimator), one two-column error-vs-eps file per estimator and a plotting script stub.
SweepOutput run_sweep(const ExperimentSpec& spec);

}  // namespace rs
