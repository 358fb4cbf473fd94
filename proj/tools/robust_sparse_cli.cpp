// robust-sparse: generate datasets, run one estimator, run sweeps, run the acceptance suite.
#include "robust_sparse/acceptance.hpp"
#include "robust_sparse/bench.hpp"
#include "robust_sparse/contamination.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kRuntime = 2, kAcceptance = 3 };

struct Flags {
  std::string task = "mean", adversary = "none", estimator = "paper", out, config;
  int d = 100, k = 5;
  int64_t n = 0;
  double eps = 0.05, rho = 1.0, sigma = 1.0;
  std::optional<double> delta;
  uint64_t seed = 0;
};

void add_data_flags(CLI::App* c, Flags& f) {
  c->add_option("--task", f.task, "mean | pca | regression")->capture_default_str();
  c->add_option("--d", f.d, "dimension")->capture_default_str();
  c->add_option("--k", f.k, "sparsity")->capture_default_str();
  c->add_option("--n", f.n, "rows (0: 40 k^2 ln d / eps^2)")->capture_default_str();
  c->add_option("--eps", f.eps, "contamination fraction")->capture_default_str();
  c->add_option("--rho", f.rho, "spike strength (pca)")->capture_default_str();
  c->add_option("--sigma", f.sigma, "noise level (regression)")->capture_default_str();
  c->add_option("--adversary", f.adversary, "none | sparse_shift | dense_cluster | evasive_tail | fake_spike | flipped_response")
      ->capture_default_str();
  c->add_option("--delta", f.delta, "adversary shift magnitude");
  c->add_option("--seed", f.seed, "RNG seed")->capture_default_str();
}

// --config accepts inline JSON or a path to a JSON file
json read_config(const std::string& arg) {
  if (arg.empty()) return json::object();
  std::string text = arg;
  if (arg.front() != '{') {
    std::ifstream in(arg);
    if (!in) throw rs::UsageError("cannot open config file " + arg);
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw rs::UsageError(std::string("config is not valid JSON: ") + e.what());
  }
}

rs::RunSpec run_spec(const Flags& f) {
  json j{{"task", f.task}, {"d", f.d},     {"k", f.k},         {"n", f.n},
         {"eps", f.eps},   {"rho", f.rho}, {"sigma", f.sigma}, {"adversary", f.adversary},
         {"seed", f.seed}, {"estimator", f.estimator}};
  if (f.delta) j["delta"] = *f.delta;
  j["config"] = read_config(f.config);
  if (f.d < 1 || f.k < 1 || f.k > f.d) throw rs::UsageError("need 1 <= k <= d");
  if (f.eps < 0 || f.eps >= 0.5) throw rs::UsageError("--eps must lie in [0, 0.5)");
  return rs::RunSpec::from_json(j);
}

int cmd_generate(const Flags& f) {
  if (f.out.empty()) throw rs::UsageError("generate needs --out <file.csv>");
  auto spec = run_spec(f);
  auto ds = rs::make_dataset(spec);
  rs::write_dataset(ds, f.out);
  std::cout << json{{"path", f.out}, {"rows", ds.n()}, {"d", ds.d()}, {"outliers", ds.outliers},
                    {"spec", spec.to_json()}}
                   .dump()
            << "\n";
  return kOk;
}

int cmd_run(const Flags& f, const std::string& dataset, bool task_given) {
  auto spec = run_spec(f);
  rs::Dataset ds;
  if (!dataset.empty()) {
    ds = rs::load_dataset(dataset);
    if (!task_given) spec.task = ds.task;
    spec.d = ds.d();
    spec.n = ds.n();
  } else {
    ds = rs::make_dataset(spec);
  }
  json row = rs::run_estimator(ds, spec);
  if (!dataset.empty()) row["dataset"] = dataset;
  std::cout << row.dump() << "\n";
  if (!f.out.empty()) {
    std::ofstream o(f.out, std::ios::app);
    if (!o) throw std::runtime_error("cannot append to " + f.out);
    o << row.dump() << "\n";
  }
  return kOk;
}

int cmd_sweep(const std::string& path, const std::string& out) {
  if (path.empty()) throw rs::UsageError("sweep needs an experiment spec (positional or --config)");
  auto spec = rs::ExperimentSpec::from_json(read_config(path));
  if (!out.empty()) spec.output = out;
  auto r = rs::run_sweep(spec);
  json j{{"report", r.report_jsonl}, {"summary", r.summary_csv}, {"plot_script", r.plot_script},
         {"plot_data", r.plot_data}, {"loglog_slope", r.slope}, {"failed_runs", r.failed_runs}};
  std::cout << j.dump(2) << "\n";
  return r.failed_runs ? kRuntime : kOk;
}

int cmd_selftest(bool full, const std::vector<int>& only) {
  auto ids = !only.empty() ? only : full ? rs::all_criteria() : rs::default_criteria();
  bool ok = true;
  for (int id : ids) {
    if (id < 1 || id > 9) throw rs::UsageError("no acceptance criterion " + std::to_string(id));
    auto r = rs::run_criterion(id);
    std::cout << rs::format_result(r) << std::endl;
    ok = ok && r.passed();
  }
  return ok ? kOk : kAcceptance;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust sparse estimation under contamination"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset (CSV plus labels and truth)");
  add_data_flags(gen, f);
  gen->add_option("--out", f.out, "output CSV path");

  std::string dataset;
  auto* run = app.add_subcommand("run", "run one estimator on a dataset file or on freshly generated data");
  run->add_option("dataset", dataset, "CSV written by generate");
  add_data_flags(run, f);
  run->add_option("--estimator", f.estimator, "paper or a baseline")->capture_default_str();
  run->add_option("--config", f.config, "estimator overrides: inline JSON or a file");
  run->add_option("--out", f.out, "append the report row to this JSONL file");

  std::string spec_pos, spec_flag, sweep_out;
  auto* sweep = app.add_subcommand("sweep", "grid x repeats x estimators from a JSON experiment spec");
  sweep->add_option("spec", spec_pos, "experiment spec file");
  sweep->add_option("--config", spec_flag, "experiment spec file or inline JSON");
  sweep->add_option("--out", sweep_out, "output directory (overrides \"output\" in the experiment file)");

  bool full = false;
  std::vector<int> only;
  auto* self = app.add_subcommand("selftest", "acceptance criteria 1-4, 8, 9 (all nine with --full)");
  self->add_flag("--full", full, "also run the long end-to-end criteria 5-7");
  self->add_option("--criterion", only, "run only these criteria");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_generate(f);
    if (*run) return cmd_run(f, dataset, run->count("--task") > 0);
    if (*sweep) return cmd_sweep(spec_flag.empty() ? spec_pos : spec_flag, sweep_out);
    return cmd_selftest(full, only);
  } catch (const rs::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
