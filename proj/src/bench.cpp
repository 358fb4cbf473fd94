#include "robust_sparse/bench.hpp"

#include "robust_sparse/estimators.hpp"
#include "robust_sparse/rng.hpp"
#include "robust_sparse/sparse_linalg.hpp"
#include "robust_sparse/sparse_mean.hpp"
#include "robust_sparse/sparse_pca.hpp"
#include "robust_sparse/sparse_regression.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace rs {

using nlohmann::json;

namespace {

std::vector<double> to_vector(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

template <class T>
void take(const json& j, const char* key, T& out, std::set<std::string>& seen) {
  if (!j.contains(key)) return;
  seen.insert(key);
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config key '") + key + "': " + e.what());
  }
}

template <class T>
void take_opt(const json& j, const char* key, std::optional<T>& out, std::set<std::string>& seen) {
  if (!j.contains(key)) return;
  seen.insert(key);
  if (j.at(key).is_null()) {
    out.reset();
    return;
  }
  T v{};
  take(j, key, v, seen);
  out = v;
}

void reject_unknown(const json& j, const std::set<std::string>& seen, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!seen.count(it.key())) throw UsageError("unknown " + where + " key '" + it.key() + "'");
}

void apply_mean_config(const json& j, MeanConfig& c) {
  if (!j.is_object()) throw UsageError("mean config must be a JSON object");
  std::set<std::string> seen;
  take(j, "C_stop", c.C_stop, seen);
  take_opt(j, "r", c.r_override, seen);
  take(j, "score_threshold_mult", c.score_threshold_mult, seen);
  take_opt(j, "beta", c.beta, seen);
  take_opt(j, "s", c.s, seen);
  take(j, "split_fraction", c.split_fraction, seen);
  take(j, "max_outer_iters", c.max_outer_iters, seen);
  take(j, "C_pre", c.C_pre, seen);
  take(j, "median_eig_mult", c.median_eig_mult, seen);
  take(j, "preprocess_max_rounds", c.preprocess_max_rounds, seen);
  take(j, "run_preprocess", c.run_preprocess, seen);
  take(j, "allow_large_epsilon", c.allow_large_epsilon, seen);
  take(j, "truncate_output", c.truncate_output, seen);
  take(j, "check_invariants", c.check_invariants, seen);
  reject_unknown(j, seen, "mean config");
}

// splits the top-level config into estimator keys and the nested "mean" block
MeanConfig mean_config_from(const json& cfg, std::set<std::string>& seen) {
  MeanConfig mc;
  if (cfg.contains("mean")) {
    seen.insert("mean");
    apply_mean_config(cfg.at("mean"), mc);
  }
  return mc;
}

json mean_trace_json(const MeanRunTrace& t) {
  json j;
  j["stop_reason"] = t.stop_reason;
  j["outer_iterations"] = t.iterations.size();
  j["preprocess_rounds"] = t.preprocess.rounds;
  j["preprocess_removed"] = t.preprocess.removed;
  j["preprocess_removed_outliers"] = t.preprocess.removed_outliers;
  j["pruned"] = t.pruned;
  j["pruned_holdout"] = t.pruned_holdout;
  j["H_size"] = t.H.size();
  j["dense_iterations"] = t.dense.iterations;
  j["inlier_mass_removed"] = t.inlier_mass_removed;
  j["outlier_mass_removed"] = t.outlier_mass_removed;
  j["final_mass"] = t.final_mass;
  j["warnings"] = t.warnings;
  j["invariant_violations"] = t.invariant_violations;
  return j;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string o = "\"";
  for (char c : s) o += c == '"' ? std::string("\"\"") : std::string(1, c);
  return o + "\"";
}

}  // namespace

int64_t RunSpec::rows() const {
  if (n > 0) return n;
  const double e = std::max(eps, 0.05);
  return int64_t(40.0 * k * k * std::log(double(d)) / (e * e));
}

double RunSpec::estimator_epsilon() const {
  if (config.contains("epsilon")) return config.at("epsilon").get<double>();
  return eps > 0 ? eps : 0.05;
}

json RunSpec::to_json() const {
  json j;
  j["task"] = to_string(task);
  j["d"] = d;
  j["k"] = k;
  j["n"] = rows();
  j["eps"] = eps;
  if (task == Task::pca) j["rho"] = rho;
  if (task == Task::regression) j["sigma"] = sigma;
  j["adversary"] = to_string(adversary);
  j["delta"] = delta ? json(*delta) : json(nullptr);
  j["seed"] = seed;
  j["estimator"] = estimator;
  j["config"] = config;
  return j;
}

RunSpec RunSpec::from_json(const json& j) {
  RunSpec s;
  std::set<std::string> seen;
  std::string task = "mean", adv = "none";
  take(j, "task", task, seen);
  take(j, "d", s.d, seen);
  take(j, "k", s.k, seen);
  take(j, "n", s.n, seen);
  take(j, "eps", s.eps, seen);
  take(j, "rho", s.rho, seen);
  take(j, "sigma", s.sigma, seen);
  take(j, "adversary", adv, seen);
  take_opt(j, "delta", s.delta, seen);
  take(j, "seed", s.seed, seen);
  take(j, "estimator", s.estimator, seen);
  if (j.contains("config")) {
    seen.insert("config");
    s.config = j.at("config");
  }
  reject_unknown(j, seen, "run spec");
  try {
    s.task = task_from_string(task);
    s.adversary = adversary_from_string(adv);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  return s;
}

std::vector<std::string> estimators_for(Task t) {
  switch (t) {
    case Task::mean: return {"paper", "baseline_single_direction", "empirical_mean", "coordinate_median"};
    case Task::pca: return {"paper", "empirical_pca"};
    case Task::regression: return {"paper", "ols"};
  }
  return {};
}

Dataset make_dataset(const RunSpec& s) {
  ContaminationSpec c;
  c.epsilon = s.eps;
  c.adversary = s.adversary;
  c.delta = s.delta;
  c.seed = s.seed;
  const int64_t n = s.rows();
  switch (s.task) {
    case Task::mean: return gen_mean_task(n, s.d, s.k, MeanTaskParams{}, c);
    case Task::pca: {
      PcaTaskParams p;
      p.rho = s.rho;
      return gen_pca_task(n, s.d, s.k, p, c);
    }
    case Task::regression: {
      RegressionTaskParams p;
      p.sigma = s.sigma;
      return gen_regression_task(n, s.d, s.k, p, c);
    }
  }
  throw std::logic_error("unknown task");
}

json run_estimator(const Dataset& ds, const RunSpec& s) {
  const auto names = estimators_for(s.task);
  if (std::find(names.begin(), names.end(), s.estimator) == names.end())
    throw UsageError("unknown estimator '" + s.estimator + "' for task " + to_string(s.task));
  if (ds.task != s.task)
    throw UsageError("dataset task " + to_string(ds.task) + " does not match --task " + to_string(s.task));
  if (!s.config.is_object()) throw UsageError("config must be a JSON object");

  const double eps = s.estimator_epsilon();
  const int k = s.k;
  const auto* labels = ds.labels.get();
  std::set<std::string> seen{"epsilon"};
  json row;
  row["schema"] = kReportSchema;
  row["spec"] = s.to_json();
  json trace = json::object();
  Vec est;

  const auto t0 = std::chrono::steady_clock::now();
  if (s.task == Task::mean) {
    MeanConfig mc = mean_config_from(s.config, seen);
    reject_unknown(s.config, seen, "config");
    mc.epsilon = eps;
    mc.k = k;
    if (s.estimator == "paper") {
      auto r = robust_sparse_mean(ds.x, mc, labels);
      est = r.mu_hat;
      trace = mean_trace_json(r.trace);
    } else if (s.estimator == "baseline_single_direction") {
      auto r = baseline_single_direction(ds.x, eps, k, labels);
      est = r.mu_hat;
      trace["preprocess_rounds"] = r.report.rounds;
      trace["preprocess_removed"] = r.report.removed;
      trace["preprocess_removed_outliers"] = r.report.removed_outliers;
      trace["threshold_met"] = r.report.met;
    } else if (s.estimator == "empirical_mean") {
      est = empirical_mean(*ds.x);
    } else {
      est = coordinate_median(*ds.x);
    }
  } else if (s.task == Task::pca) {
    PcaConfig pc;
    pc.mean_config = mean_config_from(s.config, seen);
    take(s.config, "alpha_exclusion", pc.alpha_exclusion, seen);
    take_opt(s.config, "ell", pc.ell, seen);
    take(s.config, "max_alpha_draws", pc.max_alpha_draws, seen);
    take(s.config, "warm_start_rows", pc.warm_start_rows, seen);
    reject_unknown(s.config, seen, "config");
    pc.epsilon = eps;
    pc.k = k;
    pc.rho = ds.truth && ds.truth->rho > 0 ? ds.truth->rho : s.rho;
    pc.seed = s.seed;
    if (s.estimator == "paper") {
      auto r = robust_sparse_pca(ds.x, pc, labels);
      est = r.v_hat;
      const auto& t = r.trace;
      trace["alpha"] = t.alpha;
      trace["alpha_center"] = t.alpha_center;
      trace["alpha_draws"] = t.alpha_draws;
      trace["y"] = t.y;
      trace["slice_rows"] = t.slice_rows;
      trace["slice_outlier_fraction"] = t.slice_outlier_fraction;
      trace["warm_start_filter_rounds"] = t.warm.filter_rounds;
      trace["warm_start_removed"] = t.warm.removed;
      trace["variance_along_vhat"] = t.variance_along_vhat;
      trace["inner"] = mean_trace_json(t.inner);
      trace["warnings"] = t.warnings;
    } else {
      est = empirical_pca(*ds.x);
    }
  } else {
    RegressionConfig rc;
    rc.mean_config = mean_config_from(s.config, seen);
    take_opt(s.config, "ell_divisor", rc.ell_divisor, seen);
    take(s.config, "alpha_exclusion", rc.alpha_exclusion, seen);
    take(s.config, "max_alpha_draws", rc.max_alpha_draws, seen);
    reject_unknown(s.config, seen, "config");
    rc.epsilon = eps;
    rc.k = k;
    rc.seed = s.seed;
    if (ds.truth && ds.truth->sigma > 0) rc.sigma = ds.truth->sigma;
    if (s.estimator == "paper") {
      auto r = robust_sparse_regression(ds.x, ds.y, rc, labels);
      est = r.beta_hat;
      const auto& t = r.trace;
      trace["sigma_y2"] = t.sigma_y2;
      trace["alpha"] = t.alpha;
      trace["alpha_center"] = t.alpha_center;
      trace["alpha_draws"] = t.alpha_draws;
      trace["ell"] = t.ell;
      trace["slice_rows"] = t.slice_rows;
      trace["slice_outlier_fraction"] = t.slice_outlier_fraction;
      trace["inner"] = mean_trace_json(t.inner);
    } else {
      est = ordinary_least_squares(*ds.x, ds.y);
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json m = json::object();
  if (ds.truth) {
    const Truth& t = *ds.truth;
    if (s.task == Task::mean) {
      m["l2"] = (est - t.mu).norm();
      m["norm_2k"] = sparse_norm_2k(est - t.mu, k);
      m["error"] = m["l2"];
    } else if (s.task == Task::pca) {
      const double c = est.dot(t.v);
      m["projector_distance"] = projector_distance(est, t.v);
      m["variance_along_estimate"] = 1 + t.rho * c * c;
      m["sigma_op"] = 1 + t.rho;
      m["error"] = m["projector_distance"];
    } else {
      m["l2"] = (est - t.beta).norm();
      m["l2_over_sigma"] = (est - t.beta).norm() / t.sigma;
      m["error"] = m["l2"];
    }
  }
  row["status"] = "ok";
  row["metrics"] = m;
  row["trace"] = trace;
  row["seconds"] = secs;
  row["outliers"] = ds.outliers;
  row["estimate"] = to_vector(est);
  return row;
}

ExperimentSpec ExperimentSpec::from_json(const json& j) {
  if (!j.is_object()) throw UsageError("experiment spec must be a JSON object");
  ExperimentSpec e;
  std::set<std::string> seen;
  std::string task = "mean";
  take(j, "task", task, seen);
  try {
    e.task = task_from_string(task);
  } catch (const std::exception& ex) {
    throw UsageError(ex.what());
  }
  if (!j.contains("grid") || !j.at("grid").is_object()) throw UsageError("experiment spec needs a \"grid\" object");
  seen.insert("grid");
  const json& g = j.at("grid");
  std::set<std::string> gs;
  take(g, "d", e.d, gs);
  take(g, "k", e.k, gs);
  take(g, "n", e.n, gs);
  take(g, "eps", e.eps, gs);
  take(g, "rho", e.rho, gs);
  take(g, "sigma", e.sigma, gs);
  reject_unknown(g, gs, "grid");
  for (const char* key : {"d", "k", "n", "eps", "rho", "sigma"})
    if (g.contains(key) && g.at(key).empty()) throw UsageError(std::string("grid list '") + key + "' is empty");
  if (e.eps.empty()) throw UsageError("grid needs a nonempty \"eps\" list");
  if (e.d.empty()) e.d = {100};
  if (e.k.empty()) e.k = {5};
  if (e.n.empty()) e.n = {0};
  if (e.rho.empty()) e.rho = {1.0};
  if (e.sigma.empty()) e.sigma = {1.0};

  if (j.contains("adversary")) {
    seen.insert("adversary");
    const json& a = j.at("adversary");
    std::set<std::string> as;
    std::string kind = "none";
    take(a, "kind", kind, as);
    take_opt(a, "delta", e.adversary.delta, as);
    take(a, "support_size", e.adversary.support_size, as);
    take(a, "clusters", e.adversary.clusters, as);
    take_opt(a, "spike_scale", e.adversary.spike_scale, as);
    reject_unknown(a, as, "adversary");
    try {
      e.adversary.adversary = adversary_from_string(kind);
    } catch (const std::exception& ex) {
      throw UsageError(ex.what());
    }
    if (e.adversary.adversary == Adversary::custom_points)
      throw UsageError("custom_points needs explicit points and is not available in sweeps");
  }
  take(j, "estimators", e.estimators, seen);
  if (e.estimators.empty()) e.estimators = {"paper"};
  const auto names = estimators_for(e.task);
  for (const auto& s : e.estimators)
    if (std::find(names.begin(), names.end(), s) == names.end())
      throw UsageError("unknown estimator '" + s + "' for task " + task);
  take(j, "repeats", e.repeats, seen);
  if (e.repeats < 1) throw UsageError("repeats must be at least 1");
  take(j, "seed", e.seed, seen);
  take(j, "output", e.output, seen);
  if (j.contains("config")) {
    seen.insert("config");
    e.config = j.at("config");
  }
  reject_unknown(j, seen, "experiment spec");
  return e;
}

json ExperimentSpec::to_json() const {
  json j;
  j["task"] = to_string(task);
  j["grid"] = {{"d", d}, {"k", k}, {"n", n}, {"eps", eps}, {"rho", rho}, {"sigma", sigma}};
  j["adversary"] = {{"kind", to_string(adversary.adversary)},
                    {"delta", adversary.delta ? json(*adversary.delta) : json(nullptr)},
                    {"support_size", adversary.support_size},
                    {"clusters", adversary.clusters},
                    {"spike_scale", adversary.spike_scale ? json(*adversary.spike_scale) : json(nullptr)}};
  j["estimators"] = estimators;
  j["repeats"] = repeats;
  j["seed"] = seed;
  j["output"] = output;
  j["config"] = config;
  return j;
}

std::vector<RunSpec> ExperimentSpec::cells() const {
  std::vector<RunSpec> out;
  const std::vector<double> one{1.0};
  for (int dd : d)
    for (int kk : k)
      for (int64_t nn : n)
        for (double e : eps)
          for (double r : task == Task::pca ? rho : one)
            for (double sg : task == Task::regression ? sigma : one) {
              RunSpec s;
              s.task = task;
              s.d = dd;
              s.k = kk;
              s.n = nn;
              s.eps = e;
              s.rho = r;
              s.sigma = sg;
              s.adversary = e > 0 ? adversary.adversary : Adversary::none;
              s.delta = adversary.delta;
              s.config = config;
              out.push_back(s);
            }
  return out;
}

uint64_t derive_seed(uint64_t seed, size_t cell, int repeat) {
  Philox g(seed, (uint64_t(cell) << 20) | uint64_t(repeat));
  return g.next_u64() >> 1;
}

double loglog_slope(const std::vector<std::pair<double, double>>& xy) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (const auto& [x, y] : xy) {
    if (!(x > 0 && y > 0)) throw std::invalid_argument("loglog_slope: values must be positive");
    const double lx = std::log(x), ly = std::log(y);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++m;
  }
  const double den = m * sxx - sx * sx;
  if (m < 2 || !(den > 1e-12)) throw std::invalid_argument("loglog_slope: need two distinct x values");
  return (m * sxy - sx * sy) / den;
}

SweepOutput run_sweep(const ExperimentSpec& spec) {
  namespace fs = std::filesystem;
  fs::create_directories(spec.output);
  SweepOutput out;
  out.report_jsonl = (fs::path(spec.output) / "report.jsonl").string();
  out.summary_csv = (fs::path(spec.output) / "summary.csv").string();
  out.plot_script = (fs::path(spec.output) / "plot_error_vs_eps.py").string();
  std::ofstream rep(out.report_jsonl);
  if (!rep) throw std::runtime_error("cannot write " + out.report_jsonl);

  struct Acc {
    std::vector<double> err, secs;
    int failed = 0;
  };
  const auto cells = spec.cells();
  std::vector<std::map<std::string, Acc>> acc(cells.size());
  for (size_t c = 0; c < cells.size(); ++c) {
    for (int r = 0; r < spec.repeats; ++r) {
      RunSpec s = cells[c];
      s.seed = derive_seed(spec.seed, c, r);
      std::optional<Dataset> ds;
      std::string gen_error;
      try {
        ds = make_dataset(s);
      } catch (const std::exception& e) {
        gen_error = e.what();
      }
      for (const auto& est : spec.estimators) {
        s.estimator = est;
        json row;
        try {
          if (!ds) throw std::runtime_error("dataset generation failed: " + gen_error);
          row = run_estimator(*ds, s);
          if (row["metrics"].contains("error")) acc[c][est].err.push_back(row["metrics"]["error"].get<double>());
          acc[c][est].secs.push_back(row["seconds"].get<double>());
        } catch (const std::exception& e) {
          row = json{{"schema", kReportSchema}, {"spec", s.to_json()}, {"status", "error"}, {"message", e.what()}};
          ++acc[c][est].failed;
          ++out.failed_runs;
        }
        row["cell"] = c;
        row["repeat"] = r;
        rep << row.dump() << "\n";
        rep.flush();
      }
    }
  }

  std::ofstream csv(out.summary_csv);
  csv << "task,d,k,n,eps,rho,sigma,adversary,estimator,runs,failed,mean_error,stderr_error,mean_seconds\n";
  std::map<std::string, std::vector<std::pair<double, double>>> curves;
  for (size_t c = 0; c < cells.size(); ++c) {
    const RunSpec& s = cells[c];
    for (const auto& est : spec.estimators) {
      const Acc& a = acc[c][est];
      const size_t m = a.err.size();
      double mean = NAN, se = NAN, ts = NAN;
      if (m > 0) {
        mean = 0;
        for (double v : a.err) mean += v;
        mean /= double(m);
        double ss = 0;
        for (double v : a.err) ss += (v - mean) * (v - mean);
        se = m > 1 ? std::sqrt(ss / double(m - 1) / double(m)) : 0.0;
        curves[est].push_back({s.eps, mean});
      }
      if (!a.secs.empty()) {
        ts = 0;
        for (double v : a.secs) ts += v;
        ts /= double(a.secs.size());
      }
      csv << to_string(s.task) << ',' << s.d << ',' << s.k << ',' << s.rows() << ',' << s.eps << ','
          << s.rho << ',' << s.sigma << ',' << csv_escape(to_string(s.adversary)) << ',' << csv_escape(est)
          << ',' << m << ',' << a.failed << ',' << mean << ',' << se << ',' << ts << '\n';
    }
  }

  for (auto& [est, pts] : curves) {
    std::sort(pts.begin(), pts.end());
    const std::string path = (fs::path(spec.output) / ("error_vs_eps_" + est + ".dat")).string();
    std::ofstream f(path);
    f << "# eps mean_error  task=" << to_string(spec.task) << " estimator=" << est;
    try {
      out.slope[est] = loglog_slope(pts);
      f << " loglog_slope=" << out.slope[est];
    } catch (const std::invalid_argument&) {
    }
    f << "\n";
    for (const auto& [e, v] : pts) f << e << ' ' << v << '\n';
    out.plot_data.push_back(path);
  }

  std::ofstream py(out.plot_script);
  py << "# Plots every error_vs_eps_*.dat in this directory on log-log axes.\n"
        "import glob\n"
        "import matplotlib.pyplot as plt\n"
        "import numpy as np\n\n"
        "for path in sorted(glob.glob('error_vs_eps_*.dat')):\n"
        "    data = np.loadtxt(path, ndmin=2)\n"
        "    plt.loglog(data[:, 0], data[:, 1], 'o-', label=path[len('error_vs_eps_'):-4])\n"
        "plt.xlabel('eps')\n"
        "plt.ylabel('mean error')\n"
        "plt.legend()\n"
        "plt.savefig('error_vs_eps.png', dpi=150)\n";
  return out;
}

}  // namespace rs
