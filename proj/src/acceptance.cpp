#include "robust_sparse/acceptance.hpp"

#include "robust_sparse/bench.hpp"
#include "robust_sparse/contamination.hpp"
#include "robust_sparse/estimators.hpp"
#include "robust_sparse/filter.hpp"
#include "robust_sparse/goodness.hpp"
#include "robust_sparse/rng.hpp"
#include "robust_sparse/sparse_linalg.hpp"
#include "robust_sparse/sparse_mean.hpp"
#include "robust_sparse/sparse_pca.hpp"
#include "robust_sparse/sparse_regression.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

namespace rs {

namespace {

struct Outcome {
  bool holds = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok && holds) detail << "FAILED: " << what << "; ";
    holds = holds && ok;
  }
};

int64_t default_rows(int d, int k, double eps) {
  return int64_t(40.0 * k * k * std::log(double(d)) / (eps * eps));
}

Mat random_matrix(Philox& g, int d) {
  Mat a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = g.normal();
  return a;
}

Vec random_unit(Philox& g, int d) {
  Vec u(d);
  for (int j = 0; j < d; ++j) u[j] = g.normal();
  return u.normalized();
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

// 1. fkk_norm against the exhaustive-mask oracle
void norm_oracle(Outcome& o) {
  Philox g(101, 0);
  double worst = 0;
  int dominated = 0;
  for (int t = 0; t < 200; ++t) {
    const int d = 2 + int(g.below(7));
    const int k = 1 + int(g.below(std::min(d, 3)));
    const Mat a = random_matrix(g, d);
    const double f = fkk_norm(a, k).value;
    worst = std::max(worst, std::abs(f - fkk_norm_bruteforce(a, k)));
    dominated += sparse_op_norm_oracle(a, k) <= f + 1e-12;
  }
  o.require(worst < 1e-9, "fkk_norm differs from the oracle");
  o.require(dominated == 200, "sparse operator norm exceeds fkk_norm");
  o.detail << "max |fkk - oracle| = " << worst << ", op <= fkk in " << dominated << "/200";
}

// 2. greedy decomposition invariants and the g_r identity
void greedy_invariants(Outcome& o) {
  Philox g(102, 0);
  const int d = 10, k = 2, r = 3;
  double worst_id = 0, worst_fro = 0, worst_op = 0;
  bool disjoint = true, ordered = true;
  for (int t = 0; t < 100; ++t) {
    // data-derived symmetric matrix: Sigma_w - I of a small weighted sample
    const int n = 2000;
    RowMatrix x(n, d);
    for (int i = 0; i < n; ++i) {
      fill_normal_row(1000 + uint64_t(t), 0, uint64_t(i), d, x.row(i).data());
      x.row(i) *= 0.5 + g.uniform();
    }
    auto s = std::make_shared<DenseSamples>(std::move(x));
    WeightVector w(n);
    for (auto& v : w.w) v = g.uniform();
    auto m = weighted_moments(*s, w, ScatterPrecision::Double);
    const Mat b = m.sigma_w - Mat::Identity(d, d);
    auto dec = greedy_decomposition(b, k, r);

    std::vector<int> seen;
    for (const auto& sup : dec.supports)
      for (int c : sup) {
        disjoint = disjoint && std::find(seen.begin(), seen.end(), c) == seen.end();
        seen.push_back(c);
      }
    for (size_t i = 1; i < dec.h.size(); ++i) ordered = ordered && dec.h[i - 1] >= dec.h[i] - 1e-12;
    worst_fro = std::max(worst_fro, std::abs(dec.composite.norm() - std::sqrt(double(dec.directions.size()))));
    worst_op = std::max(worst_op, operator_norm(dec.composite) - 1);
    const auto p = quadratic_scores(*s, m.mu_w, dec.composite_entries());
    double acc = 0;
    for (int i = 0; i < n; ++i) acc += w[i] * p[size_t(i)];
    worst_id = std::max(worst_id, std::abs(acc / w.sum() - dec.g_value));
    o.require(dec.directions.size() == size_t(r), "fewer than r directions");
  }
  o.require(disjoint, "supports overlap");
  o.require(ordered, "h not non-increasing");
  o.require(worst_fro < 1e-9, "||composite||_F != sqrt(r)");
  o.require(worst_op <= 1e-6, "||composite||_op > 1 + 1e-6");
  o.require(worst_id < 1e-6, "E_w[p] != g_r");
  o.detail << "max identity gap " << worst_id << ", max ||C||_op - 1 = " << worst_op;
}

// 3. filter mass accounting on constructed labeled instances
void filter_accounting(Outcome& o) {
  Philox g(103, 0);
  int held = 0, fired = 0, pre = 0;
  for (int t = 0; t < 50; ++t) {
    const double eps = 0.02 + 0.2 * g.uniform(), s = 0.05 + g.uniform();
    const double beta = 1.5 + 5 * g.uniform();
    const int n = 2000;
    WeightVector w(n);
    std::vector<double> tau(n);
    std::vector<uint8_t> labels(n);
    for (int i = 0; i < n; ++i) {
      w.w[size_t(i)] = 0.2 + 0.8 * g.uniform();
      labels[size_t(i)] = g.uniform() < eps;
      if (labels[size_t(i)])
        tau[size_t(i)] = (5 + 100 * g.uniform()) * s / eps;
      else
        tau[size_t(i)] = g.uniform() < 0.05 ? 10 * s * g.uniform() : 0.0;
    }
    pre += filter_precondition(w, tau, labels, s);
    auto r = downweight_filter(w, tau, s, beta);
    fired += r.fired();
    held += filter_guarantee_holds(mass_removed(w, r.w, labels), beta);
  }
  o.require(pre == 50, "constructed instance violates the precondition");
  o.require(held == 50, "mass-ratio inequality violated");
  o.detail << "inequality held in " << held << "/50 (filter fired in " << fired << ")";
}

// 4. conditional-law oracles
void conditional_oracles(Outcome& o) {
  Philox g(104, 0);
  double worst_pca = 0, worst_reg = 0;
  for (int t = 0; t < 100; ++t) {
    const int d = 3 + int(g.below(8));
    const Vec w = random_unit(g, d), v = random_unit(g, d);
    const double rho = 0.05 + 0.95 * g.uniform(), alpha = 4 * g.uniform() - 2;
    const Mat sigma = Mat::Identity(d, d) + rho * v * v.transpose();
    Mat joint(d + 1, d + 1);
    joint.topLeftCorner(d, d) = sigma;
    joint.topRightCorner(d, 1) = sigma * w;
    joint.bottomLeftCorner(1, d) = (sigma * w).transpose();
    joint(d, d) = w.dot(sigma * w);
    auto cond = gaussian_condition(Vec::Zero(d + 1), joint, Vec::Constant(1, alpha));
    const Mat P = Mat::Identity(d, d) - w * w.transpose();
    auto law = conditional_law_oracle(w, v, rho, alpha);
    worst_pca = std::max({worst_pca, (law.mean - P * cond.mean).lpNorm<Eigen::Infinity>(),
                          (law.cov - (P * cond.cov * P + w * w.transpose())).lpNorm<Eigen::Infinity>()});
  }
  for (int t = 0; t < 100; ++t) {
    const int d = 2 + int(g.below(9));
    Vec beta = random_unit(g, d) * (2 * g.uniform());
    const double sg = 0.2 + 2 * g.uniform(), alpha = 6 * g.uniform() - 3;
    Mat joint(d + 1, d + 1);
    joint.topLeftCorner(d, d) = Mat::Identity(d, d);
    joint.topRightCorner(d, 1) = beta;
    joint.bottomLeftCorner(1, d) = beta.transpose();
    joint(d, d) = sg * sg + beta.squaredNorm();
    auto cond = gaussian_condition(Vec::Zero(d + 1), joint, Vec::Constant(1, alpha));
    auto law = regression_conditional_oracle(beta, sg, alpha);
    worst_reg = std::max({worst_reg, (law.mean - cond.mean).lpNorm<Eigen::Infinity>(),
                          (law.cov - cond.cov).lpNorm<Eigen::Infinity>()});
  }
  o.require(worst_pca < 1e-10, "PCA oracle differs from Schur conditioning");
  o.require(worst_reg < 1e-10, "regression oracle differs from Schur conditioning");

  // Monte Carlo at n = 1e6, slice width 0.02
  const int d = 6;
  double worst_z = 0;
  {
    ContaminationSpec c;
    c.seed = 105;
    PcaTaskParams p;
    p.rho = 0.8;
    auto ds = gen_pca_task(1000000, d, 2, p, c);
    const Vec& v = ds.truth->v;
    const Vec w = (v + 0.8 * random_unit(g, d)).normalized();
    const double alpha = 0.7;
    auto sl = conditional_slice(*ds.x, w, alpha, 0.01, nullptr, 106);
    auto law = conditional_law_oracle(w, v, 0.8, alpha);
    const RowMatrix& x = sl.x->matrix();
    const Vec mean = x.colwise().mean().transpose();
    for (int j = 0; j < d; ++j)
      worst_z = std::max(worst_z, std::abs(mean[j] - law.mean[j]) / std::sqrt(law.cov(j, j) / double(x.rows())));
  }
  {
    ContaminationSpec c;
    c.seed = 107;
    auto ds = gen_regression_task(1000000, d, 3, RegressionTaskParams{}, c);
    const double alpha = 0.8;
    auto sl = response_slice(*ds.x, ds.y, alpha, 0.01);
    auto law = regression_conditional_oracle(ds.truth->beta, ds.truth->sigma, alpha);
    const RowMatrix& x = sl.x->matrix();
    const Vec mean = x.colwise().mean().transpose();
    for (int j = 0; j < d; ++j)
      worst_z = std::max(worst_z, std::abs(mean[j] - law.mean[j]) / std::sqrt(law.cov(j, j) / double(x.rows())));
  }
  o.require(worst_z <= 3, "Monte Carlo conditional mean outside 3 standard errors");
  o.detail << "Schur gap pca " << worst_pca << " reg " << worst_reg << ", worst MC z = " << worst_z;
}

// 5. error-vs-eps scaling against the single-direction baseline
void headline_scaling(Outcome& o) {
  const int d = 400, k = 5, repeats = 10;
  const std::vector<double> grid{0.02, 0.05, 0.1, 0.15};
  std::vector<std::pair<double, double>> curve;
  double paper_002 = 0, base_002 = 0;
  for (double eps : grid) {
    std::vector<double> err;
    std::vector<double> base;
    for (int r = 0; r < repeats; ++r) {
      ContaminationSpec c;
      c.epsilon = eps;
      c.adversary = Adversary::evasive_tail;
      c.seed = uint64_t(r);
      auto ds = gen_mean_task(default_rows(d, k, eps), d, k, MeanTaskParams{}, c);
      MeanConfig cfg;
      cfg.epsilon = eps;
      cfg.k = k;
      err.push_back((robust_sparse_mean(ds.x, cfg).mu_hat - ds.truth->mu).norm());
      if (eps == 0.02) base.push_back((baseline_single_direction(ds.x, eps, k).mu_hat - ds.truth->mu).norm());
    }
    const double worst = *std::max_element(err.begin(), err.end());
    o.require(worst <= 6 * eps, "error above 6 eps");
    curve.push_back({eps, mean_of(err)});
    o.detail << "eps=" << eps << " mean " << mean_of(err) / eps << "eps max " << worst / eps << "eps; ";
    if (eps == 0.02) {
      paper_002 = mean_of(err);
      base_002 = mean_of(base);
    }
  }
  const double slope = loglog_slope(curve);
  const double ratio = base_002 / paper_002;
  o.require(slope >= 0.85 && slope <= 1.15, "slope outside [0.85, 1.15]");
  o.require(ratio >= 1.3, "baseline/paper ratio below 1.3 at eps=0.02");
  o.detail << "slope " << slope << ", baseline/paper at 0.02 = " << ratio;
}

// 6. PCA end to end
void pca_end_to_end(Outcome& o) {
  const int d = 300, k = 5;
  const double rho = 0.5, eps = 0.05;
  double worst_dist = 0, worst_var = 1e9;
  int ok = 0;
  for (int r = 0; r < 10; ++r) {
    ContaminationSpec c;
    c.epsilon = eps;
    c.adversary = Adversary::fake_spike;
    c.seed = uint64_t(r);
    PcaTaskParams p;
    p.rho = rho;
    auto ds = gen_pca_task(default_rows(d, k, eps), d, k, p, c);
    PcaConfig cfg;
    cfg.epsilon = eps;
    cfg.k = k;
    cfg.rho = rho;
    cfg.seed = uint64_t(r);
    auto res = robust_sparse_pca(ds.x, cfg);
    const Vec& v = ds.truth->v;
    const double dist = projector_distance(res.v_hat, v);
    const double c2 = std::pow(res.v_hat.dot(v), 2);
    const double var_ratio = (1 + rho * c2) / (1 + rho);  // v^T Sigma v^ / ||Sigma||_op
    const bool good = dist <= 8 * eps / rho && var_ratio >= 1 - 10 * eps * eps / rho;
    ok += good;
    if (!good) o.detail << "repeat " << r << ": dist " << dist << ", variance ratio " << var_ratio << " (alpha " << res.trace.alpha << "); ";
    worst_dist = std::max(worst_dist, dist);
    worst_var = std::min(worst_var, var_ratio);
  }
  o.require(ok == 10, "bound missed on some repeat");
  o.detail << ok << "/10 within both bounds; worst distance " << worst_dist << " (bound " << 8 * eps / rho
           << "), worst variance ratio " << worst_var << " (bound " << 1 - 10 * eps * eps / rho << ")";
}

// 7. regression end to end
void regression_end_to_end(Outcome& o) {
  const int d = 300, k = 5;
  const double eps = 0.05;
  double worst = 0;
  for (int r = 0; r < 10; ++r) {
    ContaminationSpec c;
    c.epsilon = eps;
    c.adversary = Adversary::flipped_response;
    c.seed = uint64_t(r);
    auto ds = gen_regression_task(default_rows(d, k, eps), d, k, RegressionTaskParams{}, c);
    RegressionConfig cfg;
    cfg.epsilon = eps;
    cfg.k = k;
    cfg.seed = uint64_t(r);
    auto res = robust_sparse_regression(ds.x, ds.y, cfg);
    worst = std::max(worst, (res.beta_hat - ds.truth->beta).norm());
  }
  o.require(worst <= 8 * eps, "error above 8 sigma eps");
  o.detail << "worst error " << worst / eps << " sigma eps (bound 8)";
}

// 8. goodness audit on clean inliers
void goodness_audit(Outcome& o) {
  const int d = 400, k = 5;
  const double eps = 0.02;
  ContaminationSpec c;
  c.seed = 108;
  auto ds = gen_mean_task(default_rows(d, k, eps), d, k, MeanTaskParams{}, c);
  auto rep = check_goodness(*ds.x, ds.truth->mu, eps, k, 200);
  for (const auto& it : rep.items) {
    o.require(it.passed, "condition " + it.condition);
    o.detail << it.condition << " " << it.worst << "/" << it.bound << "; ";
  }
  o.detail << "n = " << ds.n();
}

// 9. clean data against the classical estimators
void clean_regression(Outcome& o) {
  const int repeats = 2;
  std::map<std::string, std::vector<double>> e;
  for (int r = 0; r < repeats; ++r) {
    RunSpec s;
    s.eps = 0.0;
    s.seed = 200 + uint64_t(r);
    s.task = Task::mean;
    s.d = 400;
    s.k = 5;
    auto ds = make_dataset(s);
    for (const char* est : {"paper", "baseline_single_direction", "empirical_mean", "coordinate_median"}) {
      s.estimator = est;
      e[std::string("mean/") + est].push_back(run_estimator(ds, s)["metrics"]["error"].get<double>());
    }
    s.task = Task::pca;
    s.d = 300;
    s.rho = 0.5;
    ds = make_dataset(s);
    for (const char* est : {"paper", "empirical_pca"}) {
      s.estimator = est;
      e[std::string("pca/") + est].push_back(run_estimator(ds, s)["metrics"]["error"].get<double>());
    }
    s.task = Task::regression;
    ds = make_dataset(s);
    for (const char* est : {"paper", "ols"}) {
      s.estimator = est;
      e[std::string("regression/") + est].push_back(run_estimator(ds, s)["metrics"]["error"].get<double>());
    }
  }
  auto check = [&](const std::string& a, const std::string& b) {
    const double ratio = mean_of(e[a]) / mean_of(e[b]);
    o.require(ratio <= 2, a + " above 2x " + b);
    o.detail << a << " vs " << b << " " << ratio << "; ";
  };
  check("mean/paper", "mean/empirical_mean");
  check("mean/baseline_single_direction", "mean/empirical_mean");
  check("mean/coordinate_median", "mean/empirical_mean");
  check("pca/paper", "pca/empirical_pca");
  check("regression/paper", "regression/ols");
}

struct Entry {
  const char* name;
  double limit;
  std::function<void(Outcome&)> run;
};

const std::map<int, Entry>& registry() {
  static const std::map<int, Entry> r{
      {1, {"norm oracle equivalence", 10, norm_oracle}},
      {2, {"greedy decomposition invariants", 10, greedy_invariants}},
      {3, {"filter mass accounting", 10, filter_accounting}},
      {4, {"conditional-law oracles", 120, conditional_oracles}},
      {5, {"headline scaling", 1200, headline_scaling}},
      {6, {"PCA end to end", 900, pca_end_to_end}},
      {7, {"regression end to end", 900, regression_end_to_end}},
      {8, {"goodness audit", 300, goodness_audit}},
      {9, {"clean-data comparison", 300, clean_regression}},
  };
  return r;
}

}  // namespace

std::vector<int> default_criteria() { return {1, 2, 3, 4, 8, 9}; }
std::vector<int> all_criteria() { return {1, 2, 3, 4, 5, 6, 7, 8, 9}; }

CriterionResult run_criterion(int id) {
  const Entry& e = registry().at(id);
  CriterionResult res;
  res.id = id;
  res.name = e.name;
  res.limit_seconds = e.limit;
  Outcome o;
  o.detail << std::setprecision(3);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    e.run(o);
  } catch (const std::exception& ex) {
    o.holds = false;
    o.detail << "exception: " << ex.what();
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  res.property_holds = o.holds;
  res.detail = o.detail.str();
  return res;
}

std::string format_result(const CriterionResult& r) {
  std::ostringstream s;
  s << (r.passed() ? "PASS" : "FAIL") << "  " << r.id << " " << r.name << "  " << std::fixed
    << std::setprecision(1) << r.seconds << " s / " << r.limit_seconds << " s";
  if (!r.property_holds) s << "  [property failed]";
  else if (!r.passed()) s << "  [over time budget]";
  s << "  " << r.detail;
  return s.str();
}

}  // namespace rs
