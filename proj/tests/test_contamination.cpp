#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "robust_sparse/contamination.hpp"
#include "robust_sparse/goodness.hpp"
#include "robust_sparse/rng.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace rs;

namespace {
ContaminationSpec spec(double eps, Adversary a, uint64_t seed) {
  ContaminationSpec c;
  c.epsilon = eps;
  c.adversary = a;
  c.seed = seed;
  return c;
}
std::string slurp(const std::string& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}
Vec row_of(const Samples& s, int64_t i) {
  Vec x(s.dim());
  s.read_row(i, x.data());
  return x;
}
}  // namespace

TEST_CASE("clean mean task converges to mu") {
  const int n = 50000, d = 20, k = 3;
  auto ds = gen_mean_task(n, d, k, {}, spec(0.0, Adversary::none, 11));
  CHECK(ds.outliers == 0);
  CHECK((ds.truth->mu.array() != 0).count() == k);
  Vec m = ds.x->unit_scatter()->mean();
  CHECK((m - ds.truth->mu).norm() < 4 * std::sqrt(double(d) / n));
}

TEST_CASE("generation is deterministic and labels follow Bernoulli mixing") {
  const int n = 40000, d = 30, k = 4;
  const double eps = 0.1;
  for (Adversary a : {Adversary::sparse_shift, Adversary::evasive_tail, Adversary::dense_cluster}) {
    auto c = spec(eps, a, 5);
    c.clusters = 3;
    auto d1 = gen_mean_task(n, d, k, {}, c);
    auto d2 = gen_mean_task(n, d, k, {}, c);
    CHECK(*d1.labels == *d2.labels);
    for (int64_t i : {0, 1, 777, 39999}) CHECK((row_of(*d1.x, i) - row_of(*d2.x, i)).norm() == 0);
    double frac = double(d1.outliers) / n;
    CHECK(std::abs(frac - eps) <= 3 * std::sqrt(eps * (1 - eps) / n));
    // a different seed changes the data
    auto d3 = gen_mean_task(n, d, k, {}, spec(eps, a, 6));
    CHECK((row_of(*d1.x, 3) - row_of(*d3.x, 3)).norm() > 0);
  }
}

TEST_CASE("point-mass adversaries place outliers exactly") {
  const int n = 5000, d = 40, k = 5;
  auto c = spec(0.1, Adversary::sparse_shift, 9);
  c.delta = 20.0;
  auto ds = gen_mean_task(n, d, k, {}, c);
  const Truth& t = *ds.truth;
  CHECK(std::abs(t.adversary_direction.norm() - 1) < 1e-12);
  CHECK((t.adversary_direction.array() != 0).count() == k);
  int seen = 0;
  for (int64_t i = 0; i < n; ++i)
    if (ds.is_outlier(i)) {
      CHECK((row_of(*ds.x, i) - (t.mu + 20.0 * t.adversary_direction)).norm() == 0);
      ++seen;
    }
  CHECK(seen == ds.outliers);

  auto ev = gen_mean_task(n, d, k, {}, spec(0.05, Adversary::evasive_tail, 9));
  CHECK(ev.truth->adversary_delta == doctest::Approx(std::sqrt(2 * std::log(20.0))));
  // evasive direction lives on the support of mu
  for (int i = 0; i < d; ++i)
    if (ev.truth->adversary_direction[i] != 0) CHECK(ev.truth->mu[i] != 0);
}

TEST_CASE("read_entries agrees with read_row for every adversary") {
  const int d = 37, k = 4;
  std::vector<int> cols{36, 0, 5, 17, 3, 3, 22};
  auto check = [&](const Dataset& ds) {
    std::vector<double> e(cols.size());
    for (int64_t i = 0; i < 400; ++i) {
      Vec x = row_of(*ds.x, i);
      ds.x->read_entries(i, cols.data(), int(cols.size()), e.data());
      for (size_t c = 0; c < cols.size(); ++c) REQUIRE(e[c] == x[cols[c]]);
    }
  };
  auto cc = spec(0.3, Adversary::dense_cluster, 1);
  cc.clusters = 4;
  check(gen_mean_task(1000, d, k, {}, cc));
  check(gen_mean_task(1000, d, k, {}, spec(0.3, Adversary::evasive_tail, 2)));
  auto cp = spec(0.3, Adversary::custom_points, 3);
  cp.points = RowMatrix::Constant(3, d, 2.5);
  cp.points(1, 4) = -7;
  check(gen_mean_task(1000, d, k, {}, cp));
  PcaTaskParams pp;
  pp.rho = 0.5;
  check(gen_pca_task(1000, d, k, pp, spec(0.3, Adversary::fake_spike, 4)));
  check(gen_pca_task(1000, d, k, pp, spec(0.0, Adversary::none, 4)));
  check(gen_regression_task(1000, d, k, {}, spec(0.3, Adversary::flipped_response, 5)));
}

TEST_CASE("pca task: spike variance and clean PCA") {
  const int n = 100000, d = 10;
  PcaTaskParams p;
  p.rho = 1.0;
  p.v = Vec::Unit(d, 0);
  auto ds = gen_pca_task(n, d, 1, p, spec(0.0, Adversary::none, 21));
  Mat cov = ds.x->unit_scatter()->covariance();
  CHECK(cov(0, 0) >= 1.9);
  CHECK(cov(0, 0) <= 2.1);
  Eigen::SelfAdjointEigenSolver<Mat> es(cov);
  Vec top = es.eigenvectors().col(d - 1);
  CHECK(std::pow(top.dot(*p.v), 2) >= 0.95);
  CHECK_THROWS(gen_pca_task(10, d, 1, PcaTaskParams{0.0, {}}, spec(0.0, Adversary::none, 1)));
}

TEST_CASE("fake spike outliers carry the planted variance orthogonal to v") {
  const int n = 200000, d = 30, k = 3;
  PcaTaskParams p;
  p.rho = 0.5;
  const double eps = 0.05;
  auto ds = gen_pca_task(n, d, k, p, spec(eps, Adversary::fake_spike, 8));
  const Truth& t = *ds.truth;
  CHECK(std::abs(t.adversary_direction.dot(t.v)) < 1e-15);
  for (int i = 0; i < d; ++i) CHECK(t.adversary_direction[i] * t.v[i] == 0);
  double gamma = std::sqrt(1 + 2 * p.rho / eps);
  CHECK(t.adversary_delta == doctest::Approx(gamma));
  Mat cov = ds.x->unit_scatter()->covariance();
  const Vec& u = t.adversary_direction;
  double var_u = u.dot(cov * u), var_v = t.v.dot(cov * t.v);
  CHECK(var_u > var_v);  // naive PCA is fooled
  CHECK(var_u == doctest::Approx((1 - eps) + eps * gamma * gamma).epsilon(0.05));
  CHECK(std::abs(double(ds.outliers) / n - eps) <= 3 * std::sqrt(eps * (1 - eps) / n));
}

TEST_CASE("regression task responses") {
  const int n = 100000, d = 20, k = 3;
  RegressionTaskParams p;
  p.beta = Vec::Zero(d);
  auto zero = gen_regression_task(n, d, k, p, spec(0.0, Adversary::none, 31));
  double s2 = 0;
  for (double y : zero.y) s2 += y * y;
  CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.02));

  RegressionTaskParams q;  // ||beta|| = 1, sigma = 1
  auto ds = gen_regression_task(n, d, k, q, spec(0.0, Adversary::none, 32));
  CHECK(ds.truth->beta.norm() == doctest::Approx(1.0));
  double v2 = 0;
  for (double y : ds.y) v2 += y * y;
  CHECK(v2 / n == doctest::Approx(2.0).epsilon(0.03));

  // OLS on the true support
  std::vector<int> supp;
  for (int i = 0; i < d; ++i)
    if (ds.truth->beta[i] != 0) supp.push_back(i);
  Mat xtx = Mat::Zero(k, k);
  Vec xty = Vec::Zero(k);
  std::vector<double> xs(k);
  for (int64_t i = 0; i < n; ++i) {
    ds.x->read_entries(i, supp.data(), k, xs.data());
    Eigen::Map<Vec> xv(xs.data(), k);
    xtx += xv * xv.transpose();
    xty += ds.y[i] * xv;
  }
  Vec b = xtx.ldlt().solve(xty);
  Vec full = Vec::Zero(d);
  for (int a = 0; a < k; ++a) full[supp[a]] = b[a];
  CHECK((full - ds.truth->beta).norm() <= 4 * std::sqrt(double(k) / n));

  auto fl = gen_regression_task(20000, d, k, q, spec(0.1, Adversary::flipped_response, 33));
  std::vector<double> xb(k);
  for (int64_t i = 0; i < 200; ++i) {
    fl.x->read_entries(i, supp.data(), k, xb.data());
    double dot = 0;
    for (int a = 0; a < k; ++a) dot += xb[a] * fl.truth->beta[supp[a]];
    double resid_clean = fl.y[i] - dot, resid_flip = fl.y[i] + dot;
    // one of the two residuals is the pure noise draw; the label tells which
    if (fl.is_outlier(i)) CHECK(std::abs(resid_flip) < 6);
    else CHECK(std::abs(resid_clean) < 6);
  }
  RegressionTaskParams bad;
  bad.sigma = 0;
  CHECK_THROWS(gen_regression_task(10, d, k, bad, spec(0.0, Adversary::none, 1)));
}

TEST_CASE("parameter validation") {
  CHECK_THROWS(gen_mean_task(10, 5, 6, {}, spec(0.0, Adversary::none, 1)));
  CHECK_THROWS(gen_mean_task(10, 5, 2, {}, spec(0.6, Adversary::sparse_shift, 1)));
  CHECK_THROWS(gen_mean_task(10, 5, 2, {}, spec(0.0, Adversary::sparse_shift, 1)));
  CHECK_THROWS(gen_mean_task(10, 5, 2, {}, spec(0.1, Adversary::flipped_response, 1)));
  CHECK_THROWS(gen_mean_task(10, 5, 2, {}, spec(0.1, Adversary::custom_points, 1)));
  auto c = spec(0.1, Adversary::sparse_shift, 1);
  c.support_size = 9;
  CHECK_THROWS(gen_mean_task(10, 5, 2, {}, c));
  MeanTaskParams dense;
  dense.mu = Vec::Ones(5);
  CHECK_THROWS(gen_mean_task(10, 5, 2, dense, spec(0.0, Adversary::none, 1)));
}

TEST_CASE("csv round trip is bit exact and regeneration gives identical bytes") {
  auto dir = std::filesystem::temp_directory_path() / "rs_contamination_test";
  std::filesystem::create_directories(dir);
  auto c = spec(0.1, Adversary::evasive_tail, 77);
  auto ds = gen_mean_task(300, 12, 3, {}, c);
  std::string p1 = (dir / "a.csv").string(), p2 = (dir / "b.csv").string();
  write_dataset(ds, p1);
  write_dataset(gen_mean_task(300, 12, 3, {}, c), p2);
  CHECK(slurp(p1) == slurp(p2));
  CHECK(slurp(labels_path(p1)) == slurp(labels_path(p2)));
  std::string first_line = slurp(p1).substr(0, slurp(p1).find('\n'));
  CHECK(first_line == "# d=12 task=mean seed=77");

  Dataset back = load_dataset(p1);
  CHECK(back.task == Task::mean);
  CHECK(back.n() == 300);
  CHECK(back.d() == 12);
  CHECK(back.outliers == ds.outliers);
  CHECK(*back.labels == *ds.labels);
  for (int64_t i = 0; i < 300; ++i) REQUIRE((row_of(*back.x, i) - row_of(*ds.x, i)).norm() == 0);
  CHECK((back.truth->mu - ds.truth->mu).norm() == 0);
  CHECK(back.contamination.adversary == Adversary::evasive_tail);

  auto reg = gen_regression_task(50, 6, 2, {}, spec(0.2, Adversary::flipped_response, 3));
  std::string p3 = (dir / "r.csv").string();
  write_dataset(reg, p3);
  Dataset rb = load_dataset(p3);
  CHECK(rb.task == Task::regression);
  CHECK(rb.y == reg.y);
  CHECK((rb.truth->beta - reg.truth->beta).norm() == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("goodness audit on clean inliers passes") {
  const int n = 50000, d = 100, k = 5;
  const double eps = 0.05;
  auto ds = gen_mean_task(n, d, k, {}, spec(0.0, Adversary::none, 41));
  auto rep = check_goodness(*ds.x, ds.truth->mu, eps, k, 200);
  for (const auto& it : rep.items) {
    INFO(it.condition << " worst=" << it.worst << " bound=" << it.bound << " " << it.note);
    CHECK(it.passed);
  }
  CHECK(rep.passed());
  CHECK_THROWS(check_goodness(*ds.x, ds.truth->mu, eps, k, 0));
}

TEST_CASE("goodness audit detects a mean shift") {
  const int n = 20000, d = 50, k = 5;
  auto ds = gen_mean_task(n, d, k, {}, spec(0.0, Adversary::none, 42));
  RowMatrix x = materialize(*ds.x)->matrix();
  x.col(0).array() += 10.0;
  DenseSamples shifted(std::move(x));
  auto rep = check_goodness(shifted, ds.truth->mu, 0.05, k, 50);
  CHECK_FALSE(rep.item("1a_mean").passed);
  CHECK_FALSE(rep.passed());
}

TEST_CASE("quadratic tail matches the chi-square oracle") {
  // A = (e1 e1^T + e2 e2^T)/sqrt2: p = (z1^2 + z2^2)/sqrt2 - sqrt2, so
  // Pr[p > t] = exp(-(sqrt2 t + 2)/2)
  const int n = 1000000, d = 4;
  auto ds = gen_mean_task(n, d, 1, MeanTaskParams{Vec::Zero(d)}, spec(0.0, Adversary::none, 43));
  Mat a = Mat::Zero(d, d);
  a(0, 0) = a(1, 1) = 1 / std::sqrt(2.0);
  std::vector<double> ts{0.0, 1.0, 3.0, 6.0};
  auto emp = quadratic_tail(*ds.x, Vec::Zero(d), a, ts);
  for (size_t i = 0; i < ts.size(); ++i) {
    double pr = std::exp(-(std::sqrt(2.0) * ts[i] + 2) / 2);
    CHECK(std::abs(emp[i] - pr) <= 3 * std::sqrt(pr * (1 - pr) / n) + 1e-6);
  }
}

TEST_CASE("Hanson-Wright tail bound holds empirically") {
  Philox g(44, 0);
  for (int trial = 0; trial < 3; ++trial) {
    const int d = 12;
    Mat m(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) m(i, j) = g.normal();
    Mat a = 0.5 * (m + m.transpose());
    a /= a.norm();  // ||A||_F = 1, so ||A||_op <= 1
    for (const auto& r : hanson_wright_check(a, 1000000, 100 + trial, {2.0, 4.0, 8.0})) {
      INFO("t=" << r.t << " empirical=" << r.empirical << " bound=" << r.bound);
      CHECK(r.passed);
    }
  }
}
