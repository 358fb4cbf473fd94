#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "robust_sparse/contamination.hpp"
#include "robust_sparse/rng.hpp"
#include "robust_sparse/sparse_pca.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>

using namespace rs;

namespace {
Dataset pca_task(int64_t n, int d, int k, double rho, double eps, Adversary a, uint64_t seed) {
  ContaminationSpec c;
  c.epsilon = eps;
  c.adversary = a;
  c.seed = seed;
  PcaTaskParams p;
  p.rho = rho;
  return gen_pca_task(n, d, k, p, c);
}

Vec random_unit(Philox& g, int d) {
  Vec u(d);
  for (int j = 0; j < d; ++j) u[j] = g.normal();
  return u.normalized();
}

int support_size(const Vec& v) {
  int c = 0;
  for (int j = 0; j < v.size(); ++j) c += v[j] != 0;
  return c;
}
}  // namespace

TEST_CASE("config") {
  PcaConfig c;
  c.epsilon = 0.05;
  CHECK(c.ell_value() == doctest::Approx(1 / std::log(20.0)));
  c.ell = 0.2;
  CHECK(c.ell_value() == 0.2);
  CHECK_NOTHROW(c.validate());
  c.rho = 1.5;
  CHECK_THROWS(c.validate());
  c.rho = 0.5;
  c.alpha_exclusion = 2.0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("robust 1-d variance") {
  CHECK(trimmed_gaussian_factor(0.0) == 1.0);
  // Monte Carlo value of E[Z^2 | |Z| <= z_{0.9}]
  {
    std::vector<double> z;
    for (int i = 0; i < 400000; ++i) {
      double g = normal_at(1, 0, uint64_t(i), 0);
      if (std::abs(g) <= 1.6448536269514722) z.push_back(g * g);
    }
    double m = 0;
    for (double t : z) m += t;
    CHECK(std::abs(m / double(z.size()) - trimmed_gaussian_factor(0.05)) < 0.005);
  }

  std::vector<double> a(100000), b(100000);
  for (int i = 0; i < 100000; ++i) {
    a[size_t(i)] = normal_at(2, 0, uint64_t(i), 0);
    b[size_t(i)] = 2 * normal_at(3, 0, uint64_t(i), 0);
  }
  const double ya = robust_variance_1d(a, 0.0), yb = robust_variance_1d(b, 0.0);
  CHECK(ya >= 0.99);
  CHECK(ya <= 1.01);
  CHECK(yb >= 3.96);
  CHECK(yb <= 4.04);
  // trimming also leaves clean data close
  CHECK(std::abs(robust_variance_1d(a, 0.05) - 1) < 0.02);

  for (int i = 0; i < 100000; i += 10) a[size_t(i)] = 100.0;
  CHECK(std::abs(robust_variance_1d(a, 0.1) - 1) < 0.1);

  CHECK_THROWS(robust_variance_1d(std::vector<double>(99, 1.0), 0.1));
}

TEST_CASE("conditional law oracle against Schur-complement conditioning") {
  Philox g(7, 0);
  for (int t = 0; t < 100; ++t) {
    const int d = 3 + int(g.below(8));
    const Vec w = random_unit(g, d), v = random_unit(g, d);
    const double rho = 0.05 + 0.95 * g.uniform();
    const double alpha = 4 * g.uniform() - 2;
    // joint law of (X, w.X)
    const Mat sigma = Mat::Identity(d, d) + rho * v * v.transpose();
    Mat joint(d + 1, d + 1);
    joint.topLeftCorner(d, d) = sigma;
    joint.topRightCorner(d, 1) = sigma * w;
    joint.bottomLeftCorner(1, d) = (sigma * w).transpose();
    joint(d, d) = w.dot(sigma * w);
    auto cond = gaussian_condition(Vec::Zero(d + 1), joint, Vec::Constant(1, alpha));
    const Mat P = Mat::Identity(d, d) - w * w.transpose();
    const Vec mean = P * cond.mean;
    const Mat cov = P * cond.cov * P + w * w.transpose();

    auto law = conditional_law_oracle(w, v, rho, alpha);
    CHECK((law.mean - mean).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK((law.cov - cov).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("conditional law oracle against a Monte Carlo slice") {
  const int d = 6;
  const double rho = 0.8, alpha = 0.7;
  auto ds = pca_task(1000000, d, 2, rho, 0.0, Adversary::none, 9);
  const Vec& v = ds.truth->v;
  Philox g(10, 0);
  const Vec w = (v + 0.8 * random_unit(g, d)).normalized();
  auto sl = conditional_slice(*ds.x, w, alpha, 0.01, nullptr, 11);
  const RowMatrix& x = sl.x->matrix();
  const double m = double(x.rows());
  REQUIRE(m > 2000);
  auto law = conditional_law_oracle(w, v, rho, alpha);
  const Vec mean = x.colwise().mean().transpose();
  for (int j = 0; j < d; ++j) {
    const double se = std::sqrt(law.cov(j, j) / m);
    CHECK(std::abs(mean[j] - law.mean[j]) <= 3 * se);
  }
}

TEST_CASE("recombination recovers v from the exact conditional mean") {
  Philox g(13, 0);
  for (int t = 0; t < 50; ++t) {
    const int d = 10;
    const Vec v = random_unit(g, d);
    const Vec w = (v + 0.5 * random_unit(g, d)).normalized();
    const double rho = 0.1 + 0.9 * g.uniform();
    const double alpha = (g.uniform() < 0.5 ? -1 : 1) * (0.1 + g.uniform());
    const double c = w.dot(v);
    REQUIRE(c > 0);
    auto law = conditional_law_oracle(w, v, rho, alpha);
    const Vec vh = pca_recombine(law.mean, w, c * c, rho, alpha);
    CHECK((vh - v).norm() < 1e-9);
  }
  CHECK_THROWS(pca_recombine(Vec::Zero(3), Vec::Zero(3), 0.0, 0.5, 1.0));
}

TEST_CASE("slice centre") {
  CHECK(slice_center(0.7, 1e-6, 1.0) == doctest::Approx(0.7).epsilon(1e-9));
  CHECK(slice_center(0.0, 0.5, 2.0) == 0.0);
  CHECK(slice_center(-0.9, 0.4, 1.5) == doctest::Approx(-slice_center(0.9, 0.4, 1.5)));
  // Monte Carlo over the interval
  const double alpha = 1.1, ell = 0.4, var = 1.5;
  double acc = 0;
  int64_t m = 0;
  for (int i = 0; i < 2000000; ++i) {
    const double t = std::sqrt(var) * normal_at(31, 0, uint64_t(i), 0);
    if (t >= alpha - ell && t <= alpha + ell) {
      acc += t;
      ++m;
    }
  }
  CHECK(std::abs(acc / double(m) - slice_center(alpha, ell, var)) < 4 * ell / std::sqrt(3.0 * double(m)));
  CHECK(slice_center(alpha, ell, var) < alpha);
  CHECK_THROWS(slice_center(1.0, 0.0, 1.0));
}

TEST_CASE("conditional slice") {
  RowMatrix x(6, 3);
  x << 0.4, 1, 2,
       0.5, 3, 4,
       1.0, 5, 6,
       1.5, 7, 8,
       1.6, 9, 10,
       -1.0, 11, 12;
  DenseSamples s(x);
  Vec e1 = Vec::Zero(3);
  e1[0] = 1;
  std::vector<uint8_t> labels{0, 1, 0, 0, 1, 0};
  auto sl = conditional_slice(s, e1, 1.0, 0.5, &labels);
  CHECK(sl.rows == std::vector<int64_t>{1, 2, 3});
  CHECK(sl.x->matrix().col(0).isZero());
  CHECK(sl.x->matrix()(2, 2) == 8);
  CHECK(sl.outliers == 1);
  CHECK(sl.outlier_fraction == doctest::Approx(1.0 / 3));
  CHECK_THROWS_WITH(conditional_slice(s, e1, 10.0, 0.5), "empty slice: draw a fresh alpha");
  CHECK_THROWS(conditional_slice(s, e1, 1.0, 0.0));

  // refilled w-component is a fresh draw, the rest is untouched
  auto rf = conditional_slice(s, e1, 1.0, 0.5, nullptr, 5);
  CHECK(rf.x->matrix()(0, 0) == doctest::Approx(normal_at(5, 40, 1, 0)).epsilon(1e-12));
  CHECK(rf.x->matrix().col(1) == sl.x->matrix().col(1));

  // clean retained fraction matches the Gaussian mass of the interval
  const double rho = 1.0, alpha = 0.5, ell = 0.3;
  auto ds = pca_task(200000, 20, 3, rho, 0.0, Adversary::none, 15);
  const Vec& v = ds.truth->v;
  auto cs = conditional_slice(*ds.x, v, alpha, ell);
  boost::math::normal nd(0, std::sqrt(1 + rho));
  const double p = boost::math::cdf(nd, alpha + ell) - boost::math::cdf(nd, alpha - ell);
  const double frac = double(cs.rows.size()) / 200000.0;
  CHECK(std::abs(frac - p) <= 4 * std::sqrt(p * (1 - p) / 200000.0));
}

TEST_CASE("warm start") {
  SUBCASE("clean, rho = 1, large n") {
    auto ds = pca_task(100000, 50, 3, 1.0, 0.0, Adversary::none, 17);
    WarmStartReport rep;
    Vec w = warm_start(ds.x, 0.05, 3, 1.0, &rep);
    CHECK(std::pow(w.dot(ds.truth->v), 2) >= 0.99);
    CHECK(w.norm() == doctest::Approx(1.0));
    CHECK(support_size(w) <= 3);
  }
  SUBCASE("support recovery at d=100, n=1e4") {
    auto ds = pca_task(10000, 100, 3, 1.0, 0.0, Adversary::none, 19);
    WarmStartReport rep;
    Vec w = warm_start(ds.x, 0.05, 3, 1.0, &rep);
    std::vector<int> truth;
    for (int j = 0; j < 100; ++j)
      if (ds.truth->v[j] != 0) truth.push_back(j);
    CHECK(rep.support == truth);
    CHECK(support_size(w) <= 3);
  }
  SUBCASE("fake spike") {
    auto ds = pca_task(200000, 100, 4, 0.5, 0.05, Adversary::fake_spike, 21);
    Vec w = warm_start(ds.x, 0.05, 4, 0.5);
    CHECK(projector_distance(w, ds.truth->v) <= 0.1);
  }
}

TEST_CASE("slice outlier fraction over alpha draws") {
  const double eps = 0.05, rho = 0.5;
  auto ds = pca_task(200000, 60, 3, rho, eps, Adversary::fake_spike, 23);
  Vec w = warm_start(ds.x, eps, 3, rho);
  Philox g(24, 0);
  int high = 0, draws = 0;
  while (draws < 50) {
    const double mag = 0.1 + (1 + rho - 0.1) * g.uniform();
    const double alpha = g.uniform() < 0.5 ? -mag : mag;
    try {
      auto sl = conditional_slice(*ds.x, w, alpha, 1 / std::log(1 / eps), ds.labels.get());
      high += sl.outlier_fraction > 4 * eps;
      ++draws;
    } catch (const std::runtime_error&) {
    }
  }
  CHECK(high <= 5);
}

TEST_CASE("end to end") {
  const double eps = 0.05, rho = 1.0;
  const int d = 50, k = 3;
  PcaConfig cfg;
  cfg.epsilon = eps;
  cfg.k = k;
  cfg.rho = rho;
  cfg.seed = 3;
  SUBCASE("clean") {
    auto ds = pca_task(200000, d, k, rho, 0.0, Adversary::none, 25);
    auto r = robust_sparse_pca(ds.x, cfg, ds.labels.get());
    CHECK(projector_distance(r.v_hat, ds.truth->v) <= 8 * eps / rho);
    CHECK(r.trace.y == doctest::Approx(1.0).epsilon(0.1));
    CHECK(r.trace.variance_along_vhat >= (1 - 10 * eps * eps / rho) * (1 + rho));
    CHECK(r.v_hat.norm() == doctest::Approx(1.0));
    CHECK(std::pow(empirical_pca(*ds.x).dot(ds.truth->v), 2) > 0.99);
  }
  SUBCASE("fake spike") {
    auto ds = pca_task(200000, d, k, rho, eps, Adversary::fake_spike, 27);
    auto r = robust_sparse_pca(ds.x, cfg, ds.labels.get());
    CHECK(projector_distance(r.v_hat, ds.truth->v) <= 8 * eps / rho);
    CHECK(r.trace.slice_outlier_fraction <= 4 * eps);
  }
  SUBCASE("rho below the regime warns") {
    cfg.rho = 0.1;
    auto ds = pca_task(100000, d, k, 0.1, 0.0, Adversary::none, 29);
    auto r = robust_sparse_pca(ds.x, cfg);
    CHECK(!r.trace.warnings.empty());
  }
}
