#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "robust_sparse/rng.hpp"
#include "robust_sparse/sparse_linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace rs;

namespace {
Mat random_matrix(Philox& g, int d) {
  Mat a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = g.normal();
  return a;
}
Vec random_vec(Philox& g, int d) {
  Vec v(d);
  for (int i = 0; i < d; ++i) v[i] = g.normal();
  return v;
}
// max of v^T x over unit v supported on each k-subset
double norm_2k_by_supports(const Vec& x, int k) {
  const int d = int(x.size());
  double best = 0;
  std::vector<int> mask(d, 0);
  std::fill(mask.end() - k, mask.end(), 1);
  do {
    double s = 0;
    for (int i = 0; i < d; ++i)
      if (mask[i]) s += x[i] * x[i];
    best = std::max(best, std::sqrt(s));
  } while (std::next_permutation(mask.begin(), mask.end()));
  return best;
}
}  // namespace

TEST_CASE("sparse_norm_2k examples") {
  Vec x(4);
  x << 3, 0, -4, 0;
  CHECK(sparse_norm_2k(x, 1) == doctest::Approx(4));
  CHECK(sparse_norm_2k(x, 2) == doctest::Approx(5));
  CHECK_THROWS(sparse_norm_2k(x, 0));
  CHECK_THROWS(sparse_norm_2k(x, 5));
  Philox g(1, 0);
  for (int t = 0; t < 50; ++t) {
    Vec y = random_vec(g, 8);
    CHECK(sparse_norm_2k(y, 3) == doctest::Approx(norm_2k_by_supports(y, 3)).epsilon(1e-12));
    CHECK(sparse_norm_2k(y, 3) <= y.norm() + 1e-12);
    CHECK(std::abs(sparse_norm_2k(y, 8) - y.norm()) < 1e-12);
  }
}

TEST_CASE("truncate_top_k examples and the sqrt(6) bound") {
  Vec x(3);
  x << 1, -5, 2;
  Vec t = truncate_top_k(x, 1);
  CHECK(t[0] == 0);
  CHECK(t[1] == -5);
  CHECK(t[2] == 0);
  Vec ones = Vec::Ones(3);
  Vec t2 = truncate_top_k(ones, 2);
  CHECK(t2[0] == 1);
  CHECK(t2[1] == 1);
  CHECK(t2[2] == 0);

  Philox g(2, 0);
  const int d = 20, k = 3;
  for (int t = 0; t < 1000; ++t) {
    Vec y = Vec::Zero(d);
    for (int i = 0; i < k; ++i) y[g.below(d)] = 3 * g.normal();
    Vec xx = y + (0.2 + g.uniform()) * random_vec(g, d);
    Vec tk = truncate_top_k(xx, k);
    CHECK((tk.array() != 0).count() <= k);
    CHECK((tk - y).norm() <= std::sqrt(6.0) * sparse_norm_2k(xx - y, 2 * k) + 1e-12);
  }
}

TEST_CASE("fkk_norm examples") {
  Mat a = Mat::Zero(2, 2);
  a(0, 0) = 3;
  a(1, 1) = 4;
  auto r1 = fkk_norm(a, 1);
  CHECK(r1.value == doctest::Approx(4));
  CHECK(r1.maximizer.matrix(1, 1) == doctest::Approx(1));
  CHECK(r1.maximizer.matrix(0, 0) == 0);
  CHECK(fkk_norm(a, 2).value == doctest::Approx(5));

  auto z = fkk_norm(Mat::Zero(3, 3), 2);
  CHECK(z.value == 0);
  CHECK(z.maximizer.null);
  CHECK(z.maximizer.matrix(0, 0) == 1);
  CHECK(z.maximizer.matrix.norm() == doctest::Approx(1));
}

TEST_CASE("fkk_norm matches the exhaustive oracle and bounds the sparse operator norm") {
  Philox g(3, 0);
  for (int t = 0; t < 300; ++t) {
    const int d = 2 + int(g.below(7));  // 2..8
    const int k = 1 + int(g.below(std::min(d, 3)));
    Mat a = random_matrix(g, d);
    auto f = fkk_norm(a, k);
    CHECK(std::abs(f.value - fkk_norm_bruteforce(a, k)) < 1e-9);
    CHECK(sparse_op_norm_oracle(a, k) <= f.value + 1e-9);
    const auto& m = f.maximizer;
    CHECK(std::abs(m.matrix.norm() - 1.0) < 1e-9);
    CHECK(std::abs((a.array() * m.matrix.array()).sum() - f.value) < 1e-9);
    CHECK(int(m.row_support.size()) <= k);
    for (int i = 0; i < d; ++i) CHECK((m.matrix.row(i).array() != 0).count() <= k);
    CHECK(m.entries.size() == size_t((m.matrix.array() != 0).count()));
  }
}

TEST_CASE("sparse_op_norm_oracle examples") {
  CHECK(sparse_op_norm_oracle(Mat::Identity(4, 4), 2) == doctest::Approx(1));
  Vec v = Vec::Zero(6);
  v[1] = 0.6;
  v[4] = -0.8;
  CHECK(sparse_op_norm_oracle(v * v.transpose(), 2) == doctest::Approx(1));
  CHECK_THROWS(sparse_op_norm_oracle(Mat::Identity(15, 15), 2));
}

TEST_CASE("greedy_decomposition examples") {
  Mat b = Mat::Zero(4, 4);
  b.diagonal() << 5, 4, 3, 2;
  auto s = greedy_decomposition(b, 1, 2);
  REQUIRE(s.directions.size() == 2);
  CHECK(s.h[0] == doctest::Approx(5));
  CHECK(s.h[1] == doctest::Approx(4));
  CHECK(s.supports[0] == std::vector<int>{0});
  CHECK(s.supports[1] == std::vector<int>{1});
  CHECK(s.g_value == doctest::Approx(9));

  auto e = greedy_decomposition(Mat::Zero(4, 4), 2, 3);
  CHECK(e.directions.empty());
  CHECK(e.g_value == 0);
}

TEST_CASE("greedy_decomposition invariants against restricted brute force") {
  Philox g(4, 0);
  for (int t = 0; t < 100; ++t) {
    const int d = 8, k = 2, r = 2;
    Mat a = random_matrix(g, d);
    Mat b = 0.5 * (a + a.transpose());
    auto s = greedy_decomposition(b, k, r);
    REQUIRE(s.directions.size() == size_t(r));
    Mat rest = b;
    std::vector<int> seen;
    for (int i = 0; i < r; ++i) {
      CHECK(std::abs(s.h[i] - fkk_norm_bruteforce(rest, k)) < 1e-9);
      for (int c : s.supports[i]) {
        CHECK(std::find(seen.begin(), seen.end(), c) == seen.end());
        seen.push_back(c);
        rest.row(c).setZero();
        rest.col(c).setZero();
      }
      CHECK(int(s.supports[i].size()) <= k * (k + 1));
    }
    CHECK(s.h[0] >= s.h[1] - 1e-12);
    CHECK(std::abs(s.composite.norm() - std::sqrt(double(r))) < 1e-6);
    CHECK(operator_norm(s.composite) <= 1 + 1e-6);
    CHECK(s.g_value == doctest::Approx(s.h[0] + s.h[1]));
  }
}

TEST_CASE("greedy_decomposition restricts k when few coordinates remain") {
  Philox g(5, 0);
  Mat a = random_matrix(g, 5);
  auto s = greedy_decomposition(a + a.transpose(), 2, 10);
  CHECK(s.directions.size() >= 2);
  CHECK(s.union_support().size() <= 5);
}

TEST_CASE("sparse bilinear bound") {
  Vec z = Vec::Zero(5);
  CHECK(sparse_bilinear_bound_check(Mat::Identity(5, 5), z, z, 1, 1));
  Mat e = Mat::Zero(5, 5);
  e(0, 0) = 1;
  Vec e1 = Vec::Unit(5, 0);
  CHECK(sparse_bilinear_bound_check(e, e1, e1, 1, 1));
  Philox g(6, 0);
  for (int t = 0; t < 1000; ++t) {
    const int d = 12, k = 1 + int(g.below(3)), r = 1 + int(g.below(3));
    Mat a = random_matrix(g, d);
    auto s = greedy_decomposition(a + a.transpose(), k, r);
    Vec u = random_vec(g, d), v = random_vec(g, d);
    CHECK(sparse_bilinear_bound_check(s.composite, u, v, k, int(s.directions.size())));
  }
}

TEST_CASE("projector distance is Theta of the vector distance") {
  Philox g(7, 0);
  for (int t = 0; t < 1000; ++t) {
    const int d = 6;
    Vec w = random_vec(g, d).normalized();
    Vec v = (w + (0.05 + 2 * g.uniform()) * random_vec(g, d)).normalized();
    if (w.dot(v) < 0) v = -v;
    Mat diff = w * w.transpose() - v * v.transpose();
    double pd = projector_distance(w, v);
    CHECK(std::abs(pd - diff.norm()) < 1e-12);
    double dv = (w - v).norm();
    // ||ww^T - vv^T||_F = ||w - v|| * sqrt(2 - ||w-v||^2 / 2) for aligned unit vectors
    double c1 = 0.99 * std::min(std::sqrt(2.0) * std::sqrt(1 - dv * dv / 4), 1.0);
    CHECK(pd >= c1 * dv - 1e-12);
    CHECK(pd <= std::sqrt(2.0) * dv + 1e-12);
  }
}

TEST_CASE("column-only sparse operator norm is not dominated by fkk") {
  // a single dense column: ||A e1|| = sqrt(d) while (F,k,k) sees only k rows
  Mat a = Mat::Zero(6, 6);
  a.col(0).setOnes();
  CHECK(a.col(0).norm() > fkk_norm(a, 2).value);
  CHECK(sparse_op_norm_oracle(a, 2) == doctest::Approx(std::sqrt(2.0)));
  CHECK(sparse_op_norm_oracle(a, 2) <= fkk_norm(a, 2).value + 1e-12);
}
