#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "robust_sparse/rng.hpp"
#include "robust_sparse/samples.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

using namespace rs;

TEST_CASE("philox4x32-10 known-answer vectors") {
  // Random123 kat_vectors
  auto a = philox4x32_10({0, 0, 0, 0}, {0, 0});
  CHECK(a == PhiloxCounter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  auto b = philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                         {0xffffffffu, 0xffffffffu});
  CHECK(b == PhiloxCounter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  auto c = philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                         {0xa4093822u, 0x299f31d0u});
  CHECK(c == PhiloxCounter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("row fill, random access and gather agree") {
  for (int d : {1, 15, 16, 17, 63, 64, 65, 200, 1000}) {
    std::vector<double> row(d);
    fill_normal_row(42, 7, 12345, d, row.data());
    std::vector<int> cols;
    for (int j = d - 1; j >= 0; j -= 3) cols.push_back(j);
    std::vector<double> g(cols.size());
    fill_normal_entries(42, 7, 12345, cols.data(), int(cols.size()), g.data());
    for (int j = 0; j < d; ++j) REQUIRE(row[j] == normal_at(42, 7, 12345, j));
    for (size_t i = 0; i < cols.size(); ++i) REQUIRE(g[i] == row[cols[i]]);
  }
}

TEST_CASE("grid normals have standard moments") {
  const int d = 100, n = 20000;
  std::vector<double> row(d);
  double s1 = 0, s2 = 0, s4 = 0, tail = 0;
  for (int i = 0; i < n; ++i) {
    fill_normal_row(9, 1, i, d, row.data());
    for (double z : row) {
      s1 += z;
      s2 += z * z;
      s4 += z * z * z * z;
      tail += std::abs(z) > 3.0;
    }
  }
  const double m = double(n) * d;
  CHECK(std::abs(s1 / m) < 5.0 / std::sqrt(m));
  CHECK(std::abs(s2 / m - 1.0) < 5.0 * std::sqrt(2.0 / m));
  CHECK(std::abs(s4 / m - 3.0) < 5.0 * std::sqrt(96.0 / m));
  // P(|Z| > 3) = 0.0026998
  CHECK(std::abs(tail / m - 0.0026998) < 5.0 * std::sqrt(0.0027 / m));
}

TEST_CASE("sequential stream uniform and below") {
  Philox p(5, 3);
  double s = 0;
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 70000; ++i) {
    double u = p.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    s += u;
    hist[p.below(7)]++;
  }
  CHECK(std::abs(s / 70000 - 0.5) < 0.01);
  for (int h : hist) CHECK(std::abs(h - 10000) < 500);
  Philox q(5, 3), r(5, 4);
  CHECK(q.next_u64() != r.next_u64());
}

TEST_CASE("uniform_at is deterministic and separated by slot") {
  CHECK(uniform_at(1, 2, 3, 0) == uniform_at(1, 2, 3, 0));
  CHECK(uniform_at(1, 2, 3, 0) != uniform_at(1, 2, 3, 1));
  CHECK(uniform_at(1, 2, 3, 0) != uniform_at(1, 3, 3, 0));
}

TEST_CASE("scatter precision paths and views") {
  const int n = 5000, d = 12;
  RowMatrix x(n, d);
  for (int i = 0; i < n; ++i) fill_normal_row(3, 0, i, d, x.row(i).data());
  x.col(2).array() += 1.5;
  auto s = std::make_shared<DenseSamples>(x);
  Vec c = s->pilot_shift();
  Scatter dbl = compute_scatter(*s, nullptr, c, ScatterPrecision::Double);
  Scatter mix = compute_scatter(*s, nullptr, c, ScatterPrecision::Mixed);
  Vec mean_ref = x.colwise().mean().transpose();
  Mat xc = x.rowwise() - mean_ref.transpose();
  Mat cov_ref = xc.transpose() * xc / double(n);
  CHECK((dbl.mean() - mean_ref).norm() < 1e-12);
  CHECK((dbl.covariance() - cov_ref).norm() < 1e-10);
  CHECK((mix.covariance() - cov_ref).norm() < 1e-4);

  auto u = s->unit_scatter(ScatterPrecision::Double);
  CHECK((u->covariance() - cov_ref).norm() < 1e-10);
  REQUIRE(u->row_sqdist.size() == size_t(n));
  CHECK(std::abs(u->row_sqdist[17] - (x.row(17).transpose() - c).squaredNorm()) < 1e-3);

  // halves are the even and odd rows
  auto h1 = s->half(1);
  CHECK(h1->rows() == n / 2);
  std::vector<double> r(d);
  h1->read_row(3, r.data());
  CHECK(r[4] == x(7, 4));
  CHECK(s->half(1) == h1);

  // weighted scatter against a direct loop
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = uniform_at(8, 0, i);
  Scatter ws = compute_scatter(*s, &w, c, ScatterPrecision::Double);
  Vec mw = Vec::Zero(d);
  double tw = 0;
  for (int i = 0; i < n; ++i) {
    mw += w[i] * x.row(i).transpose();
    tw += w[i];
  }
  mw /= tw;
  Mat cw = Mat::Zero(d, d);
  for (int i = 0; i < n; ++i) {
    Vec y = x.row(i).transpose() - mw;
    cw += w[i] * y * y.transpose();
  }
  cw /= tw;
  CHECK((ws.mean() - mw).norm() < 1e-12);
  CHECK((ws.covariance() - cw).norm() < 1e-10);

  // rank-one edits reproduce a full recomputation
  Scatter inc = ws;
  std::vector<double> w2 = w;
  for (int i = 0; i < n; i += 37) {
    inc.add_row(x.row(i).data(), -w2[i] * 0.5);
    w2[i] *= 0.5;
  }
  Scatter full = compute_scatter(*s, &w2, c, ScatterPrecision::Double);
  CHECK((inc.covariance() - full.covariance()).norm() < 1e-9);

  // column subset restricted from the cached base scatter
  auto cs = std::make_shared<ColumnSubset>(s, std::vector<int>{5, 2, 9});
  auto sub = cs->unit_scatter();
  CHECK(std::abs(sub->covariance()(1, 1) - cov_ref(2, 2)) < 1e-10);
  CHECK(std::abs(sub->covariance()(0, 2) - cov_ref(5, 9)) < 1e-10);
}

TEST_CASE("streaming column quantiles match sorting") {
  // large enough to take the histogram path
  const int n = 300000, d = 70;
  RowMatrix x(n, d);
  for (int i = 0; i < n; ++i) fill_normal_row(4, 0, i, d, x.row(i).data());
  x.col(1) *= 3.0;
  auto s = std::make_shared<DenseSamples>(x);
  std::vector<double> qs{0.0, 0.01, 0.5, 0.97, 1.0};
  Mat q = column_quantiles(*s, qs);
  for (int j : {0, 1, d - 1}) {
    std::vector<double> col(n);
    for (int i = 0; i < n; ++i) col[i] = x(i, j);
    std::sort(col.begin(), col.end());
    for (size_t a = 0; a < qs.size(); ++a)
      CHECK(q(a, j) == col[size_t(std::floor(qs[a] * (n - 1)))]);
  }
}
