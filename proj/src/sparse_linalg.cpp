#include "robust_sparse/sparse_linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace rs {

namespace {
void check_k(int k, Eigen::Index d) {
  if (k < 1 || k > d) throw std::invalid_argument("sparsity k must satisfy 1 <= k <= d");
}

// calls f(subset) for every size-k subset of {0..d-1} in lexicographic order
template <class F>
void for_each_subset(int d, int k, F&& f) {
  std::vector<int> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  for (;;) {
    f(idx);
    int i = k - 1;
    while (i >= 0 && idx[i] == d - k + i) --i;
    if (i < 0) return;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}
}  // namespace

std::vector<int> top_k_indices(const Vec& score, int k) {
  const int d = int(score.size());
  k = std::min(k, d);
  std::vector<int> idx(d);
  std::iota(idx.begin(), idx.end(), 0);
  auto better = [&](int a, int b) { return score[a] > score[b] || (score[a] == score[b] && a < b); };
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), better);
  idx.resize(k);
  return idx;
}

double sparse_norm_2k(const Vec& x, int k) {
  check_k(k, x.size());
  Vec sq = x.array().square();
  double s = 0;
  for (int i : top_k_indices(sq, k)) s += sq[i];
  return std::sqrt(s);
}

Vec truncate_top_k(const Vec& x, int k) {
  check_k(k, x.size());
  Vec out = Vec::Zero(x.size());
  for (int i : top_k_indices(x.cwiseAbs(), k)) out[i] = x[i];
  return out;
}

std::vector<int> SparseDirection::support() const {
  std::set<int> s;
  for (const auto& e : entries) {
    s.insert(e.row);
    s.insert(e.col);
  }
  return {s.begin(), s.end()};
}

double SparseDirection::trace() const {
  double t = 0;
  for (const auto& e : entries)
    if (e.row == e.col) t += e.value;
  return t;
}

FkkResult fkk_norm(const Mat& A, int k) {
  if (A.rows() != A.cols()) throw std::invalid_argument("fkk_norm: matrix must be square");
  const int d = int(A.rows());
  check_k(k, d);
  Mat sq = A.array().square();
  std::vector<std::vector<int>> row_cols(d);
  Vec row_score(d);
  for (int i = 0; i < d; ++i) {
    row_cols[i] = top_k_indices(sq.row(i).transpose(), k);
    double s = 0;
    for (int j : row_cols[i]) s += sq(i, j);
    row_score[i] = s;
  }
  std::vector<int> rows = top_k_indices(row_score, k);
  double total = 0;
  for (int i : rows) total += row_score[i];

  FkkResult res;
  SparseDirection& dir = res.maximizer;
  dir.matrix = Mat::Zero(d, d);
  if (!(total > 0)) {
    dir.matrix(0, 0) = 1.0;
    dir.row_support = {0};
    dir.col_support_per_row = {{0}};
    dir.entries = {{0, 0, 1.0}};
    dir.score = 0.0;
    dir.null = true;
    return res;
  }
  res.value = std::sqrt(total);
  std::sort(rows.begin(), rows.end());
  for (int i : rows) {
    std::vector<int> cols;
    for (int j : row_cols[i]) {
      if (A(i, j) == 0.0) continue;
      dir.matrix(i, j) = A(i, j) / res.value;
      cols.push_back(j);
    }
    if (cols.empty()) continue;
    std::sort(cols.begin(), cols.end());
    for (int j : cols) dir.entries.push_back({i, j, dir.matrix(i, j)});
    dir.row_support.push_back(i);
    dir.col_support_per_row.push_back(std::move(cols));
  }
  dir.score = res.value;
  return res;
}

double fkk_norm_bruteforce(const Mat& A, int k) {
  const int d = int(A.rows());
  check_k(k, d);
  if (d > 12) throw std::invalid_argument("fkk_norm_bruteforce: d too large for enumeration");
  Vec best_row(d);
  for (int i = 0; i < d; ++i) {
    double best = 0;
    for_each_subset(d, k, [&](const std::vector<int>& cols) {
      double s = 0;
      for (int j : cols) s += A(i, j) * A(i, j);
      best = std::max(best, s);
    });
    best_row[i] = best;
  }
  double best = 0;
  for_each_subset(d, k, [&](const std::vector<int>& rows) {
    double s = 0;
    for (int i : rows) s += best_row[i];
    best = std::max(best, s);
  });
  return std::sqrt(best);
}

double sparse_op_norm_oracle(const Mat& A, int k) {
  const int d = int(A.cols());
  check_k(k, d);
  if (A.rows() != A.cols()) throw std::invalid_argument("sparse_op_norm_oracle: square matrix");
  if (d > 14) throw std::invalid_argument("sparse_op_norm_oracle: refuses d > 14");
  std::vector<std::vector<int>> subsets;
  for_each_subset(d, k, [&](const std::vector<int>& s) { subsets.push_back(s); });
  double best = 0;
  Mat sub(k, k);
  for (const auto& rows : subsets)
    for (const auto& cols : subsets) {
      for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) sub(a, b) = A(rows[a], cols[b]);
      best = std::max(best, operator_norm(sub));
    }
  return best;
}

double operator_norm(const Mat& A) {
  if (A.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(A);
  return svd.singularValues()(0);
}

std::vector<int> SparseDirectionSet::union_support() const {
  std::set<int> s;
  for (const auto& h : supports) s.insert(h.begin(), h.end());
  return {s.begin(), s.end()};
}

std::vector<SparseEntry> SparseDirectionSet::composite_entries() const {
  std::vector<SparseEntry> all;
  for (const auto& d : directions) all.insert(all.end(), d.entries.begin(), d.entries.end());
  return all;
}

SparseDirectionSet greedy_decomposition(const Mat& B, int k, int r) {
  if (B.rows() != B.cols()) throw std::invalid_argument("greedy_decomposition: square matrix");
  const int d = int(B.rows());
  check_k(k, d);
  if (r < 1) throw std::invalid_argument("greedy_decomposition: r must be positive");
  SparseDirectionSet out;
  out.composite = Mat::Zero(d, d);
  Mat rest = B;
  std::vector<char> used(d, 0);
  int remaining = d;
  for (int i = 0; i < r && remaining > 0; ++i) {
    int kk = std::min(k, remaining);
    FkkResult f = fkk_norm(rest, kk);
    if (f.maximizer.null) break;
    std::vector<int> H = f.maximizer.support();
    for (int c : H) {
      rest.row(c).setZero();
      rest.col(c).setZero();
      if (!used[c]) {
        used[c] = 1;
        --remaining;
      }
    }
    out.h.push_back(f.value);
    out.g_value += f.value;
    out.composite += f.maximizer.matrix;
    out.supports.push_back(std::move(H));
    out.directions.push_back(std::move(f.maximizer));
  }
  return out;
}

bool sparse_bilinear_bound_check(const Mat& A, const Vec& u, const Vec& v, int k, int r) {
  double lhs = std::abs(u.dot(A * v));
  return lhs <= r * sparse_norm_2k(u, k) * sparse_norm_2k(v, k) + 1e-9;
}

double projector_distance(const Vec& w, const Vec& v) {
  double c = w.dot(v);
  return std::sqrt(std::max(0.0, 2.0 - 2.0 * c * c));
}

GaussianLaw gaussian_condition(const Vec& mean, const Mat& cov, const Vec& value) {
  const Eigen::Index m = value.size(), p = mean.size() - m;
  if (p < 1 || cov.rows() != mean.size() || cov.cols() != mean.size())
    throw std::invalid_argument("gaussian_condition: shape mismatch");
  const Mat S12 = cov.topRightCorner(p, m);
  const Eigen::LDLT<Mat> S22(cov.bottomRightCorner(m, m));
  GaussianLaw g;
  g.mean = mean.head(p) + S12 * S22.solve(value - mean.tail(m));
  g.cov = cov.topLeftCorner(p, p) - S12 * S22.solve(S12.transpose());
  return g;
}

}  // namespace rs
