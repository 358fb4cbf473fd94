#pragma once

#include "robust_sparse/samples.hpp"

#include <vector>

namespace rs {

// Indices of the k largest values of `score`; ties go to the lower index.
// Returned in decreasing score order.
std::vector<int> top_k_indices(const Vec& score, int k);

// (2,k) norm: root of the sum of the k largest squared entries.
double sparse_norm_2k(const Vec& x, int k);

// Keep the k largest-magnitude entries, zero the rest.
Vec truncate_top_k(const Vec& x, int k);

struct SparseEntry {
  int row, col;
  double value;
};

// Unit-Frobenius matrix with <= k nonzero rows of <= k entries each.
struct SparseDirection {
  Mat matrix;
  std::vector<int> row_support;
  std::vector<std::vector<int>> col_support_per_row;
  std::vector<SparseEntry> entries;  // nonzeros of `matrix`
  double score = 0.0;
  bool null = false;

  // rows and columns touched by a nonzero entry, ascending
  std::vector<int> support() const;
  double trace() const;
};

struct FkkResult {
  double value = 0.0;
  SparseDirection maximizer;
};

// (F,k,k) norm and a maximizer (A.*M)/||A.*M||_F. A zero matrix yields the null
// direction e1 e1^T with score 0.
FkkResult fkk_norm(const Mat& A, int k);

// Exhaustive enumeration of row subsets and per-row column subsets (small d only).
double fkk_norm_bruteforce(const Mat& A, int k);

// max over k-sparse unit u, v of u^T A v: the largest singular value over all k x k
// submatrices. Restricting only v (sup ||Av||_2) is not dominated by the (F,k,k) norm
// (one dense column breaks it), so the output side is k-sparse too. Refuses d > 14.
double sparse_op_norm_oracle(const Mat& A, int k);

struct SparseDirectionSet {
  std::vector<SparseDirection> directions;
  std::vector<std::vector<int>> supports;  // H_1..H_r'
  std::vector<double> h;
  double g_value = 0.0;
  Mat composite;

  std::vector<int> union_support() const;
  // sum of the directions' nonzeros (disjoint supports, so no collisions)
  std::vector<SparseEntry> composite_entries() const;
};

// h_i, A_i, H_i: repeated fkk maximizers with used rows and columns zeroed.
SparseDirectionSet greedy_decomposition(const Mat& B, int k, int r);

// |u^T A v| <= r ||u||_{2,k} ||v||_{2,k} + 1e-9
bool sparse_bilinear_bound_check(const Mat& A, const Vec& u, const Vec& v, int k, int r);

// ||w w^T - v v^T||_F for unit vectors, via 2 - 2 (w.v)^2.
double projector_distance(const Vec& w, const Vec& v);

// Largest singular value.
double operator_norm(const Mat& A);

struct GaussianLaw {
  Vec mean;
  Mat cov;
};

// Law of the leading coordinates of N(mean, cov) given that the trailing value.size()
// coordinates equal `value` (Schur complement).
GaussianLaw gaussian_condition(const Vec& mean, const Mat& cov, const Vec& value);

}  // namespace rs
