#pragma once

#include "robust_sparse/samples.hpp"

#include <string>
#include <vector>

namespace rs {

struct GoodnessOptions {
  // hidden constant in the mean/covariance stability conditions
  double stability_constant = 2.0;
  // alpha defaults to 3 eps / ln(1/eps)
  double alpha = 0.0;
  uint64_t seed = 1;
  // rows used to place the worst-case trimming thresholds
  int64_t pilot_rows = 200000;
};

struct GoodnessItem {
  std::string condition;  // "1a_mean", "1b_covariance", "2a_poly_tail_mass", ...
  bool passed = true;
  double worst = 0.0;  // largest measured left-hand side over the probes
  double bound = 0.0;
  int probes = 0;
  std::string note;
};

struct GoodnessReport {
  double epsilon = 0.0, alpha = 0.0;
  int k = 0;
  int64_t rows = 0;
  std::vector<GoodnessItem> items;
  bool passed() const;
  const GoodnessItem& item(const std::string& name) const;
};

// Monte Carlo audit of the inlier goodness conditions over `trials` random sparse probes plus
// data-driven probes, in one streaming pass (plus a pilot pass for trimming thresholds).
//  1a/1b: mean and covariance deviation along k-sparse v at w == 1 and at the worst
//         alpha-trimming along each probe.
//  2a/2b: tails of p(x) = (x-mu)^T A (x-mu) - tr A over symmetric A on a k x k block with
//         ||A||_F = sqrt(ln(1/eps)) (capped by ||A||_op <= 1).
//  2c:    E[p(X) 1(h(X) > 100 ln(1/eps))] for h = 1 + v^T(x - mu), best effort.
//  3:     Pr[|v^T(X - mu)| >= 40 ln(1/eps)].
GoodnessReport check_goodness(const Samples& inliers, const Vec& mu, double epsilon, int k,
                              int trials, const GoodnessOptions& opt = {});

// Empirical Pr[p(X) > t] for p(x) = (x-mu)^T A (x-mu) - tr A, one value per threshold.
std::vector<double> quadratic_tail(const Samples& s, const Vec& mu, const Mat& A,
                                   const std::vector<double>& ts);

struct HansonWrightRow {
  double t, empirical, bound;
  bool passed;
};
// Pr[|X^T A X - tr A| > t] for X ~ N(0, I_d) against 2 exp(-c min(t^2, t)).
std::vector<HansonWrightRow> hanson_wright_check(const Mat& A, int64_t n, uint64_t seed,
                                                 const std::vector<double>& ts, double c = 0.01);

}  // namespace rs
