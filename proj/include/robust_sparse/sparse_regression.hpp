#pragma once

#include "robust_sparse/sparse_pca.hpp"

#include <optional>
#include <string>
#include <vector>

namespace rs {

struct RegressionConfig {
  double epsilon = 0.05;
  int k = 1;
  std::optional<double> sigma;        // reporting only
  std::optional<double> ell_divisor;  // default ln(1/eps); ell = sigma_y / divisor
  MeanConfig mean_config;             // epsilon and k are set from this config
  uint64_t seed = 0;
  double alpha_exclusion = 0.1;  // |alpha| >= alpha_exclusion * sigma_y
  int max_alpha_draws = 5;
  int64_t min_slice_rows = 200;

  double ell_divisor_value() const;
  void validate() const;
};

// Trimmed second moment of the responses: an estimate of sigma_y^2 = sigma^2 + ||beta||^2.
double robust_sigma_y(const std::vector<double>& ys, double eps);

// Law of X given y = alpha: N(alpha beta / sigma_y^2, I - beta beta^T / sigma_y^2).
GaussianLaw regression_conditional_oracle(const Vec& beta, double sigma, double alpha);

// Rows with y in [alpha - ell, alpha + ell], copied unchanged.
Slice response_slice(const Samples& x, const std::vector<double>& y, double alpha, double ell,
                     const std::vector<uint8_t>* labels = nullptr);

// (sigma_y^2 / alpha) beta_slice, truncated to its top k coordinates.
Vec regression_rescale(const Vec& beta_slice, double sigma_y2, double alpha, int k);

struct RegressionTrace {
  double sigma_y2 = 0.0;
  double alpha = 0.0;
  double alpha_center = 0.0;  // slice_center(alpha, ell, sigma_y^2), used in the rescaling
  int alpha_draws = 0;
  double ell = 0.0;
  int64_t slice_rows = 0;
  double slice_outlier_fraction = 0.0;
  MeanRunTrace inner;
  Vec beta_slice;  // inner estimate of alpha beta / sigma_y^2
  std::vector<std::string> warnings;
};

struct RegressionResult {
  Vec beta_hat;
  RegressionTrace trace;
};

RegressionResult robust_sparse_regression(SamplesPtr x, const std::vector<double>& y,
                                          const RegressionConfig& cfg,
                                          const std::vector<uint8_t>* labels = nullptr);

// Least squares without intercept over all rows.
Vec ordinary_least_squares(const Samples& x, const std::vector<double>& y);
// Least squares restricted to the given columns, embedded in R^d.
Vec support_least_squares(const Samples& x, const std::vector<double>& y, const std::vector<int>& cols);

}  // namespace rs
