#pragma once

#include "robust_sparse/sparse_mean.hpp"

#include <optional>
#include <string>
#include <vector>

namespace rs {

struct PcaConfig {
  double epsilon = 0.05;
  int k = 1;
  double rho = 1.0;
  double alpha_exclusion = 0.1;
  std::optional<double> ell;  // default 1/ln(1/eps)
  MeanConfig mean_config;     // epsilon and k are set from this config (k -> 2k)
  uint64_t seed = 0;
  int max_alpha_draws = 5;
  int64_t warm_start_rows = 200000;
  int64_t min_slice_rows = 200;

  double ell_value() const;
  void validate() const;
};

// Trimmed-Gaussian correction: E[Z^2 | |Z| <= z] for z = Phi^-1(1 - p).
double trimmed_gaussian_factor(double p);

// Second moment about the median of the values strictly inside the p and 1-p order
// statistics, p = min(4 eps, 0.45), divided by trimmed_gaussian_factor(p). Values farther
// than max(4, sqrt(2 ln n)) first-pass standard deviations from the median are dropped and
// the estimate is recomputed on the rest.
double robust_variance_1d(std::vector<double> values, double eps);

struct WarmStartReport {
  std::vector<int> support;  // row support of the final fkk maximizer
  std::vector<double> fkk_values;  // ||Sigma_w - I||_{F,k,k} per round
  int filter_rounds = 0;
  int64_t removed = 0;
  int64_t sample_rows = 0;
};

// Stand-in for an O(eps sqrt(log 1/eps) / rho) sparse PCA, run on a strided row subsample:
// take the row support S of the fkk maximizer of Sigma_w - I, the top eigenvector e of
// Sigma_w on S, and hard-remove the chi-square tail of (e.(x - c))^2 / var_robust - 1;
// repeat until no tail violates. The top eigenvector on the final S, embedded, is returned.
Vec warm_start(SamplesPtr s, double eps, int k, double rho, WarmStartReport* report = nullptr,
               int64_t max_rows = 200000);

// E[t | t in [alpha - ell, alpha + ell]] for t ~ N(0, var). The conditional means used by
// both slice reductions are linear in the conditioning value, so averaging over the interval
// replaces alpha by this centre.
double slice_center(double alpha, double ell, double var);

struct Slice {
  std::shared_ptr<DenseSamples> x;
  std::vector<int64_t> rows;    // source row of each slice row
  std::vector<uint8_t> labels;  // filled when source labels are given
  int64_t outliers = 0;
  double outlier_fraction = 0.0;
};

// Rows with w.x in [alpha - ell, alpha + ell], mapped to x - (w.x) w. With refill_seed the
// w-component is replaced by an independent N(0,1) draw instead of zero, which makes the
// inlier law exactly conditional_law_oracle's N(mu~, Sigma~).
Slice conditional_slice(const Samples& s, const Vec& w, double alpha, double ell,
                        const std::vector<uint8_t>* labels = nullptr,
                        std::optional<uint64_t> refill_seed = std::nullopt);

// Law of Proj_{w perp}(X) + g w, X ~ N(0, I + rho v v^T) given w.X = alpha, g ~ N(0,1).
GaussianLaw conditional_law_oracle(const Vec& w, const Vec& v, double rho, double alpha);

// v^ = z (1 + rho y) / (rho sqrt(y) alpha) + w sqrt(y), unnormalized.
Vec pca_recombine(const Vec& z, const Vec& w, double y, double rho, double alpha);

struct PcaTrace {
  WarmStartReport warm;
  Vec w;
  double y_prime = 0.0, y = 0.0;
  double alpha = 0.0;
  double alpha_center = 0.0;  // slice_center(alpha, ell, y'), used in the recombination
  int alpha_draws = 0;
  int64_t slice_rows = 0;
  double slice_outlier_fraction = 0.0;
  MeanRunTrace inner;
  Vec z;
  double variance_along_vhat = 0.0;  // robust estimate of v^T Sigma v for v = v^
  std::vector<std::string> warnings;
};

struct PcaResult {
  Vec v_hat;
  PcaTrace trace;
};

PcaResult robust_sparse_pca(SamplesPtr s, const PcaConfig& cfg,
                            const std::vector<uint8_t>* labels = nullptr);

// Top eigenvector of the sample covariance.
Vec empirical_pca(const Samples& s);

// Values w.x for every row (gathers supp(w) only).
std::vector<double> project_values(const Samples& s, const Vec& w);

}  // namespace rs
