#pragma once

#include "robust_sparse/filter.hpp"
#include "robust_sparse/samples.hpp"
#include "robust_sparse/sparse_linalg.hpp"

#include <optional>
#include <string>
#include <vector>

namespace rs {

struct MeanConfig {
  double epsilon = 0.05;
  int k = 1;
  double C_stop = 10.0;
  std::optional<int> r_override;
  double score_threshold_mult = 200.0;
  std::optional<double> beta;  // default ln(1/eps)
  std::optional<double> s;     // default eps
  double split_fraction = 0.5;  // share of rows held out for the dense step
  int64_t max_outer_iters = 0;  // 0: 50 d / (n eps) clamped to [100, 1e6]
  double C_pre = 24.0;
  // dense fallback: median instead of mean along eigen-directions with eigenvalue above this * eps
  double median_eig_mult = 2.0;
  int preprocess_max_rounds = 50;
  bool run_preprocess = true;
  bool allow_large_epsilon = false;  // refuse eps > 0.2 otherwise
  bool truncate_output = true;       // final t_k
  bool check_invariants = true;
  int64_t min_samples = 100;
  ScatterPrecision precision = ScatterPrecision::Auto;

  int r() const;
  double beta_value() const;
  double s_value() const;
  int64_t outer_cap(int64_t n, int d) const;
  void validate() const;
};

struct PreprocessReport {
  int rounds = 0;
  int64_t removed = 0;
  int64_t removed_outliers = 0;  // when labels are known
  double fkk_value = 0.0;        // final ||Sigma_T - I||_{F,2k,2k}
  double threshold = 0.0;
  bool met = false;              // fkk_value <= threshold on exit
  bool no_tail_violation = false;
  bool cap_hit = false;
};

// Single-direction tail filter at sparsity 2k: while ||Sigma_T - I||_{F,2k,2k} exceeds
// C_pre eps ln^2(1/eps), score q(x) = (x-mu_T)^T B (x-mu_T) - tr B along the maximizer B and
// hard-remove q > 2 sqrt(t) + 2t at the smallest t whose empirical tail exceeds
// (1 + ln(1/eps)) e^-t. Returns 0/1 weights over `s`.
WeightVector preprocess(SamplesPtr s, double eps, int k, double C_pre, int max_rounds,
                        PreprocessReport* report = nullptr,
                        const std::vector<uint8_t>* labels = nullptr,
                        ScatterPrecision p = ScatterPrecision::Auto);

// w(x) = 1 iff ||x - mu_T|| <= 10 sqrt(d) ln(d/eps), mu_T the mean under `base` (all ones
// when omitted); points with base weight 0 stay at 0.
WeightVector naive_prune(SamplesPtr s, double eps, const WeightVector* base = nullptr);

struct MeanIteration {
  double g = 0.0;
  std::vector<double> h;
  bool stop = false;           // (1/r) g <= C_stop eps
  double mass_removed = 0.0;   // (1/n) sum (w - w')
  double inlier_removed = 0.0, outlier_removed = 0.0;  // E_G, E_B of (w - w')
  int filter_passes = 0;
  double identity_gap = 0.0;   // |E_{P_w}[p~] - g_r|
};

struct DenseMeanReport {
  int iterations = 0;
  double top_eig_avg = 0.0;
  bool stalled = false;
  bool cap_hit = false;
  std::vector<double> eigenvalues;  // top r of Sigma_w - I at exit
  Mat median_directions;            // columns; may be empty
};

struct MeanRunTrace {
  PreprocessReport preprocess;
  int64_t pruned = 0;          // working half
  int64_t pruned_holdout = 0;  // holdout, centred at the working half's preprocessed mean
  std::vector<MeanIteration> iterations;
  std::string stop_reason;  // threshold | stalled | iteration_cap
  std::vector<int> H;
  Vec mu1, mu2;
  DenseMeanReport dense;
  double inlier_mass_removed = 0.0, outlier_mass_removed = 0.0;  // cumulative E_G, E_B
  double final_mass = 1.0;
  std::vector<std::string> warnings;
  std::vector<std::string> invariant_violations;
  int64_t n_work = 0, n_holdout = 0;
};

struct MeanResult {
  Vec mu_hat;
  MeanRunTrace trace;
};

// Full pipeline. `labels` (1 = outlier, indexed like `s`) only feed the trace.
MeanResult robust_sparse_mean(SamplesPtr s, const MeanConfig& cfg,
                              const std::vector<uint8_t>* labels = nullptr);

// Dense fallback on a handful of coordinates: eigen-subspace tail filter until the average
// top-r eigenvalue of Sigma_w - I is at most C_stop eps, then the weighted mean, except along
// top-r eigen-directions with eigenvalue above median_eig_mult * eps where the weighted
// median of the projections is used.
Vec dense_robust_mean(SamplesPtr s, double eps, const MeanConfig& cfg,
                      DenseMeanReport* report = nullptr, const WeightVector* initial = nullptr);

// Weighted median of the values with weights w (lower median).
double weighted_median(std::vector<std::pair<double, double>> value_weight);

struct CertificateResult {
  bool applicable = false;  // precondition certified
  bool holds = true;
  double opk = 0.0;         // certified bound on ||Sigma_w - I||_{op,k}
  double lhs = 0.0, rhs = 0.0;
};

// If ||Sigma_w - I||_{op,k} <= lambda (exact oracle for d <= 14, (F,k,k) upper bound beyond)
// and inlier retained mass >= 1 - alpha, check
// ||mu_w - mu||_{2,k} <= C (alpha sqrt(ln(1/alpha)) + sqrt(lambda eps) + eps + sqrt(alpha eps ln(1/alpha))).
CertificateResult certificate_check(const WeightedMoments& m, const Vec& mu_true, double eps,
                                    double alpha, int k, double lambda, double inlier_mass,
                                    double C_cert = 10.0);

// Hard-threshold tail rule shared by the preprocess and dense filters: over the grid
// t = 0.5, 0.75, ..., return the cutoff tau_t = 2 sqrt(dof t) + 2t at the smallest t whose
// empirical tail fraction exceeds slack * e^-t, or NaN when none does.
double chi_square_tail_cutoff(std::vector<double> scores, double slack, int dof = 1);

// Scores p~(x) = (x - mu)^T A (x - mu) - tr A for every row, A given by its nonzeros.
std::vector<double> quadratic_scores(const Samples& s, const Vec& mu,
                                     const std::vector<SparseEntry>& A);

}  // namespace rs
