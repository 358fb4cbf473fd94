#pragma once

#include "robust_sparse/samples.hpp"

#include <cstdint>
#include <vector>

namespace rs {

struct WeightVector {
  std::vector<double> w;

  WeightVector() = default;
  explicit WeightVector(int64_t n, double value = 1.0) : w(size_t(n), value) {}
  explicit WeightVector(std::vector<double> v) : w(std::move(v)) {}
  int64_t size() const { return int64_t(w.size()); }
  double sum() const;
  // sum(w) / n
  double total_mass() const;
  double operator[](int64_t i) const { return w[size_t(i)]; }
};

struct WeightedMoments {
  Vec mu_w;
  Mat sigma_w;
  double mass = 0.0;  // sum(w) / n
};

WeightedMoments weighted_moments(const Samples& s, const WeightVector& w,
                                 ScatterPrecision p = ScatterPrecision::Auto);
WeightedMoments moments_from(const Scatter& sc);

// Weighted scatter kept in sync with a weight vector. Small weight changes are applied
// as signed rank updates over the changed rows only; large ones trigger a full pass.
class MomentTracker {
 public:
  MomentTracker(SamplesPtr s, WeightVector w, ScatterPrecision p = ScatterPrecision::Auto);
  // all-ones weights reuse the source's cached scatter
  explicit MomentTracker(SamplesPtr s, ScatterPrecision p = ScatterPrecision::Auto);

  void update(const WeightVector& w_new);
  WeightedMoments moments() const { return moments_from(sc_); }
  const Scatter& scatter() const { return sc_; }
  const WeightVector& weights() const { return w_; }
  const Samples& samples() const { return *s_; }
  SamplesPtr samples_ptr() const { return s_; }
  // from-scratch moments for consistency checks
  WeightedMoments recompute() const;
  int64_t full_passes() const { return full_passes_; }
  int64_t incremental_rows() const { return incremental_rows_; }

 private:
  SamplesPtr s_;
  WeightVector w_;
  ScatterPrecision p_;
  Scatter sc_;
  int64_t full_passes_ = 0, incremental_rows_ = 0;
};

struct FilterResult {
  WeightVector w;
  int iterations = 0;       // passes that changed weights
  int64_t budget = 0;       // ceil(tau_max / (e s))
  double expectation_in = 0.0, expectation_out = 0.0;  // E_P[w tau]
  bool fired() const { return iterations > 0; }
  bool exhausted = false;   // stopped by the budget while still above s beta
};

// Multiplicative down-weighting w' <- w' (1 - tau / tau_max) while E_P[w' tau] > s beta,
// tau_max taken over points that still have positive weight. Weights under 1e-12 snap to 0.
FilterResult downweight_filter(const WeightVector& w, const std::vector<double>& scores, double s,
                               double beta);

struct MassSplit {
  double inlier = 0.0;   // (1/n) sum over inliers of (w - w')
  double outlier = 0.0;  // (1/n) sum over outliers of (w - w')
  double inlier_mean = 0.0, outlier_mean = 0.0;  // E_G[w - w'], E_B[w - w']
};
MassSplit mass_removed(const WeightVector& before, const WeightVector& after,
                       const std::vector<uint8_t>& labels);

// (1 - eps) E_G[w tau] < s, i.e. (1/n) sum over inliers of w tau < s.
bool filter_precondition(const WeightVector& w, const std::vector<double>& scores,
                         const std::vector<uint8_t>& labels, double s);

// (1 - eps) E_G[w - w'] < eps / (beta - 1) E_B[w - w'], written over the n points directly.
// Vacuous when nothing was removed.
bool filter_guarantee_holds(const MassSplit& m, double beta);

}  // namespace rs
