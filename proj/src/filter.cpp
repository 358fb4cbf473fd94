#include "robust_sparse/filter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rs {

double WeightVector::sum() const { return std::accumulate(w.begin(), w.end(), 0.0); }

double WeightVector::total_mass() const { return w.empty() ? 0.0 : sum() / double(w.size()); }

WeightedMoments moments_from(const Scatter& sc) {
  if (!(sc.weight > 0)) throw std::runtime_error("degenerate weights: total weight is zero");
  WeightedMoments m;
  m.mu_w = sc.mean();
  m.sigma_w = sc.covariance();
  m.mass = sc.weight / double(sc.rows);
  return m;
}

WeightedMoments weighted_moments(const Samples& s, const WeightVector& w, ScatterPrecision p) {
  if (w.size() != s.rows()) throw std::invalid_argument("weight vector length does not match samples");
  return moments_from(compute_scatter(s, &w.w, s.pilot_shift(), p));
}

namespace {
Scatter copy_without_norms(const Scatter& s) {
  Scatter c;
  c.shift = s.shift;
  c.sum = s.sum;
  c.outer = s.outer;
  c.weight = s.weight;
  c.rows = s.rows;
  return c;
}
}  // namespace

MomentTracker::MomentTracker(SamplesPtr s, WeightVector w, ScatterPrecision p)
    : s_(std::move(s)), w_(std::move(w)), p_(p) {
  if (w_.size() != s_->rows()) throw std::invalid_argument("weight vector length does not match samples");
  sc_ = compute_scatter(*s_, &w_.w, s_->pilot_shift(), p_);
  ++full_passes_;
}

MomentTracker::MomentTracker(SamplesPtr s, ScatterPrecision p)
    : s_(std::move(s)), w_(s_->rows(), 1.0), p_(p) {
  sc_ = copy_without_norms(*s_->unit_scatter(p_));
}

void MomentTracker::update(const WeightVector& w_new) {
  const int64_t n = s_->rows();
  if (w_new.size() != n) throw std::invalid_argument("weight vector length does not match samples");
  std::vector<int64_t> changed;
  for (int64_t i = 0; i < n; ++i)
    if (w_new.w[i] != w_.w[i]) changed.push_back(i);
  if (changed.empty()) return;
  if (int64_t(changed.size()) * 8 > n) {
    w_ = w_new;
    sc_ = compute_scatter(*s_, &w_.w, s_->pilot_shift(), p_);
    ++full_passes_;
    return;
  }
  const int d = s_->dim();
  const int64_t blk = 256;
  Mat up(d, blk), down(d, blk);
  Vec row(d);
  int nu = 0, nd = 0;
  auto flush = [&] {
    if (nu) sc_.outer.selfadjointView<Eigen::Upper>().rankUpdate(up.leftCols(nu), 1.0);
    if (nd) sc_.outer.selfadjointView<Eigen::Upper>().rankUpdate(down.leftCols(nd), -1.0);
    nu = nd = 0;
  };
  for (int64_t i : changed) {
    const double dw = w_new.w[i] - w_.w[i];
    s_->read_row(i, row.data());
    row -= sc_.shift;
    sc_.sum += dw * row;
    sc_.weight += dw;
    if (dw > 0) up.col(nu++) = std::sqrt(dw) * row;
    else down.col(nd++) = std::sqrt(-dw) * row;
    if (nu == blk || nd == blk) flush();
  }
  flush();
  sc_.outer.triangularView<Eigen::StrictlyLower>() = sc_.outer.transpose();
  incremental_rows_ += int64_t(changed.size());
  w_ = w_new;
}

WeightedMoments MomentTracker::recompute() const {
  return moments_from(compute_scatter(*s_, &w_.w, s_->pilot_shift(), ScatterPrecision::Double));
}

FilterResult downweight_filter(const WeightVector& w, const std::vector<double>& scores, double s,
                               double beta) {
  const int64_t n = w.size();
  if (int64_t(scores.size()) != n) throw std::invalid_argument("score vector length does not match weights");
  if (!(s > 0)) throw std::invalid_argument("filter threshold s must be positive");
  if (!(beta > 1)) throw std::invalid_argument("filter parameter beta must exceed 1");
  FilterResult res;
  res.w = w;
  std::vector<int64_t> active;  // points the update can touch
  double tau_max = 0, e = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double t = scores[i];
    if (!(t >= 0)) throw std::invalid_argument("scores must be nonnegative");
    if (t > 0 && w.w[i] > 0) {
      active.push_back(i);
      tau_max = std::max(tau_max, t);
      e += w.w[i] * t;
    }
  }
  e /= double(n);
  res.expectation_in = res.expectation_out = e;
  res.budget = tau_max > 0 ? int64_t(std::ceil(tau_max / (std::exp(1.0) * s))) : 0;
  auto& wv = res.w.w;
  for (int64_t it = 0; it < res.budget; ++it) {
    if (!(e > s * beta)) break;
    double m = 0;
    for (int64_t i : active)
      if (wv[i] > 0) m = std::max(m, scores[i]);
    if (!(m > 0)) break;
    double acc = 0;
    for (int64_t i : active) {
      double& wi = wv[i];
      if (wi <= 0) continue;
      wi *= 1.0 - scores[i] / m;
      if (wi < 1e-12) wi = 0;
      acc += wi * scores[i];
    }
    e = acc / double(n);
    ++res.iterations;
  }
  res.expectation_out = e;
  res.exhausted = e > s * beta;
  return res;
}

MassSplit mass_removed(const WeightVector& before, const WeightVector& after,
                       const std::vector<uint8_t>& labels) {
  const int64_t n = before.size();
  if (after.size() != n || int64_t(labels.size()) != n)
    throw std::invalid_argument("mass_removed: size mismatch");
  MassSplit m;
  int64_t nb = 0;
  for (int64_t i = 0; i < n; ++i) {
    double dlt = before.w[i] - after.w[i];
    if (labels[i]) {
      m.outlier += dlt;
      ++nb;
    } else {
      m.inlier += dlt;
    }
  }
  const int64_t ng = n - nb;
  m.inlier_mean = ng ? m.inlier / double(ng) : 0.0;
  m.outlier_mean = nb ? m.outlier / double(nb) : 0.0;
  m.inlier /= double(n);
  m.outlier /= double(n);
  return m;
}

bool filter_precondition(const WeightVector& w, const std::vector<double>& scores,
                         const std::vector<uint8_t>& labels, double s) {
  double acc = 0;
  for (size_t i = 0; i < scores.size(); ++i)
    if (!labels[i]) acc += w.w[i] * scores[i];
  return acc / double(scores.size()) < s;
}

bool filter_guarantee_holds(const MassSplit& m, double beta) {
  if (m.inlier == 0 && m.outlier == 0) return true;
  return m.inlier < m.outlier / (beta - 1.0);
}

}  // namespace rs
