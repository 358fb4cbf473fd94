#include "robust_sparse/estimators.hpp"

#include <stdexcept>

namespace rs {

Vec empirical_mean(const Samples& s) {
  if (s.rows() == 0) throw std::invalid_argument("empirical_mean: empty input");
  return s.unit_scatter()->mean();
}

Vec coordinate_median(const Samples& s) {
  if (s.rows() == 0) throw std::invalid_argument("coordinate_median: empty input");
  return column_quantiles(s, {0.5}).row(0).transpose();
}

BaselineResult baseline_single_direction(SamplesPtr s, double eps, int k,
                                         const std::vector<uint8_t>* labels, int max_rounds) {
  if (!(eps > 0 && eps < 0.5)) throw std::invalid_argument("baseline: epsilon must lie in (0, 0.5)");
  BaselineResult b;
  WeightVector w = preprocess(s, eps, k, 1.0, max_rounds, &b.report, labels);
  MomentTracker mt(s);  // reuses the cached unit scatter
  mt.update(w);
  b.mu_hat = truncate_top_k(mt.moments().mu_w, std::min(k, s->dim()));
  return b;
}

}  // namespace rs
