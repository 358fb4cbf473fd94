#pragma once

#include "robust_sparse/sparse_mean.hpp"

namespace rs {

Vec empirical_mean(const Samples& s);
Vec coordinate_median(const Samples& s);

struct BaselineResult {
  Vec mu_hat;
  PreprocessReport report;
};

// One fkk direction at a time, hard tail removal, until ||Sigma_T - I||_{F,2k,2k} falls
// below eps ln^2(1/eps); returns t_k of the mean of the survivors. Uses every row.
BaselineResult baseline_single_direction(SamplesPtr s, double eps, int k,
                                         const std::vector<uint8_t>* labels = nullptr,
                                         int max_rounds = 50);

}  // namespace rs
