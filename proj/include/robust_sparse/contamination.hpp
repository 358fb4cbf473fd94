#pragma once

#include "robust_sparse/samples.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace rs {

enum class Task { mean, pca, regression };

// sparse_shift / evasive_tail: point mass at mu + delta*u.
// dense_cluster: N(mu + delta*c_j, I) around `clusters` dense unit directions c_j.
// custom_points: rows of `points`, picked uniformly.
// fake_spike (pca): z - (u.z)u + s*gamma*u, a planted spike along u orthogonal to v.
// flipped_response (regression): x ~ N(0, I), y = -x.beta + sigma*g.
enum class Adversary {
  none,
  sparse_shift,
  dense_cluster,
  evasive_tail,
  custom_points,
  fake_spike,
  flipped_response
};

std::string to_string(Task t);
Task task_from_string(const std::string& s);
std::string to_string(Adversary a);
Adversary adversary_from_string(const std::string& s);

struct ContaminationSpec {
  double epsilon = 0.0;
  Adversary adversary = Adversary::none;
  std::optional<double> delta;        // shift magnitude; per-kind default when unset
  int support_size = 0;               // support of u; 0 means k
  int clusters = 1;                   // dense_cluster
  RowMatrix points;                   // custom_points (d columns, d+1 for regression)
  std::optional<double> spike_scale;  // fake_spike gamma; default sqrt(1 + 2 rho / eps)
  uint64_t seed = 0;

  void validate(Task task, int d, int k) const;
};

struct Truth {
  Vec mu;  // mean task; zero for the others
  double rho = 0.0;
  Vec v;
  Vec beta;
  double sigma = 0.0;
  Vec adversary_direction;  // u, empty when the adversary has none
  double adversary_delta = 0.0;
};

struct Dataset {
  Task task = Task::mean;
  int k = 1;
  uint64_t seed = 0;
  ContaminationSpec contamination;
  SamplesPtr x;
  std::vector<double> y;  // regression responses
  std::shared_ptr<const std::vector<uint8_t>> labels;  // 1 = outlier; null when unknown
  int64_t outliers = 0;
  std::optional<Truth> truth;

  int64_t n() const { return x ? x->rows() : 0; }
  int d() const { return x ? x->dim() : 0; }
  bool is_outlier(int64_t i) const { return labels && (*labels)[i] != 0; }
};

// Counter-generated rows: row i is a pure function of (seed, i), so nothing is stored
// beyond the labels. Bit-identical to the materialized form.
class SyntheticSamples : public Samples {
 public:
  struct Model {
    Task task = Task::mean;
    int d = 0;
    uint64_t seed = 0;
    Vec mu;    // added to inliers (mean task)
    Vec v;     // spike direction (pca)
    double rho = 0.0;
    Adversary adversary = Adversary::none;
    Vec u;     // adversary direction
    double delta = 0.0;
    double gamma = 0.0;
    RowMatrix centers;  // dense_cluster
    RowMatrix points;   // custom_points, first d columns
    std::shared_ptr<const std::vector<uint8_t>> labels;
  };

  explicit SyntheticSamples(Model m);
  int64_t rows() const override { return int64_t(m_.labels->size()); }
  int dim() const override { return m_.d; }
  void read_row(int64_t i, double* out) const override;
  void read_entries(int64_t i, const int* cols, int m, double* out) const override;
  const Model& model() const { return m_; }

 private:
  Model m_;
  std::vector<int> u_support_;
  int pick(int64_t i, int count) const;
};

struct MeanTaskParams {
  std::optional<Vec> mu;  // default: random k-sparse, magnitudes in [lo, hi], random signs
  double magnitude_lo = 1.0, magnitude_hi = 2.0;
};
struct PcaTaskParams {
  double rho = 1.0;
  std::optional<Vec> v;  // default: random k-sparse unit vector
};
struct RegressionTaskParams {
  std::optional<Vec> beta;  // default: random k-sparse with norm beta_norm
  double beta_norm = 1.0;
  double sigma = 1.0;
  double max_norm_ratio = 10.0;  // refuse ||beta|| > ratio * sigma
};

Dataset gen_mean_task(int64_t n, int d, int k, const MeanTaskParams& p,
                      const ContaminationSpec& c);
Dataset gen_pca_task(int64_t n, int d, int k, const PcaTaskParams& p, const ContaminationSpec& c);
Dataset gen_regression_task(int64_t n, int d, int k, const RegressionTaskParams& p,
                            const ContaminationSpec& c);

// Random k-sparse unit vector with the given magnitude range before normalization.
Vec random_sparse_unit(uint64_t seed, uint64_t stream, int d, int k, double lo = 0.5,
                       double hi = 1.5);

// Rows whose label is inlier (simulation only).
SamplesPtr inlier_view(const Dataset& ds);
// Copy every row into memory.
std::shared_ptr<DenseSamples> materialize(const Samples& s);

// CSV with header "# d=<d> task=<mean|pca|reg> seed=<s>"; regression rows carry y last.
// Labels go to <stem>.labels and truth to <stem>.truth.json next to the CSV.
void write_dataset(const Dataset& ds, const std::string& csv_path);
Dataset load_dataset(const std::string& csv_path);
std::string labels_path(const std::string& csv_path);
std::string truth_path(const std::string& csv_path);

}  // namespace rs
