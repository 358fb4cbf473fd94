#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <vector>

namespace rs {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Float accumulation inside row blocks, double across blocks. Auto picks Mixed
// once rows*d^2 is large enough that the difference is below sampling noise.
enum class ScatterPrecision { Auto, Double, Mixed };

// Shifted weighted sums: outer = sum w (x-c)(x-c)^T, sum = sum w (x-c).
struct Scatter {
  Vec shift;
  Vec sum;
  Mat outer;
  double weight = 0.0;
  int64_t rows = 0;
  // ||x_i - shift||^2 per row; filled for unweighted passes only
  std::vector<float> row_sqdist;

  Vec mean() const;
  Mat covariance() const;
  Scatter recentered(const Vec& c) const;
  // rank-one edit for a single row whose weight changes by dw
  void add_row(const double* x, double dw);
};

class Samples;
using SamplesPtr = std::shared_ptr<const Samples>;

// Row source for estimators. Rows may be stored or regenerated on demand.
class Samples : public std::enable_shared_from_this<Samples> {
 public:
  virtual ~Samples() = default;
  virtual int64_t rows() const = 0;
  virtual int dim() const = 0;
  virtual void read_row(int64_t i, double* out) const = 0;
  virtual void read_rows(int64_t first, int64_t count, double* out) const;
  virtual void read_entries(int64_t i, const int* cols, int m, double* out) const;

  // Shift used by every scatter over this source and its views.
  virtual Vec pilot_shift() const;
  // Cached sum over all rows with unit weights.
  std::shared_ptr<const Scatter> unit_scatter(ScatterPrecision p = ScatterPrecision::Auto) const;
  // Interleaved halves (rows part, part+2, part+4, ...). A half keeps its base alive; the
  // base only tracks the halves weakly but keeps their unit scatters, so a half recreated
  // after the previous one was dropped reuses the cached pass.
  SamplesPtr half(int part) const;

 protected:
  virtual bool is_view() const { return false; }
  virtual std::shared_ptr<const Scatter> compute_unit_scatter(ScatterPrecision p) const;

 private:
  mutable std::mutex cache_mu_;
  mutable std::shared_ptr<const Scatter> unit_cache_;
  mutable std::weak_ptr<const Samples> halves_[2];
  mutable std::shared_ptr<const Scatter> half_scatter_[2];
  mutable bool have_pilot_ = false;
  mutable Vec pilot_;
  friend class StridedSamples;
  friend class ColumnSubset;
  Vec cached_pilot() const;
};

class DenseSamples : public Samples {
 public:
  explicit DenseSamples(RowMatrix x) : x_(std::move(x)) {}
  int64_t rows() const override { return x_.rows(); }
  int dim() const override { return int(x_.cols()); }
  void read_row(int64_t i, double* out) const override;
  void read_rows(int64_t first, int64_t count, double* out) const override;
  void read_entries(int64_t i, const int* cols, int m, double* out) const override;
  const RowMatrix& matrix() const { return x_; }

 private:
  RowMatrix x_;
};

// rows offset, offset+step, ...
class StridedSamples : public Samples {
 public:
  StridedSamples(SamplesPtr base, int64_t offset, int64_t step);
  int64_t rows() const override { return rows_; }
  int dim() const override { return base_->dim(); }
  void read_row(int64_t i, double* out) const override;
  void read_entries(int64_t i, const int* cols, int m, double* out) const override;
  Vec pilot_shift() const override { return base_->pilot_shift(); }
  int64_t base_index(int64_t i) const { return offset_ + i * step_; }
  const SamplesPtr& base() const { return base_; }

 protected:
  bool is_view() const override { return true; }
  std::shared_ptr<const Scatter> compute_unit_scatter(ScatterPrecision p) const override;

 private:
  SamplesPtr base_;
  int64_t offset_, step_, rows_;
  int base_part_ = -1;  // set when created by base_->half()
  friend class Samples;
};

class IndexedSamples : public Samples {
 public:
  IndexedSamples(SamplesPtr base, std::vector<int64_t> index);
  int64_t rows() const override { return int64_t(index_.size()); }
  int dim() const override { return base_->dim(); }
  void read_row(int64_t i, double* out) const override { base_->read_row(index_[i], out); }
  void read_entries(int64_t i, const int* cols, int m, double* out) const override {
    base_->read_entries(index_[i], cols, m, out);
  }
  Vec pilot_shift() const override { return base_->pilot_shift(); }
  const std::vector<int64_t>& index() const { return index_; }

 protected:
  bool is_view() const override { return true; }

 private:
  SamplesPtr base_;
  std::vector<int64_t> index_;
};

// Coordinates `cols` of every row, in that order.
class ColumnSubset : public Samples {
 public:
  ColumnSubset(SamplesPtr base, std::vector<int> cols);
  int64_t rows() const override { return base_->rows(); }
  int dim() const override { return int(cols_.size()); }
  void read_row(int64_t i, double* out) const override {
    base_->read_entries(i, cols_.data(), int(cols_.size()), out);
  }
  void read_entries(int64_t i, const int* cols, int m, double* out) const override;
  Vec pilot_shift() const override;
  const std::vector<int>& columns() const { return cols_; }

 protected:
  bool is_view() const override { return true; }
  std::shared_ptr<const Scatter> compute_unit_scatter(ScatterPrecision p) const override;

 private:
  SamplesPtr base_;
  std::vector<int> cols_;
  std::shared_ptr<const Scatter> peek_base_scatter() const;
};

// Sees each sub-block of rows during compute_scatter: (worker, rows, count), rows row-major,
// already shifted and scaled by sqrt(weight). Lets another statistic share the pass.
using RowVisitor = std::function<void(int, const double*, int64_t)>;

// Weighted scatter over all rows; weights == nullptr means unit weights.
Scatter compute_scatter(const Samples& s, const std::vector<double>* weights, const Vec& shift,
                        ScatterPrecision p = ScatterPrecision::Auto, bool keep_row_norms = false,
                        const RowVisitor* visit = nullptr);

// Exact per-column quantiles q in [0,1] (order statistic floor(q*(n-1))) by streaming passes.
Mat column_quantiles(const Samples& s, const std::vector<double>& qs);

// Worker count from ROBUST_SPARSE_THREADS (default: hardware concurrency).
int worker_count();
// Calls f(worker, block) for block in [0, nblocks); blocks are dealt round-robin so
// the reduction order only depends on the worker count.
void parallel_blocks(int64_t nblocks, const std::function<void(int, int64_t)>& f);

}  // namespace rs
