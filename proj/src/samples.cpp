#include "robust_sparse/samples.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <thread>

extern "C" void openblas_set_num_threads(int);

namespace rs {

namespace {
constexpr int64_t kBlockRows = 2048;
constexpr int64_t kSubRows = 512;
constexpr double kMixedThreshold = 4e10;  // rows * d^2

void blas_single_thread() {
  static std::once_flag once;
  std::call_once(once, [] { openblas_set_num_threads(1); });
}
}  // namespace

int worker_count() {
  static const int n = [] {
    if (const char* e = std::getenv("ROBUST_SPARSE_THREADS")) {
      int v = std::atoi(e);
      if (v >= 1) return v;
    }
    return int(std::max(1u, std::thread::hardware_concurrency()));
  }();
  return n;
}

void parallel_blocks(int64_t nblocks, const std::function<void(int, int64_t)>& f) {
  const int t = int(std::min<int64_t>(worker_count(), std::max<int64_t>(nblocks, 1)));
  if (t <= 1) {
    for (int64_t b = 0; b < nblocks; ++b) f(0, b);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errs(t);
  for (int w = 0; w < t; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int64_t b = w; b < nblocks; b += t) f(w, b);
      } catch (...) {
        errs[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

Vec Scatter::mean() const {
  if (!(weight > 0)) throw std::runtime_error("degenerate weights: total weight is zero");
  return shift + sum / weight;
}

Mat Scatter::covariance() const {
  if (!(weight > 0)) throw std::runtime_error("degenerate weights: total weight is zero");
  Vec m = sum / weight;
  Mat c = outer / weight;
  c.noalias() -= m * m.transpose();
  return 0.5 * (c + c.transpose());
}

Scatter Scatter::recentered(const Vec& c) const {
  Scatter r;
  r.shift = c;
  Vec delta = c - shift;  // x - c = (x - shift) - delta
  r.sum = sum - weight * delta;
  r.outer = outer - sum * delta.transpose() - delta * sum.transpose() +
            weight * delta * delta.transpose();
  r.weight = weight;
  r.rows = rows;
  return r;
}

void Scatter::add_row(const double* x, double dw) {
  const int d = int(shift.size());
  Vec y = Eigen::Map<const Vec>(x, d) - shift;
  sum += dw * y;
  outer.selfadjointView<Eigen::Upper>().rankUpdate(y, dw);
  outer.triangularView<Eigen::StrictlyLower>() = outer.transpose();
  weight += dw;
}

void Samples::read_rows(int64_t first, int64_t count, double* out) const {
  const int d = dim();
  for (int64_t r = 0; r < count; ++r) read_row(first + r, out + r * d);
}

void Samples::read_entries(int64_t i, const int* cols, int m, double* out) const {
  thread_local std::vector<double> row;
  row.resize(dim());
  read_row(i, row.data());
  for (int c = 0; c < m; ++c) out[c] = row[cols[c]];
}

Vec Samples::cached_pilot() const {
  std::lock_guard<std::mutex> lk(cache_mu_);
  if (!have_pilot_) {
    const int d = dim();
    const int64_t m = std::min<int64_t>(rows(), 1024);
    pilot_ = Vec::Zero(d);
    if (m > 0) {
      RowMatrix buf(m, d);
      read_rows(0, m, buf.data());
      pilot_ = buf.colwise().mean().transpose();
    }
    have_pilot_ = true;
  }
  return pilot_;
}

Vec Samples::pilot_shift() const { return cached_pilot(); }

SamplesPtr Samples::half(int part) const {
  if (part != 0 && part != 1) throw std::invalid_argument("half: part must be 0 or 1");
  std::lock_guard<std::mutex> lk(cache_mu_);
  if (auto h = halves_[part].lock()) return h;
  auto h = std::make_shared<StridedSamples>(shared_from_this(), part, 2);
  h->base_part_ = part;
  halves_[part] = h;
  return h;
}

std::shared_ptr<const Scatter> Samples::unit_scatter(ScatterPrecision p) const {
  {
    std::lock_guard<std::mutex> lk(cache_mu_);
    if (unit_cache_) return unit_cache_;
  }
  auto s = compute_unit_scatter(p);
  std::lock_guard<std::mutex> lk(cache_mu_);
  if (!unit_cache_) unit_cache_ = s;
  return unit_cache_;
}

std::shared_ptr<const Scatter> Samples::compute_unit_scatter(ScatterPrecision p) const {
  if (is_view() || rows() < 2)
    return std::make_shared<Scatter>(compute_scatter(*this, nullptr, pilot_shift(), p, true));
  // the halves are what the estimators consume, so the full scatter is their sum
  auto a = half(0)->unit_scatter(p);
  auto b = half(1)->unit_scatter(p);
  auto s = std::make_shared<Scatter>();
  s->shift = a->shift;
  s->sum = a->sum + b->sum;
  s->outer = a->outer + b->outer;
  s->weight = a->weight + b->weight;
  s->rows = a->rows + b->rows;
  s->row_sqdist.resize(rows());
  for (int64_t i = 0; i < rows(); ++i)
    s->row_sqdist[i] = (i % 2 == 0) ? a->row_sqdist[i / 2] : b->row_sqdist[i / 2];
  return s;
}

void DenseSamples::read_row(int64_t i, double* out) const {
  std::copy(x_.data() + i * x_.cols(), x_.data() + (i + 1) * x_.cols(), out);
}

void DenseSamples::read_rows(int64_t first, int64_t count, double* out) const {
  std::copy(x_.data() + first * x_.cols(), x_.data() + (first + count) * x_.cols(), out);
}

void DenseSamples::read_entries(int64_t i, const int* cols, int m, double* out) const {
  const double* r = x_.data() + i * x_.cols();
  for (int c = 0; c < m; ++c) out[c] = r[cols[c]];
}

StridedSamples::StridedSamples(SamplesPtr base, int64_t offset, int64_t step)
    : base_(std::move(base)), offset_(offset), step_(step) {
  if (step_ < 1 || offset_ < 0) throw std::invalid_argument("bad stride");
  const int64_t n = base_->rows();
  rows_ = n > offset_ ? (n - offset_ + step_ - 1) / step_ : 0;
}

std::shared_ptr<const Scatter> StridedSamples::compute_unit_scatter(ScatterPrecision p) const {
  if (base_part_ < 0) return Samples::compute_unit_scatter(p);
  {
    std::lock_guard<std::mutex> lk(base_->cache_mu_);
    if (base_->half_scatter_[base_part_]) return base_->half_scatter_[base_part_];
  }
  auto s = Samples::compute_unit_scatter(p);
  std::lock_guard<std::mutex> lk(base_->cache_mu_);
  if (!base_->half_scatter_[base_part_]) base_->half_scatter_[base_part_] = s;
  return base_->half_scatter_[base_part_];
}

void StridedSamples::read_row(int64_t i, double* out) const {
  base_->read_row(base_index(i), out);
}

void StridedSamples::read_entries(int64_t i, const int* cols, int m, double* out) const {
  base_->read_entries(base_index(i), cols, m, out);
}

IndexedSamples::IndexedSamples(SamplesPtr base, std::vector<int64_t> index)
    : base_(std::move(base)), index_(std::move(index)) {}

ColumnSubset::ColumnSubset(SamplesPtr base, std::vector<int> cols)
    : base_(std::move(base)), cols_(std::move(cols)) {
  for (int c : cols_)
    if (c < 0 || c >= base_->dim()) throw std::invalid_argument("column out of range");
}

void ColumnSubset::read_entries(int64_t i, const int* cols, int m, double* out) const {
  thread_local std::vector<int> mapped;
  mapped.resize(m);
  for (int c = 0; c < m; ++c) mapped[c] = cols_[cols[c]];
  base_->read_entries(i, mapped.data(), m, out);
}

Vec ColumnSubset::pilot_shift() const {
  Vec full = base_->pilot_shift();
  Vec r(cols_.size());
  for (size_t c = 0; c < cols_.size(); ++c) r[c] = full[cols_[c]];
  return r;
}

std::shared_ptr<const Scatter> ColumnSubset::peek_base_scatter() const {
  std::lock_guard<std::mutex> lk(base_->cache_mu_);
  return base_->unit_cache_;
}

std::shared_ptr<const Scatter> ColumnSubset::compute_unit_scatter(ScatterPrecision p) const {
  auto full = peek_base_scatter();
  if (!full) return Samples::compute_unit_scatter(p);
  auto s = std::make_shared<Scatter>();
  const int m = int(cols_.size());
  s->shift.resize(m);
  s->sum.resize(m);
  s->outer.resize(m, m);
  for (int a = 0; a < m; ++a) {
    s->shift[a] = full->shift[cols_[a]];
    s->sum[a] = full->sum[cols_[a]];
    for (int b = 0; b < m; ++b) s->outer(a, b) = full->outer(cols_[a], cols_[b]);
  }
  s->weight = full->weight;
  s->rows = full->rows;
  return s;
}

Scatter compute_scatter(const Samples& s, const std::vector<double>* weights, const Vec& shift,
                        ScatterPrecision p, bool keep_row_norms, const RowVisitor* visit) {
  const int d = s.dim();
  const int64_t n = s.rows();
  if (weights && int64_t(weights->size()) != n)
    throw std::invalid_argument("weight vector length does not match sample count");
  if (p == ScatterPrecision::Auto)
    p = double(n) * d * d > kMixedThreshold ? ScatterPrecision::Mixed : ScatterPrecision::Double;
  blas_single_thread();

  const int64_t nblocks = (n + kBlockRows - 1) / kBlockRows;
  const int workers = int(std::min<int64_t>(worker_count(), std::max<int64_t>(nblocks, 1)));
  std::vector<Mat> outer(workers, Mat::Zero(d, d));
  std::vector<Vec> sum(workers, Vec::Zero(d));
  std::vector<double> wsum(workers, 0.0);
  Scatter out;
  if (keep_row_norms) out.row_sqdist.assign(n, 0.0f);

  parallel_blocks(nblocks, [&](int w, int64_t b) {
    thread_local RowMatrix buf;
    thread_local Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> fbuf;
    thread_local Eigen::MatrixXf fout;
    const int64_t first = b * kBlockRows;
    const int64_t cnt = std::min(kBlockRows, n - first);
    const bool mixed = p == ScatterPrecision::Mixed;
    if (mixed) fout.setZero(d, d);
    // sub-blocks small enough to stay in cache; one sweep per row does shift, norm, weight, cast
    for (int64_t s0 = 0; s0 < cnt; s0 += kSubRows) {
      const int64_t m = std::min(kSubRows, cnt - s0);
      buf.resize(m, d);
      s.read_rows(first + s0, m, buf.data());
      if (mixed) fbuf.resize(m, d);
      for (int64_t r = 0; r < m; ++r) {
        double* row = buf.data() + r * d;
        double sq = 0;
        for (int j = 0; j < d; ++j) {
          row[j] -= shift[j];
          sq += row[j] * row[j];
        }
        if (keep_row_norms) out.row_sqdist[first + s0 + r] = float(sq);
        double wr = 1.0;
        if (weights) {
          wr = (*weights)[first + s0 + r];
          if (wr < 0) throw std::invalid_argument("negative weight");
        }
        Eigen::Map<Vec> rv(row, d);
        sum[w] += wr * rv;
        wsum[w] += wr;
        if (weights && wr != 1.0) rv *= std::sqrt(wr);
        if (mixed) {
          float* f = fbuf.data() + r * d;
          for (int j = 0; j < d; ++j) f[j] = float(row[j]);
        }
      }
      if (visit) (*visit)(w, buf.data(), m);
      if (mixed) {
        cblas_ssyrk(CblasColMajor, CblasUpper, CblasNoTrans, d, int(m), 1.0f, fbuf.data(), d, 1.0f,
                    fout.data(), d);
      } else {
        cblas_dsyrk(CblasColMajor, CblasUpper, CblasNoTrans, d, int(m), 1.0, buf.data(), d, 1.0,
                    outer[w].data(), d);
      }
    }
    if (mixed) outer[w].triangularView<Eigen::Upper>() += fout.cast<double>();
  });

  out.shift = shift;
  out.outer = Mat::Zero(d, d);
  out.sum = Vec::Zero(d);
  for (int w = 0; w < workers; ++w) {
    out.outer += outer[w];
    out.sum += sum[w];
    out.weight += wsum[w];
  }
  out.outer.triangularView<Eigen::StrictlyLower>() = out.outer.transpose();
  out.rows = n;
  return out;
}

Mat column_quantiles(const Samples& s, const std::vector<double>& qs) {
  const int d = s.dim();
  const int64_t n = s.rows();
  const int nq = int(qs.size());
  if (n == 0) throw std::invalid_argument("column_quantiles: no rows");
  for (double q : qs)
    if (!(q >= 0 && q <= 1)) throw std::invalid_argument("quantile outside [0,1]");
  Mat result(nq, d);

  if (n <= 200000 || double(n) * d <= 2e7) {
    // small enough to sort column by column
    RowMatrix x(n, d);
    s.read_rows(0, n, x.data());
    std::vector<double> col(n);
    for (int j = 0; j < d; ++j) {
      for (int64_t i = 0; i < n; ++i) col[i] = x(i, j);
      for (int a = 0; a < nq; ++a) {
        int64_t r = int64_t(std::floor(qs[a] * double(n - 1)));
        std::nth_element(col.begin(), col.begin() + r, col.end());
        result(a, j) = col[r];
      }
    }
    return result;
  }

  // pilot range from the first rows, then histogram, then exact pick inside the target bin
  const int nb = 1 << 14;
  const int64_t pm = std::min<int64_t>(n, 65536);
  RowMatrix pilot(pm, d);
  s.read_rows(0, pm, pilot.data());
  Vec lo(d), width(d);
  std::vector<double> col(pm);
  for (int j = 0; j < d; ++j) {
    for (int64_t i = 0; i < pm; ++i) col[i] = pilot(i, j);
    std::sort(col.begin(), col.end());
    double a = col[pm / 1000], b = col[pm - 1 - pm / 1000];
    double pad = 0.5 * (b - a) + 1e-12;
    lo[j] = a - pad;
    width[j] = (b - a + 2 * pad) / nb;
  }
  auto bin_of = [&](int j, double v) -> int {
    double t = (v - lo[j]) / width[j];
    if (t < 0) return 0;
    if (t >= nb) return nb + 1;
    return 1 + int(t);
  };
  const int64_t nblocks = (n + kBlockRows - 1) / kBlockRows;
  const int workers = int(std::min<int64_t>(worker_count(), nblocks));
  std::vector<std::vector<int64_t>> counts(workers, std::vector<int64_t>(size_t(d) * (nb + 2), 0));
  parallel_blocks(nblocks, [&](int w, int64_t b) {
    thread_local RowMatrix buf;
    const int64_t first = b * kBlockRows, cnt = std::min(kBlockRows, n - first);
    buf.resize(cnt, d);
    s.read_rows(first, cnt, buf.data());
    for (int64_t r = 0; r < cnt; ++r)
      for (int j = 0; j < d; ++j) ++counts[w][size_t(j) * (nb + 2) + bin_of(j, buf(r, j))];
  });
  for (int w = 1; w < workers; ++w)
    for (size_t t = 0; t < counts[0].size(); ++t) counts[0][t] += counts[w][t];

  // target bin and rank inside it for every (quantile, column)
  std::vector<int> tbin(size_t(nq) * d);
  std::vector<int64_t> trank(size_t(nq) * d);
  for (int j = 0; j < d; ++j) {
    const int64_t* c = &counts[0][size_t(j) * (nb + 2)];
    for (int a = 0; a < nq; ++a) {
      int64_t r = int64_t(std::floor(qs[a] * double(n - 1)));
      int64_t acc = 0;
      int bin = 0;
      while (acc + c[bin] <= r) acc += c[bin++];
      tbin[size_t(a) * d + j] = bin;
      trank[size_t(a) * d + j] = r - acc;
    }
  }
  std::vector<std::vector<double>> picked(size_t(nq) * d);
  RowMatrix buf(kBlockRows, d);
  for (int64_t first = 0; first < n; first += kBlockRows) {
    const int64_t cnt = std::min(kBlockRows, n - first);
    s.read_rows(first, cnt, buf.data());
    for (int64_t r = 0; r < cnt; ++r)
      for (int j = 0; j < d; ++j) {
        int bin = bin_of(j, buf(r, j));
        for (int a = 0; a < nq; ++a)
          if (tbin[size_t(a) * d + j] == bin) picked[size_t(a) * d + j].push_back(buf(r, j));
      }
  }
  for (int a = 0; a < nq; ++a)
    for (int j = 0; j < d; ++j) {
      auto& v = picked[size_t(a) * d + j];
      int64_t r = trank[size_t(a) * d + j];
      std::nth_element(v.begin(), v.begin() + r, v.end());
      result(a, j) = v[r];
    }
  return result;
}

}  // namespace rs
