#include "robust_sparse/sparse_regression.hpp"

#include "robust_sparse/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace rs {

namespace {
constexpr uint64_t kStreamAlpha = 51;

void check_responses(const Samples& x, const std::vector<double>& y) {
  if (int64_t(y.size()) != x.rows()) throw std::invalid_argument("one response per row is required");
}

// X^T y over the columns `cols` (all columns when empty)
Vec cross_moment(const Samples& x, const std::vector<double>& y, const std::vector<int>& cols) {
  const int64_t n = x.rows();
  const int m = cols.empty() ? x.dim() : int(cols.size());
  const int64_t blk = 4096, nb = (n + blk - 1) / blk;
  std::vector<Vec> part(size_t(worker_count()), Vec::Zero(m));
  parallel_blocks(nb, [&](int wk, int64_t b) {
    std::vector<double> row(static_cast<size_t>(m));
    Vec& acc = part[size_t(wk)];
    for (int64_t i = b * blk, e = std::min(n, (b + 1) * blk); i < e; ++i) {
      if (cols.empty())
        x.read_row(i, row.data());
      else
        x.read_entries(i, cols.data(), m, row.data());
      acc += y[size_t(i)] * Eigen::Map<const Vec>(row.data(), m);
    }
  });
  Vec out = Vec::Zero(m);
  for (const auto& p : part) out += p;
  return out;
}

// X^T X from the cached shifted scatter
Mat gram(const Samples& x) {
  auto s = x.unit_scatter();
  const Vec& c = s->shift;
  Mat g = s->outer;
  g.triangularView<Eigen::StrictlyLower>() = g.transpose();
  g += s->sum * c.transpose() + c * s->sum.transpose() + s->weight * c * c.transpose();
  return g;
}
}  // namespace

double RegressionConfig::ell_divisor_value() const {
  return ell_divisor ? *ell_divisor : std::log(1.0 / epsilon);
}

void RegressionConfig::validate() const {
  if (!(epsilon > 0 && epsilon <= 0.2)) throw std::invalid_argument("epsilon must lie in (0, 0.2]");
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (!(ell_divisor_value() > 0)) throw std::invalid_argument("ell divisor must be positive");
  if (!(alpha_exclusion >= 0 && alpha_exclusion < 1))
    throw std::invalid_argument("alpha_exclusion must lie in [0, 1)");
  if (max_alpha_draws < 1) throw std::invalid_argument("max_alpha_draws must be at least 1");
  if (sigma && !(*sigma > 0)) throw std::invalid_argument("sigma must be positive");
}

double robust_sigma_y(const std::vector<double>& ys, double eps) {
  if (ys.size() < 100) throw std::invalid_argument("robust_sigma_y: need at least 100 responses");
  return robust_variance_1d(ys, eps);
}

GaussianLaw regression_conditional_oracle(const Vec& beta, double sigma, double alpha) {
  if (!(sigma > 0)) throw std::invalid_argument("sigma must be positive");
  const double sy2 = sigma * sigma + beta.squaredNorm();
  GaussianLaw g;
  g.mean = (alpha / sy2) * beta;
  g.cov = Mat::Identity(beta.size(), beta.size()) - beta * beta.transpose() / sy2;
  return g;
}

Slice response_slice(const Samples& x, const std::vector<double>& y, double alpha, double ell,
                     const std::vector<uint8_t>* labels) {
  check_responses(x, y);
  if (!(ell > 0)) throw std::invalid_argument("response_slice: ell must be positive");
  Slice sl;
  for (int64_t i = 0; i < x.rows(); ++i)
    if (y[size_t(i)] >= alpha - ell && y[size_t(i)] <= alpha + ell) sl.rows.push_back(i);
  if (sl.rows.empty()) throw std::runtime_error("empty slice: draw a fresh alpha");
  const int64_t m = int64_t(sl.rows.size());
  RowMatrix out(m, x.dim());
  for (int64_t r = 0; r < m; ++r) {
    const int64_t i = sl.rows[size_t(r)];
    x.read_row(i, out.row(r).data());
    if (labels) {
      sl.labels.push_back((*labels)[size_t(i)]);
      sl.outliers += (*labels)[size_t(i)] != 0;
    }
  }
  sl.outlier_fraction = double(sl.outliers) / double(m);
  sl.x = std::make_shared<DenseSamples>(std::move(out));
  return sl;
}

Vec regression_rescale(const Vec& beta_slice, double sigma_y2, double alpha, int k) {
  if (alpha == 0) throw std::invalid_argument("regression_rescale: alpha must be nonzero");
  return truncate_top_k(beta_slice * (sigma_y2 / alpha), k);
}

RegressionResult robust_sparse_regression(SamplesPtr x, const std::vector<double>& y,
                                          const RegressionConfig& cfg,
                                          const std::vector<uint8_t>* labels) {
  cfg.validate();
  check_responses(*x, y);
  const double eps = cfg.epsilon;
  const int d = x->dim(), k = std::min(cfg.k, d);
  RegressionResult res;
  auto& tr = res.trace;

  tr.sigma_y2 = robust_sigma_y(y, eps);
  if (!(tr.sigma_y2 > 0)) throw std::runtime_error("response variance estimate is not positive");
  const double sy = std::sqrt(tr.sigma_y2);
  tr.ell = sy / cfg.ell_divisor_value();

  Philox g(cfg.seed, kStreamAlpha);
  Slice sl;
  for (;;) {
    if (tr.alpha_draws >= cfg.max_alpha_draws)
      throw std::runtime_error("no usable slice after " + std::to_string(cfg.max_alpha_draws) + " alpha draws");
    const double mag = sy * (cfg.alpha_exclusion + (1 - cfg.alpha_exclusion) * g.uniform());
    tr.alpha = g.uniform() < 0.5 ? -mag : mag;
    ++tr.alpha_draws;
    try {
      sl = response_slice(*x, y, tr.alpha, tr.ell, labels);
    } catch (const std::runtime_error&) {
      continue;
    }
    if (int64_t(sl.rows.size()) >= cfg.min_slice_rows) break;
  }
  tr.slice_rows = int64_t(sl.rows.size());
  tr.slice_outlier_fraction = sl.outlier_fraction;

  MeanConfig mc = cfg.mean_config;
  mc.epsilon = eps;
  mc.k = k;
  auto inner = robust_sparse_mean(sl.x, mc, labels ? &sl.labels : nullptr);
  sl.x.reset();
  tr.inner = std::move(inner.trace);
  tr.beta_slice = inner.mu_hat;
  tr.alpha_center = slice_center(tr.alpha, tr.ell, tr.sigma_y2);
  res.beta_hat = regression_rescale(inner.mu_hat, tr.sigma_y2, tr.alpha_center, k);
  return res;
}

Vec ordinary_least_squares(const Samples& x, const std::vector<double>& y) {
  check_responses(x, y);
  if (x.rows() < x.dim()) throw std::invalid_argument("least squares needs at least d rows");
  return gram(x).ldlt().solve(cross_moment(x, y, {}));
}

Vec support_least_squares(const Samples& x, const std::vector<double>& y, const std::vector<int>& cols) {
  check_responses(x, y);
  const int m = int(cols.size());
  if (m == 0 || x.rows() < m) throw std::invalid_argument("support least squares: bad column set");
  Mat G = Mat::Zero(m, m);
  const int64_t n = x.rows();
  std::vector<double> row(static_cast<size_t>(m));
  for (int64_t i = 0; i < n; ++i) {
    x.read_entries(i, cols.data(), m, row.data());
    Eigen::Map<const Vec> r(row.data(), m);
    G.selfadjointView<Eigen::Lower>().rankUpdate(r);
  }
  Vec b = G.selfadjointView<Eigen::Lower>().ldlt().solve(cross_moment(x, y, cols));
  Vec out = Vec::Zero(x.dim());
  for (int c = 0; c < m; ++c) out[cols[size_t(c)]] = b[c];
  return out;
}

}  // namespace rs
