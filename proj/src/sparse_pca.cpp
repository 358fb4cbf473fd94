#include "robust_sparse/sparse_pca.hpp"

#include "robust_sparse/rng.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace rs {

namespace {
constexpr uint32_t kTagRefill = 40;
constexpr uint64_t kStreamAlpha = 41;

std::vector<int> nonzeros(const Vec& w) {
  std::vector<int> nz;
  for (int j = 0; j < int(w.size()); ++j)
    if (w[j] != 0) nz.push_back(j);
  return nz;
}

Vec coordinate_medians(const RowMatrix& x, const std::vector<uint8_t>& keep) {
  const int k = int(x.cols());
  Vec c(k);
  std::vector<double> col;
  for (int j = 0; j < k; ++j) {
    col.clear();
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (keep[size_t(i)]) col.push_back(x(i, j));
    auto mid = col.begin() + col.size() / 2;
    std::nth_element(col.begin(), mid, col.end());
    c[j] = *mid;
  }
  return c;
}
}  // namespace

double PcaConfig::ell_value() const { return ell ? *ell : 1.0 / std::log(1.0 / epsilon); }

void PcaConfig::validate() const {
  if (!(epsilon > 0 && epsilon < 0.5)) throw std::invalid_argument("epsilon must lie in (0, 0.5)");
  if (!(rho > 0 && rho <= 1)) throw std::invalid_argument("rho must lie in (0, 1]");
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (!(alpha_exclusion >= 0 && alpha_exclusion < 1 + rho))
    throw std::invalid_argument("alpha_exclusion must lie in [0, 1 + rho)");
  if (!(ell_value() > 0)) throw std::invalid_argument("ell must be positive");
  if (max_alpha_draws < 1) throw std::invalid_argument("max_alpha_draws must be at least 1");
}

double trimmed_gaussian_factor(double p) {
  if (!(p >= 0 && p < 0.5)) throw std::invalid_argument("trim fraction must lie in [0, 0.5)");
  if (p == 0) return 1.0;
  boost::math::normal nd;
  const double z = boost::math::quantile(nd, 1 - p);
  return 1 - 2 * z * boost::math::pdf(nd, z) / (1 - 2 * p);
}

namespace {
// symmetric trimmed second moment about the median; returns {variance, median}
std::pair<double, double> trimmed_variance(std::vector<double>& v, double p) {
  const size_t n = v.size();
  const size_t lo = size_t(std::floor(p * double(n))), hi = n - lo;
  // ranks [lo, hi) end up in the middle, unsorted
  std::nth_element(v.begin(), v.begin() + lo, v.end());
  std::nth_element(v.begin() + lo, v.begin() + (hi - 1), v.end());
  auto mid = v.begin() + n / 2;
  std::nth_element(v.begin() + lo, mid, v.begin() + hi);
  const double med = *mid;
  double acc = 0;
  for (size_t i = lo; i < hi; ++i) acc += (v[i] - med) * (v[i] - med);
  return {acc / double(hi - lo) / trimmed_gaussian_factor(p), med};
}
}  // namespace

double robust_variance_1d(std::vector<double> v, double eps) {
  const size_t n = v.size();
  if (n < 100) throw std::invalid_argument("robust_variance_1d: need at least 100 values");
  if (!(eps >= 0 && eps < 0.5)) throw std::invalid_argument("robust_variance_1d: epsilon must lie in [0, 0.5)");
  const double p = std::min(4 * eps, 0.45);
  auto [var, med] = trimmed_variance(v, p);
  // A mass far outside the Gaussian range still shifts the quantile window by 1/(1 - eps).
  // Drop it first, then trim the rest.
  const double radius = std::max(4.0, std::sqrt(2 * std::log(double(n)))) * std::sqrt(var);
  const auto far = std::remove_if(v.begin(), v.end(), [&](double t) { return std::abs(t - med) > radius; });
  if (far == v.end() || far - v.begin() < 100) return var;
  v.erase(far, v.end());
  return trimmed_variance(v, p).first;
}

std::vector<double> project_values(const Samples& s, const Vec& w) {
  const int64_t n = s.rows();
  const std::vector<int> nz = nonzeros(w);
  const int m = int(nz.size());
  std::vector<double> out(size_t(n), 0.0);
  if (m == 0) return out;
  Vec wl(m);
  for (int c = 0; c < m; ++c) wl[c] = w[nz[c]];
  const int64_t blk = 4096, nb = (n + blk - 1) / blk;
  parallel_blocks(nb, [&](int, int64_t b) {
    thread_local std::vector<double> z;
    z.resize(m);
    for (int64_t i = b * blk, e = std::min(n, (b + 1) * blk); i < e; ++i) {
      s.read_entries(i, nz.data(), m, z.data());
      double acc = 0;
      for (int c = 0; c < m; ++c) acc += wl[c] * z[c];
      out[size_t(i)] = acc;
    }
  });
  return out;
}

Vec warm_start(SamplesPtr s, double eps, int k, double rho, WarmStartReport* report, int64_t max_rows) {
  const int64_t n = s->rows();
  const int d = s->dim();
  if (n < 100) throw std::invalid_argument("warm_start: need at least 100 rows");
  if (!(rho > 0)) throw std::invalid_argument("warm_start: rho must be positive");
  k = std::min(k, d);
  WarmStartReport rep;
  const int64_t m = std::min(n, std::max<int64_t>(max_rows, 100));
  rep.sample_rows = m;
  RowMatrix sub(m, d);
  for (int64_t i = 0; i < m; ++i) s->read_row(int64_t(double(i) * double(n) / double(m)), sub.row(i).data());
  auto sp = std::make_shared<DenseSamples>(std::move(sub));
  const RowMatrix& x = sp->matrix();
  const double slack = 1 + std::log(1 / eps);
  MomentTracker tr(sp, ScatterPrecision::Double);
  WeightVector w(m);

  // top eigenvector of Sigma_w on the fkk row support
  auto direction = [&](std::vector<int>* support) {
    auto mo = tr.moments();
    auto f = fkk_norm(mo.sigma_w - Mat::Identity(d, d), k);
    rep.fkk_values.push_back(f.value);
    std::vector<int> S = f.maximizer.row_support;
    std::sort(S.begin(), S.end());
    const int ks = int(S.size());
    Mat C(ks, ks);
    for (int a = 0; a < ks; ++a)
      for (int b = 0; b < ks; ++b) C(a, b) = mo.sigma_w(S[a], S[b]);
    Eigen::SelfAdjointEigenSolver<Mat> es(C);
    if (!(es.eigenvalues()[ks - 1] > 0)) throw std::runtime_error("warm_start: degenerate covariance");
    Vec e = Vec::Zero(d);
    for (int a = 0; a < ks; ++a) e[S[a]] = es.eigenvectors()(a, ks - 1);
    *support = std::move(S);
    return e;
  };

  std::vector<int> S;
  for (int round = 0; round < 20; ++round) {
    const Vec e = direction(&S);
    std::vector<uint8_t> keep(static_cast<size_t>(m));
    for (int64_t i = 0; i < m; ++i) keep[size_t(i)] = w.w[i] > 0;
    RowMatrix xs(m, Eigen::Index(S.size()));
    for (size_t a = 0; a < S.size(); ++a) xs.col(Eigen::Index(a)) = x.col(S[a]);
    const Vec cs = coordinate_medians(xs, keep);
    std::vector<double> proj;
    std::vector<int64_t> idx;
    for (int64_t i = 0; i < m; ++i)
      if (keep[size_t(i)]) {
        double p = 0;
        for (size_t a = 0; a < S.size(); ++a) p += e[S[a]] * (x(i, S[a]) - cs[Eigen::Index(a)]);
        proj.push_back(p);
        idx.push_back(i);
      }
    const double var = robust_variance_1d(proj, eps);
    ++rep.filter_rounds;
    if (!(var > 0)) break;
    std::vector<double> q(proj.size());
    for (size_t t = 0; t < proj.size(); ++t) q[t] = proj[t] * proj[t] / var - 1;
    const double tau = chi_square_tail_cutoff(q, slack);
    if (std::isnan(tau)) break;
    int64_t dropped = 0;
    for (size_t t = 0; t < q.size(); ++t)
      if (q[t] > tau) {
        w.w[size_t(idx[t])] = 0;
        ++dropped;
      }
    if (dropped == 0 || dropped == int64_t(q.size())) break;
    rep.removed += dropped;
    tr.update(w);
  }
  Vec out = direction(&S);
  out.normalize();
  rep.support = S;
  if (report) *report = std::move(rep);
  return out;
}

Slice conditional_slice(const Samples& s, const Vec& w, double alpha, double ell,
                        const std::vector<uint8_t>* labels, std::optional<uint64_t> refill_seed) {
  if (!(ell > 0)) throw std::invalid_argument("conditional_slice: ell must be positive");
  const int d = s.dim();
  if (w.size() != d) throw std::invalid_argument("conditional_slice: direction has the wrong dimension");
  const std::vector<double> proj = project_values(s, w);
  Slice sl;
  for (int64_t i = 0; i < s.rows(); ++i)
    if (proj[size_t(i)] >= alpha - ell && proj[size_t(i)] <= alpha + ell) sl.rows.push_back(i);
  if (sl.rows.empty()) throw std::runtime_error("empty slice: draw a fresh alpha");
  const int64_t m = int64_t(sl.rows.size());
  RowMatrix x(m, d);
  for (int64_t r = 0; r < m; ++r) {
    const int64_t i = sl.rows[size_t(r)];
    s.read_row(i, x.row(r).data());
    double g = refill_seed ? normal_at(*refill_seed, kTagRefill, uint64_t(i), 0) : 0.0;
    x.row(r) += (g - proj[size_t(i)]) * w.transpose();
    if (labels) {
      sl.labels.push_back((*labels)[size_t(i)]);
      sl.outliers += (*labels)[size_t(i)] != 0;
    }
  }
  sl.outlier_fraction = double(sl.outliers) / double(m);
  sl.x = std::make_shared<DenseSamples>(std::move(x));
  return sl;
}

double slice_center(double alpha, double ell, double var) {
  if (!(ell > 0 && var > 0)) throw std::invalid_argument("slice_center: ell and var must be positive");
  const double sd = std::sqrt(var);
  boost::math::normal nd;
  // reflect to the right half line so the mass is a difference of upper tails
  const double sgn = alpha < 0 ? -1.0 : 1.0;
  const double a = (sgn * alpha - ell) / sd, b = (sgn * alpha + ell) / sd;
  const double mass = boost::math::cdf(boost::math::complement(nd, a)) -
                      boost::math::cdf(boost::math::complement(nd, b));
  if (!(mass > 0)) return alpha;
  return sgn * sd * (boost::math::pdf(nd, a) - boost::math::pdf(nd, b)) / mass;
}

GaussianLaw conditional_law_oracle(const Vec& w, const Vec& v, double rho, double alpha) {
  const double c = w.dot(v);
  const Vec vbar = v - c * w;
  const double den = 1 + rho * c * c;
  GaussianLaw g;
  g.mean = (rho * c * alpha / den) * vbar;
  g.cov = Mat::Identity(v.size(), v.size()) + (rho / den) * vbar * vbar.transpose();
  return g;
}

Vec pca_recombine(const Vec& z, const Vec& w, double y, double rho, double alpha) {
  if (!(y > 0)) throw std::invalid_argument("pca_recombine: y must be positive");
  const double sy = std::sqrt(y);
  return z * ((1 + rho * y) / (rho * sy * alpha)) + w * sy;
}

PcaResult robust_sparse_pca(SamplesPtr s, const PcaConfig& cfg, const std::vector<uint8_t>* labels) {
  cfg.validate();
  const double eps = cfg.epsilon, rho = cfg.rho;
  const int d = s->dim(), k = std::min(cfg.k, d);
  PcaResult res;
  auto& tr = res.trace;
  if (rho < eps * std::log(1 / eps))
    tr.warnings.push_back("rho below eps ln(1/eps): outside the guaranteed regime");

  tr.w = warm_start(s, eps, k, rho, &tr.warm, cfg.warm_start_rows);
  tr.y_prime = robust_variance_1d(project_values(*s, tr.w), eps);
  tr.y = (tr.y_prime - 1) / rho;
  if (!(tr.y > 0)) throw std::runtime_error("variance step failed: estimated (w.v)^2 is not positive");

  Philox g(cfg.seed, kStreamAlpha);
  const double ell = cfg.ell_value();
  Slice sl;
  for (;;) {
    if (tr.alpha_draws >= cfg.max_alpha_draws)
      throw std::runtime_error("no usable slice after " + std::to_string(cfg.max_alpha_draws) + " alpha draws");
    const double mag = cfg.alpha_exclusion + (1 + rho - cfg.alpha_exclusion) * g.uniform();
    tr.alpha = g.uniform() < 0.5 ? -mag : mag;
    ++tr.alpha_draws;
    try {
      sl = conditional_slice(*s, tr.w, tr.alpha, ell, labels, cfg.seed);
    } catch (const std::runtime_error&) {
      continue;
    }
    if (int64_t(sl.rows.size()) >= cfg.min_slice_rows) break;
  }
  tr.slice_rows = int64_t(sl.rows.size());
  tr.slice_outlier_fraction = sl.outlier_fraction;

  MeanConfig mc = cfg.mean_config;
  mc.epsilon = eps;
  mc.k = std::min(2 * k, d);
  auto inner = robust_sparse_mean(sl.x, mc, labels ? &sl.labels : nullptr);
  sl.x.reset();
  tr.inner = std::move(inner.trace);
  tr.z = inner.mu_hat;
  tr.alpha_center = slice_center(tr.alpha, ell, tr.y_prime);
  Vec v = pca_recombine(tr.z, tr.w, tr.y, rho, tr.alpha_center);
  const double nv = v.norm();
  if (!(nv > 0)) throw std::runtime_error("recombined direction is zero");
  res.v_hat = v / nv;
  tr.variance_along_vhat = robust_variance_1d(project_values(*s, res.v_hat), eps);
  return res;
}

Vec empirical_pca(const Samples& s) {
  if (s.rows() < 2) throw std::invalid_argument("empirical_pca: need at least 2 rows");
  Eigen::SelfAdjointEigenSolver<Mat> es(s.unit_scatter()->covariance());
  return es.eigenvectors().col(s.dim() - 1);
}

}  // namespace rs
