#include "robust_sparse/sparse_mean.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rs {

namespace {

constexpr int64_t kScoreBlock = 4096;

double log_inv(double eps) { return std::log(1.0 / eps); }

std::vector<uint8_t> sub_labels(const std::vector<uint8_t>* labels, const std::vector<int64_t>& idx) {
  std::vector<uint8_t> out;
  if (!labels) return out;
  out.reserve(idx.size());
  for (int64_t i : idx) out.push_back((*labels)[size_t(i)]);
  return out;
}

struct LocalQuadratic {
  std::vector<int> cols;  // sorted support
  std::vector<int> a, b;  // local indices per entry
  std::vector<double> v;
  double trace = 0.0;
};

LocalQuadratic localize(const std::vector<SparseEntry>& A) {
  LocalQuadratic q;
  for (const auto& e : A) {
    q.cols.push_back(e.row);
    q.cols.push_back(e.col);
  }
  std::sort(q.cols.begin(), q.cols.end());
  q.cols.erase(std::unique(q.cols.begin(), q.cols.end()), q.cols.end());
  auto loc = [&](int c) { return int(std::lower_bound(q.cols.begin(), q.cols.end(), c) - q.cols.begin()); };
  for (const auto& e : A) {
    if (e.value == 0) continue;
    q.a.push_back(loc(e.row));
    q.b.push_back(loc(e.col));
    q.v.push_back(e.value);
    if (e.row == e.col) q.trace += e.value;
  }
  return q;
}

// Projections U^T (x - mu) of every row, U with orthonormal columns.
Mat project_rows(const Samples& s, const Vec& mu, const Mat& U) {
  const int64_t n = s.rows();
  const int d = s.dim(), r = int(U.cols());
  Mat out(n, r);
  const int64_t nb = (n + kScoreBlock - 1) / kScoreBlock;
  parallel_blocks(nb, [&](int, int64_t b) {
    thread_local RowMatrix buf;
    const int64_t first = b * kScoreBlock, cnt = std::min(kScoreBlock, n - first);
    buf.resize(cnt, d);
    s.read_rows(first, cnt, buf.data());
    buf.rowwise() -= mu.transpose();
    out.middleRows(first, cnt) = buf * U;
  });
  return out;
}

// `fallback` with the coordinates in `cols` replaced by their medians over a strided
// subsample of the positive-weight rows. Keeps the tail scores anchored when far outliers
// drag the weighted mean.
Vec robust_center(const Samples& s, const WeightVector& w, const std::vector<int>& cols, const Vec& fallback) {
  Vec c = fallback;
  const int m = int(cols.size());
  if (m == 0) return c;
  std::vector<int64_t> idx;
  for (int64_t i = 0; i < w.size(); ++i)
    if (w.w[i] > 0) idx.push_back(i);
  if (idx.empty()) return c;
  const size_t stride = std::max<size_t>(1, idx.size() / 100000);
  std::vector<std::vector<double>> v(static_cast<size_t>(m));
  std::vector<double> z(static_cast<size_t>(m));
  for (size_t j = 0; j < idx.size(); j += stride) {
    s.read_entries(idx[j], cols.data(), m, z.data());
    for (int a = 0; a < m; ++a) v[a].push_back(z[a]);
  }
  for (int a = 0; a < m; ++a) {
    auto mid = v[a].begin() + v[a].size() / 2;
    std::nth_element(v[a].begin(), mid, v[a].end());
    c[cols[a]] = *mid;
  }
  return c;
}

}  // namespace

double chi_square_tail_cutoff(std::vector<double> scores, double slack, int dof) {
  const double m = double(scores.size());
  if (m == 0) return std::nan("");
  std::sort(scores.begin(), scores.end(), std::greater<>());
  const double t_max = std::log(m * slack) + 2.0;
  for (double t = 0.5; t <= t_max; t += 0.25) {
    const double tau = 2 * std::sqrt(dof * t) + 2 * t;
    auto it = std::partition_point(scores.begin(), scores.end(), [&](double q) { return q > tau; });
    if (double(it - scores.begin()) / m > slack * std::exp(-t)) return tau;
  }
  return std::nan("");
}

int MeanConfig::r() const {
  if (r_override) return std::max(1, *r_override);
  return std::max(1, int(std::ceil(log_inv(epsilon) - 1e-12)));
}

double MeanConfig::beta_value() const { return beta ? *beta : log_inv(epsilon); }

double MeanConfig::s_value() const { return s ? *s : epsilon; }

int64_t MeanConfig::outer_cap(int64_t n, int d) const {
  if (max_outer_iters > 0) return max_outer_iters;
  const double v = 50.0 * d / (double(std::max<int64_t>(n, 1)) * epsilon);
  return int64_t(std::clamp(v, 100.0, 1e6));
}

void MeanConfig::validate() const {
  if (!(epsilon > 0 && epsilon < 0.5)) throw std::invalid_argument("epsilon must lie in (0, 0.5)");
  if (epsilon > 0.2 && !allow_large_epsilon)
    throw std::invalid_argument("epsilon above 0.2 refused (set allow_large_epsilon to override)");
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (!(split_fraction > 0 && split_fraction < 1)) throw std::invalid_argument("split_fraction must lie in (0, 1)");
  if (!(C_stop > 0)) throw std::invalid_argument("C_stop must be positive");
  if (!(beta_value() > 1)) throw std::invalid_argument("beta must exceed 1 (epsilon too large for the default)");
  if (!(s_value() > 0)) throw std::invalid_argument("s must be positive");
}

std::vector<double> quadratic_scores(const Samples& s, const Vec& mu, const std::vector<SparseEntry>& A) {
  const int64_t n = s.rows();
  std::vector<double> out(size_t(n), 0.0);
  const LocalQuadratic q = localize(A);
  const int m = int(q.cols.size());
  if (m == 0) return out;
  Vec mu_loc(m);
  for (int c = 0; c < m; ++c) mu_loc[c] = mu[q.cols[c]];
  const size_t ne = q.v.size();
  const int64_t nb = (n + kScoreBlock - 1) / kScoreBlock;
  parallel_blocks(nb, [&](int, int64_t b) {
    thread_local std::vector<double> z;
    z.resize(m);
    const int64_t first = b * kScoreBlock, last = std::min(n, first + kScoreBlock);
    for (int64_t i = first; i < last; ++i) {
      s.read_entries(i, q.cols.data(), m, z.data());
      for (int c = 0; c < m; ++c) z[c] -= mu_loc[c];
      double acc = 0;
      for (size_t e = 0; e < ne; ++e) acc += q.v[e] * z[q.a[e]] * z[q.b[e]];
      out[size_t(i)] = acc - q.trace;
    }
  });
  return out;
}

WeightVector preprocess(SamplesPtr s, double eps, int k, double C_pre, int max_rounds,
                        PreprocessReport* report, const std::vector<uint8_t>* labels,
                        ScatterPrecision p) {
  const int64_t n = s->rows();
  if (n == 0) throw std::invalid_argument("preprocess: empty input");
  if (!(eps > 0 && eps < 1)) throw std::invalid_argument("preprocess: epsilon must lie in (0, 1)");
  const int d = s->dim();
  const int k2 = std::min(2 * k, d);
  const double L = log_inv(eps);
  PreprocessReport rep;
  rep.threshold = C_pre * eps * L * L;
  MomentTracker tr(s, p);
  WeightVector w(n);
  int64_t kept = n;
  for (;;) {
    auto m = tr.moments();
    auto f = fkk_norm(m.sigma_w - Mat::Identity(d, d), k2);
    rep.fkk_value = f.value;
    if (f.value <= rep.threshold) {
      rep.met = true;
      break;
    }
    if (rep.rounds >= max_rounds) {
      rep.cap_hit = true;
      break;
    }
    auto center = robust_center(*s, w, f.maximizer.support(), m.mu_w);
    auto q = quadratic_scores(*s, center, f.maximizer.entries);
    std::vector<double> kept_q;
    kept_q.reserve(size_t(kept));
    for (int64_t i = 0; i < n; ++i)
      if (w.w[i] > 0) kept_q.push_back(q[i]);
    const double tau = chi_square_tail_cutoff(std::move(kept_q), 1.0 + L);
    ++rep.rounds;
    if (std::isnan(tau)) {
      rep.no_tail_violation = true;
      break;
    }
    WeightVector next = w;
    for (int64_t i = 0; i < n; ++i) {
      if (w.w[i] > 0 && q[i] > tau) {
        next.w[i] = 0;
        --kept;
        ++rep.removed;
        if (labels && (*labels)[i]) ++rep.removed_outliers;
      }
    }
    if (kept == 0) throw std::runtime_error("preprocess removed every point");
    w = std::move(next);
    tr.update(w);
  }
  if (report) *report = rep;
  return w;
}

namespace {
WeightVector naive_prune_at(const Samples& s, const Vec& mu_T, double eps, const WeightVector* base) {
  const int64_t n = s.rows();
  const int d = s.dim();
  WeightVector w = base ? *base : WeightVector(n);
  const double R = 10.0 * std::sqrt(double(d)) * std::log(double(d) / eps);
  const double R2 = R * R;
  auto sc = s.unit_scatter();
  const bool have_norms = int64_t(sc->row_sqdist.size()) == n;
  const double off = have_norms ? (mu_T - sc->shift).norm() : 0.0;
  Vec row(d);
  for (int64_t i = 0; i < n; ++i) {
    if (w.w[i] <= 0) continue;
    if (have_norms) {
      const double r = std::sqrt(double(sc->row_sqdist[i]));
      const double hi = (r * (1 + 1e-5) + off), lo = std::max(0.0, r * (1 - 1e-5) - off);
      if (hi * hi <= R2) continue;
      if (lo * lo > R2) {
        w.w[i] = 0;
        continue;
      }
    }
    s.read_row(i, row.data());
    if ((row - mu_T).squaredNorm() > R2) w.w[i] = 0;
  }
  return w;
}
}  // namespace

WeightVector naive_prune(SamplesPtr s, double eps, const WeightVector* base) {
  if (s->rows() == 0) throw std::invalid_argument("naive_prune: empty input");
  if (!(eps > 0)) throw std::invalid_argument("naive_prune: epsilon must be positive");
  Vec mu_T = base ? weighted_moments(*s, *base).mu_w : s->unit_scatter()->mean();
  return naive_prune_at(*s, mu_T, eps, base);
}

double weighted_median(std::vector<std::pair<double, double>> vw) {
  double total = 0;
  for (auto& [v, w] : vw) total += w;
  if (!(total > 0)) throw std::invalid_argument("weighted_median: zero total weight");
  std::sort(vw.begin(), vw.end());
  double acc = 0;
  for (auto& [v, w] : vw) {
    acc += w;
    if (acc >= 0.5 * total) return v;
  }
  return vw.back().first;
}

Vec dense_robust_mean(SamplesPtr s, double eps, const MeanConfig& cfg, DenseMeanReport* report,
                      const WeightVector* initial) {
  const int64_t n = s->rows();
  const int d = s->dim();
  if (n == 0) throw std::invalid_argument("dense_robust_mean: empty input");
  DenseMeanReport rep;
  const int r = std::min(cfg.r(), d);
  const double L = log_inv(eps);
  const int64_t cap = cfg.outer_cap(n, d);
  MomentTracker tr(s, cfg.precision);
  WeightVector w(n);
  if (initial) {
    if (initial->size() != n) throw std::invalid_argument("dense_robust_mean: weight length mismatch");
    w = *initial;
    tr.update(w);
  }
  WeightedMoments m;
  Mat U;
  for (;;) {
    m = tr.moments();
    Eigen::SelfAdjointEigenSolver<Mat> es(m.sigma_w - Mat::Identity(d, d));
    // eigenvalues ascending: take the last r
    U = es.eigenvectors().rightCols(r);
    Vec top = es.eigenvalues().tail(r).reverse();
    U = U.rowwise().reverse().eval();
    rep.eigenvalues.assign(top.data(), top.data() + r);
    rep.top_eig_avg = top.mean();
    if (rep.top_eig_avg <= cfg.C_stop * eps) break;
    if (rep.iterations >= cap) {
      rep.cap_hit = true;
      break;
    }
    // chi-square tail rule on ||U^T (x - mu_w)||^2 - r
    std::vector<int> all(static_cast<size_t>(d));
    std::iota(all.begin(), all.end(), 0);
    Mat proj = project_rows(*s, robust_center(*s, w, all, m.mu_w), U);
    std::vector<double> q(static_cast<size_t>(n)), kept_q;
    for (int64_t i = 0; i < n; ++i) {
      q[i] = proj.row(i).squaredNorm() - r;
      if (w.w[i] > 0) kept_q.push_back(q[i]);
    }
    const int64_t n_kept = int64_t(kept_q.size());
    const double tau = chi_square_tail_cutoff(std::move(kept_q), 1.0 + L, r);
    ++rep.iterations;
    if (std::isnan(tau)) {
      rep.stalled = true;
      break;
    }
    int64_t removed = 0;
    for (int64_t i = 0; i < n; ++i)
      if (w.w[i] > 0 && q[i] > tau) {
        w.w[i] = 0;
        ++removed;
      }
    if (removed == 0 || removed == n_kept) {
      rep.stalled = true;
      break;
    }
    tr.update(w);
  }

  // weighted median along the strongly inflated directions, weighted mean elsewhere
  std::vector<int> med;
  for (int j = 0; j < r; ++j)
    if (rep.eigenvalues[j] > cfg.median_eig_mult * eps) med.push_back(j);
  Mat V(d, Eigen::Index(med.size()));
  for (size_t j = 0; j < med.size(); ++j) V.col(Eigen::Index(j)) = U.col(med[j]);
  Vec mu = m.mu_w - V * (V.transpose() * m.mu_w);
  if (!med.empty()) {
    Mat proj = project_rows(*s, Vec::Zero(d), V);
    for (Eigen::Index j = 0; j < V.cols(); ++j) {
      std::vector<std::pair<double, double>> vw;
      vw.reserve(size_t(n));
      for (int64_t i = 0; i < n; ++i)
        if (w.w[i] > 0) vw.emplace_back(proj(i, j), w.w[i]);
      mu += weighted_median(std::move(vw)) * V.col(j);
    }
  }
  rep.median_directions = V;
  if (report) *report = std::move(rep);
  return mu;
}

MeanResult robust_sparse_mean(SamplesPtr s, const MeanConfig& cfg, const std::vector<uint8_t>* labels) {
  cfg.validate();
  const int64_t n = s->rows();
  const int d = s->dim();
  if (n < std::max<int64_t>(cfg.min_samples, 2))
    throw std::invalid_argument("robust_sparse_mean: too few samples");
  if (labels && int64_t(labels->size()) != n) throw std::invalid_argument("label vector length mismatch");
  const double eps = cfg.epsilon;
  const int k = std::min(cfg.k, d), r = cfg.r();
  MeanResult res;
  auto& tr = res.trace;

  // split
  SamplesPtr work, hold;
  std::vector<int64_t> work_idx, hold_idx;
  if (cfg.split_fraction == 0.5) {
    work = s->half(0);
    hold = s->half(1);
    if (labels) {
      for (int64_t i = 0; i < n; ++i) (i % 2 ? hold_idx : work_idx).push_back(i);
    }
  } else {
    for (int64_t i = 0; i < n; ++i) {
      const bool h = std::floor(double(i + 1) * cfg.split_fraction) > std::floor(double(i) * cfg.split_fraction);
      (h ? hold_idx : work_idx).push_back(i);
    }
    if (work_idx.empty() || hold_idx.empty()) throw std::invalid_argument("split left an empty part");
    work = std::make_shared<IndexedSamples>(s, work_idx);
    hold = std::make_shared<IndexedSamples>(s, hold_idx);
  }
  const std::vector<uint8_t> wl = sub_labels(labels, work_idx);
  const std::vector<uint8_t>* wlp = labels ? &wl : nullptr;
  const int64_t nw = work->rows();
  tr.n_work = nw;
  tr.n_holdout = hold->rows();

  // (1) preprocess, (2) naive prune
  WeightVector w(nw);
  if (cfg.run_preprocess) {
    w = preprocess(work, eps, k, cfg.C_pre, cfg.preprocess_max_rounds, &tr.preprocess, wlp, cfg.precision);
    if (tr.preprocess.cap_hit) tr.warnings.push_back("preprocess safety cap hit");
    if (tr.preprocess.no_tail_violation && !tr.preprocess.met)
      tr.warnings.push_back("preprocess stopped above threshold with no tail violation");
  }
  MomentTracker mt(work, cfg.precision);
  mt.update(w);
  WeightVector hold_w = naive_prune_at(*hold, mt.moments().mu_w, eps, nullptr);
  for (double v : hold_w.w) tr.pruned_holdout += v == 0;
  {
    WeightVector pruned = naive_prune_at(*work, mt.moments().mu_w, eps, &w);
    for (int64_t i = 0; i < nw; ++i) tr.pruned += (w.w[i] > 0 && pruned.w[i] == 0);
    w = std::move(pruned);
    mt.update(w);
  }

  // (3) filtering loop
  const double thr = cfg.score_threshold_mult * log_inv(eps);
  const double beta = cfg.beta_value(), sv = cfg.s_value();
  const int64_t cap = cfg.outer_cap(nw, d);
  const bool exact = cfg.precision == ScatterPrecision::Double ||
                     (cfg.precision == ScatterPrecision::Auto && double(nw) * d * d <= 4e10);
  const double id_tol = exact ? 1e-6 : 1e-4;
  SparseDirectionSet dec;
  WeightedMoments m;
  int64_t nb_out = 0;
  if (labels)
    for (auto l : wl) nb_out += l;
  double inl_cum = 0, out_cum = 0;
  for (int64_t it = 0;; ++it) {
    m = mt.moments();
    dec = greedy_decomposition(m.sigma_w - Mat::Identity(d, d), k, r);
    MeanIteration rec;
    rec.g = dec.g_value;
    rec.h = dec.h;
    rec.stop = dec.g_value / double(r) <= cfg.C_stop * eps;
    if (rec.stop) {
      tr.iterations.push_back(rec);
      tr.stop_reason = "threshold";
      if (cfg.check_invariants && !dec.h.empty() && int(dec.h.size()) == r && dec.h.back() > cfg.C_stop * eps)
        tr.invariant_violations.push_back("h_r above C_stop eps at exit");
      break;
    }
    if (it >= cap) {
      tr.iterations.push_back(rec);
      tr.stop_reason = "iteration_cap";
      tr.warnings.push_back("outer iteration cap hit");
      break;
    }
    auto entries = dec.composite_entries();
    auto p = quadratic_scores(*work, m.mu_w, entries);
    if (cfg.check_invariants) {
      double acc = 0, ws = 0;
      for (int64_t i = 0; i < nw; ++i) {
        acc += w.w[i] * p[i];
        ws += w.w[i];
      }
      rec.identity_gap = std::abs(acc / ws - dec.g_value);
      if (rec.identity_gap > id_tol * (1 + std::abs(dec.g_value)))
        tr.invariant_violations.push_back("E_w[p~] differs from g_r at iteration " + std::to_string(it));
    }
    for (auto& v : p) v = v > thr ? v : 0.0;
    auto fr = downweight_filter(w, p, sv, beta);
    rec.filter_passes = fr.iterations;
    double removed = 0;
    for (int64_t i = 0; i < nw; ++i) removed += w.w[i] - fr.w.w[i];
    rec.mass_removed = removed / double(nw);
    if (labels) {
      auto ms = mass_removed(w, fr.w, wl);
      rec.inlier_removed = ms.inlier_mean;
      rec.outlier_removed = ms.outlier_mean;
      inl_cum += ms.inlier;
      out_cum += ms.outlier;
    }
    tr.iterations.push_back(rec);
    if (!fr.fired() || !(removed > 0)) {
      tr.stop_reason = "stalled";
      tr.warnings.push_back("filter removed no mass while the stopping rule was unmet");
      break;
    }
    w = std::move(fr.w);
    if (!(w.sum() > 0)) throw std::runtime_error("degenerate weights: filter removed all mass");
    mt.update(w);
  }
  if (labels) {
    const int64_t ng = nw - nb_out;
    tr.inlier_mass_removed = ng ? inl_cum * double(nw) / double(ng) : 0.0;
    tr.outlier_mass_removed = nb_out ? out_cum * double(nw) / double(nb_out) : 0.0;
    if (cfg.check_invariants && tr.inlier_mass_removed > 0 &&
        tr.inlier_mass_removed > 2.0 * (2 * eps / log_inv(eps)) * tr.outlier_mass_removed)
      tr.invariant_violations.push_back("cumulative inlier mass removed exceeds the outlier-mass bound");
  }
  tr.final_mass = w.total_mass();

  // (4) H, (5) dense fallback on the holdout, (6) weighted mean off H
  tr.H = dec.union_support();
  if (cfg.check_invariants && int64_t(tr.H.size()) > int64_t(r) * k * (k + 1))
    tr.invariant_violations.push_back("|H| exceeds r k (k+1)");
  tr.mu1 = Vec::Zero(d);
  tr.mu2 = m.mu_w;
  for (int c : tr.H) tr.mu2[c] = 0;
  if (!tr.H.empty()) {
    auto sub = std::make_shared<ColumnSubset>(hold, tr.H);
    Vec mh = dense_robust_mean(sub, eps, cfg, &tr.dense, &hold_w);
    for (size_t j = 0; j < tr.H.size(); ++j) tr.mu1[tr.H[j]] = mh[Eigen::Index(j)];
    if (tr.dense.cap_hit) tr.warnings.push_back("dense fallback iteration cap hit");
  }
  Vec mu = tr.mu1 + tr.mu2;
  res.mu_hat = cfg.truncate_output ? truncate_top_k(mu, k) : mu;
  return res;
}

CertificateResult certificate_check(const WeightedMoments& m, const Vec& mu_true, double eps, double alpha,
                                    int k, double lambda, double inlier_mass, double C_cert) {
  CertificateResult c;
  const int d = int(m.mu_w.size());
  Mat B = m.sigma_w - Mat::Identity(d, d);
  c.opk = d <= 14 ? sparse_op_norm_oracle(B, std::min(k, d)) : fkk_norm(B, std::min(k, d)).value;
  c.applicable = c.opk <= lambda && inlier_mass >= 1 - alpha;
  c.lhs = sparse_norm_2k(m.mu_w - mu_true, k);
  const double la = alpha > 0 ? std::log(1.0 / alpha) : 0.0;
  c.rhs = C_cert * (alpha * std::sqrt(la) + std::sqrt(std::max(lambda, 0.0) * eps) + eps +
                    std::sqrt(alpha * eps * la));
  c.holds = !c.applicable || c.lhs <= c.rhs;
  return c;
}

}  // namespace rs
