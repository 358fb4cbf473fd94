#include "robust_sparse/contamination.hpp"

#include "robust_sparse/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rs {

namespace {
constexpr uint32_t kTagX = 1;
constexpr uint32_t kTagLabel = 2;
constexpr uint32_t kTagAux = 3;
constexpr uint64_t kStreamMu = 10, kStreamV = 11, kStreamBeta = 12, kStreamU = 13,
                   kStreamCenters = 14;

std::vector<int> random_support(Philox& g, int d, int k, const std::vector<int>& exclude = {}) {
  std::vector<int> pool;
  for (int i = 0; i < d; ++i)
    if (std::find(exclude.begin(), exclude.end(), i) == exclude.end()) pool.push_back(i);
  if (k > int(pool.size())) throw std::invalid_argument("support larger than available coordinates");
  for (int i = 0; i < k; ++i) std::swap(pool[i], pool[i + g.below(pool.size() - i)]);
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

Vec signed_on_support(Philox& g, int d, const std::vector<int>& s, double lo, double hi) {
  Vec x = Vec::Zero(d);
  for (int i : s) {
    double m = lo + (hi - lo) * g.uniform();
    x[i] = g.uniform() < 0.5 ? -m : m;
  }
  return x;
}

std::vector<int> support_of(const Vec& x) {
  std::vector<int> s;
  for (int i = 0; i < x.size(); ++i)
    if (x[i] != 0.0) s.push_back(i);
  return s;
}

std::shared_ptr<const std::vector<uint8_t>> draw_labels(uint64_t seed, int64_t n, double eps,
                                                        Adversary a, int64_t* count) {
  auto labels = std::make_shared<std::vector<uint8_t>>(n, 0);
  int64_t c = 0;
  if (a != Adversary::none && eps > 0) {
    for (int64_t i = 0; i < n; ++i) {
      if (uniform_at(seed, kTagLabel, i, 0) < eps) {
        (*labels)[i] = 1;
        ++c;
      }
    }
  }
  *count = c;
  return labels;
}

// fills the adversary part of the model shared by all tasks
void setup_adversary(SyntheticSamples::Model& m, const ContaminationSpec& c, int k, Truth& t) {
  const int d = m.d;
  const double eps = c.epsilon;
  const int s = c.support_size > 0 ? c.support_size : k;
  Philox g(c.seed, kStreamU);
  m.adversary = c.adversary;
  switch (c.adversary) {
    case Adversary::none:
    case Adversary::flipped_response:
      break;
    case Adversary::sparse_shift:
      m.delta = c.delta.value_or(10.0);
      m.u = signed_on_support(g, d, random_support(g, d, s), 1.0, 1.0).normalized();
      break;
    case Adversary::evasive_tail: {
      m.delta = c.delta.value_or(std::sqrt(2.0 * std::log(1.0 / eps)));
      // on the support of mu when there is one, so truncating the estimate cannot drop the bias
      std::vector<int> supp = m.mu.size() ? support_of(m.mu) : std::vector<int>{};
      if (supp.empty() || c.support_size > 0) supp = random_support(g, d, s);
      m.u = signed_on_support(g, d, supp, 1.0, 1.0).normalized();
      break;
    }
    case Adversary::dense_cluster: {
      m.delta = c.delta.value_or(5.0);
      Philox gc(c.seed, kStreamCenters);
      m.centers.resize(c.clusters, d);
      for (int j = 0; j < c.clusters; ++j) {
        Vec dir(d);
        for (int i = 0; i < d; ++i) dir[i] = gc.normal();
        m.centers.row(j) = m.delta * dir.normalized().transpose();
      }
      break;
    }
    case Adversary::custom_points:
      m.points = c.points;
      break;
    case Adversary::fake_spike: {
      m.u = signed_on_support(g, d, random_support(g, d, s, support_of(m.v)), 1.0, 1.0).normalized();
      m.gamma = c.spike_scale.value_or(std::sqrt(1.0 + 2.0 * m.rho / eps));
      m.delta = m.gamma;
      break;
    }
  }
  t.adversary_direction = m.u;
  t.adversary_delta = m.delta;
}

std::string fmt_double(double x) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

std::vector<double> to_vector(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }
Vec from_json_vec(const nlohmann::json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), Eigen::Index(v.size()));
}
}  // namespace

std::string to_string(Task t) {
  switch (t) {
    case Task::mean: return "mean";
    case Task::pca: return "pca";
    case Task::regression: return "reg";
  }
  return "?";
}

Task task_from_string(const std::string& s) {
  if (s == "mean") return Task::mean;
  if (s == "pca") return Task::pca;
  if (s == "reg" || s == "regression") return Task::regression;
  throw std::invalid_argument("unknown task '" + s + "'");
}

std::string to_string(Adversary a) {
  switch (a) {
    case Adversary::none: return "none";
    case Adversary::sparse_shift: return "sparse_shift";
    case Adversary::dense_cluster: return "dense_cluster";
    case Adversary::evasive_tail: return "evasive_tail";
    case Adversary::custom_points: return "custom_points";
    case Adversary::fake_spike: return "fake_spike";
    case Adversary::flipped_response: return "flipped_response";
  }
  return "?";
}

Adversary adversary_from_string(const std::string& s) {
  for (Adversary a : {Adversary::none, Adversary::sparse_shift, Adversary::dense_cluster,
                      Adversary::evasive_tail, Adversary::custom_points, Adversary::fake_spike,
                      Adversary::flipped_response})
    if (to_string(a) == s) return a;
  throw std::invalid_argument("unknown adversary '" + s + "'");
}

void ContaminationSpec::validate(Task task, int d, int k) const {
  if (!(epsilon >= 0.0 && epsilon < 0.5)) throw std::invalid_argument("epsilon must lie in [0, 0.5)");
  if (adversary != Adversary::none && !(epsilon > 0.0))
    throw std::invalid_argument("an adversary needs epsilon > 0");
  if (d < 1 || k < 1 || k > d) throw std::invalid_argument("need 1 <= k <= d");
  if (support_size < 0 || support_size > d) throw std::invalid_argument("support size must be <= d");
  if (delta && !(*delta >= 0.0)) throw std::invalid_argument("delta must be nonnegative");
  switch (adversary) {
    case Adversary::dense_cluster:
      if (clusters < 1) throw std::invalid_argument("dense_cluster needs clusters >= 1");
      break;
    case Adversary::custom_points: {
      const int cols = task == Task::regression ? d + 1 : d;
      if (points.rows() < 1 || points.cols() != cols)
        throw std::invalid_argument("custom_points needs a nonempty point matrix with " +
                                    std::to_string(cols) + " columns");
      break;
    }
    case Adversary::fake_spike:
      if (task != Task::pca) throw std::invalid_argument("fake_spike applies to the pca task");
      if (2 * std::max(k, support_size) > d) throw std::invalid_argument("fake_spike needs d >= 2k");
      break;
    case Adversary::flipped_response:
      if (task != Task::regression)
        throw std::invalid_argument("flipped_response applies to the regression task");
      break;
    default:
      if (task == Task::regression && adversary != Adversary::none)
        throw std::invalid_argument("regression supports none, flipped_response, custom_points");
  }
}

SyntheticSamples::SyntheticSamples(Model m) : m_(std::move(m)) {
  if (m_.u.size()) u_support_ = support_of(m_.u);
  if (m_.mu.size() == 0) m_.mu = Vec::Zero(m_.d);
}

int SyntheticSamples::pick(int64_t i, int count) const {
  int j = int(uniform_at(m_.seed, kTagLabel, uint64_t(i), 1) * count);
  return std::min(j, count - 1);
}

void SyntheticSamples::read_row(int64_t i, double* out) const {
  const int d = m_.d;
  Eigen::Map<Vec> x(out, d);
  const bool outlier = (*m_.labels)[i] != 0;
  if (outlier) {
    switch (m_.adversary) {
      case Adversary::sparse_shift:
      case Adversary::evasive_tail:
        x = m_.mu + m_.delta * m_.u;
        return;
      case Adversary::custom_points:
        for (int j = 0; j < d; ++j) out[j] = m_.points(pick(i, int(m_.points.rows())), j);
        return;
      default:
        break;
    }
  }
  fill_normal_row(m_.seed, kTagX, uint64_t(i), d, out);
  if (!outlier) {
    if (m_.task == Task::mean) x += m_.mu;
    if (m_.task == Task::pca) x += std::sqrt(m_.rho) * normal_at(m_.seed, kTagAux, i, 0) * m_.v;
    return;
  }
  switch (m_.adversary) {
    case Adversary::dense_cluster:
      x += m_.mu + m_.centers.row(pick(i, int(m_.centers.rows()))).transpose();
      break;
    case Adversary::fake_spike: {
      double uz = m_.u.dot(x);
      double s = uniform_at(m_.seed, kTagLabel, uint64_t(i), 2) < 0.5 ? -1.0 : 1.0;
      x += (s * m_.gamma - uz) * m_.u;
      break;
    }
    default:  // flipped_response: x itself is clean
      break;
  }
}

void SyntheticSamples::read_entries(int64_t i, const int* cols, int m, double* out) const {
  const bool outlier = (*m_.labels)[i] != 0;
  if (outlier) {
    switch (m_.adversary) {
      case Adversary::sparse_shift:
      case Adversary::evasive_tail:
        for (int c = 0; c < m; ++c) out[c] = m_.mu[cols[c]] + m_.delta * m_.u[cols[c]];
        return;
      case Adversary::custom_points: {
        int j = pick(i, int(m_.points.rows()));
        for (int c = 0; c < m; ++c) out[c] = m_.points(j, cols[c]);
        return;
      }
      default:
        break;
    }
  }
  fill_normal_entries(m_.seed, kTagX, uint64_t(i), cols, m, out);
  if (!outlier) {
    if (m_.task == Task::mean)
      for (int c = 0; c < m; ++c) out[c] += m_.mu[cols[c]];
    if (m_.task == Task::pca) {
      double a = std::sqrt(m_.rho) * normal_at(m_.seed, kTagAux, i, 0);
      for (int c = 0; c < m; ++c) out[c] += a * m_.v[cols[c]];
    }
    return;
  }
  switch (m_.adversary) {
    case Adversary::dense_cluster: {
      int j = pick(i, int(m_.centers.rows()));
      for (int c = 0; c < m; ++c) out[c] += m_.mu[cols[c]] + m_.centers(j, cols[c]);
      break;
    }
    case Adversary::fake_spike: {
      thread_local std::vector<double> zu;
      zu.resize(u_support_.size());
      fill_normal_entries(m_.seed, kTagX, uint64_t(i), u_support_.data(), int(u_support_.size()),
                          zu.data());
      double uz = 0;
      for (size_t a = 0; a < u_support_.size(); ++a) uz += m_.u[u_support_[a]] * zu[a];
      double s = uniform_at(m_.seed, kTagLabel, uint64_t(i), 2) < 0.5 ? -1.0 : 1.0;
      for (int c = 0; c < m; ++c) out[c] += (s * m_.gamma - uz) * m_.u[cols[c]];
      break;
    }
    default:
      break;
  }
}

Vec random_sparse_unit(uint64_t seed, uint64_t stream, int d, int k, double lo, double hi) {
  Philox g(seed, stream);
  return signed_on_support(g, d, random_support(g, d, k), lo, hi).normalized();
}

namespace {
Dataset assemble(Task task, int64_t n, int d, int k, const ContaminationSpec& c,
                 SyntheticSamples::Model m, Truth t) {
  if (n < 1) throw std::invalid_argument("n must be positive");
  Dataset ds;
  ds.task = task;
  ds.k = k;
  ds.seed = c.seed;
  ds.contamination = c;
  m.task = task;
  m.d = d;
  m.seed = c.seed;
  setup_adversary(m, c, k, t);
  m.labels = draw_labels(c.seed, n, c.epsilon, c.adversary, &ds.outliers);
  ds.labels = m.labels;
  ds.x = std::make_shared<SyntheticSamples>(std::move(m));
  ds.truth = std::move(t);
  return ds;
}
}  // namespace

Dataset gen_mean_task(int64_t n, int d, int k, const MeanTaskParams& p, const ContaminationSpec& c) {
  c.validate(Task::mean, d, k);
  Truth t;
  if (p.mu) {
    if (p.mu->size() != d) throw std::invalid_argument("mu has the wrong dimension");
    if ((p.mu->array() != 0).count() > k) throw std::invalid_argument("mu must be k-sparse");
    t.mu = *p.mu;
  } else {
    Philox g(c.seed, kStreamMu);
    t.mu = signed_on_support(g, d, random_support(g, d, k), p.magnitude_lo, p.magnitude_hi);
  }
  SyntheticSamples::Model m;
  m.mu = t.mu;
  return assemble(Task::mean, n, d, k, c, std::move(m), std::move(t));
}

Dataset gen_pca_task(int64_t n, int d, int k, const PcaTaskParams& p, const ContaminationSpec& c) {
  c.validate(Task::pca, d, k);
  if (!(p.rho > 0.0)) throw std::invalid_argument("rho must be positive");
  if (p.rho > 1.0) throw std::invalid_argument("rho must be at most 1");
  Truth t;
  t.mu = Vec::Zero(d);
  t.rho = p.rho;
  if (p.v) {
    if (p.v->size() != d || std::abs(p.v->norm() - 1.0) > 1e-9 || (p.v->array() != 0).count() > k)
      throw std::invalid_argument("v must be a k-sparse unit vector");
    t.v = *p.v;
  } else {
    t.v = random_sparse_unit(c.seed, kStreamV, d, k);
  }
  SyntheticSamples::Model m;
  m.v = t.v;
  m.rho = p.rho;
  return assemble(Task::pca, n, d, k, c, std::move(m), std::move(t));
}

Dataset gen_regression_task(int64_t n, int d, int k, const RegressionTaskParams& p,
                            const ContaminationSpec& c) {
  c.validate(Task::regression, d, k);
  if (!(p.sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  Truth t;
  t.mu = Vec::Zero(d);
  t.sigma = p.sigma;
  if (p.beta) {
    if (p.beta->size() != d || (p.beta->array() != 0).count() > k)
      throw std::invalid_argument("beta must be k-sparse of dimension d");
    t.beta = *p.beta;
  } else {
    t.beta = p.beta_norm * random_sparse_unit(c.seed, kStreamBeta, d, k);
  }
  if (t.beta.norm() > p.max_norm_ratio * p.sigma)
    throw std::invalid_argument("||beta|| exceeds the configured multiple of sigma");
  Vec beta = t.beta;
  Dataset ds = assemble(Task::regression, n, d, k, c, SyntheticSamples::Model{}, std::move(t));
  std::vector<int> supp = support_of(beta);
  const auto& x = *ds.x;
  ds.y.resize(n);
  parallel_blocks((n + 4095) / 4096, [&](int, int64_t b) {
    std::vector<double> xs(supp.size());
    for (int64_t i = b * 4096; i < std::min(n, (b + 1) * 4096); ++i) {
      const bool out = ds.is_outlier(i);
      if (out && c.adversary == Adversary::custom_points) {
        const auto& pts = c.points;
        int j = std::min(int(uniform_at(c.seed, kTagLabel, i, 1) * pts.rows()), int(pts.rows()) - 1);
        ds.y[i] = pts(j, d);
        continue;
      }
      x.read_entries(i, supp.data(), int(supp.size()), xs.data());
      double xb = 0;
      for (size_t a = 0; a < supp.size(); ++a) xb += xs[a] * beta[supp[a]];
      double noise = p.sigma * normal_at(c.seed, kTagAux, i, 0);
      ds.y[i] = (out ? -xb : xb) + noise;
    }
  });
  return ds;
}

SamplesPtr inlier_view(const Dataset& ds) {
  if (!ds.labels) return ds.x;
  std::vector<int64_t> idx;
  idx.reserve(ds.n() - ds.outliers);
  for (int64_t i = 0; i < ds.n(); ++i)
    if (!ds.is_outlier(i)) idx.push_back(i);
  return std::make_shared<IndexedSamples>(ds.x, std::move(idx));
}

std::shared_ptr<DenseSamples> materialize(const Samples& s) {
  RowMatrix x(s.rows(), s.dim());
  const int64_t n = s.rows();
  parallel_blocks((n + 2047) / 2048, [&](int, int64_t b) {
    const int64_t first = b * 2048, cnt = std::min<int64_t>(2048, n - first);
    s.read_rows(first, cnt, x.data() + first * s.dim());
  });
  return std::make_shared<DenseSamples>(std::move(x));
}

std::string labels_path(const std::string& csv_path) {
  return std::filesystem::path(csv_path).replace_extension(".labels").string();
}
std::string truth_path(const std::string& csv_path) {
  return std::filesystem::path(csv_path).replace_extension(".truth.json").string();
}

void write_dataset(const Dataset& ds, const std::string& csv_path) {
  std::ofstream f(csv_path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + csv_path);
  const int d = ds.d();
  f << "# d=" << d << " task=" << to_string(ds.task) << " seed=" << ds.seed << "\n";
  std::vector<double> row(d);
  std::string line;
  for (int64_t i = 0; i < ds.n(); ++i) {
    ds.x->read_row(i, row.data());
    line.clear();
    for (int j = 0; j < d; ++j) {
      if (j) line += ',';
      line += fmt_double(row[j]);
    }
    if (ds.task == Task::regression) line += "," + fmt_double(ds.y[i]);
    line += '\n';
    f << line;
  }
  if (!f) throw std::runtime_error("write failed: " + csv_path);

  if (ds.labels) {
    std::ofstream l(labels_path(csv_path));
    for (uint8_t b : *ds.labels) l << int(b) << '\n';
  }
  nlohmann::json j;
  j["task"] = to_string(ds.task);
  j["n"] = ds.n();
  j["d"] = d;
  j["k"] = ds.k;
  j["seed"] = ds.seed;
  j["epsilon"] = ds.contamination.epsilon;
  j["adversary"] = to_string(ds.contamination.adversary);
  j["outliers"] = ds.outliers;
  if (ds.truth) {
    const Truth& t = *ds.truth;
    if (t.mu.size()) j["mu"] = to_vector(t.mu);
    if (ds.task == Task::pca) {
      j["rho"] = t.rho;
      j["v"] = to_vector(t.v);
    }
    if (ds.task == Task::regression) {
      j["beta"] = to_vector(t.beta);
      j["sigma"] = t.sigma;
    }
    if (t.adversary_direction.size()) j["adversary_direction"] = to_vector(t.adversary_direction);
    j["adversary_delta"] = t.adversary_delta;
  }
  std::ofstream tj(truth_path(csv_path));
  tj << j.dump(1) << "\n";
}

Dataset load_dataset(const std::string& csv_path) {
  std::ifstream f(csv_path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + csv_path);
  std::string header;
  std::getline(f, header);
  int d = -1;
  Dataset ds;
  {
    std::istringstream hs(header);
    std::string tok;
    hs >> tok;
    if (tok != "#") throw std::runtime_error("missing '# d=... task=... seed=...' header");
    while (hs >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "d") d = std::stoi(val);
      if (key == "task") ds.task = task_from_string(val);
      if (key == "seed") ds.seed = std::stoull(val);
    }
  }
  if (d < 1) throw std::runtime_error("header lacks d");
  const int cols = ds.task == Task::regression ? d + 1 : d;
  std::vector<double> vals;
  std::string line;
  int64_t n = 0;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    const char* p = line.data();
    const char* end = p + line.size();
    int c = 0;
    while (p < end) {
      double v;
      auto r = std::from_chars(p, end, v);
      if (r.ec != std::errc()) throw std::runtime_error("bad number on data line " + std::to_string(n + 1));
      vals.push_back(v);
      ++c;
      p = r.ptr;
      if (p < end && *p == ',') ++p;
      else if (p < end && *p == '\r') break;
    }
    if (c != cols)
      throw std::runtime_error("data line " + std::to_string(n + 1) + " has " + std::to_string(c) +
                               " values, expected " + std::to_string(cols));
    ++n;
  }
  RowMatrix x(n, d);
  for (int64_t i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) x(i, j) = vals[size_t(i) * cols + j];
    if (ds.task == Task::regression) ds.y.push_back(vals[size_t(i) * cols + d]);
  }
  ds.x = std::make_shared<DenseSamples>(std::move(x));

  std::ifstream lf(labels_path(csv_path));
  if (lf) {
    auto labels = std::make_shared<std::vector<uint8_t>>();
    labels->reserve(n);
    int b;
    while (lf >> b) labels->push_back(uint8_t(b != 0));
    if (int64_t(labels->size()) != n) throw std::runtime_error("label count does not match rows");
    ds.outliers = std::count(labels->begin(), labels->end(), 1);
    ds.labels = labels;
  }
  std::ifstream tf(truth_path(csv_path));
  if (tf) {
    auto j = nlohmann::json::parse(tf);
    Truth t;
    ds.k = j.value("k", 1);
    ds.contamination.epsilon = j.value("epsilon", 0.0);
    ds.contamination.adversary = adversary_from_string(j.value("adversary", std::string("none")));
    ds.contamination.seed = ds.seed;
    if (j.contains("mu")) t.mu = from_json_vec(j["mu"]);
    if (j.contains("v")) t.v = from_json_vec(j["v"]);
    if (j.contains("beta")) t.beta = from_json_vec(j["beta"]);
    if (j.contains("adversary_direction")) t.adversary_direction = from_json_vec(j["adversary_direction"]);
    t.rho = j.value("rho", 0.0);
    t.sigma = j.value("sigma", 0.0);
    t.adversary_delta = j.value("adversary_delta", 0.0);
    ds.truth = t;
  }
  return ds;
}

}  // namespace rs
