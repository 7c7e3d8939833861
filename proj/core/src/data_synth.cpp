#include "rdistill/data_synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "rdistill/core_math.hpp"
#include "rdistill/errors.hpp"

namespace rdistill {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Lower Cholesky factor of a symmetric positive-definite matrix.
Matrix cholesky(const Matrix& a) {
  const std::size_t d = a.rows();
  Matrix l(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        if (!(s > 0.0)) throw InvalidInput("covariance is not positive definite");
        l(i, i) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  return l;
}

}  // namespace

Vec Dataset::empirical_priors() const {
  const auto counts = class_counts();
  Vec pi(num_classes);
  for (std::size_t y = 0; y < num_classes; ++y) {
    pi[y] = static_cast<double>(counts[y]) / static_cast<double>(size());
  }
  return pi;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t y : labels) ++counts.at(y);
  return counts;
}

GaussianMixtureModel::GaussianMixtureModel(Vec priors, std::vector<Vec> means,
                                           std::vector<Covariance> covariances)
    : priors_(std::move(priors)), means_(std::move(means)), covariances_(std::move(covariances)) {
  const std::size_t m = priors_.size();
  if (m < 2) throw InvalidInput("mixture needs at least 2 classes");
  if (means_.size() != m || covariances_.size() != m) {
    throw InvalidInput("mixture: priors, means and covariances must have one entry per class");
  }
  require_probability(priors_, "mixture priors");
  const std::size_t d = means_.front().size();
  if (d == 0) throw InvalidInput("mixture: dimension must be >= 1");
  for (const auto& mu : means_) {
    if (mu.size() != d) throw InvalidInput("mixture: inconsistent mean dimensions");
    require_finite(mu, "mixture mean");
  }
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      if (means_[a] == means_[b]) throw InvalidInput("mixture: class means must be distinct");
    }
  }
  chol_.resize(m);
  log_norm_.resize(m);
  for (std::size_t y = 0; y < m; ++y) {
    const auto& cov = covariances_[y];
    if (cov.full) {
      if (cov.full->rows() != d || cov.full->cols() != d) {
        throw InvalidInput("mixture: covariance shape mismatch");
      }
      chol_[y] = cholesky(*cov.full);
      double log_det = 0.0;
      for (std::size_t i = 0; i < d; ++i) log_det += 2.0 * std::log(chol_[y](i, i));
      log_norm_[y] = -0.5 * (static_cast<double>(d) * kLog2Pi + log_det);
    } else {
      if (!(cov.variance > 0.0)) throw InvalidInput("mixture: variance must be > 0");
      log_norm_[y] = -0.5 * static_cast<double>(d) * (kLog2Pi + std::log(cov.variance));
    }
  }
}

double GaussianMixtureModel::log_density(std::size_t y, std::span<const double> x) const {
  const std::size_t d = dim();
  const Vec& mu = means_[y];
  if (!covariances_[y].full) {
    double q = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double diff = x[i] - mu[i];
      q += diff * diff;
    }
    return log_norm_[y] - 0.5 * q / covariances_[y].variance;
  }
  // Forward substitution L z = (x - mu); quadratic form is |z|^2.
  const Matrix& l = chol_[y];
  Vec z(d);
  double q = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double s = x[i] - mu[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * z[k];
    z[i] = s / l(i, i);
    q += z[i] * z[i];
  }
  return log_norm_[y] - 0.5 * q;
}

void GaussianMixtureModel::draw(std::size_t y, CounterRng& rng, std::span<double> out) const {
  const std::size_t d = dim();
  const Vec& mu = means_[y];
  if (!covariances_[y].full) {
    const double sd = std::sqrt(covariances_[y].variance);
    for (std::size_t i = 0; i < d; ++i) out[i] = mu[i] + sd * rng.normal();
    return;
  }
  Vec z(d);
  for (auto& v : z) v = rng.normal();
  const Matrix& l = chol_[y];
  for (std::size_t i = 0; i < d; ++i) {
    double s = mu[i];
    for (std::size_t k = 0; k <= i; ++k) s += l(i, k) * z[k];
    out[i] = s;
  }
}

Vec decay_priors(const LongTailSpec& spec) {
  if (spec.num_classes < 2) throw InvalidInput("decay_priors: need m >= 2");
  if (!(spec.imbalance_ratio >= 1.0) || !std::isfinite(spec.imbalance_ratio)) {
    throw InvalidInput("decay_priors: imbalance ratio must be >= 1");
  }
  const std::size_t m = spec.num_classes;
  Vec w(m);
  for (std::size_t y = 0; y < m; ++y) {
    w[y] = std::pow(spec.imbalance_ratio,
                    -static_cast<double>(y) / static_cast<double>(m - 1));
  }
  // Pin the endpoints so max/min is the ratio to rounding.
  w.front() = 1.0;
  w.back() = 1.0 / spec.imbalance_ratio;
  const double total = stable_sum(w);
  for (auto& v : w) v /= total;
  return w;
}

GaussianMixtureModel make_model(std::size_t m, std::size_t d, const LongTailSpec& spec,
                                std::uint64_t seed, const MixtureOptions& options) {
  if (m < 2) throw InvalidInput("make_model: need m >= 2");
  if (d < 1) throw InvalidInput("make_model: need d >= 1");
  if (spec.num_classes != m) throw InvalidInput("make_model: LongTailSpec class count mismatch");
  if (!(options.radius > 0.0) || !(options.sigma > 0.0)) {
    throw InvalidInput("make_model: radius and sigma must be > 0");
  }
  Vec priors = decay_priors(spec);
  std::vector<Vec> means(m, Vec(d, 0.0));
  if (d == 1) {
    for (std::size_t y = 0; y < m; ++y) {
      means[y][0] = -options.radius +
                    2.0 * options.radius * static_cast<double>(y) / static_cast<double>(m - 1);
    }
  } else {
    CounterRng rng(hash_seed({seed, 0x6D65616E73ULL}));
    const double phase = 2.0 * std::numbers::pi * rng.uniform();
    for (std::size_t y = 0; y < m; ++y) {
      const double angle =
          phase + 2.0 * std::numbers::pi * static_cast<double>(y) / static_cast<double>(m);
      means[y][0] = options.radius * std::cos(angle);
      means[y][1] = options.radius * std::sin(angle);
    }
  }
  std::vector<Covariance> covs(m, Covariance{options.sigma * options.sigma, std::nullopt});
  return GaussianMixtureModel(std::move(priors), std::move(means), std::move(covs));
}

namespace {

Vec cumulative(const Vec& w) {
  Vec c(w.size());
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    s += w[i];
    c[i] = s;
  }
  return c;
}

}  // namespace

Dataset sample(const GaussianMixtureModel& model, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw InvalidInput("sample: n must be >= 1");
  CounterRng rng(seed);
  const Vec cdf = cumulative(model.priors());
  Dataset out;
  out.num_classes = model.num_classes();
  out.features = Matrix(n, model.dim());
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = rng.categorical(cdf);
    out.labels[i] = y;
    model.draw(y, rng, out.features.row(i));
  }
  return out;
}

Dataset sample_stratified(const GaussianMixtureModel& model, std::size_t n,
                          std::size_t min_per_class, std::uint64_t seed) {
  const std::size_t m = model.num_classes();
  if (n < m * min_per_class) {
    throw InvalidInput("sample_stratified: n smaller than m * min_per_class");
  }
  CounterRng rng(seed);
  const Vec cdf = cumulative(model.priors());
  Matrix feats(n, model.dim());
  std::vector<std::size_t> labels(n);
  std::size_t i = 0;
  for (std::size_t y = 0; y < m; ++y) {
    for (std::size_t k = 0; k < min_per_class; ++k, ++i) {
      labels[i] = y;
      model.draw(y, rng, feats.row(i));
    }
  }
  for (; i < n; ++i) {
    const std::size_t y = rng.categorical(cdf);
    labels[i] = y;
    model.draw(y, rng, feats.row(i));
  }
  const auto perm = shuffled_indices(n, rng);
  Dataset out;
  out.num_classes = m;
  out.features = Matrix(n, model.dim());
  out.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto src = feats.row(perm[r]);
    std::copy(src.begin(), src.end(), out.features.row(r).begin());
    out.labels[r] = labels[perm[r]];
  }
  return out;
}

Vec eta(const GaussianMixtureModel& model, std::span<const double> x) {
  if (x.size() != model.dim()) throw InvalidInput("eta: dimension mismatch");
  require_finite(x, "eta");
  const std::size_t m = model.num_classes();
  Vec logp(m);
  for (std::size_t y = 0; y < m; ++y) {
    logp[y] = std::log(model.priors()[y]) + model.log_density(y, x);
  }
  Vec out(m);
  softmax_into(logp, out);
  return out;
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  const std::size_t d = data.dim();
  for (std::size_t j = 0; j < d; ++j) os << 'x' << j << ',';
  os << "y\n";
  char buf[40];
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", data.features(i, j));
      os << buf << ',';
    }
    os << data.labels[i] + 1 << '\n';
  }
  if (!os) throw IoError("write failed for " + path);
}

namespace {

template <typename T>
T parse_number(const std::string& tok, const std::string& path, std::size_t lineno) {
  T value{};
  const char* end = tok.data() + tok.size();
  const auto [ptr, ec] = std::from_chars(tok.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw IoError(path + ": cannot parse '" + tok + "' at line " + std::to_string(lineno));
  }
  return value;
}

}  // namespace

Dataset read_dataset_csv(const std::string& path, std::size_t num_classes) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw IoError(path + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::size_t d = 0;
  {
    std::stringstream ss(line);
    std::string tok;
    std::vector<std::string> cols;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
    if (cols.size() < 2 || cols.back() != "y") throw IoError(path + ": bad header");
    d = cols.size() - 1;
    for (std::size_t j = 0; j < d; ++j) {
      if (cols[j] != "x" + std::to_string(j)) throw IoError(path + ": bad header column");
    }
  }
  Dataset out;
  out.features = Matrix(0, d);
  Vec row(d);
  std::size_t max_label = 0;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    for (std::size_t j = 0; j < d; ++j) {
      if (!std::getline(ss, tok, ',')) throw IoError(path + ": short row " + std::to_string(lineno));
      row[j] = parse_number<double>(tok, path, lineno);
      if (!std::isfinite(row[j])) throw IoError(path + ": non-finite value at line " + std::to_string(lineno));
    }
    if (!std::getline(ss, tok, ',')) throw IoError(path + ": missing label " + std::to_string(lineno));
    const long label = parse_number<long>(tok, path, lineno);
    if (label < 1) throw IoError(path + ": labels must be 1-based");
    out.features.append_row(row);
    out.labels.push_back(static_cast<std::size_t>(label - 1));
    max_label = std::max(max_label, static_cast<std::size_t>(label));
  }
  out.num_classes = num_classes == 0 ? max_label : num_classes;
  if (max_label > out.num_classes) throw IoError(path + ": label exceeds class count");
  return out;
}

std::string model_to_json(const GaussianMixtureModel& model) {
  nlohmann::json j;
  j["format"] = "rdistill.gaussian_mixture";
  j["version"] = 1;
  j["priors"] = model.priors();
  j["means"] = model.means();
  nlohmann::json covs = nlohmann::json::array();
  for (const auto& c : model.covariances()) {
    if (c.full) {
      std::vector<double> flat(c.full->data().begin(), c.full->data().end());
      covs.push_back({{"full", flat}});
    } else {
      covs.push_back({{"variance", c.variance}});
    }
  }
  j["covariances"] = covs;
  return j.dump(2);
}

GaussianMixtureModel model_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  auto priors = j.at("priors").get<Vec>();
  auto means = j.at("means").get<std::vector<Vec>>();
  std::vector<Covariance> covs;
  const std::size_t d = means.empty() ? 0 : means.front().size();
  for (const auto& c : j.at("covariances")) {
    Covariance cov;
    if (c.contains("full")) {
      const auto flat = c.at("full").get<Vec>();
      if (flat.size() != d * d) throw InvalidInput("model json: covariance size mismatch");
      Matrix full(d, d);
      std::copy(flat.begin(), flat.end(), full.data().begin());
      cov.full = std::move(full);
    } else {
      cov.variance = c.at("variance").get<double>();
    }
    covs.push_back(std::move(cov));
  }
  return GaussianMixtureModel(std::move(priors), std::move(means), std::move(covs));
}

}  // namespace rdistill
