#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rdistill/matrix.hpp"
#include "rdistill/rng.hpp"

namespace rdistill {

/// Labeled sample. Labels are zero-based class indices.
struct Dataset {
  Matrix features;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }
  /// count(y) / n per class.
  Vec empirical_priors() const;
  std::vector<std::size_t> class_counts() const;
};

struct LongTailSpec {
  double imbalance_ratio = 1.0;
  std::size_t num_classes = 2;
};

/// Per-class covariance. Isotropic unless a full matrix is supplied.
struct Covariance {
  double variance = 1.0;
  std::optional<Matrix> full;
};

struct MixtureOptions {
  double radius = 2.0;
  double sigma = 1.0;
};

/// Class-conditional Gaussians with known priors, so the Bayes posterior
/// eta(x) is available in closed form.
class GaussianMixtureModel {
 public:
  GaussianMixtureModel(Vec priors, std::vector<Vec> means, std::vector<Covariance> covariances);

  std::size_t num_classes() const noexcept { return priors_.size(); }
  std::size_t dim() const noexcept { return means_.front().size(); }
  const Vec& priors() const noexcept { return priors_; }
  const std::vector<Vec>& means() const noexcept { return means_; }
  const std::vector<Covariance>& covariances() const noexcept { return covariances_; }

  /// log N(x; mu_y, Sigma_y).
  double log_density(std::size_t y, std::span<const double> x) const;
  /// Writes one draw from class y into `out`, consuming normals from `rng`.
  void draw(std::size_t y, CounterRng& rng, std::span<double> out) const;

 private:
  Vec priors_;
  std::vector<Vec> means_;
  std::vector<Covariance> covariances_;
  // Lower Cholesky factor per class (empty for isotropic classes).
  std::vector<Matrix> chol_;
  std::vector<double> log_norm_;
};

/// pi_y proportional to rho^{-(y)/(m-1)} for zero-based y, normalized.
Vec decay_priors(const LongTailSpec& spec);

/// Priors from decay_priors; means equally spaced on a circle of the given
/// radius in the first two coordinates (phase offset drawn from seed), or
/// evenly spaced on [-r, r] when d == 1; isotropic sigma^2 I covariances.
GaussianMixtureModel make_model(std::size_t m, std::size_t d, const LongTailSpec& spec,
                                std::uint64_t seed, const MixtureOptions& options = {});

/// n i.i.d. draws: label from the priors, features from that class's Gaussian.
Dataset sample(const GaussianMixtureModel& model, std::size_t n, std::uint64_t seed);

/// Like sample(), but guarantees at least `min_per_class` examples of each
/// class: m * min_per_class rows are drawn class by class, the remaining
/// n - m * min_per_class i.i.d., and the rows are shuffled.
Dataset sample_stratified(const GaussianMixtureModel& model, std::size_t n,
                          std::size_t min_per_class, std::uint64_t seed);

/// Bayes posterior pi_y N(x; mu_y) / sum_j pi_j N(x; mu_j), in log space.
Vec eta(const GaussianMixtureModel& model, std::span<const double> x);

// CSV with header x0,...,x{d-1},y and 1-based integer labels.
void write_dataset_csv(const Dataset& data, const std::string& path);
Dataset read_dataset_csv(const std::string& path, std::size_t num_classes = 0);

// Model spec as JSON (priors, means, per-class variance or full covariance).
std::string model_to_json(const GaussianMixtureModel& model);
GaussianMixtureModel model_from_json(const std::string& text);

}  // namespace rdistill
