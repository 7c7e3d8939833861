#pragma once

// Standard, balanced, robust and traded-off objectives, one-hot and
// distilled. Every function takes the scorer's logits on the sample
// (row i = f(x_i)); compute them with Scorer::logits.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rdistill/data_synth.hpp"
#include "rdistill/matrix.hpp"

namespace rdistill {

enum class Loss { Xent, ZeroOne };
enum class ObjectiveKind { Std, Bal, Rob, Tdf };

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::Std;
  double alpha = 0.0;  // only meaningful for Tdf
  bool distilled = false;
  Loss loss = Loss::Xent;

  /// Weight on the robust term: 0 for Bal, 1 for Rob, alpha for Tdf.
  double robust_weight() const;
  bool operator==(const ObjectiveSpec&) const = default;
};

void validate(const ObjectiveSpec& spec);
/// "std", "bal", "rob", "tdf" with an optional "-d" suffix for distilled.
ObjectiveSpec parse_objective(const std::string& name, double alpha = 0.0);
std::string objective_name(const ObjectiveSpec& spec);
std::string loss_name(Loss loss);
Loss parse_loss(const std::string& name);

/// Teacher probability rows p^t(x_i) and their column means pi^t.
class SoftLabelSet {
 public:
  SoftLabelSet() = default;
  /// Validates every row against the simplex (tolerance 1e-9) and caches the marginal.
  explicit SoftLabelSet(Matrix probs);
  static SoftLabelSet one_hot(std::span<const std::size_t> labels, std::size_t num_classes);

  const Matrix& probs() const noexcept { return probs_; }
  const Vec& teacher_marginal() const noexcept { return marginal_; }
  std::size_t size() const noexcept { return probs_.rows(); }
  std::size_t num_classes() const noexcept { return probs_.cols(); }

  bool operator==(const SoftLabelSet&) const = default;

 private:
  Matrix probs_;
  Vec marginal_;
};

/// Column means in ascending row order with compensated summation.
Vec column_means(const Matrix& weights);

struct PerClassRisk {
  Vec values;
  bool distilled = false;
};

double loss_value(Loss loss, std::size_t y, std::span<const double> logits);

double empirical_std(const Matrix& logits, std::span<const std::size_t> labels, Loss loss);
/// Class-conditional mean loss; throws MissingClassError for an absent class.
PerClassRisk per_class_risk_onehot(const Matrix& logits, std::span<const std::size_t> labels,
                                   std::size_t num_classes, Loss loss);
double empirical_bal(const Matrix& logits, std::span<const std::size_t> labels,
                     std::size_t num_classes, Loss loss);
double empirical_rob(const Matrix& logits, std::span<const std::size_t> labels,
                     std::size_t num_classes, Loss loss);
double empirical_tdf(const Matrix& logits, std::span<const std::size_t> labels,
                     std::size_t num_classes, Loss loss, double alpha);

/// Entry y = (1 / pi^t_y) (1/n) sum_i p^t_y(x_i) loss(y, f(x_i)).
PerClassRisk distilled_per_class_risk(const Matrix& logits, const SoftLabelSet& soft, Loss loss);
double empirical_bal_d(const Matrix& logits, const SoftLabelSet& soft, Loss loss);
double empirical_rob_d(const Matrix& logits, const SoftLabelSet& soft, Loss loss);
double empirical_tdf_d(const Matrix& logits, const SoftLabelSet& soft, Loss loss, double alpha);
/// (1/n) sum_i sum_y p^t_y(x_i) loss(y, f(x_i)).
double distilled_std(const Matrix& logits, const SoftLabelSet& soft, Loss loss);

/// Unbiased sample variance of {p^t_y(x_i) loss(y, f(x_i))}_i for a fixed class y.
double empirical_variance_diag(const Matrix& logits, const SoftLabelSet& soft, Loss loss,
                               std::size_t y);

double mean_of(const PerClassRisk& r);
double max_of(const PerClassRisk& r);
/// (1 - alpha) mean + alpha max.
double tradeoff_of(const PerClassRisk& r, double alpha);

/// Dispatch on spec: one-hot objectives use `labels`, distilled ones use `soft`.
double evaluate_objective(const ObjectiveSpec& spec, const Matrix& logits,
                          std::span<const std::size_t> labels, const SoftLabelSet* soft);

}  // namespace rdistill
