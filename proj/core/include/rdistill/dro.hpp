#pragma once

// Margin-based group DRO over per-class multipliers lambda, with teacher
// (distilled) or one-hot labels on the validation side and an optional
// balanced/robust trade-off alpha.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rdistill/data_synth.hpp"
#include "rdistill/mlp.hpp"
#include "rdistill/objectives.hpp"

namespace rdistill {

/// A point of the probability simplex.
class SimplexWeights {
 public:
  SimplexWeights() = default;
  /// Validates membership (non-negative, sums to 1 within 1e-9).
  explicit SimplexWeights(Vec lambda);
  static SimplexWeights uniform(std::size_t m);

  const Vec& values() const noexcept { return lambda_; }
  std::size_t size() const noexcept { return lambda_.size(); }
  double operator[](std::size_t i) const { return lambda_[i]; }

 private:
  Vec lambda_;
};

enum class ValLabelSource { Teacher, OneHot };
enum class ReturnMode { Last, Average };

std::string val_label_source_name(ValLabelSource s);
ValLabelSource parse_val_label_source(const std::string& name);
std::string return_mode_name(ReturnMode r);
ReturnMode parse_return_mode(const std::string& name);

struct DroConfig {
  std::size_t rounds = 50;  // K
  double eg_step = 0.1;     // gamma
  SgdConfig inner{.epochs = 1};
  Loss lambda_loss = Loss::ZeroOne;
  ValLabelSource val_labels = ValLabelSource::Teacher;
  ReturnMode return_mode = ReturnMode::Last;
  double alpha = 1.0;  // 1 = pure robust
  std::uint64_t seed = 0;
};

void validate(const DroConfig& config);

struct DroTraceRow {
  std::size_t iter = 0;
  Vec lambda;  // lambda^{k+1}, after the EG step of round k
  Vec beta;    // (1 - alpha)/m + alpha lambda^{k+1}
  Vec risks;   // validation risks of f^k that drove the step
  double objective = 0.0;  // (1 - alpha) mean(risks) + alpha max(risks)
};

struct DroTrace {
  std::vector<DroTraceRow> rows;
};

/// Validation side of the DRO loop: features plus either teacher soft labels
/// (ValLabelSource::Teacher) or class labels (ValLabelSource::OneHot).
struct DroValidation {
  Matrix features;
  std::vector<std::size_t> labels;
  std::optional<SoftLabelSet> soft;
  std::size_t num_classes = 0;
};

struct DroResult {
  Scorer scorer;  // last iterate, or the logit average of f^1..f^K
  DroTrace trace;
};

/// lambda_j exp(gamma R_j), normalized; computed with max-subtraction in log space.
SimplexWeights eg_update(std::span<const double> lambda, std::span<const double> risks,
                         double gamma);

PerClassRisk val_risks_teacher(const Matrix& val_logits, const SoftLabelSet& val_soft,
                               Loss lambda_loss);
PerClassRisk val_risks_onehot(const Matrix& val_logits, std::span<const std::size_t> val_labels,
                              std::size_t num_classes, Loss lambda_loss);

/// Warm-started SGD on (1/n) sum_i L^mar(p^t(x_i), f(x_i); costs).
TrainResult inner_minimize(ScorerParams params, const Matrix& train_features,
                           const SoftLabelSet& train_soft, std::span<const double> costs,
                           const SgdConfig& inner);

/// K rounds of: EG step on lambda from validation risks of f^k (step gamma*alpha),
/// beta = (1 - alpha)/m + alpha lambda, then inner_minimize with costs beta / pi^t.
DroResult distilled_margin_dro(const SoftLabelSet& train_soft, const Matrix& train_features,
                               const DroValidation& val, const DroConfig& config,
                               ScorerParams init);

/// Same loop with one-hot training labels and one-hot validation risks.
DroResult train_robust_onehot(const Dataset& train, const Dataset& val, const DroConfig& config,
                              ScorerParams init);

/// CSV: iter,lambda_1..lambda_m,risk_1..risk_m,objective
void write_trace_csv(const DroTrace& trace, const std::string& path);

}  // namespace rdistill
