#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rdistill/matrix.hpp"

namespace rdistill {

struct EvalReport {
  Vec per_class_recall;
  double acc_std = 0.0;
  double acc_bal = 0.0;
  double acc_worst = 0.0;
  double acc_worst_k = 0.0;
  std::size_t k = 1;
  /// confusion[true][predicted] counts.
  std::vector<std::vector<std::size_t>> confusion;

  bool operator==(const EvalReport&) const = default;
};

/// Row-wise argmax with the lowest-index tie rule.
std::vector<std::size_t> predict(const Matrix& logits);

/// Metrics from hard predictions. Every class must appear in `labels`
/// (MissingClassError otherwise) and 1 <= k <= m.
EvalReport evaluate(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                    std::size_t num_classes, std::size_t k);
EvalReport evaluate(const Matrix& logits, std::span<const std::size_t> labels,
                    std::size_t num_classes, std::size_t k);

/// Mean of the k smallest entries; ties in the selection go to the lower index.
double worst_k_mean(std::span<const double> values, std::size_t k);

struct ParetoPoint {
  double balanced = 0.0;
  double worst = 0.0;
  bool operator==(const ParetoPoint&) const = default;
};

/// Indices of the non-dominated points, sorted by balanced accuracy (then
/// worst) ascending. A point is dropped when another is >= in both
/// coordinates and > in one; exact duplicates keep their first occurrence.
std::vector<std::size_t> nondominated_indices(std::span<const ParetoPoint> points);
std::vector<ParetoPoint> nondominated_filter(std::span<const ParetoPoint> points);

}  // namespace rdistill
