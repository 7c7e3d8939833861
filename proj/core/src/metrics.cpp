#include "rdistill/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "rdistill/core_math.hpp"
#include "rdistill/errors.hpp"

namespace rdistill {

std::vector<std::size_t> predict(const Matrix& logits) {
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) out[i] = argmax(logits.row(i));
  return out;
}

double worst_k_mean(std::span<const double> values, std::size_t k) {
  if (k < 1 || k > values.size()) throw InvalidInput("worst-k: k must be in [1, m]");
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double s = 0.0;
  for (std::size_t r = 0; r < k; ++r) s += values[idx[r]];
  return s / static_cast<double>(k);
}

EvalReport evaluate(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                    std::size_t num_classes, std::size_t k) {
  if (predictions.size() != labels.size()) throw InvalidInput("evaluate: size mismatch");
  if (labels.empty()) throw InvalidInput("evaluate: empty sample");
  if (k < 1 || k > num_classes) throw InvalidInput("evaluate: k must be in [1, m]");
  EvalReport r;
  r.k = k;
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || predictions[i] >= num_classes) {
      throw IndexError("evaluate: class index out of range");
    }
    ++r.confusion[labels[i]][predictions[i]];
    if (labels[i] == predictions[i]) ++correct;
  }
  r.per_class_recall.resize(num_classes);
  for (std::size_t y = 0; y < num_classes; ++y) {
    const std::size_t total =
        std::accumulate(r.confusion[y].begin(), r.confusion[y].end(), std::size_t{0});
    if (total == 0) {
      throw MissingClassError(y, "no examples of class " + std::to_string(y + 1) + " to evaluate");
    }
    r.per_class_recall[y] = static_cast<double>(r.confusion[y][y]) / static_cast<double>(total);
  }
  r.acc_std = static_cast<double>(correct) / static_cast<double>(labels.size());
  r.acc_bal = std::accumulate(r.per_class_recall.begin(), r.per_class_recall.end(), 0.0) /
              static_cast<double>(num_classes);
  r.acc_worst = *std::min_element(r.per_class_recall.begin(), r.per_class_recall.end());
  // The k-lowest mean lies in [min, mean] mathematically; clamp away rounding.
  r.acc_worst_k = std::min(std::max(worst_k_mean(r.per_class_recall, k), r.acc_worst), r.acc_bal);
  return r;
}

EvalReport evaluate(const Matrix& logits, std::span<const std::size_t> labels,
                    std::size_t num_classes, std::size_t k) {
  if (logits.cols() != num_classes) throw InvalidInput("evaluate: logits width mismatch");
  const auto pred = predict(logits);
  return evaluate(pred, labels, num_classes, k);
}

std::vector<std::size_t> nondominated_indices(std::span<const ParetoPoint> points) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    bool dominated = false;
    for (std::size_t j = 0; j < points.size() && !dominated; ++j) {
      const auto& q = points[j];
      if (q.balanced >= p.balanced && q.worst >= p.worst &&
          (q.balanced > p.balanced || q.worst > p.worst)) {
        dominated = true;
      } else if (j < i && q == p) {
        dominated = true;  // duplicate of an earlier point
      }
    }
    if (!dominated) keep.push_back(i);
  }
  std::stable_sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) {
    if (points[a].balanced != points[b].balanced) return points[a].balanced < points[b].balanced;
    return points[a].worst < points[b].worst;
  });
  return keep;
}

std::vector<ParetoPoint> nondominated_filter(std::span<const ParetoPoint> points) {
  std::vector<ParetoPoint> out;
  for (std::size_t i : nondominated_indices(points)) out.push_back(points[i]);
  return out;
}

}  // namespace rdistill
