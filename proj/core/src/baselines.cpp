#include "rdistill/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "rdistill/core_math.hpp"
#include "rdistill/errors.hpp"
#include "rdistill/metrics.hpp"

namespace rdistill {

Vec PostShiftGrid::values() const {
  if (points < 1) throw InvalidInput("post-shift grid needs at least one point");
  if (!(upper >= lower)) throw InvalidInput("post-shift grid bounds are inverted");
  Vec v(points);
  if (points == 1) {
    v[0] = lower;
    return v;
  }
  for (std::size_t i = 0; i < points; ++i) {
    v[i] = lower + (upper - lower) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  // Snap the value nearest zero so the unadjusted teacher is on the grid.
  auto it = std::min_element(v.begin(), v.end(),
                             [](double a, double b) { return std::abs(a) < std::abs(b); });
  if (std::abs(*it) < 1e-12) *it = 0.0;
  return v;
}

std::size_t post_shift_predict(const PostShiftAdjustment& adj, std::span<const double> teacher_probs) {
  if (adj.log_gamma.size() != teacher_probs.size()) throw InvalidInput("post_shift_predict: size mismatch");
  std::size_t best = 0;
  double best_score = 0.0;
  for (std::size_t y = 0; y < teacher_probs.size(); ++y) {
    const double s = adj.log_gamma[y] + std::log(std::max(teacher_probs[y], kProbFloor));
    if (y == 0 || s > best_score) {
      best = y;
      best_score = s;
    }
  }
  return best;
}

std::vector<std::size_t> post_shift_predict_all(const PostShiftAdjustment& adj,
                                                const Matrix& teacher_probs) {
  std::vector<std::size_t> out(teacher_probs.rows());
  for (std::size_t i = 0; i < teacher_probs.rows(); ++i) {
    out[i] = post_shift_predict(adj, teacher_probs.row(i));
  }
  return out;
}

double post_shift_worst_accuracy(const PostShiftAdjustment& adj, const Matrix& teacher_probs,
                                 std::span<const std::size_t> labels, std::size_t num_classes) {
  const auto pred = post_shift_predict_all(adj, teacher_probs);
  return evaluate(pred, labels, num_classes, 1).acc_worst;
}

namespace {

double squared_norm(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

// True when candidate (acc, g) should replace the incumbent.
bool better(double acc, const Vec& g, double best_acc, const Vec& best) {
  if (acc != best_acc) return acc > best_acc;
  const double na = squared_norm(g);
  const double nb = squared_norm(best);
  if (na != nb) return na < nb;
  return std::lexicographical_compare(g.begin(), g.end(), best.begin(), best.end());
}

}  // namespace

PostShiftAdjustment post_shift_fit(const Matrix& val_teacher_probs,
                                   std::span<const std::size_t> val_labels, std::size_t num_classes,
                                   const PostShiftGrid& grid) {
  if (val_teacher_probs.rows() != val_labels.size()) throw InvalidInput("post_shift_fit: size mismatch");
  if (val_teacher_probs.cols() != num_classes) throw InvalidInput("post_shift_fit: class count mismatch");
  const Vec values = grid.values();

  // Log-probabilities are fixed; only the offsets move.
  Matrix logp(val_teacher_probs.rows(), num_classes);
  for (std::size_t i = 0; i < logp.rows(); ++i) {
    for (std::size_t y = 0; y < num_classes; ++y) {
      logp(i, y) = std::log(std::max(val_teacher_probs(i, y), kProbFloor));
    }
  }
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t y : val_labels) {
    if (y >= num_classes) throw IndexError("post_shift_fit: label out of range");
    ++counts[y];
  }
  for (std::size_t y = 0; y < num_classes; ++y) {
    if (counts[y] == 0) {
      throw MissingClassError(y, "validation set has no examples of class " + std::to_string(y + 1));
    }
  }
  auto worst_acc = [&](const Vec& g) {
    std::vector<std::size_t> hits(num_classes, 0);
    for (std::size_t i = 0; i < logp.rows(); ++i) {
      std::size_t best = 0;
      double best_s = g[0] + logp(i, 0);
      for (std::size_t y = 1; y < num_classes; ++y) {
        const double s = g[y] + logp(i, y);
        if (s > best_s) {
          best = y;
          best_s = s;
        }
      }
      if (best == val_labels[i]) ++hits[best];
    }
    double w = 1.0;
    for (std::size_t y = 0; y < num_classes; ++y) {
      w = std::min(w, static_cast<double>(hits[y]) / static_cast<double>(counts[y]));
    }
    return w;
  };

  Vec current(num_classes, 0.0);
  double current_acc = worst_acc(current);
  for (std::size_t sweep = 0; sweep < grid.sweeps; ++sweep) {
    bool changed = false;
    for (std::size_t j = 0; j < num_classes; ++j) {
      Vec best = current;
      double best_acc = current_acc;
      Vec cand = current;
      for (double v : values) {
        cand[j] = v;
        const double acc = worst_acc(cand);
        if (better(acc, cand, best_acc, best)) {
          best = cand;
          best_acc = acc;
        }
      }
      if (best != current) changed = true;
      current = std::move(best);
      current_acc = best_acc;
    }
    if (!changed) break;
  }
  return PostShiftAdjustment{current};
}

std::string adjustment_to_json(const PostShiftAdjustment& adj) {
  return nlohmann::json(adj.log_gamma).dump();
}

PostShiftAdjustment adjustment_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (!j.is_array()) throw IoError("adjustment JSON must be an array");
  return PostShiftAdjustment{j.get<Vec>()};
}

}  // namespace rdistill
