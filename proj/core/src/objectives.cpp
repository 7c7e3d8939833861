#include "rdistill/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "rdistill/core_math.hpp"
#include "rdistill/errors.hpp"

namespace rdistill {

double ObjectiveSpec::robust_weight() const {
  switch (kind) {
    case ObjectiveKind::Std:
    case ObjectiveKind::Bal:
      return 0.0;
    case ObjectiveKind::Rob:
      return 1.0;
    case ObjectiveKind::Tdf:
      return alpha;
  }
  return 0.0;
}

void validate(const ObjectiveSpec& spec) {
  if (!(spec.alpha >= 0.0 && spec.alpha <= 1.0)) throw InvalidInput("alpha must be in [0, 1]");
  if (spec.kind != ObjectiveKind::Tdf && spec.alpha != 0.0) {
    throw InvalidInput("alpha is only used by the tdf objective");
  }
}

ObjectiveSpec parse_objective(const std::string& name, double alpha) {
  std::string base = name;
  ObjectiveSpec spec;
  if (base.size() > 2 && base.ends_with("-d")) {
    spec.distilled = true;
    base.resize(base.size() - 2);
  }
  if (base == "std") {
    spec.kind = ObjectiveKind::Std;
  } else if (base == "bal") {
    spec.kind = ObjectiveKind::Bal;
  } else if (base == "rob") {
    spec.kind = ObjectiveKind::Rob;
  } else if (base == "tdf") {
    spec.kind = ObjectiveKind::Tdf;
    spec.alpha = alpha;
  } else {
    throw InvalidInput("unknown objective '" + name + "'");
  }
  validate(spec);
  return spec;
}

std::string objective_name(const ObjectiveSpec& spec) {
  std::string base;
  switch (spec.kind) {
    case ObjectiveKind::Std: base = "std"; break;
    case ObjectiveKind::Bal: base = "bal"; break;
    case ObjectiveKind::Rob: base = "rob"; break;
    case ObjectiveKind::Tdf: base = "tdf"; break;
  }
  return spec.distilled ? base + "-d" : base;
}

std::string loss_name(Loss loss) { return loss == Loss::Xent ? "xent" : "zero-one"; }

Loss parse_loss(const std::string& name) {
  if (name == "xent") return Loss::Xent;
  if (name == "zero-one" || name == "0-1" || name == "zero_one") return Loss::ZeroOne;
  throw InvalidInput("unknown loss '" + name + "'");
}

Vec column_means(const Matrix& weights) {
  const std::size_t n = weights.rows();
  Vec out(weights.cols());
  for (std::size_t y = 0; y < weights.cols(); ++y) {
    CompensatedSum acc;
    for (std::size_t i = 0; i < n; ++i) acc.add(weights(i, y));
    out[y] = acc.value() / static_cast<double>(n);
  }
  return out;
}

SoftLabelSet::SoftLabelSet(Matrix probs) : probs_(std::move(probs)) {
  if (probs_.rows() == 0) throw InvalidInput("SoftLabelSet: empty");
  if (probs_.cols() < 2) throw InvalidInput("SoftLabelSet: need at least 2 classes");
  for (std::size_t i = 0; i < probs_.rows(); ++i) {
    require_probability(probs_.row(i), "SoftLabelSet row");
  }
  marginal_ = column_means(probs_);
}

SoftLabelSet SoftLabelSet::one_hot(std::span<const std::size_t> labels, std::size_t num_classes) {
  Matrix p(labels.size(), num_classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw IndexError("one_hot: label out of range");
    p(i, labels[i]) = 1.0;
  }
  return SoftLabelSet(std::move(p));
}

double loss_value(Loss loss, std::size_t y, std::span<const double> logits) {
  return loss == Loss::Xent ? xent_loss(y, logits) : static_cast<double>(zero_one_loss(y, logits));
}

namespace {

void require_rows(const Matrix& logits, std::size_t n) {
  if (n == 0) throw InvalidInput("objective on an empty sample");
  if (logits.rows() != n) throw InvalidInput("logits rows do not match sample size");
}

// Shared estimator for one-hot and distilled per-class risks:
//   risk_y = ((1/n) sum_i w_iy loss(y, f_i)) / ((1/n) sum_i w_iy)
// with w given by `weight(i, y)`. One-hot and soft weights go through the
// same arithmetic, so exact one-hot soft labels reproduce one-hot risks bitwise.
template <typename Weight>
PerClassRisk weighted_per_class_risk(const Matrix& logits, std::size_t m, Loss loss,
                                     Weight weight, bool distilled) {
  const std::size_t n = logits.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  PerClassRisk out;
  out.distilled = distilled;
  out.values.resize(m);
  for (std::size_t y = 0; y < m; ++y) {
    CompensatedSum num;
    CompensatedSum mass;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = weight(i, y);
      mass.add(w);
      if (w != 0.0) num.add(w * loss_value(loss, y, logits.row(i)));
    }
    const double marginal = mass.value() * inv_n;
    if (!(marginal > 0.0)) {
      throw MissingClassError(y, distilled
                                     ? "teacher marginal is zero for class " + std::to_string(y + 1)
                                     : "no examples of class " + std::to_string(y + 1));
    }
    out.values[y] = (num.value() * inv_n) / marginal;
  }
  return out;
}

}  // namespace

double empirical_std(const Matrix& logits, std::span<const std::size_t> labels, Loss loss) {
  require_rows(logits, labels.size());
  CompensatedSum acc;
  for (std::size_t i = 0; i < labels.size(); ++i) acc.add(loss_value(loss, labels[i], logits.row(i)));
  return acc.value() / static_cast<double>(labels.size());
}

PerClassRisk per_class_risk_onehot(const Matrix& logits, std::span<const std::size_t> labels,
                                   std::size_t num_classes, Loss loss) {
  require_rows(logits, labels.size());
  if (logits.cols() != num_classes) throw InvalidInput("logits width does not match class count");
  for (std::size_t y : labels) {
    if (y >= num_classes) throw IndexError("label out of range");
  }
  return weighted_per_class_risk(
      logits, num_classes, loss,
      [&](std::size_t i, std::size_t y) { return labels[i] == y ? 1.0 : 0.0; }, false);
}

double mean_of(const PerClassRisk& r) {
  return stable_sum(r.values) / static_cast<double>(r.values.size());
}

double max_of(const PerClassRisk& r) { return *std::max_element(r.values.begin(), r.values.end()); }

double tradeoff_of(const PerClassRisk& r, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidInput("alpha must be in [0, 1]");
  return (1.0 - alpha) * mean_of(r) + alpha * max_of(r);
}

double empirical_bal(const Matrix& logits, std::span<const std::size_t> labels,
                     std::size_t num_classes, Loss loss) {
  return mean_of(per_class_risk_onehot(logits, labels, num_classes, loss));
}

double empirical_rob(const Matrix& logits, std::span<const std::size_t> labels,
                     std::size_t num_classes, Loss loss) {
  return max_of(per_class_risk_onehot(logits, labels, num_classes, loss));
}

double empirical_tdf(const Matrix& logits, std::span<const std::size_t> labels,
                     std::size_t num_classes, Loss loss, double alpha) {
  return tradeoff_of(per_class_risk_onehot(logits, labels, num_classes, loss), alpha);
}

PerClassRisk distilled_per_class_risk(const Matrix& logits, const SoftLabelSet& soft, Loss loss) {
  require_rows(logits, soft.size());
  if (logits.cols() != soft.num_classes()) throw InvalidInput("logits width does not match soft labels");
  const Matrix& p = soft.probs();
  return weighted_per_class_risk(
      logits, soft.num_classes(), loss, [&](std::size_t i, std::size_t y) { return p(i, y); }, true);
}

double empirical_bal_d(const Matrix& logits, const SoftLabelSet& soft, Loss loss) {
  return mean_of(distilled_per_class_risk(logits, soft, loss));
}

double empirical_rob_d(const Matrix& logits, const SoftLabelSet& soft, Loss loss) {
  return max_of(distilled_per_class_risk(logits, soft, loss));
}

double empirical_tdf_d(const Matrix& logits, const SoftLabelSet& soft, Loss loss, double alpha) {
  return tradeoff_of(distilled_per_class_risk(logits, soft, loss), alpha);
}

double distilled_std(const Matrix& logits, const SoftLabelSet& soft, Loss loss) {
  require_rows(logits, soft.size());
  const Matrix& p = soft.probs();
  CompensatedSum acc;
  for (std::size_t i = 0; i < soft.size(); ++i) {
    // Zero-weight terms are skipped so one-hot soft labels reproduce empirical_std bitwise.
    double row = 0.0;
    bool first = true;
    for (std::size_t y = 0; y < soft.num_classes(); ++y) {
      if (p(i, y) == 0.0) continue;
      const double term = p(i, y) * loss_value(loss, y, logits.row(i));
      row = first ? term : row + term;
      first = false;
    }
    acc.add(row);
  }
  return acc.value() / static_cast<double>(soft.size());
}

double empirical_variance_diag(const Matrix& logits, const SoftLabelSet& soft, Loss loss,
                               std::size_t y) {
  require_rows(logits, soft.size());
  if (y >= soft.num_classes()) throw IndexError("class index out of range");
  const std::size_t n = soft.size();
  if (n < 2) throw InvalidInput("variance needs at least 2 examples");
  Vec v(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = soft.probs()(i, y);
    v[i] = w == 0.0 ? 0.0 : w * loss_value(loss, y, logits.row(i));
  }
  const double mean = stable_sum(v) / static_cast<double>(n);
  CompensatedSum ss;
  for (double x : v) ss.add((x - mean) * (x - mean));
  return ss.value() / static_cast<double>(n - 1);
}

double evaluate_objective(const ObjectiveSpec& spec, const Matrix& logits,
                          std::span<const std::size_t> labels, const SoftLabelSet* soft) {
  validate(spec);
  if (spec.distilled) {
    if (soft == nullptr) throw InvalidInput("distilled objective needs soft labels");
    if (spec.kind == ObjectiveKind::Std) return distilled_std(logits, *soft, spec.loss);
    return tradeoff_of(distilled_per_class_risk(logits, *soft, spec.loss), spec.robust_weight());
  }
  if (spec.kind == ObjectiveKind::Std) return empirical_std(logits, labels, spec.loss);
  return tradeoff_of(per_class_risk_onehot(logits, labels, logits.cols(), spec.loss),
                     spec.robust_weight());
}

}  // namespace rdistill
