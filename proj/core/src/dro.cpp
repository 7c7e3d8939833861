#include "rdistill/dro.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "rdistill/core_math.hpp"
#include "rdistill/errors.hpp"
#include "rdistill/rng.hpp"

namespace rdistill {

SimplexWeights::SimplexWeights(Vec lambda) : lambda_(std::move(lambda)) {
  require_probability(lambda_, "SimplexWeights");
}

SimplexWeights SimplexWeights::uniform(std::size_t m) {
  if (m == 0) throw InvalidInput("SimplexWeights: empty");
  return SimplexWeights(Vec(m, 1.0 / static_cast<double>(m)));
}

std::string val_label_source_name(ValLabelSource s) {
  return s == ValLabelSource::Teacher ? "teacher" : "one-hot";
}

ValLabelSource parse_val_label_source(const std::string& name) {
  if (name == "teacher") return ValLabelSource::Teacher;
  if (name == "one-hot" || name == "onehot" || name == "one_hot") return ValLabelSource::OneHot;
  throw InvalidInput("unknown validation label source '" + name + "'");
}

std::string return_mode_name(ReturnMode r) { return r == ReturnMode::Last ? "last" : "average"; }

ReturnMode parse_return_mode(const std::string& name) {
  if (name == "last") return ReturnMode::Last;
  if (name == "average") return ReturnMode::Average;
  throw InvalidInput("unknown return mode '" + name + "'");
}

void validate(const DroConfig& c) {
  if (c.rounds < 1) throw InvalidInput("DRO needs at least one round");
  if (!(c.eg_step > 0.0) || !std::isfinite(c.eg_step)) throw InvalidInput("EG step must be > 0");
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw InvalidInput("alpha must be in [0, 1]");
  validate(c.inner);
}

SimplexWeights eg_update(std::span<const double> lambda, std::span<const double> risks,
                         double gamma) {
  if (lambda.size() != risks.size()) throw InvalidInput("eg_update: size mismatch");
  require_finite(risks, "eg_update risks");
  require_finite(lambda, "eg_update lambda");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw InvalidInput("eg_update: gamma must be >= 0");
  bool any_positive = false;
  for (double l : lambda) {
    if (l < 0.0) throw InvalidInput("eg_update: negative multiplier");
    any_positive = any_positive || l > 0.0;
  }
  if (!any_positive) throw InvalidInput("eg_update: all-zero multipliers");

  const std::size_t m = lambda.size();
  Vec expo(m, -std::numeric_limits<double>::infinity());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < m; ++j) {
    if (lambda[j] > 0.0) {
      expo[j] = std::log(lambda[j]) + gamma * risks[j];
      mx = std::max(mx, expo[j]);
    }
  }
  Vec out(m, 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    if (lambda[j] > 0.0) {
      out[j] = std::exp(expo[j] - mx);
      total += out[j];
    }
  }
  for (double& v : out) v /= total;
  return SimplexWeights(std::move(out));
}

PerClassRisk val_risks_teacher(const Matrix& val_logits, const SoftLabelSet& val_soft,
                               Loss lambda_loss) {
  return distilled_per_class_risk(val_logits, val_soft, lambda_loss);
}

PerClassRisk val_risks_onehot(const Matrix& val_logits, std::span<const std::size_t> val_labels,
                              std::size_t num_classes, Loss lambda_loss) {
  return per_class_risk_onehot(val_logits, val_labels, num_classes, lambda_loss);
}

TrainResult inner_minimize(ScorerParams params, const Matrix& train_features,
                           const SoftLabelSet& train_soft, std::span<const double> costs,
                           const SgdConfig& inner) {
  const std::size_t m = train_soft.num_classes();
  if (costs.size() != m) throw InvalidInput("inner_minimize: cost vector length mismatch");
  require_positive(costs, "inner_minimize costs");
  if (train_features.rows() != train_soft.size()) {
    throw InvalidInput("inner_minimize: features and soft labels differ in length");
  }
  if (params.output_dim() != m) throw InvalidInput("inner_minimize: scorer output size mismatch");
  Vec log_costs(m);
  for (std::size_t j = 0; j < m; ++j) log_costs[j] = std::log(costs[j]);
  Vec scratch(m);
  const Matrix& probs = train_soft.probs();
  ExampleLoss loss = [&](std::size_t i, std::span<const double> logits, std::span<double> grad) {
    return margin_loss_and_grad(probs.row(i), logits, log_costs, grad, scratch);
  };
  return sgd_train(std::move(params), train_features, loss, inner);
}

namespace {

PerClassRisk validation_risks(const ScorerParams& params, const DroValidation& val,
                              const DroConfig& config) {
  const Matrix logits = forward_batch(params, val.features);
  if (config.val_labels == ValLabelSource::Teacher) {
    if (!val.soft) throw InvalidInput("teacher validation labels requested but none supplied");
    return val_risks_teacher(logits, *val.soft, config.lambda_loss);
  }
  return val_risks_onehot(logits, val.labels, val.num_classes, config.lambda_loss);
}

}  // namespace

DroResult distilled_margin_dro(const SoftLabelSet& train_soft, const Matrix& train_features,
                               const DroValidation& val, const DroConfig& config,
                               ScorerParams init) {
  validate(config);
  const std::size_t m = train_soft.num_classes();
  if (init.output_dim() != m) throw InvalidInput("DRO: scorer output size mismatch");
  if (val.num_classes != m) throw InvalidInput("DRO: validation class count mismatch");
  const Vec& pi_t = train_soft.teacher_marginal();
  for (std::size_t j = 0; j < m; ++j) {
    if (!(pi_t[j] > 0.0)) {
      throw MissingClassError(j, "teacher marginal on the training set is zero for class " +
                                     std::to_string(j + 1));
    }
  }

  SimplexWeights lambda = SimplexWeights::uniform(m);
  ScorerParams params = std::move(init);
  std::vector<ScorerParams> iterates;
  DroResult result;
  const double inv_m = 1.0 / static_cast<double>(m);
  Vec costs(m);

  for (std::size_t k = 0; k < config.rounds; ++k) {
    const PerClassRisk risks = validation_risks(params, val, config);
    lambda = eg_update(lambda.values(), risks.values, config.eg_step * config.alpha);

    DroTraceRow row;
    row.iter = k;
    row.lambda = lambda.values();
    row.beta.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
      row.beta[j] = (1.0 - config.alpha) * inv_m + config.alpha * lambda[j];
      costs[j] = row.beta[j] / pi_t[j];
    }
    row.risks = risks.values;
    row.objective = tradeoff_of(risks, config.alpha);

    SgdConfig inner = config.inner;
    inner.seed = hash_seed({config.seed, 0x696E6E6572ULL, k});
    params = inner_minimize(std::move(params), train_features, train_soft, costs, inner).params;
    if (config.return_mode == ReturnMode::Average) iterates.push_back(params);
    result.trace.rows.push_back(std::move(row));
  }

  result.scorer = config.return_mode == ReturnMode::Average ? Scorer(std::move(iterates))
                                                            : Scorer(std::move(params));
  return result;
}

DroResult train_robust_onehot(const Dataset& train, const Dataset& val, const DroConfig& config,
                              ScorerParams init) {
  if (train.num_classes != val.num_classes) throw InvalidInput("train/val class count mismatch");
  const SoftLabelSet train_soft = SoftLabelSet::one_hot(train.labels, train.num_classes);
  DroValidation v;
  v.features = val.features;
  v.labels = val.labels;
  v.num_classes = val.num_classes;
  DroConfig cfg = config;
  cfg.val_labels = ValLabelSource::OneHot;
  return distilled_margin_dro(train_soft, train.features, v, cfg, std::move(init));
}

void write_trace_csv(const DroTrace& trace, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  const std::size_t m = trace.rows.empty() ? 0 : trace.rows.front().lambda.size();
  os << "iter";
  for (std::size_t j = 1; j <= m; ++j) os << ",lambda_" << j;
  for (std::size_t j = 1; j <= m; ++j) os << ",risk_" << j;
  os << ",objective\n";
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << ',' << buf;
  };
  for (const auto& row : trace.rows) {
    os << row.iter;
    for (double v : row.lambda) put(v);
    for (double v : row.risks) put(v);
    put(row.objective);
    os << '\n';
  }
}

}  // namespace rdistill
