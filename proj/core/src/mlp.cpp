#include "rdistill/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "rdistill/core_math.hpp"
#include "rdistill/errors.hpp"
#include "rdistill/rng.hpp"

namespace rdistill {

ScorerParams::ScorerParams(std::vector<std::size_t> layer_sizes) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw InvalidInput("ScorerParams: need at least input and output sizes");
  for (std::size_t s : sizes_) {
    if (s == 0) throw InvalidInput("ScorerParams: layer sizes must be positive");
  }
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    layers_.push_back(Layer{Matrix(sizes_[l + 1], sizes_[l]), Vec(sizes_[l + 1], 0.0)});
  }
}

ScorerParams ScorerParams::init(std::vector<std::size_t> layer_sizes, std::uint64_t seed) {
  ScorerParams p(std::move(layer_sizes));
  CounterRng rng(seed);
  for (auto& layer : p.layers_) {
    const double fan_in = static_cast<double>(layer.weights.cols());
    const double fan_out = static_cast<double>(layer.weights.rows());
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& w : layer.weights.data()) w = (2.0 * rng.uniform() - 1.0) * a;
  }
  return p;
}

std::size_t ScorerParams::num_parameters() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.data().size() + l.bias.size();
  return n;
}

void ScorerParams::for_each(const std::function<void(double&)>& fn) {
  for (auto& l : layers_) {
    for (double& w : l.weights.data()) fn(w);
    for (double& b : l.bias) fn(b);
  }
}

double ScorerParams::squared_norm() const {
  CompensatedSum acc;
  for (const auto& l : layers_) {
    for (double w : l.weights.data()) acc.add(w * w);
    for (double b : l.bias) acc.add(b * b);
  }
  return acc.value();
}

bool ScorerParams::all_finite() const {
  for (const auto& l : layers_) {
    for (double w : l.weights.data()) {
      if (!std::isfinite(w)) return false;
    }
    for (double b : l.bias) {
      if (!std::isfinite(b)) return false;
    }
  }
  return true;
}

MlpWorkspace::MlpWorkspace(const ScorerParams& params) {
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    const std::size_t out = params.layer(l).weights.rows();
    activations_.emplace_back(out, 0.0);
    deltas_.emplace_back(out, 0.0);
  }
}

std::span<const double> workspace_output(const MlpWorkspace& ws) {
  return ws.activations_.back();
}

void forward_into(const ScorerParams& params, std::span<const double> x, MlpWorkspace& ws) {
  const std::size_t depth = params.num_layers();
  std::span<const double> input = x;
  for (std::size_t l = 0; l < depth; ++l) {
    const Layer& layer = params.layer(l);
    Vec& out = ws.activations_[l];
    const std::size_t in_dim = layer.weights.cols();
    const bool relu = l + 1 < depth;
    for (std::size_t o = 0; o < out.size(); ++o) {
      const double* w = layer.weights.row(o).data();
      double s = layer.bias[o];
      for (std::size_t i = 0; i < in_dim; ++i) s += w[i] * input[i];
      out[o] = relu && s < 0.0 ? 0.0 : s;
    }
    input = out;
  }
}

void accumulate_backward(const ScorerParams& params, std::span<const double> x,
                         std::span<const double> upstream, MlpWorkspace& ws, ScorerParams& grad) {
  const std::size_t depth = params.num_layers();
  std::copy(upstream.begin(), upstream.end(), ws.deltas_.back().begin());
  for (std::size_t l = depth; l-- > 0;) {
    const Layer& layer = params.layer(l);
    Layer& g = grad.layer(l);
    const Vec& delta = ws.deltas_[l];
    std::span<const double> input = l == 0 ? x : std::span<const double>(ws.activations_[l - 1]);
    const std::size_t in_dim = layer.weights.cols();
    for (std::size_t o = 0; o < delta.size(); ++o) {
      const double d = delta[o];
      g.bias[o] += d;
      if (d == 0.0) continue;
      double* gw = g.weights.row(o).data();
      for (std::size_t i = 0; i < in_dim; ++i) gw[i] += d * input[i];
    }
    if (l == 0) break;
    Vec& prev = ws.deltas_[l - 1];
    std::fill(prev.begin(), prev.end(), 0.0);
    for (std::size_t o = 0; o < delta.size(); ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* w = layer.weights.row(o).data();
      for (std::size_t i = 0; i < in_dim; ++i) prev[i] += d * w[i];
    }
    const Vec& act = ws.activations_[l - 1];
    for (std::size_t i = 0; i < in_dim; ++i) {
      if (act[i] <= 0.0) prev[i] = 0.0;
    }
  }
}

namespace {

void require_input(const ScorerParams& params, std::span<const double> x) {
  if (x.size() != params.input_dim()) {
    throw InvalidInput("MLP input has dimension " + std::to_string(x.size()) + ", expected " +
                       std::to_string(params.input_dim()));
  }
}

void zero(ScorerParams& p) {
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    auto& layer = p.layer(l);
    std::fill(layer.weights.data().begin(), layer.weights.data().end(), 0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
}

}  // namespace

Vec forward(const ScorerParams& params, std::span<const double> x) {
  require_input(params, x);
  MlpWorkspace ws(params);
  forward_into(params, x, ws);
  const auto out = workspace_output(ws);
  return Vec(out.begin(), out.end());
}

Matrix forward_batch(const ScorerParams& params, const Matrix& features) {
  if (features.cols() != params.input_dim()) throw InvalidInput("forward_batch: dimension mismatch");
  MlpWorkspace ws(params);
  Matrix out(features.rows(), params.output_dim());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    forward_into(params, features.row(i), ws);
    const auto o = workspace_output(ws);
    std::copy(o.begin(), o.end(), out.row(i).begin());
  }
  return out;
}

ScorerParams backward(const ScorerParams& params, std::span<const double> x,
                      std::span<const double> upstream) {
  require_input(params, x);
  if (upstream.size() != params.output_dim()) throw InvalidInput("backward: upstream size mismatch");
  require_finite(upstream, "backward upstream");
  MlpWorkspace ws(params);
  forward_into(params, x, ws);
  ScorerParams grad(params.layer_sizes());
  accumulate_backward(params, x, upstream, ws, grad);
  return grad;
}

void validate(const SgdConfig& c) {
  if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate)) {
    throw InvalidInput("learning_rate must be >= 0");
  }
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw InvalidInput("momentum must be in [0, 1)");
  if (!(c.weight_decay >= 0.0)) throw InvalidInput("weight_decay must be >= 0");
  if (c.batch_size == 0) throw InvalidInput("batch_size must be positive");
  if (c.epochs == 0) throw InvalidInput("epochs must be positive");
}

TrainResult sgd_train(ScorerParams params, const Matrix& features, const ExampleLoss& loss,
                      const SgdConfig& config) {
  validate(config);
  if (features.cols() != params.input_dim()) throw InvalidInput("sgd_train: dimension mismatch");
  const std::size_t n = features.rows();
  if (n == 0) throw InvalidInput("sgd_train: empty training set");
  const std::size_t m = params.output_dim();

  MlpWorkspace ws(params);
  ScorerParams grad(params.layer_sizes());
  ScorerParams velocity(params.layer_sizes());
  Vec logit_grad(m);
  CounterRng rng(config.seed);
  TrainResult result;
  result.loss_curve.reserve(config.epochs);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double lr = config.learning_rate;
    if (config.cosine_decay) {
      lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) /
                                  static_cast<double>(config.epochs)));
    }
    const auto order = shuffled_indices(n, rng);
    CompensatedSum epoch_loss;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      zero(grad);
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t i = order[b];
        forward_into(params, features.row(i), ws);
        std::fill(logit_grad.begin(), logit_grad.end(), 0.0);
        const double value = loss(i, workspace_output(ws), logit_grad);
        if (!std::isfinite(value)) {
          throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", example " +
                               std::to_string(i));
        }
        epoch_loss.add(value);
        accumulate_backward(params, features.row(i), logit_grad, ws, grad);
      }
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (std::size_t l = 0; l < params.num_layers(); ++l) {
        auto& w = params.layer(l);
        auto& g = grad.layer(l);
        auto& v = velocity.layer(l);
        auto wd = w.weights.data();
        auto gd = g.weights.data();
        auto vd = v.weights.data();
        for (std::size_t k = 0; k < wd.size(); ++k) {
          vd[k] = config.momentum * vd[k] + gd[k] * scale;
          wd[k] -= lr * (vd[k] + config.weight_decay * wd[k]);
        }
        for (std::size_t k = 0; k < w.bias.size(); ++k) {
          v.bias[k] = config.momentum * v.bias[k] + g.bias[k] * scale;
          w.bias[k] -= lr * v.bias[k];
        }
      }
    }
    result.loss_curve.push_back(epoch_loss.value() / static_cast<double>(n));
    if (!params.all_finite()) {
      throw NumericalError("parameters diverged at epoch " + std::to_string(epoch));
    }
  }
  result.params = std::move(params);
  return result;
}

Scorer::Scorer(std::vector<ScorerParams> members) : members_(std::move(members)) {
  if (members_.empty()) throw InvalidInput("Scorer: needs at least one member");
  for (const auto& p : members_) {
    if (p.input_dim() != members_.front().input_dim() ||
        p.output_dim() != members_.front().output_dim()) {
      throw InvalidInput("Scorer: members must share input and output dimensions");
    }
  }
}

Vec Scorer::logits(std::span<const double> x) const {
  if (members_.size() == 1) return forward(members_.front(), x);
  Vec acc(num_classes(), 0.0);
  for (const auto& p : members_) {
    const Vec f = forward(p, x);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += f[j];
  }
  const double inv = 1.0 / static_cast<double>(members_.size());
  for (double& v : acc) v *= inv;
  return acc;
}

Matrix Scorer::logits(const Matrix& features) const {
  if (members_.size() == 1) return forward_batch(members_.front(), features);
  Matrix acc(features.rows(), num_classes(), 0.0);
  for (const auto& p : members_) {
    const Matrix f = forward_batch(p, features);
    for (std::size_t k = 0; k < acc.data().size(); ++k) acc.data()[k] += f.data()[k];
  }
  const double inv = 1.0 / static_cast<double>(members_.size());
  for (double& v : acc.data()) v *= inv;
  return acc;
}

std::string scorer_to_json(const Scorer& scorer) {
  nlohmann::json j;
  j["format"] = "rdistill.scorer";
  j["version"] = 1;
  nlohmann::json members = nlohmann::json::array();
  for (const auto& p : scorer.members()) {
    nlohmann::json mj;
    mj["layer_sizes"] = p.layer_sizes();
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
      const auto& layer = p.layer(l);
      layers.push_back({{"weights", std::vector<double>(layer.weights.data().begin(),
                                                        layer.weights.data().end())},
                        {"bias", layer.bias}});
    }
    mj["layers"] = layers;
    members.push_back(mj);
  }
  j["members"] = members;
  return j.dump();
}

Scorer scorer_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.value("format", "") != "rdistill.scorer") throw IoError("not a scorer checkpoint");
  if (j.value("version", 0) != 1) throw IoError("unsupported checkpoint version");
  std::vector<ScorerParams> members;
  for (const auto& mj : j.at("members")) {
    ScorerParams p(mj.at("layer_sizes").get<std::vector<std::size_t>>());
    const auto& layers = mj.at("layers");
    if (layers.size() != p.num_layers()) throw IoError("checkpoint: layer count mismatch");
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
      const auto w = layers[l].at("weights").get<Vec>();
      const auto b = layers[l].at("bias").get<Vec>();
      auto& layer = p.layer(l);
      if (w.size() != layer.weights.data().size() || b.size() != layer.bias.size()) {
        throw IoError("checkpoint: layer shape mismatch");
      }
      std::copy(w.begin(), w.end(), layer.weights.data().begin());
      layer.bias = b;
    }
    members.push_back(std::move(p));
  }
  return Scorer(std::move(members));
}

void save_scorer(const Scorer& scorer, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << scorer_to_json(scorer) << '\n';
}

Scorer load_scorer(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return scorer_from_json(ss.str());
}

}  // namespace rdistill
