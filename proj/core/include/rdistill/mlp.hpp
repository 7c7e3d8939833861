#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rdistill/matrix.hpp"

namespace rdistill {

struct Layer {
  Matrix weights;  // out x in, row-major
  Vec bias;        // out

  bool operator==(const Layer&) const = default;
};

/// Weights of a ReLU MLP f: R^d -> R^m (identity on the output layer).
/// Also used, with the same shapes, to hold parameter gradients.
class ScorerParams {
 public:
  ScorerParams() = default;
  /// Zero-initialized parameters for layer sizes [d, h_1, ..., h_L, m].
  explicit ScorerParams(std::vector<std::size_t> layer_sizes);

  /// Glorot-uniform weights U(-a, a), a = sqrt(6 / (fan_in + fan_out)); zero biases.
  static ScorerParams init(std::vector<std::size_t> layer_sizes, std::uint64_t seed);

  const std::vector<std::size_t>& layer_sizes() const noexcept { return sizes_; }
  std::size_t input_dim() const noexcept { return sizes_.front(); }
  std::size_t output_dim() const noexcept { return sizes_.back(); }
  std::size_t num_layers() const noexcept { return layers_.size(); }
  std::size_t num_parameters() const noexcept;

  Layer& layer(std::size_t i) { return layers_[i]; }
  const Layer& layer(std::size_t i) const { return layers_[i]; }

  /// Visit every scalar parameter in a fixed order (layer, weights row-major, bias).
  void for_each(const std::function<void(double&)>& fn);
  double squared_norm() const;
  bool all_finite() const;

  bool operator==(const ScorerParams&) const = default;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<Layer> layers_;
};

/// Reusable activation buffers for forward/backward passes.
class MlpWorkspace {
 public:
  explicit MlpWorkspace(const ScorerParams& params);

 private:
  friend void forward_into(const ScorerParams&, std::span<const double>, MlpWorkspace&);
  friend void accumulate_backward(const ScorerParams&, std::span<const double>,
                                  std::span<const double>, MlpWorkspace&, ScorerParams&);
  friend std::span<const double> workspace_output(const MlpWorkspace&);
  std::vector<Vec> activations_;  // post-activation outputs per layer
  std::vector<Vec> deltas_;
};

Vec forward(const ScorerParams& params, std::span<const double> x);
/// Logits for every row of `features`.
Matrix forward_batch(const ScorerParams& params, const Matrix& features);

/// Gradient of <upstream, forward(params, x)> with respect to the parameters.
ScorerParams backward(const ScorerParams& params, std::span<const double> x,
                      std::span<const double> upstream);

// Hot-path versions used by the trainer.
void forward_into(const ScorerParams& params, std::span<const double> x, MlpWorkspace& ws);
std::span<const double> workspace_output(const MlpWorkspace& ws);
/// Adds the gradient for the last forward_into() call into `grad`.
void accumulate_backward(const ScorerParams& params, std::span<const double> x,
                         std::span<const double> upstream, MlpWorkspace& ws, ScorerParams& grad);

struct SgdConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  bool cosine_decay = false;
};

void validate(const SgdConfig& config);

/// Per-example loss: given the example index and its logits, write dLoss/dlogits
/// into `grad` and return the loss value.
using ExampleLoss =
    std::function<double(std::size_t index, std::span<const double> logits, std::span<double> grad)>;

struct TrainResult {
  ScorerParams params;
  Vec loss_curve;  // mean training loss per epoch, measured during the epoch
};

/// Seeded-shuffle minibatch SGD with heavy-ball momentum and decoupled weight
/// decay on the weight matrices:
///   v <- mu v + g;  w <- w - lr (v + wd w)
/// Throws NumericalError on a non-finite loss or parameter.
TrainResult sgd_train(ScorerParams params, const Matrix& features, const ExampleLoss& loss,
                      const SgdConfig& config);

/// Averaged-logit ensemble x -> (1/K) sum_k f_k(x). A single member is an ordinary scorer.
class Scorer {
 public:
  Scorer() = default;
  explicit Scorer(ScorerParams params) { members_.push_back(std::move(params)); }
  explicit Scorer(std::vector<ScorerParams> members);

  const std::vector<ScorerParams>& members() const noexcept { return members_; }
  std::size_t num_classes() const { return members_.front().output_dim(); }
  std::size_t input_dim() const { return members_.front().input_dim(); }

  Vec logits(std::span<const double> x) const;
  Matrix logits(const Matrix& features) const;

  bool operator==(const Scorer&) const = default;

 private:
  std::vector<ScorerParams> members_;
};

// Checkpoint JSON, documented in README:
// {"format": "rdistill.scorer", "version": 1,
//  "members": [{"layer_sizes": [...], "layers": [{"weights": [...row-major...], "bias": [...]}]}]}
std::string scorer_to_json(const Scorer& scorer);
Scorer scorer_from_json(const std::string& text);
void save_scorer(const Scorer& scorer, const std::string& path);
Scorer load_scorer(const std::string& path);

}  // namespace rdistill
