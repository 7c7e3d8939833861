#pragma once

// Closed-form Bayes-optimal scorers on a GaussianMixtureModel, the
// population min-max solver for the robust multipliers, and the teacher
// approximation-error diagnostic.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

#include "rdistill/data_synth.hpp"
#include "rdistill/dro.hpp"
#include "rdistill/objectives.hpp"

namespace rdistill {

/// Logits are clamped below at this value when eta_y(x) underflows.
inline constexpr double kLogFloor = -745.0;

struct BayesScorer {
  const GaussianMixtureModel* model = nullptr;
  ObjectiveKind kind = ObjectiveKind::Std;
  double alpha = 1.0;           // Tdf only
  SimplexWeights lambda_star;   // Rob / Tdf only
};

struct BayesLogits {
  Vec logits;
  bool clamped = false;  // some eta_y(x) hit the log floor
};

/// STD: log eta_y; BAL: log(eta_y / pi_y); ROB: log(lambda_y eta_y / pi_y);
/// TDF: log(((1 - alpha)/m + alpha lambda_y) eta_y / pi_y). Each up to a shared constant.
BayesLogits bayes_logits(const BayesScorer& scorer, std::span<const double> x);

/// Per-class weights w_y with f_y = log(w_y eta_y): 1, 1/pi_y, lambda_y/pi_y, ...
Vec bayes_class_weights(const BayesScorer& scorer);

/// Shared Monte Carlo sample from the data distribution with eta cached per row.
struct PopulationSample {
  Matrix features;
  Matrix eta;
  Matrix log_eta;  // log(eta), clamped at kLogFloor
  std::vector<std::size_t> labels;
};

PopulationSample make_population_sample(const GaussianMixtureModel& model, std::size_t n,
                                        std::uint64_t seed);

/// (1/pi_y) E[eta_y(X) loss(y, f(X))] estimated on the sample, for the scorer
/// f_y(x) = log(w_y eta_y(x)). `priors` normalizes each class (pass model priors).
Vec population_class_risks(const PopulationSample& sample, std::span<const double> priors,
                           std::span<const double> class_weights, Loss loss);

struct LambdaSolveOptions {
  std::size_t mc_samples = 20000;
  std::uint64_t seed = 0;
  std::size_t rounds = 2000;
  double eg_step = 0.5;
};

/// Population EG on lambda: each round sets f to the closed-form minimizer for
/// the current lambda, estimates per-class cross-entropy risks on one shared
/// sample, and takes an EG step (scaled by alpha). Returns the average lambda.
/// alpha == 0 returns uniform weights.
SimplexWeights solve_lambda_star(const GaussianMixtureModel& model, double alpha,
                                 const LambdaSolveOptions& options);
SimplexWeights solve_lambda_star(const GaussianMixtureModel& model, double alpha,
                                 const PopulationSample& sample, std::size_t rounds,
                                 double eg_step);

using TeacherProbFn = std::function<Vec(std::span<const double>)>;

/// max_y E_x |p^t_y(x) / pi^t_y - eta_y(x) / pi_y| with both normalizers
/// estimated on the same Monte Carlo sample (pi^t_y = mean p^t_y, pi_y = mean eta_y).
double approximation_error(const TeacherProbFn& teacher, const GaussianMixtureModel& model,
                           std::size_t mc_samples, std::uint64_t seed);
double approximation_error(const TeacherProbFn& teacher, const PopulationSample& sample);

}  // namespace rdistill
