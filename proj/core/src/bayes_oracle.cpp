#include "rdistill/bayes_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rdistill/core_math.hpp"
#include "rdistill/errors.hpp"

namespace rdistill {

Vec bayes_class_weights(const BayesScorer& scorer) {
  if (scorer.model == nullptr) throw InvalidInput("BayesScorer has no model");
  const auto& pi = scorer.model->priors();
  const std::size_t m = pi.size();
  Vec w(m, 1.0);
  if (scorer.kind == ObjectiveKind::Std) return w;
  Vec tilt(m, 1.0);
  if (scorer.kind == ObjectiveKind::Rob || scorer.kind == ObjectiveKind::Tdf) {
    if (scorer.lambda_star.size() != m) throw InvalidInput("BayesScorer: lambda_star size mismatch");
    const double a = scorer.kind == ObjectiveKind::Rob ? 1.0 : scorer.alpha;
    if (!(a >= 0.0 && a <= 1.0)) throw InvalidInput("BayesScorer: alpha must be in [0, 1]");
    for (std::size_t y = 0; y < m; ++y) {
      tilt[y] = (1.0 - a) / static_cast<double>(m) + a * scorer.lambda_star[y];
    }
  }
  for (std::size_t y = 0; y < m; ++y) w[y] = tilt[y] / pi[y];
  return w;
}

BayesLogits bayes_logits(const BayesScorer& scorer, std::span<const double> x) {
  const Vec w = bayes_class_weights(scorer);
  const Vec e = eta(*scorer.model, x);
  BayesLogits out;
  out.logits.resize(e.size());
  for (std::size_t y = 0; y < e.size(); ++y) {
    double v = e[y] > 0.0 && w[y] > 0.0 ? std::log(w[y]) + std::log(e[y])
                                        : -std::numeric_limits<double>::infinity();
    if (!(v >= kLogFloor)) {
      v = kLogFloor;
      out.clamped = true;
    }
    out.logits[y] = v;
  }
  return out;
}

PopulationSample make_population_sample(const GaussianMixtureModel& model, std::size_t n,
                                        std::uint64_t seed) {
  Dataset d = sample(model, n, seed);
  PopulationSample s;
  s.eta = Matrix(n, model.num_classes());
  s.log_eta = Matrix(n, model.num_classes());
  for (std::size_t i = 0; i < n; ++i) {
    const Vec e = eta(model, d.features.row(i));
    for (std::size_t y = 0; y < e.size(); ++y) {
      s.eta(i, y) = e[y];
      s.log_eta(i, y) = e[y] > 0.0 ? std::max(std::log(e[y]), kLogFloor) : kLogFloor;
    }
  }
  s.features = std::move(d.features);
  s.labels = std::move(d.labels);
  return s;
}

Vec population_class_risks(const PopulationSample& sample, std::span<const double> priors,
                           std::span<const double> class_weights, Loss loss) {
  const std::size_t n = sample.eta.rows();
  const std::size_t m = sample.eta.cols();
  if (priors.size() != m || class_weights.size() != m) {
    throw InvalidInput("population_class_risks: size mismatch");
  }
  if (sample.log_eta.rows() != n || sample.log_eta.cols() != m) {
    throw InvalidInput("population_class_risks: sample lacks cached log eta");
  }
  Vec log_w(m);
  for (std::size_t y = 0; y < m; ++y) log_w[y] = std::log(class_weights[y]);
  std::vector<CompensatedSum> acc(m);
  Vec f(m);
  for (std::size_t i = 0; i < n; ++i) {
    const auto e = sample.eta.row(i);
    const auto le = sample.log_eta.row(i);
    for (std::size_t y = 0; y < m; ++y) f[y] = std::max(log_w[y] + le[y], kLogFloor);
    if (loss == Loss::Xent) {
      const double lse = log_sum_exp(f);
      for (std::size_t y = 0; y < m; ++y) {
        if (e[y] > 0.0) acc[y].add(e[y] * (lse - f[y]));
      }
    } else {
      const std::size_t pred = argmax(f);
      for (std::size_t y = 0; y < m; ++y) {
        if (e[y] > 0.0 && pred != y) acc[y].add(e[y]);
      }
    }
  }
  Vec risks(m);
  for (std::size_t y = 0; y < m; ++y) {
    risks[y] = acc[y].value() / static_cast<double>(n) / priors[y];
  }
  return risks;
}

SimplexWeights solve_lambda_star(const GaussianMixtureModel& model, double alpha,
                                 const PopulationSample& sample, std::size_t rounds,
                                 double eg_step) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidInput("alpha must be in [0, 1]");
  if (rounds < 1) throw InvalidInput("solve_lambda_star: rounds must be >= 1");
  const std::size_t m = model.num_classes();
  if (alpha == 0.0) return SimplexWeights::uniform(m);

  BayesScorer scorer{&model, ObjectiveKind::Tdf, alpha, SimplexWeights::uniform(m)};
  Vec lambda = scorer.lambda_star.values();
  Vec avg(m, 0.0);
  for (std::size_t k = 0; k < rounds; ++k) {
    scorer.lambda_star = SimplexWeights(lambda);
    const Vec risks =
        population_class_risks(sample, model.priors(), bayes_class_weights(scorer), Loss::Xent);
    for (double r : risks) {
      if (!(r <= 1e6)) throw NumericalError("solve_lambda_star: population risk diverged");
    }
    lambda = eg_update(lambda, risks, eg_step * alpha).values();
    for (std::size_t y = 0; y < m; ++y) avg[y] += lambda[y];
  }
  for (double& v : avg) v /= static_cast<double>(rounds);
  const double total = stable_sum(avg);
  for (double& v : avg) v /= total;
  return SimplexWeights(std::move(avg));
}

SimplexWeights solve_lambda_star(const GaussianMixtureModel& model, double alpha,
                                 const LambdaSolveOptions& options) {
  if (options.mc_samples < 10000) throw InvalidInput("solve_lambda_star: need >= 1e4 samples");
  const PopulationSample s = make_population_sample(model, options.mc_samples, options.seed);
  return solve_lambda_star(model, alpha, s, options.rounds, options.eg_step);
}

double approximation_error(const TeacherProbFn& teacher, const PopulationSample& sample) {
  const std::size_t n = sample.eta.rows();
  const std::size_t m = sample.eta.cols();
  Matrix pt(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec p = teacher(sample.features.row(i));
    if (p.size() != m) throw InvalidInput("approximation_error: teacher output size mismatch");
    std::copy(p.begin(), p.end(), pt.row(i).begin());
  }
  const Vec pi_t = column_means(pt);
  const Vec pi = column_means(sample.eta);
  double worst = 0.0;
  for (std::size_t y = 0; y < m; ++y) {
    CompensatedSum acc;
    for (std::size_t i = 0; i < n; ++i) {
      acc.add(std::abs(pt(i, y) / pi_t[y] - sample.eta(i, y) / pi[y]));
    }
    worst = std::max(worst, acc.value() / static_cast<double>(n));
  }
  return worst;
}

double approximation_error(const TeacherProbFn& teacher, const GaussianMixtureModel& model,
                           std::size_t mc_samples, std::uint64_t seed) {
  if (mc_samples < 1000) throw InvalidInput("approximation_error: need >= 1e3 samples");
  return approximation_error(teacher, make_population_sample(model, mc_samples, seed));
}

}  // namespace rdistill
