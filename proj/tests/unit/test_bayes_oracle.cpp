#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "rdistill/bayes_oracle.hpp"
#include "rdistill/core_math.hpp"
#include "rdistill/data_synth.hpp"
#include "rdistill/errors.hpp"

using namespace rdistill;

namespace {

// Independent population cross-entropy risks of f_y = log(lambda_y eta_y / pi_y).
struct RobRiskOracle {
  Matrix eta_rows;
  Matrix base;  // log(eta_y / pi_y)
  Vec pi;

  RobRiskOracle(const Matrix& eta, const Vec& priors) : eta_rows(eta), base(eta.rows(), eta.cols()), pi(priors) {
    for (std::size_t i = 0; i < eta.rows(); ++i) {
      for (std::size_t y = 0; y < eta.cols(); ++y) base(i, y) = std::log(std::max(eta(i, y) / pi[y], 1e-300));
    }
  }

  Vec risks(const Vec& lambda) const {
    const std::size_t n = eta_rows.rows(), m = pi.size();
    Vec log_l(m), risk(m, 0.0), f(m);
    for (std::size_t y = 0; y < m; ++y) log_l[y] = lambda[y] > 0 ? std::log(lambda[y]) : -700.0;
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -1e300;
      for (std::size_t y = 0; y < m; ++y) mx = std::max(mx, f[y] = log_l[y] + base(i, y));
      double z = 0.0;
      for (std::size_t y = 0; y < m; ++y) z += std::exp(f[y] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t y = 0; y < m; ++y) risk[y] += eta_rows(i, y) * (lse - f[y]);
    }
    for (std::size_t y = 0; y < m; ++y) risk[y] /= static_cast<double>(n) * pi[y];
    return risk;
  }
};

GaussianMixtureModel imbalanced3() {
  return make_model(3, 2, {100.0, 3}, 7);
}

}  // namespace

TEST_CASE("standard Bayes scorer reproduces eta") {
  const auto model = imbalanced3();
  const BayesScorer s{&model, ObjectiveKind::Std, 1.0, {}};
  CounterRng rng(3);
  for (int t = 0; t < 100; ++t) {
    const Vec x{4 * rng.uniform() - 2, 4 * rng.uniform() - 2};
    const Vec p = softmax(bayes_logits(s, x).logits);
    const Vec e = eta(model, x);
    for (std::size_t y = 0; y < 3; ++y) CHECK(std::abs(p[y] - e[y]) < 1e-12);
  }
}

TEST_CASE("balanced Bayes scorer hand value") {
  // eta = [0.5, 0.5] at x = ln(9) / 2 for means -1, 1 and priors [0.9, 0.1].
  const GaussianMixtureModel model({0.9, 0.1}, {{-1.0}, {1.0}}, {Covariance{}, Covariance{}});
  const Vec x{std::log(9.0) / 2.0};
  const Vec e = eta(model, x);
  CHECK(e[0] == doctest::Approx(0.5).epsilon(1e-12));
  const BayesScorer bal{&model, ObjectiveKind::Bal, 1.0, {}};
  const Vec p = softmax(bayes_logits(bal, x).logits);
  CHECK(p[0] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("Bayes scorer argmax identities") {
  const auto model = imbalanced3();
  const BayesScorer std_s{&model, ObjectiveKind::Std, 1.0, {}};
  const BayesScorer bal{&model, ObjectiveKind::Bal, 1.0, {}};
  const BayesScorer rob_pi{&model, ObjectiveKind::Rob, 1.0, SimplexWeights(model.priors())};
  const BayesScorer tdf0{&model, ObjectiveKind::Tdf, 0.0, SimplexWeights({0.7, 0.2, 0.1})};
  const Dataset d = sample(model, 2000, 4);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto x = d.features.row(i);
    const Vec e = eta(model, x);
    Vec ratio(3);
    for (std::size_t y = 0; y < 3; ++y) ratio[y] = e[y] / model.priors()[y];
    CHECK(argmax(bayes_logits(bal, x).logits) == argmax(ratio));
    CHECK(argmax(bayes_logits(rob_pi, x).logits) == argmax(bayes_logits(std_s, x).logits));
    CHECK(argmax(bayes_logits(tdf0, x).logits) == argmax(bayes_logits(bal, x).logits));
  }
}

TEST_CASE("underflowing eta is clamped and flagged") {
  const GaussianMixtureModel model({0.5, 0.5}, {{-1.0}, {1.0}}, {Covariance{0.01}, Covariance{0.01}});
  const BayesScorer s{&model, ObjectiveKind::Std, 1.0, {}};
  const auto out = bayes_logits(s, Vec{50.0});
  CHECK(out.clamped);
  CHECK(out.logits[0] == kLogFloor);
  CHECK(std::isfinite(out.logits[1]));
  CHECK(!bayes_logits(s, Vec{0.0}).clamped);
}

TEST_CASE("standard scorer softmax averages to the priors") {
  const auto model = imbalanced3();
  const auto ps = make_population_sample(model, 100000, 5);
  const BayesScorer s{&model, ObjectiveKind::Std, 1.0, {}};
  Vec mean(3, 0.0);
  for (std::size_t i = 0; i < ps.features.rows(); ++i) {
    const Vec p = softmax(bayes_logits(s, ps.features.row(i)).logits);
    for (std::size_t y = 0; y < 3; ++y) mean[y] += p[y] / static_cast<double>(ps.features.rows());
  }
  for (std::size_t y = 0; y < 3; ++y) {
    const double pi = model.priors()[y];
    CHECK(std::abs(mean[y] - pi) < 3.0 * std::sqrt(pi * (1 - pi) / 1e5));
  }
}

TEST_CASE("lambda star: symmetric model gives uniform weights") {
  const GaussianMixtureModel model({0.5, 0.5}, {{-1.0}, {1.0}}, {Covariance{}, Covariance{}});
  const auto lam = solve_lambda_star(model, 1.0, LambdaSolveOptions{20000, 1, 2000, 0.5});
  CHECK(std::abs(lam[0] - 0.5) < 0.02);
  const auto lam0 = solve_lambda_star(model, 0.0, LambdaSolveOptions{20000, 1, 10, 0.5});
  CHECK(lam0[0] == 0.5);
  CHECK_THROWS_AS(solve_lambda_star(model, 1.0, LambdaSolveOptions{100, 1, 10, 0.5}), InvalidInput);
}

TEST_CASE("lambda star matches a brute-force simplex grid search") {
  const auto model = imbalanced3();
  const auto ps = make_population_sample(model, 20000, 11);
  const auto lam = solve_lambda_star(model, 1.0, ps, 2000, 0.5);
  CHECK(lam.values() == solve_lambda_star(model, 1.0, ps, 2000, 0.5).values());

  const RobRiskOracle oracle(ps.eta, model.priors());
  double best = 1e300;
  Vec arg;
  for (int a = 0; a <= 100; ++a) {
    for (int b = 0; a + b <= 100; ++b) {
      const Vec l{a / 100.0, b / 100.0, (100 - a - b) / 100.0};
      const Vec r = oracle.risks(l);
      const double worst = *std::max_element(r.begin(), r.end());
      if (worst < best) {
        best = worst;
        arg = l;
      }
    }
  }
  for (std::size_t y = 0; y < 3; ++y) CHECK(std::abs(lam[y] - arg[y]) <= 0.03);
  const Vec r = oracle.risks(lam.values());
  CHECK(*std::max_element(r.begin(), r.end()) <= best + 1e-3);
}

TEST_CASE("robust Bayes scorer has the smallest worst-class 0-1 risk") {
  const auto model = make_model(5, 2, {100.0, 5}, 1);
  const auto ps = make_population_sample(model, 40000, 2);
  const auto lam = solve_lambda_star(model, 1.0, ps, 2000, 0.5);
  auto worst = [&](const BayesScorer& s) {
    const Vec r = population_class_risks(ps, model.priors(), bayes_class_weights(s), Loss::ZeroOne);
    return *std::max_element(r.begin(), r.end());
  };
  const double w_rob = worst({&model, ObjectiveKind::Rob, 1.0, lam});
  const double w_std = worst({&model, ObjectiveKind::Std, 1.0, {}});
  const double w_bal = worst({&model, ObjectiveKind::Bal, 1.0, {}});
  CHECK(w_rob <= w_std + 0.01);
  CHECK(w_rob <= w_bal + 0.01);
}

TEST_CASE("approximation error is zero for the Bayes teacher") {
  const auto model = imbalanced3();
  const double err = approximation_error([&](std::span<const double> x) { return eta(model, x); }, model, 5000, 3);
  CHECK(err <= 1e-10);
}

TEST_CASE("approximation error of the balanced teacher matches quadrature") {
  const GaussianMixtureModel model({0.7, 0.3}, {{-1.0}, {1.0}}, {Covariance{}, Covariance{}});
  const auto teacher = [&](std::span<const double> x) {
    Vec e = eta(model, x);
    double s = 0.0;
    for (std::size_t y = 0; y < 2; ++y) s += (e[y] /= model.priors()[y]);
    for (double& v : e) v /= s;
    return e;
  };
  // Quadrature on [-12, 12] with the midpoint rule.
  const std::size_t q = 100000;
  const double lo = -12.0, hi = 12.0, h = (hi - lo) / static_cast<double>(q);
  auto density = [&](double x) {
    double p = 0.0;
    for (std::size_t y = 0; y < 2; ++y) {
      const double mu = model.means()[y][0];
      p += model.priors()[y] * std::exp(-0.5 * (x - mu) * (x - mu)) / std::sqrt(2 * M_PI);
    }
    return p;
  };
  Vec pi_t(2, 0.0), pi(2, 0.0);
  for (std::size_t i = 0; i < q; ++i) {
    const double x = lo + (static_cast<double>(i) + 0.5) * h;
    const Vec pt = teacher(Vec{x});
    const Vec e = eta(model, Vec{x});
    for (std::size_t y = 0; y < 2; ++y) {
      pi_t[y] += pt[y] * density(x) * h;
      pi[y] += e[y] * density(x) * h;
    }
  }
  double expected = 0.0;
  for (std::size_t y = 0; y < 2; ++y) {
    double gap = 0.0;
    for (std::size_t i = 0; i < q; ++i) {
      const double x = lo + (static_cast<double>(i) + 0.5) * h;
      gap += std::abs(teacher(Vec{x})[y] / pi_t[y] - eta(model, Vec{x})[y] / pi[y]) * density(x) * h;
    }
    expected = std::max(expected, gap);
  }
  const double mc = approximation_error(teacher, model, 1000000, 9);
  CHECK(std::abs(mc - expected) < 1e-3);
}

TEST_CASE("approximation error grows with teacher temperature") {
  const auto model = imbalanced3();
  const auto ps = make_population_sample(model, 20000, 4);
  double prev = 0.0;
  for (double temp : {1.0, 3.0, 5.0}) {
    const auto teacher = [&](std::span<const double> x) {
      Vec f = eta(model, x);
      for (double& v : f) v = 0.8 * std::log(v) / temp;
      return softmax(f);
    };
    const double err = approximation_error(teacher, ps);
    CHECK(err > prev);
    prev = err;
  }
}
