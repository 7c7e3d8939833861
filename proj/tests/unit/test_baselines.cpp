#include <cmath>

#include "doctest.h"
#include "rdistill/baselines.hpp"
#include "rdistill/core_math.hpp"
#include "rdistill/data_synth.hpp"
#include "rdistill/errors.hpp"
#include "rdistill/metrics.hpp"

using namespace rdistill;

namespace {

Matrix eta_rows(const GaussianMixtureModel& model, const Matrix& x) {
  Matrix p(x.rows(), model.num_classes());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const Vec e = eta(model, x.row(i));
    std::copy(e.begin(), e.end(), p.row(i).begin());
  }
  return p;
}

// Independent worst-class accuracy of argmax(g + log p).
double oracle_worst(const Vec& g, const Matrix& p, const std::vector<std::size_t>& y, std::size_t m) {
  std::vector<double> hit(m, 0.0), count(m, 0.0);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    std::size_t best = 0;
    double best_v = -1e300;
    for (std::size_t j = 0; j < m; ++j) {
      const double v = g[j] + std::log(std::max(p(i, j), 1e-300));
      if (v > best_v) {
        best_v = v;
        best = j;
      }
    }
    count[y[i]] += 1;
    hit[y[i]] += best == y[i];
  }
  double w = 1.0;
  for (std::size_t j = 0; j < m; ++j) w = std::min(w, hit[j] / count[j]);
  return w;
}

}  // namespace

TEST_CASE("post-shift prediction hand cases") {
  CHECK(post_shift_predict({{0.0, std::log(2.0)}}, Vec{0.6, 0.4}) == 1);
  CHECK(post_shift_predict({{0.0, 0.0}}, Vec{0.6, 0.4}) == 0);
  CHECK(post_shift_predict({{0.0, 0.0}}, Vec{0.5, 0.5}) == 0);
  CHECK(post_shift_predict({{3.0, 3.0 + std::log(2.0)}}, Vec{0.6, 0.4}) == 1);
  // Zero probabilities are floored rather than producing -inf.
  CHECK(post_shift_predict({{0.0, 800.0}}, Vec{1.0, 0.0}) == 1);
}

TEST_CASE("post-shift grid contains exact zero") {
  const Vec g = PostShiftGrid{}.values();
  CHECK(g.size() == 41);
  CHECK(g.front() == -2.0);
  CHECK(g.back() == 2.0);
  CHECK(std::count(g.begin(), g.end(), 0.0) == 1);
}

TEST_CASE("perfect teacher keeps the zero adjustment") {
  Matrix p(4, 2, 0.0);
  p(0, 0) = p(1, 0) = 0.9;
  p(0, 1) = p(1, 1) = 0.1;
  p(2, 1) = p(3, 1) = 0.8;
  p(2, 0) = p(3, 0) = 0.2;
  const std::vector<std::size_t> y{0, 0, 1, 1};
  const auto adj = post_shift_fit(p, y, 2);
  CHECK(adj.log_gamma == Vec{0.0, 0.0});
}

TEST_CASE("post-shift never lowers validation worst-class accuracy") {
  const auto model = make_model(4, 2, {50.0, 4}, 3);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset val = sample_stratified(model, 400, 5, seed);
    // A deliberately miscalibrated teacher: eta raised to a power.
    Matrix p = eta_rows(model, val.features);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      Vec f(4);
      for (std::size_t j = 0; j < 4; ++j) f[j] = 1.7 * std::log(std::max(p(i, j), 1e-300));
      const Vec s = softmax(f);
      std::copy(s.begin(), s.end(), p.row(i).begin());
    }
    const auto adj = post_shift_fit(p, val.labels, 4);
    const PostShiftAdjustment zero{Vec(4, 0.0)};
    CHECK(post_shift_worst_accuracy(adj, p, val.labels, 4) >= post_shift_worst_accuracy(zero, p, val.labels, 4));
    CHECK(post_shift_worst_accuracy(adj, p, val.labels, 4) ==
          doctest::Approx(oracle_worst(adj.log_gamma, p, val.labels, 4)));
  }
}

TEST_CASE("two-class fit matches an exhaustive grid search") {
  // Priors 0.9 / 0.1: the standard teacher under-predicts the minority class
  // and shifting the threshold fixes it.
  const GaussianMixtureModel model({0.9, 0.1}, {{-1.0}, {1.0}}, {Covariance{}, Covariance{}});
  const Dataset val = sample_stratified(model, 600, 30, 5);
  const Matrix p = eta_rows(model, val.features);
  const PostShiftGrid grid;
  const auto adj = post_shift_fit(p, val.labels, 2, grid);
  const Vec values = grid.values();
  double best = -1.0;
  for (double a : values) {
    for (double b : values) best = std::max(best, oracle_worst({a, b}, p, val.labels, 2));
  }
  const double zero = oracle_worst({0.0, 0.0}, p, val.labels, 2);
  CHECK(best > zero + 0.1);
  CHECK(oracle_worst(adj.log_gamma, p, val.labels, 2) == best);
}

TEST_CASE("post-shift preconditions and json") {
  Matrix p(2, 3, 1.0 / 3.0);
  CHECK_THROWS_AS(post_shift_fit(p, std::vector<std::size_t>{0, 1}, 3), MissingClassError);
  const PostShiftAdjustment adj{{0.1, -0.35, 2.0}};
  CHECK(adjustment_from_json(adjustment_to_json(adj)) == adj);
  CHECK_THROWS(adjustment_from_json("{\"x\":1}"));
}
