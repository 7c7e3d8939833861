#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "rdistill/core_math.hpp"
#include "rdistill/data_synth.hpp"
#include "rdistill/dro.hpp"
#include "rdistill/errors.hpp"
#include "rdistill/metrics.hpp"

using namespace rdistill;

namespace {

SoftLabelSet softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const Vec s = softmax(logits.row(i));
    std::copy(s.begin(), s.end(), p.row(i).begin());
  }
  return SoftLabelSet(p);
}

double simplex_gap(const Vec& v) {
  double s = 0.0;
  for (double x : v) {
    if (x < 0.0) return 1.0;
    s += x;
  }
  return std::abs(s - 1.0);
}

DroValidation onehot_val(const Dataset& d) {
  return DroValidation{d.features, d.labels, std::nullopt, d.num_classes};
}

}  // namespace

TEST_CASE("eg_update hand values") {
  const auto l = eg_update(Vec{0.5, 0.5}, Vec{1.0, 0.0}, std::log(2.0));
  CHECK(l[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(l[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const Vec lam{0.2, 0.3, 0.5};
  const auto same = eg_update(lam, Vec{0.7, 0.7, 0.7}, 3.0);
  for (std::size_t j = 0; j < 3; ++j) CHECK(same[j] == doctest::Approx(lam[j]).epsilon(1e-15));

  CHECK_THROWS_AS(eg_update(Vec{0.0, 0.0}, Vec{1.0, 0.0}, 0.1), InvalidInput);
  CHECK_THROWS_AS(eg_update(Vec{0.5, 0.5}, Vec{NAN, 0.0}, 0.1), InvalidInput);

  // Huge exponents stay finite.
  const auto big = eg_update(Vec{0.5, 0.5}, Vec{1e6, 0.0}, 10.0);
  CHECK(big[0] == 1.0);
  CHECK(big[1] == 0.0);
}

TEST_CASE("eg_update follows the logistic closed form under fixed risks") {
  // lambda_1^k = sigmoid(logit(lambda_1^0) + k gamma) for R = [1, 0].
  Vec lam{0.5, 0.5};
  double prev = 0.5;
  for (int k = 1; k <= 30; ++k) {
    lam = eg_update(lam, Vec{1.0, 0.0}, 1.0).values();
    const double expected = 1.0 / (1.0 + std::exp(-static_cast<double>(k)));
    CHECK(lam[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(lam[0] > prev);
    prev = lam[0];
  }
}

TEST_CASE("eg fixed-risk regret bound") {
  std::mt19937_64 gen(4);
  for (std::size_t m : {2u, 3u, 5u, 10u}) {
    const Vec r = rdistill::testing::random_vector(gen, m, 0.0, 2.0);
    const double rmax = *std::max_element(r.begin(), r.end());
    const std::size_t K = 10000;
    const double rate = std::sqrt(std::log(static_cast<double>(m)) / static_cast<double>(K));
    const double gamma = rate / rmax;
    Vec lam(m, 1.0 / static_cast<double>(m));
    CompensatedSum avg;
    for (std::size_t k = 0; k < K; ++k) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += lam[j] * r[j];
      avg.add(dot / static_cast<double>(K));
      lam = eg_update(lam, r, gamma).values();
      CHECK(simplex_gap(lam) < 1e-9);
    }
    CHECK(rmax - avg.value() <= 2.0 * rmax * rate);
    CHECK(rmax - avg.value() >= 0.0);
  }
}

TEST_CASE("scaling risks and dividing the step gives the same trajectory") {
  std::mt19937_64 gen(8);
  Vec a{0.25, 0.25, 0.5}, b = a;
  for (int k = 0; k < 50; ++k) {
    const Vec r = rdistill::testing::random_vector(gen, 3, 0, 1);
    Vec r2 = r;
    for (double& v : r2) v *= 4.0;
    a = eg_update(a, r, 0.3).values();
    b = eg_update(b, r2, 0.3 / 4.0).values();
    for (std::size_t j = 0; j < 3; ++j) CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-12));
  }
}

TEST_CASE("validation risks agree with the objectives module and brute force") {
  std::mt19937_64 gen(12);
  Matrix f(15, 3);
  for (double& v : f.data()) v = std::normal_distribution<double>(0, 1)(gen);
  const SoftLabelSet soft = softmax_rows(f);
  Matrix g(15, 3);
  for (double& v : g.data()) v = std::normal_distribution<double>(0, 1)(gen);

  for (Loss loss : {Loss::ZeroOne, Loss::Xent}) {
    const auto r = val_risks_teacher(g, soft, loss);
    CHECK(r.values == distilled_per_class_risk(g, soft, loss).values);
    for (std::size_t j = 0; j < 3; ++j) {
      double num = 0.0, pi = 0.0;
      for (std::size_t i = 0; i < 15; ++i) {
        num += soft.probs()(i, j) * loss_value(loss, j, g.row(i));
        pi += soft.probs()(i, j);
      }
      pi /= 15.0;
      CHECK(r.values[j] == doctest::Approx(num / 15.0 / pi).epsilon(1e-12));
    }
  }

  std::vector<std::size_t> y(15);
  for (std::size_t i = 0; i < 15; ++i) y[i] = i % 3;
  CHECK(val_risks_onehot(g, y, 3, Loss::Xent).values == per_class_risk_onehot(g, y, 3, Loss::Xent).values);
  Matrix perfect(15, 3, 0.0);
  for (std::size_t i = 0; i < 15; ++i) perfect(i, y[i]) = 800.0;
  for (double v : val_risks_onehot(perfect, y, 3, Loss::ZeroOne).values) CHECK(v == 0.0);
  for (double v : val_risks_teacher(perfect, softmax_rows(perfect), Loss::ZeroOne).values) CHECK(v == 0.0);
  y[2] = 0;
  y[5] = 0;
  y[8] = 0;
  y[11] = 0;
  y[14] = 0;
  CHECK_THROWS_AS(val_risks_onehot(g, y, 3, Loss::ZeroOne), MissingClassError);
}

TEST_CASE("inner minimization on a free per-point scorer reaches softmax proportional to c * p") {
  // One-hot inputs give every training point its own logit column.
  const std::size_t n = 6, m = 3;
  Matrix x(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) x(i, i) = 1.0;
  std::mt19937_64 gen(3);
  Matrix p(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec row = rdistill::testing::random_simplex(gen, m);
    std::copy(row.begin(), row.end(), p.row(i).begin());
  }
  const SoftLabelSet soft(p);
  const Vec costs{0.5, 2.0, 7.0};
  SgdConfig cfg;
  cfg.learning_rate = 5.0;
  cfg.weight_decay = 0.0;
  cfg.batch_size = n;
  cfg.epochs = 3000;
  const auto res = inner_minimize(ScorerParams({n, m}), x, soft, costs, cfg);
  for (std::size_t i = 0; i < n; ++i) {
    Vec target(m);
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += (target[j] = costs[j] * p(i, j));
    for (double& v : target) v /= s;
    CHECK(rdistill::testing::l1(softmax(forward(res.params, x.row(i))), target) < 1e-5);
  }
  const auto again = inner_minimize(ScorerParams({n, m}), x, soft, costs, cfg);
  CHECK(again.params == res.params);
  CHECK_THROWS_AS(inner_minimize(ScorerParams({n, m}), x, soft, Vec{1, 0, 1}, cfg), InvalidInput);
}

TEST_CASE("linear student reproduces the geometric-mean multiplier form") {
  // Teacher is linear, so every cost-shifted optimum lies in the student family.
  const auto model = make_model(3, 2, {10.0, 3}, 21);
  const Dataset train = sample_stratified(model, 150, 10, 1);
  const Dataset val = sample_stratified(model, 150, 10, 2);
  ScorerParams teacher({2, 3});
  const double w[3][2] = {{1.0, 0.2}, {-0.5, 0.9}, {-0.3, -1.1}};
  for (std::size_t j = 0; j < 3; ++j) {
    teacher.layer(0).weights(j, 0) = w[j][0];
    teacher.layer(0).weights(j, 1) = w[j][1];
    teacher.layer(0).bias[j] = 0.3 * static_cast<double>(j);
  }
  const SoftLabelSet soft = softmax_rows(forward_batch(teacher, train.features));
  DroConfig cfg;
  cfg.rounds = 8;
  cfg.eg_step = 1.0;
  cfg.val_labels = ValLabelSource::OneHot;
  cfg.return_mode = ReturnMode::Average;
  cfg.inner.learning_rate = 3.0;
  cfg.inner.weight_decay = 0.0;
  cfg.inner.batch_size = train.size();
  cfg.inner.epochs = 3000;
  const auto res = distilled_margin_dro(soft, train.features, onehot_val(val), cfg, ScorerParams({2, 3}));
  REQUIRE(res.trace.rows.size() == 8);

  Vec log_bar(3, 0.0);
  for (const auto& row : res.trace.rows) {
    CHECK(simplex_gap(row.lambda) < 1e-9);
    for (std::size_t j = 0; j < 3; ++j) {
      log_bar[j] += std::log(row.lambda[j] / soft.teacher_marginal()[j]) / 8.0;
    }
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    Vec target(3);
    double s = 0.0;
    for (std::size_t j = 0; j < 3; ++j) s += (target[j] = std::exp(log_bar[j]) * soft.probs()(i, j));
    for (double& v : target) v /= s;
    worst = std::max(worst, rdistill::testing::l1(softmax(res.scorer.logits(train.features.row(i))), target));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("dro loop invariants, endpoint behaviour and determinism") {
  const auto model = make_model(3, 2, {10.0, 3}, 5);
  const Dataset train = sample_stratified(model, 300, 10, 1);
  const Dataset val = sample_stratified(model, 120, 10, 2);
  const Dataset val2 = sample_stratified(model, 120, 10, 3);
  const auto soft = SoftLabelSet::one_hot(train.labels, 3);
  DroConfig cfg;
  cfg.rounds = 5;
  cfg.val_labels = ValLabelSource::OneHot;
  cfg.inner.batch_size = 32;
  cfg.alpha = 0.4;
  const auto init = ScorerParams::init({2, 8, 3}, 1);
  const auto a = distilled_margin_dro(soft, train.features, onehot_val(val), cfg, init);
  const auto b = distilled_margin_dro(soft, train.features, onehot_val(val), cfg, init);
  CHECK(a.scorer == b.scorer);
  Vec lam(3, 1.0 / 3.0);
  for (const auto& row : a.trace.rows) {
    lam = eg_update(lam, row.risks, cfg.eg_step * cfg.alpha).values();
    for (std::size_t j = 0; j < 3; ++j) CHECK(row.lambda[j] == doctest::Approx(lam[j]).epsilon(1e-14));
    CHECK(simplex_gap(row.beta) < 1e-9);
    CHECK(row.objective == doctest::Approx(tradeoff_of(PerClassRisk{row.risks, false}, 0.4)));
  }

  SUBCASE("alpha = 0 ignores lambda and the validation set") {
    cfg.alpha = 0.0;
    const auto x = distilled_margin_dro(soft, train.features, onehot_val(val), cfg, init);
    cfg.eg_step = 5.0;
    const auto y = distilled_margin_dro(soft, train.features, onehot_val(val2), cfg, init);
    CHECK(x.scorer == y.scorer);
    for (const auto& row : x.trace.rows) {
      for (double v : row.beta) CHECK(v == 1.0 / 3.0);
    }
  }
  SUBCASE("one-hot training wrapper matches the general loop") {
    cfg.alpha = 1.0;
    const auto x = train_robust_onehot(train, val, cfg, init);
    const auto y = distilled_margin_dro(soft, train.features, onehot_val(val), cfg, init);
    CHECK(x.scorer == y.scorer);
  }
  SUBCASE("configuration errors") {
    cfg.rounds = 0;
    CHECK_THROWS_AS(distilled_margin_dro(soft, train.features, onehot_val(val), cfg, init), InvalidInput);
    cfg.rounds = 1;
    cfg.val_labels = ValLabelSource::Teacher;
    CHECK_THROWS_AS(distilled_margin_dro(soft, train.features, onehot_val(val), cfg, init), InvalidInput);
  }
}

TEST_CASE("robust one-hot training is no worse on worst-class accuracy than standard training") {
  const GaussianMixtureModel model({0.5, 0.5}, {{-2.5, 0}, {2.5, 0}}, {Covariance{}, Covariance{}});
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset train = sample(model, 400, 100 + seed);
    const Dataset val = sample_stratified(model, 400, 20, 200 + seed);
    const auto init = ScorerParams::init({2, 16, 2}, seed);
    SgdConfig sgd;
    sgd.epochs = 20;
    sgd.seed = seed;
    const auto& labels = train.labels;
    const auto std_params = sgd_train(init, train.features,
                                      [&](std::size_t i, std::span<const double> f, std::span<double> g) {
                                        const Vec gr = xent_grad(labels[i], f);
                                        std::copy(gr.begin(), gr.end(), g.begin());
                                        return xent_loss(labels[i], f);
                                      },
                                      sgd).params;
    DroConfig cfg;
    cfg.rounds = 20;
    cfg.val_labels = ValLabelSource::OneHot;
    cfg.seed = seed;
    const auto rob = train_robust_onehot(train, val, cfg, init);
    const double w_std = evaluate(forward_batch(std_params, val.features), val.labels, 2, 1).acc_worst;
    const double w_rob = evaluate(rob.scorer.logits(val.features), val.labels, 2, 1).acc_worst;
    CHECK(w_rob >= w_std - 0.02);
  }
}

TEST_CASE("trace csv layout") {
  DroTrace t;
  t.rows.push_back({0, {0.25, 0.75}, {0.25, 0.75}, {0.5, 0.125}, 0.5});
  const auto path = (std::filesystem::temp_directory_path() / "rdistill_trace.csv").string();
  write_trace_csv(t, path);
  std::ifstream is(path);
  std::string header, line;
  std::getline(is, header);
  std::getline(is, line);
  CHECK(header == "iter,lambda_1,lambda_2,risk_1,risk_2,objective");
  CHECK(line.rfind("0,0.25,0.75,0.5,0.125,0.5", 0) == 0);
  std::filesystem::remove(path);
}
