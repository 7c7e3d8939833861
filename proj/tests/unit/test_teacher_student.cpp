#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "rdistill/core_math.hpp"
#include "rdistill/errors.hpp"
#include "rdistill/metrics.hpp"
#include "rdistill/teacher_student.hpp"

using namespace rdistill;

namespace {

PipelineConfig small_config() {
  PipelineConfig c;
  c.hidden = {16};
  c.teacher_sgd.epochs = 10;
  c.student_sgd.epochs = 10;
  c.teacher_dro.rounds = 10;
  c.student_dro.rounds = 10;
  c.approx_mc_samples = 2000;
  return c;
}

Scorer linear_scorer(const std::vector<std::vector<double>>& w, const Vec& b) {
  ScorerParams p({w.front().size(), w.size()});
  for (std::size_t j = 0; j < w.size(); ++j) {
    for (std::size_t k = 0; k < w[j].size(); ++k) p.layer(0).weights(j, k) = w[j][k];
    p.layer(0).bias[j] = b[j];
  }
  return Scorer(p);
}

Vec softmax_at(const Scorer& s, double x) { return softmax(s.logits(Vec{x})); }

}  // namespace

TEST_CASE("soft labels and temperature") {
  const Scorer t = linear_scorer({{2.0}, {-1.0}, {0.5}}, {0.0, 0.3, -0.2});
  Matrix x(3, 1);
  x(0, 0) = -1.0;
  x(1, 0) = 0.5;
  x(2, 0) = 4.0;
  const auto s1 = soft_labels(t, x, 1.0);
  for (std::size_t i = 0; i < 3; ++i) {
    const Vec p = softmax(t.logits(x.row(i)));
    for (std::size_t j = 0; j < 3; ++j) CHECK(s1.probs()(i, j) == doctest::Approx(p[j]).epsilon(1e-15));
  }
  const auto hot = soft_labels(t, x, 1e6);
  for (double v : hot.probs().data()) CHECK(std::abs(v - 1.0 / 3.0) < 1e-4);

  const Scorer sep = linear_scorer({{1.0}, {-1.0}}, {0.0, 0.0});
  const auto cold = soft_labels(sep, x, 0.1);
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t a = argmax(sep.logits(x.row(i)));
    CHECK(std::abs(cold.probs()(i, a) - 1.0) < 1e-3);
  }
  CHECK_THROWS_AS(soft_labels(t, x, 0.0), InvalidInput);
  CHECK(soft_labels(t, x, 2.0).teacher_marginal() != s1.teacher_marginal());
}

TEST_CASE("standard teacher approximates eta on a symmetric model") {
  const GaussianMixtureModel model({0.5, 0.5}, {{-1.0}, {1.0}}, {Covariance{}, Covariance{}});
  const Dataset train = sample(model, 4000, 1);
  const Dataset val = sample_stratified(model, 200, 5, 2);
  PipelineConfig c = small_config();
  c.teacher_sgd.epochs = 40;
  const Scorer t = train_teacher(train, val, parse_objective("std"), c, 3);
  double total = 0.0;
  for (int i = 0; i <= 40; ++i) {
    const double x = -2.0 + 0.1 * i;
    total += rdistill::testing::l1(softmax_at(t, x), eta(model, Vec{x}));
  }
  CHECK(total / 41.0 < 0.1);
  CHECK(train_teacher(train, val, parse_objective("std"), c, 3) == t);
}

TEST_CASE("balanced teacher follows the prior-corrected posterior") {
  // At x = ln(9)/2, eta = [0.5, 0.5]; the balanced optimum is [0.1, 0.9].
  const GaussianMixtureModel model({0.9, 0.1}, {{-1.0}, {1.0}}, {Covariance{}, Covariance{}});
  const Dataset train = sample(model, 5000, 4);
  const Dataset val = sample_stratified(model, 400, 20, 5);
  PipelineConfig c = small_config();
  c.teacher_dro.rounds = 40;
  const Scorer t = train_teacher(train, val, parse_objective("bal"), c, 6);
  const Vec p = softmax_at(t, std::log(9.0) / 2.0);
  CHECK(std::abs(p[1] - 0.9) < 0.1);
}

TEST_CASE("trade-off endpoints coincide with balanced and robust training") {
  const auto model = make_model(3, 2, {10.0, 3}, 1);
  const SplitData data = sample_splits(model, {600, 150, 300, 5}, 2);
  const PipelineConfig c = small_config();
  const Scorer bal = train_teacher(data.train, data.val, parse_objective("bal"), c, 7);
  CHECK(train_teacher(data.train, data.val, parse_objective("tdf", 0.0), c, 7) == bal);
  const Scorer rob = train_teacher(data.train, data.val, parse_objective("rob"), c, 7);
  CHECK(train_teacher(data.train, data.val, parse_objective("tdf", 1.0), c, 7) == rob);
  CHECK(!(bal == rob));

  CHECK(train_student(bal, data.train, data.val, parse_objective("tdf-d", 0.0), c, 8) ==
        train_student(bal, data.train, data.val, parse_objective("bal-d"), c, 8));
  CHECK(train_student(bal, data.train, data.val, parse_objective("tdf-d", 1.0), c, 8) ==
        train_student(bal, data.train, data.val, parse_objective("rob-d"), c, 8));
}

TEST_CASE("one-hot teacher makes the distilled student equal the standard student") {
  // Labels are perfectly predicted with logit gaps > 745, so softmax is exactly one-hot.
  const GaussianMixtureModel model({0.5, 0.5}, {{-5.0}, {5.0}}, {Covariance{0.01}, Covariance{0.01}});
  const Dataset train = sample(model, 300, 1);
  const Dataset val = sample_stratified(model, 50, 5, 2);
  const Scorer teacher = linear_scorer({{-1000.0}, {1000.0}}, {0.0, 0.0});
  const auto soft = soft_labels(teacher, train.features, 1.0);
  CHECK(soft == SoftLabelSet::one_hot(train.labels, 2));
  const PipelineConfig c = small_config();
  CHECK(train_student(teacher, train, val, parse_objective("std-d"), c, 9) ==
        train_student(teacher, train, val, parse_objective("std"), c, 9));
}

TEST_CASE("balanced distillation from a uniform teacher learns uniform outputs") {
  const auto model = make_model(3, 2, {10.0, 3}, 1);
  const SplitData data = sample_splits(model, {300, 60, 60, 5}, 2);
  const Scorer uniform = linear_scorer({{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}}, {0.0, 0.0, 0.0});
  PipelineConfig c = small_config();
  // The margin loss carries a 1/m factor; scale the step to match distilled xent.
  c.student_dro.rounds = 200;
  c.student_dro.inner.learning_rate = 3 * c.student_sgd.learning_rate;
  const Scorer s = train_student(uniform, data.train, data.val, parse_objective("bal-d"), c, 3);
  for (std::size_t i = 0; i < 20; ++i) {
    for (double v : softmax(s.logits(data.test.features.row(i)))) CHECK(std::abs(v - 1.0 / 3.0) < 0.05);
  }
}

TEST_CASE("standard teacher marginal is calibrated") {
  const auto model = make_model(3, 2, {10.0, 3}, 1);
  const Dataset train = sample(model, 5000, 3);
  PipelineConfig c = small_config();
  c.teacher_sgd.epochs = 20;
  const Scorer t = train_teacher(train, train, parse_objective("std"), c, 4);
  const auto soft = soft_labels(t, train.features, 1.0);
  const Vec pi_hat = train.empirical_priors();
  for (std::size_t y = 0; y < 3; ++y) CHECK(std::abs(soft.teacher_marginal()[y] - pi_hat[y]) < 0.05);
}

TEST_CASE("run_cell is deterministic, consistent and serializable") {
  const auto model = make_model(3, 2, {10.0, 3}, 1);
  PipelineConfig c = small_config();
  c.teacher_objective = parse_objective("std");
  c.student_objective = parse_objective("rob-d");
  c.seed = 17;
  const SampleSizes sizes{500, 150, 600, 5};
  const RunResult a = run_cell(c, model, sizes);
  const RunResult b = run_cell(c, model, sizes);
  CHECK(a == b);
  CHECK(run_result_from_json(run_result_to_json(a)) == a);
  CHECK(a.teacher_obj == "std");
  CHECK(a.student_obj == "rob-d");
  CHECK(a.student_test.acc_worst <= a.student_test.acc_worst_k);
  CHECK(a.approx_err >= 0.0);

  const SplitData data = sample_splits(model, sizes, data_seed(c.seed));
  const Scorer t = train_teacher(data.train, data.val, c.teacher_objective, c, teacher_seed(c.seed));
  CHECK(evaluate(t.logits(data.test.features), data.test.labels, 3, c.worst_k) == a.teacher_test);

  CHECK(pipeline_from_json(pipeline_to_json(c)).student_objective == c.student_objective);
  CHECK(results_csv_header() ==
        "teacher_obj,student_obj,alpha_t,alpha_s,seed,acc_std,acc_bal,acc_worst,acc_worst_k,approx_err");
  CHECK(results_csv_row(a).rfind("std,rob-d,0,0,17,", 0) == 0);
}

TEST_CASE("missing validation class surfaces as a named error") {
  const auto model = make_model(3, 2, {10.0, 3}, 1);
  const SplitData data = sample_splits(model, {300, 60, 60, 5}, 2);
  Dataset val = data.val;
  Dataset pruned{Matrix(0, 2), {}, 3};
  for (std::size_t i = 0; i < val.size(); ++i) {
    if (val.labels[i] != 2) {
      pruned.features.append_row(val.features.row(i));
      pruned.labels.push_back(val.labels[i]);
    }
  }
  try {
    (void)train_teacher(data.train, pruned, parse_objective("rob"), small_config(), 1);
    FAIL("expected MissingClassError");
  } catch (const MissingClassError& e) {
    CHECK(e.class_index() == 2);
  }
}

TEST_CASE("temperature selection keeps the earliest best") {
  const auto model = make_model(3, 2, {10.0, 3}, 1);
  PipelineConfig c = small_config();
  const SplitData data = sample_splits(model, {300, 90, 90, 5}, 2);
  const TeacherBundle t = fit_teacher(c, model, data, 3);
  const auto choice = select_temperature(c, data, t, {1.0, 1.0}, 4);
  CHECK(choice.temperature == 1.0);
  CHECK(choice.result.temperature == 1.0);
  CHECK_THROWS_AS(select_temperature(c, data, t, {}, 4), InvalidInput);
}

TEST_CASE("six significant digits") {
  CHECK(format_sig6(0.123456789) == "0.123457");
  CHECK(format_sig6(1.0) == "1");
  CHECK(format_sig6(12345678.0) == "1.23457e+07");
}
