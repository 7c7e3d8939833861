#include "rdistill/teacher_student.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "json_codec.hpp"
#include "rdistill/bayes_oracle.hpp"
#include "rdistill/core_math.hpp"
#include "rdistill/errors.hpp"
#include "rdistill/rng.hpp"

namespace rdistill {

namespace {

enum SeedStream : std::uint64_t {
  kData = 0x64617461,
  kTeacher = 0x74656163,
  kStudent = 0x73747564,
  kInit = 0x696E6974,
  kSgd = 0x73676421,
  kTrain = 0x74726E,
  kVal = 0x76616C,
  kTest = 0x747374,
  kApprox = 0x617070,
};

std::vector<std::size_t> layer_sizes(std::size_t d, const std::vector<std::size_t>& hidden,
                                     std::size_t m) {
  std::vector<std::size_t> sizes{d};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(m);
  return sizes;
}

// Cross-entropy against a probability row: lse(f) - <p, f>, gradient softmax(f) - p.
TrainResult train_soft_xent(ScorerParams init, const Matrix& features, const SoftLabelSet& soft,
                            const SgdConfig& sgd) {
  const Matrix& probs = soft.probs();
  Vec scratch(soft.num_classes());
  ExampleLoss loss = [&](std::size_t i, std::span<const double> f, std::span<double> grad) {
    const auto p = probs.row(i);
    const double lse = log_sum_exp(f);
    double value = lse;
    for (std::size_t j = 0; j < f.size(); ++j) {
      if (p[j] != 0.0) value -= p[j] * f[j];
      grad[j] = std::exp(f[j] - lse) - p[j];
    }
    return value;
  };
  return sgd_train(std::move(init), features, loss, sgd);
}

Scorer train_margin_dro(ScorerParams init, const SoftLabelSet& train_soft, const Matrix& features,
                        const DroValidation& val, DroConfig dro, double alpha, std::uint64_t seed) {
  dro.alpha = alpha;
  dro.seed = hash_seed({seed, kSgd});
  return distilled_margin_dro(train_soft, features, val, dro, std::move(init)).scorer;
}

SgdConfig seeded(SgdConfig sgd, std::uint64_t seed) {
  sgd.seed = hash_seed({seed, kSgd});
  return sgd;
}

Scorer train_onehot(const Dataset& train, const Dataset& val, const ObjectiveSpec& spec,
                    const PipelineConfig& config, const SgdConfig& sgd, const DroConfig& dro,
                    std::uint64_t seed) {
  ScorerParams init =
      ScorerParams::init(layer_sizes(train.dim(), config.hidden, train.num_classes),
                         hash_seed({seed, kInit}));
  const SoftLabelSet onehot = SoftLabelSet::one_hot(train.labels, train.num_classes);
  if (spec.kind == ObjectiveKind::Std) {
    return Scorer(train_soft_xent(std::move(init), train.features, onehot, seeded(sgd, seed)).params);
  }
  DroValidation v;
  v.features = val.features;
  v.labels = val.labels;
  v.num_classes = val.num_classes;
  DroConfig cfg = dro;
  cfg.val_labels = ValLabelSource::OneHot;
  return train_margin_dro(std::move(init), onehot, train.features, v, cfg, spec.robust_weight(), seed);
}

}  // namespace

void validate(const PipelineConfig& c) {
  validate(c.teacher_objective);
  validate(c.student_objective);
  if (!(c.temperature > 0.0) || !std::isfinite(c.temperature)) {
    throw InvalidInput("temperature must be > 0");
  }
  validate(c.teacher_sgd);
  validate(c.student_sgd);
  validate(c.teacher_dro);
  validate(c.student_dro);
  if (c.worst_k == 0) throw InvalidInput("worst_k must be >= 1");
}

std::uint64_t data_seed(std::uint64_t base) { return hash_seed({base, kData}); }
std::uint64_t teacher_seed(std::uint64_t base) { return hash_seed({base, kTeacher}); }
std::uint64_t student_seed(std::uint64_t base) { return hash_seed({base, kStudent}); }

SplitData sample_splits(const GaussianMixtureModel& model, const SampleSizes& sizes,
                        std::uint64_t seed) {
  SplitData d;
  d.train = sample(model, sizes.n_train, hash_seed({seed, kTrain}));
  d.val = sample_stratified(model, sizes.n_val, sizes.val_min_per_class, hash_seed({seed, kVal}));
  d.test = sample_stratified(model, sizes.n_test, sizes.val_min_per_class, hash_seed({seed, kTest}));
  return d;
}

SoftLabelSet soft_labels(const Scorer& teacher, const Matrix& features, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InvalidInput("temperature must be > 0");
  }
  Matrix logits = teacher.logits(features);
  const double inv_t = 1.0 / temperature;
  Vec scaled(logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) scaled[j] = row[j] * inv_t;
    softmax_into(scaled, row);
  }
  return SoftLabelSet(std::move(logits));
}

Scorer train_teacher(const Dataset& train, const Dataset& val, const ObjectiveSpec& spec,
                     const PipelineConfig& config, std::uint64_t seed) {
  validate(spec);
  return train_onehot(train, val, spec, config, config.teacher_sgd, config.teacher_dro, seed);
}

Scorer train_student(const Scorer& teacher, const Dataset& train, const Dataset& val,
                     const ObjectiveSpec& spec, const PipelineConfig& config, std::uint64_t seed) {
  validate(spec);
  if (!spec.distilled) {
    return train_onehot(train, val, spec, config, config.student_sgd, config.student_dro, seed);
  }
  ScorerParams init =
      ScorerParams::init(layer_sizes(train.dim(), config.hidden, train.num_classes),
                         hash_seed({seed, kInit}));
  const SoftLabelSet soft = soft_labels(teacher, train.features, config.temperature);
  if (spec.kind == ObjectiveKind::Std) {
    return Scorer(
        train_soft_xent(std::move(init), train.features, soft, seeded(config.student_sgd, seed)).params);
  }
  DroValidation v;
  v.features = val.features;
  v.labels = val.labels;
  v.num_classes = val.num_classes;
  DroConfig dro = config.student_dro;
  dro.val_labels = config.val_label_source;
  if (dro.val_labels == ValLabelSource::Teacher) {
    v.soft = soft_labels(teacher, val.features, config.temperature);
  }
  return train_margin_dro(std::move(init), soft, train.features, v, dro, spec.robust_weight(), seed);
}

TeacherBundle evaluate_teacher(const PipelineConfig& config, const GaussianMixtureModel& model,
                               const SplitData& data, Scorer teacher, std::uint64_t seed) {
  validate(config);
  TeacherBundle t;
  t.scorer = std::move(teacher);
  t.test_report = evaluate(t.scorer.logits(data.test.features), data.test.labels,
                           data.test.num_classes, config.worst_k);
  const double temp = config.temperature;
  const Scorer& scorer = t.scorer;
  TeacherProbFn fn = [&](std::span<const double> x) {
    Vec f = scorer.logits(x);
    for (double& v : f) v /= temp;
    return softmax(f);
  };
  t.approx_err = approximation_error(fn, model, config.approx_mc_samples, hash_seed({seed, kApprox}));
  return t;
}

TeacherBundle fit_teacher(const PipelineConfig& config, const GaussianMixtureModel& model,
                          const SplitData& data, std::uint64_t seed) {
  validate(config);
  Scorer scorer = train_teacher(data.train, data.val, config.teacher_objective, config, seed);
  return evaluate_teacher(config, model, data, std::move(scorer), seed);
}

RunResult fit_student(const PipelineConfig& config, const SplitData& data,
                      const TeacherBundle& teacher, std::uint64_t seed, Scorer* student_out) {
  validate(config);
  Scorer student = train_student(teacher.scorer, data.train, data.val, config.student_objective,
                                 config, seed);
  RunResult r;
  r.teacher_obj = objective_name(config.teacher_objective);
  r.student_obj = objective_name(config.student_objective);
  r.alpha_t = config.teacher_objective.alpha;
  r.alpha_s = config.student_objective.alpha;
  r.seed = config.seed;
  r.temperature = config.temperature;
  r.val_labels = val_label_source_name(config.val_label_source);
  r.student_test = evaluate(student.logits(data.test.features), data.test.labels,
                            data.test.num_classes, config.worst_k);
  r.teacher_test = teacher.test_report;
  r.approx_err = teacher.approx_err;
  r.config_json = pipeline_to_json(config);
  if (student_out != nullptr) *student_out = std::move(student);
  return r;
}

RunResult run_cell(const PipelineConfig& config, const GaussianMixtureModel& model,
                   const SampleSizes& sizes) {
  validate(config);
  const SplitData data = sample_splits(model, sizes, data_seed(config.seed));
  const TeacherBundle teacher = fit_teacher(config, model, data, teacher_seed(config.seed));
  return fit_student(config, data, teacher, student_seed(config.seed));
}

TemperatureChoice select_temperature(PipelineConfig config, const SplitData& data,
                                     const TeacherBundle& teacher, const std::vector<double>& grid,
                                     std::uint64_t seed) {
  if (grid.empty()) throw InvalidInput("temperature grid is empty");
  TemperatureChoice best;
  bool have = false;
  for (double t : grid) {
    config.temperature = t;
    Scorer student;
    RunResult r = fit_student(config, data, teacher, seed, &student);
    const double val_worst = evaluate(student.logits(data.val.features), data.val.labels,
                                      data.val.num_classes, 1)
                                 .acc_worst;
    if (!have || val_worst > best.val_worst_acc) {
      best = TemperatureChoice{t, val_worst, std::move(r)};
      have = true;
    }
  }
  return best;
}

std::string pipeline_to_json(const PipelineConfig& config) {
  // Record the DRO settings as actually used by train_teacher / train_student.
  PipelineConfig effective = config;
  effective.teacher_dro.val_labels = ValLabelSource::OneHot;
  effective.student_dro.val_labels = config.val_label_source;
  effective.teacher_dro.alpha = config.teacher_objective.robust_weight();
  effective.student_dro.alpha = config.student_objective.robust_weight();
  return nlohmann::json(effective).dump();
}

PipelineConfig pipeline_from_json(const std::string& text) {
  return nlohmann::json::parse(text).get<PipelineConfig>();
}

std::string run_result_to_json(const RunResult& result) { return nlohmann::json(result).dump(2); }

RunResult run_result_from_json(const std::string& text) {
  return nlohmann::json::parse(text).get<RunResult>();
}

std::string format_sig6(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return buf;
}

std::string results_csv_header() {
  return "teacher_obj,student_obj,alpha_t,alpha_s,seed,acc_std,acc_bal,acc_worst,acc_worst_k,approx_err";
}

std::string results_csv_row(const RunResult& r) {
  std::ostringstream os;
  os << r.teacher_obj << ',' << r.student_obj << ',' << format_sig6(r.alpha_t) << ','
     << format_sig6(r.alpha_s) << ',' << r.seed << ',' << format_sig6(r.student_test.acc_std) << ','
     << format_sig6(r.student_test.acc_bal) << ',' << format_sig6(r.student_test.acc_worst) << ','
     << format_sig6(r.student_test.acc_worst_k) << ',' << format_sig6(r.approx_err);
  return os.str();
}

}  // namespace rdistill
