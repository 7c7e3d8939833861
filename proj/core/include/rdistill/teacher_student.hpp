#pragma once

// End-to-end teacher -> soft labels -> student pipeline over every
// combination of teacher and student objectives.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rdistill/data_synth.hpp"
#include "rdistill/dro.hpp"
#include "rdistill/metrics.hpp"
#include "rdistill/mlp.hpp"
#include "rdistill/objectives.hpp"

namespace rdistill {

struct PipelineConfig {
  ObjectiveSpec teacher_objective{};
  ObjectiveSpec student_objective{.distilled = true};
  double temperature = 1.0;
  ValLabelSource val_label_source = ValLabelSource::Teacher;
  std::vector<std::size_t> hidden{64, 64};
  // Budget for STD / STD-D training.
  SgdConfig teacher_sgd{};
  SgdConfig student_sgd{};
  // Budget for BAL / ROB / TDF training (rounds x inner epochs).
  DroConfig teacher_dro{};
  DroConfig student_dro{};
  std::size_t worst_k = 2;
  std::size_t approx_mc_samples = 20000;
  std::uint64_t seed = 0;
};

void validate(const PipelineConfig& config);

struct SampleSizes {
  std::size_t n_train = 5000;
  std::size_t n_val = 1000;
  std::size_t n_test = 20000;
  std::size_t val_min_per_class = 5;
};

struct SplitData {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Train i.i.d.; val and test stratified with at least val_min_per_class per class.
SplitData sample_splits(const GaussianMixtureModel& model, const SampleSizes& sizes,
                        std::uint64_t seed);

/// Rows softmax(f(x_i) / temperature); marginal cached on construction.
SoftLabelSet soft_labels(const Scorer& teacher, const Matrix& features, double temperature);

/// STD: cross-entropy ERM. BAL/ROB/TDF: margin-based DRO on one-hot labels with
/// alpha = 0 / 1 / alpha (alpha = 0 is balanced margin training with costs 1/pi).
Scorer train_teacher(const Dataset& train, const Dataset& val, const ObjectiveSpec& spec,
                     const PipelineConfig& config, std::uint64_t seed);

/// STD-D: cross-entropy against teacher probabilities. BAL-D/ROB-D/TDF-D:
/// distilled margin DRO with costs beta / pi^t. Non-distilled specs ignore the teacher.
Scorer train_student(const Scorer& teacher, const Dataset& train, const Dataset& val,
                     const ObjectiveSpec& spec, const PipelineConfig& config, std::uint64_t seed);

struct RunResult {
  std::string teacher_obj;
  std::string student_obj;
  double alpha_t = 0.0;
  double alpha_s = 0.0;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  std::string val_labels;
  EvalReport student_test;
  EvalReport teacher_test;
  double approx_err = 0.0;
  std::string config_json;  // echo of the PipelineConfig

  bool operator==(const RunResult&) const = default;
};

struct TeacherBundle {
  Scorer scorer;
  EvalReport test_report;
  double approx_err = 0.0;
};

/// Trains and evaluates the teacher; approximation error of softmax(f^t / T)
/// against the model's exact posterior.
/// Evaluates an already trained teacher exactly as fit_teacher does.
TeacherBundle evaluate_teacher(const PipelineConfig& config, const GaussianMixtureModel& model,
                               const SplitData& data, Scorer teacher, std::uint64_t seed);
TeacherBundle fit_teacher(const PipelineConfig& config, const GaussianMixtureModel& model,
                          const SplitData& data, std::uint64_t seed);
RunResult fit_student(const PipelineConfig& config, const SplitData& data,
                      const TeacherBundle& teacher, std::uint64_t seed, Scorer* student_out = nullptr);

/// Seeds derived from config.seed: data, teacher and student streams.
std::uint64_t data_seed(std::uint64_t base);
std::uint64_t teacher_seed(std::uint64_t base);
std::uint64_t student_seed(std::uint64_t base);

RunResult run_cell(const PipelineConfig& config, const GaussianMixtureModel& model,
                   const SampleSizes& sizes);

struct TemperatureChoice {
  double temperature = 1.0;
  double val_worst_acc = 0.0;
  RunResult result;
};

/// Trains one student per temperature and keeps the one with the best
/// worst-class validation accuracy (ties go to the earlier grid entry).
TemperatureChoice select_temperature(PipelineConfig config, const SplitData& data,
                                     const TeacherBundle& teacher, const std::vector<double>& grid,
                                     std::uint64_t seed);

std::string pipeline_to_json(const PipelineConfig& config);
PipelineConfig pipeline_from_json(const std::string& text);

std::string run_result_to_json(const RunResult& result);
RunResult run_result_from_json(const std::string& text);

/// teacher_obj,student_obj,alpha_t,alpha_s,seed,acc_std,acc_bal,acc_worst,acc_worst_k,approx_err
std::string results_csv_header();
std::string results_csv_row(const RunResult& result);

/// Six significant digits, as used for every human-facing numeric field.
std::string format_sig6(double value);

}  // namespace rdistill
