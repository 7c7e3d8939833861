#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rdistill/data_synth.hpp"
#include "rdistill/metrics.hpp"
#include "rdistill/teacher_student.hpp"

namespace rdistill {

struct MixtureConfig {
  std::size_t num_classes = 5;
  std::size_t dim = 2;
  double imbalance_ratio = 100.0;
  MixtureOptions options{};
  std::uint64_t seed = 0;

  GaussianMixtureModel build() const;
};

/// Grid over (alpha_t, alpha_s) with replicate seeds. The teacher optimizes
/// tdf(alpha_t) on one-hot labels; the student optimizes tdf-d(alpha_s).
struct SweepSpec {
  std::vector<double> alpha_t{0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<double> alpha_s{0.0, 0.25, 0.5, 0.75, 1.0};
  std::size_t replicates = 5;
  std::uint64_t base_seed = 0;
  PipelineConfig pipeline{};
  MixtureConfig model{};
  SampleSizes sizes{};
  std::size_t workers = 1;
};

void validate(const SweepSpec& spec);

struct MetricSummary {
  double mean = 0.0;
  std::optional<double> stderr_;  // absent when fewer than 2 runs

  bool operator==(const MetricSummary&) const = default;
};

struct SweepCell {
  std::size_t alpha_t_index = 0;
  std::size_t alpha_s_index = 0;
  double alpha_t = 0.0;
  double alpha_s = 0.0;
  std::vector<RunResult> runs;         // ordered by replicate
  std::vector<std::string> failures;   // one message per failed replicate
  MetricSummary acc_std, acc_bal, acc_worst, acc_worst_k, approx_err;

  bool operator==(const SweepCell&) const = default;
};

struct FrontPoint {
  double balanced = 0.0;
  double worst = 0.0;
  double alpha_t = 0.0;
  double alpha_s = 0.0;
  bool operator==(const FrontPoint&) const = default;
};

struct SweepResult {
  std::vector<SweepCell> cells;  // alpha_t-major, then alpha_s
  std::vector<FrontPoint> front;
  std::vector<std::string> warnings;

  bool operator==(const SweepResult&) const = default;
};

/// Stable seed for one (alpha_t index, alpha_s index, replicate) cell.
std::uint64_t cell_seed(std::uint64_t base, std::size_t alpha_t_index, std::size_t alpha_s_index,
                        std::size_t replicate);

/// Mean and stderr (n - 1 denominator) with values reduced in sorted order.
MetricSummary summarize(std::vector<double> values);

SweepResult run_sweep(const SweepSpec& spec);

/// Writes sweep.json, cells.csv, front.csv and front.svg into `dir`.
void write_sweep_outputs(const SweepResult& result, const std::string& dir);

std::string sweep_result_to_json(const SweepResult& result);
std::string front_svg(const SweepResult& result);

}  // namespace rdistill
