#pragma once

// INI-style run configuration shared by every subcommand.
//
//   # comment
//   [section]
//   key = value
//
// Unknown sections or keys are rejected with an error naming them.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rdistill/sweep.hpp"
#include "rdistill/teacher_student.hpp"

namespace rdistill::cli {

struct AppConfig {
  MixtureConfig model{};
  SampleSizes sizes{};
  PipelineConfig pipeline{};
  std::vector<double> alpha_t{0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<double> alpha_s{0.0, 0.25, 0.5, 0.75, 1.0};
  std::size_t replicates = 5;
  std::size_t workers = 1;
  // DRO inner loop budget; the rest of the inner SGD settings follow the
  // teacher / student sections.
  std::size_t inner_epochs = 1;

  /// Copies the shared [dro] settings into the teacher and student DRO configs.
  void finalize();
  SweepSpec sweep_spec() const;
};

AppConfig parse_config(const std::string& text, const std::string& origin = "config");
AppConfig load_config(const std::string& path);

/// Documented defaults, in the same format parse_config accepts.
std::string default_config_text();

/// Seed precedence: explicit flag, then ROBUST_DISTILL_SEED, then the config file.
void apply_seed_override(AppConfig& config, std::optional<std::uint64_t> flag_seed);

}  // namespace rdistill::cli
