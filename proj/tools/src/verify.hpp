#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace rdistill::cli {

struct CheckResult {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct VerifyOptions {
  bool full = false;
  std::uint64_t seed = 0;
  // Test hook: added to every analytic gradient before comparison.
  double gradient_corruption = 0.0;
};

std::vector<CheckResult> run_verification(const VerifyOptions& options);

/// Fixed-width table: check, measured, tolerance, status.
void print_checks(const std::vector<CheckResult>& checks, std::ostream& os);

}  // namespace rdistill::cli
