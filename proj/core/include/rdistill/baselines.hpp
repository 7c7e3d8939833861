#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rdistill/matrix.hpp"

namespace rdistill {

/// Post-hoc scorer f_y(x) = log_gamma_y + log p^t_y(x) on a fixed teacher.
struct PostShiftAdjustment {
  Vec log_gamma;
  bool operator==(const PostShiftAdjustment&) const = default;
};

struct PostShiftGrid {
  double lower = -2.0;
  double upper = 2.0;
  std::size_t points = 41;
  std::size_t sweeps = 3;

  Vec values() const;
};

inline constexpr double kProbFloor = 1e-300;

std::size_t post_shift_predict(const PostShiftAdjustment& adj, std::span<const double> teacher_probs);
std::vector<std::size_t> post_shift_predict_all(const PostShiftAdjustment& adj,
                                                const Matrix& teacher_probs);

/// Cyclic coordinate ascent on log_gamma over the grid, starting at zero,
/// maximizing worst-class validation accuracy. Candidates with equal accuracy
/// are ordered by smaller ||log_gamma||, then lexicographically.
PostShiftAdjustment post_shift_fit(const Matrix& val_teacher_probs,
                                   std::span<const std::size_t> val_labels, std::size_t num_classes,
                                   const PostShiftGrid& grid = {});

/// Worst-class accuracy of the adjusted teacher on a labeled sample.
double post_shift_worst_accuracy(const PostShiftAdjustment& adj, const Matrix& teacher_probs,
                                 std::span<const std::size_t> labels, std::size_t num_classes);

/// JSON array of log_gamma values.
std::string adjustment_to_json(const PostShiftAdjustment& adj);
PostShiftAdjustment adjustment_from_json(const std::string& text);

}  // namespace rdistill
