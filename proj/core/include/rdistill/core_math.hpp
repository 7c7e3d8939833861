#pragma once

// Numerically stable kernels over class-score vectors. Class indices are
// zero-based throughout the library; only file formats use 1-based labels.

#include <cmath>
#include <cstddef>
#include <span>

#include "rdistill/matrix.hpp"

namespace rdistill {

/// Neumaier-compensated running sum. Reductions over examples go through
/// this in ascending index order so results do not depend on platform.
class CompensatedSum {
 public:
  void add(double v) noexcept {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double stable_sum(std::span<const double> values) noexcept;

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> f);

double log_sum_exp(std::span<const double> f);

Vec softmax(std::span<const double> f);
/// Allocation-free variant; `out` must have the same length as `f`.
void softmax_into(std::span<const double> f, std::span<double> out);

/// -f_y + log sum_j exp(f_j).
double xent_loss(std::size_t y, std::span<const double> f);
/// softmax(f) - onehot(y).
Vec xent_grad(std::size_t y, std::span<const double> f);

/// 0 iff y is the argmax of f under the lowest-index tie rule.
int zero_one_loss(std::size_t y, std::span<const double> f);

/// Cost-adjusted cross-entropy
///   (1/m) sum_y p_y log(1 + sum_{j != y} exp(log(c_y/c_j) - (f_y - f_j)))
/// evaluated as -(1/m) sum_y p_y log softmax_y(f - log c).
double margin_loss(std::span<const double> p, std::span<const double> f,
                   std::span<const double> c);
/// (1/m) (softmax(f - log c) * sum(p) - p).
Vec margin_loss_grad(std::span<const double> p, std::span<const double> f,
                     std::span<const double> c);

/// Writes the margin-loss gradient into `grad` and returns the loss value.
/// `log_costs` is log(c), precomputed by the caller; `scratch` has length m.
double margin_loss_and_grad(std::span<const double> p, std::span<const double> f,
                            std::span<const double> log_costs, std::span<double> grad,
                            std::span<double> scratch);

// Input validation shared by the public entry points.
void require_finite(std::span<const double> f, const char* what);
void require_probability(std::span<const double> p, const char* what, double tol = 1e-9);
void require_positive(std::span<const double> c, const char* what);

}  // namespace rdistill
