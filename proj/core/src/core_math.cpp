#include "rdistill/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rdistill/errors.hpp"

namespace rdistill {

namespace {

void require_class(std::size_t y, std::size_t m) {
  if (y >= m) {
    throw IndexError("class index " + std::to_string(y) + " out of range for " +
                     std::to_string(m) + " classes");
  }
}

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw InvalidInput(std::string(what) + ": length mismatch");
  }
}

}  // namespace

void require_finite(std::span<const double> f, const char* what) {
  if (f.empty()) {
    throw InvalidInput(std::string(what) + ": empty vector");
  }
  for (double v : f) {
    if (!std::isfinite(v)) {
      throw InvalidInput(std::string(what) + ": non-finite entry");
    }
  }
}

void require_probability(std::span<const double> p, const char* what, double tol) {
  require_finite(p, what);
  double total = 0.0;
  for (double v : p) {
    if (v < 0.0) {
      throw InvalidInput(std::string(what) + ": negative probability");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > tol) {
    throw InvalidInput(std::string(what) + ": probabilities do not sum to 1");
  }
}

void require_positive(std::span<const double> c, const char* what) {
  require_finite(c, what);
  for (double v : c) {
    if (!(v > 0.0)) {
      throw InvalidInput(std::string(what) + ": entries must be strictly positive");
    }
  }
}

double stable_sum(std::span<const double> values) noexcept {
  CompensatedSum acc;
  for (double v : values) acc.add(v);
  return acc.value();
}

std::size_t argmax(std::span<const double> f) {
  if (f.empty()) {
    throw InvalidInput("argmax: empty vector");
  }
  std::size_t best = 0;
  for (std::size_t j = 1; j < f.size(); ++j) {
    if (f[j] > f[best]) best = j;
  }
  return best;
}

double log_sum_exp(std::span<const double> f) {
  const double mx = *std::max_element(f.begin(), f.end());
  double s = 0.0;
  for (double v : f) s += std::exp(v - mx);
  return mx + std::log(s);
}

void softmax_into(std::span<const double> f, std::span<double> out) {
  const double mx = *std::max_element(f.begin(), f.end());
  double s = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) {
    out[j] = std::exp(f[j] - mx);
    s += out[j];
  }
  const double inv = 1.0 / s;
  for (std::size_t j = 0; j < f.size(); ++j) out[j] *= inv;
}

Vec softmax(std::span<const double> f) {
  require_finite(f, "softmax");
  Vec out(f.size());
  softmax_into(f, out);
  return out;
}

double xent_loss(std::size_t y, std::span<const double> f) {
  require_finite(f, "xent_loss");
  require_class(y, f.size());
  return log_sum_exp(f) - f[y];
}

Vec xent_grad(std::size_t y, std::span<const double> f) {
  require_finite(f, "xent_grad");
  require_class(y, f.size());
  Vec g(f.size());
  softmax_into(f, g);
  g[y] -= 1.0;
  return g;
}

int zero_one_loss(std::size_t y, std::span<const double> f) {
  require_finite(f, "zero_one_loss");
  require_class(y, f.size());
  return argmax(f) == y ? 0 : 1;
}

double margin_loss_and_grad(std::span<const double> p, std::span<const double> f,
                            std::span<const double> log_costs, std::span<double> grad,
                            std::span<double> scratch) {
  const std::size_t m = f.size();
  for (std::size_t j = 0; j < m; ++j) scratch[j] = f[j] - log_costs[j];
  const double lse = log_sum_exp(scratch.first(m));
  const double inv_m = 1.0 / static_cast<double>(m);
  double loss = 0.0;
  double mass = 0.0;
  for (std::size_t y = 0; y < m; ++y) {
    if (p[y] != 0.0) loss += p[y] * (lse - scratch[y]);
    mass += p[y];
  }
  for (std::size_t j = 0; j < m; ++j) {
    grad[j] = inv_m * (std::exp(scratch[j] - lse) * mass - p[j]);
  }
  return inv_m * loss;
}

double margin_loss(std::span<const double> p, std::span<const double> f,
                   std::span<const double> c) {
  require_finite(f, "margin_loss");
  require_same_size(p.size(), f.size(), "margin_loss");
  require_same_size(c.size(), f.size(), "margin_loss");
  require_probability(p, "margin_loss");
  require_positive(c, "margin_loss costs");
  Vec log_c(c.size());
  std::transform(c.begin(), c.end(), log_c.begin(), [](double v) { return std::log(v); });
  Vec grad(f.size());
  Vec scratch(f.size());
  return margin_loss_and_grad(p, f, log_c, grad, scratch);
}

Vec margin_loss_grad(std::span<const double> p, std::span<const double> f,
                     std::span<const double> c) {
  require_finite(f, "margin_loss_grad");
  require_same_size(p.size(), f.size(), "margin_loss_grad");
  require_same_size(c.size(), f.size(), "margin_loss_grad");
  require_probability(p, "margin_loss_grad");
  require_positive(c, "margin_loss_grad costs");
  Vec log_c(c.size());
  std::transform(c.begin(), c.end(), log_c.begin(), [](double v) { return std::log(v); });
  Vec grad(f.size());
  Vec scratch(f.size());
  margin_loss_and_grad(p, f, log_c, grad, scratch);
  return grad;
}

}  // namespace rdistill
