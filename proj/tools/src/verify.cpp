#include "verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "rdistill/bayes_oracle.hpp"
#include "rdistill/core_math.hpp"
#include "rdistill/data_synth.hpp"
#include "rdistill/dro.hpp"
#include "rdistill/metrics.hpp"
#include "rdistill/mlp.hpp"
#include "rdistill/rng.hpp"
#include "rdistill/teacher_student.hpp"

namespace rdistill::cli {

namespace {

using Fn = std::function<double(const Vec&)>;

Vec central_difference(const Fn& fn, Vec x) {
  Vec g(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double h = 1e-5 * std::max(1.0, std::abs(x[j]));
    const double orig = x[j];
    x[j] = orig + h;
    const double up = fn(x);
    x[j] = orig - h;
    const double down = fn(x);
    x[j] = orig;
    g[j] = (up - down) / (2.0 * h);
  }
  return g;
}

double max_rel_error(const Vec& a, const Vec& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), 1e-3}));
  }
  return worst;
}

Vec uniform_vec(CounterRng& rng, std::size_t n, double lo, double hi) {
  Vec v(n);
  for (double& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

Vec simplex_vec(CounterRng& rng, std::size_t n) {
  Vec v(n);
  double s = 0.0;
  for (double& x : v) s += (x = -std::log(rng.uniform_open0()) + 1e-3);
  for (double& x : v) x /= s;
  return v;
}

double l1(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

Vec normalized_product(const Vec& a, std::span<const double> b) {
  Vec out(a.size());
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (out[j] = a[j] * b[j]);
  for (double& v : out) v /= s;
  return out;
}

void corrupt(Vec& g, double amount) {
  for (std::size_t j = 0; j < g.size(); ++j) g[j] += amount * static_cast<double>(j + 1);
}

CheckResult at_most(std::string name, double measured, double tol) {
  return {std::move(name), measured, tol, measured <= tol};
}

CheckResult check_xent_gradient(const VerifyOptions& o) {
  CounterRng rng(hash_seed({o.seed, 1}));
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t m = 2 + rng.below(7);
    const Vec f = uniform_vec(rng, m, -6, 6);
    const std::size_t y = rng.below(m);
    Vec g = xent_grad(y, f);
    corrupt(g, o.gradient_corruption);
    worst = std::max(worst, max_rel_error(g, central_difference([&](const Vec& z) { return xent_loss(y, z); }, f)));
  }
  return at_most("xent_gradient_fd", worst, 1e-4);
}

CheckResult check_margin_gradient(const VerifyOptions& o) {
  CounterRng rng(hash_seed({o.seed, 2}));
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t m = 2 + rng.below(7);
    const Vec f = uniform_vec(rng, m, -5, 5);
    const Vec p = simplex_vec(rng, m);
    const Vec c = uniform_vec(rng, m, 0.1, 10);
    Vec g = margin_loss_grad(p, f, c);
    corrupt(g, o.gradient_corruption);
    worst = std::max(worst, max_rel_error(g, central_difference([&](const Vec& z) { return margin_loss(p, z, c); }, f)));
  }
  return at_most("margin_gradient_fd", worst, 1e-4);
}

CheckResult check_mlp_backward(const VerifyOptions& o) {
  CounterRng rng(hash_seed({o.seed, 3}));
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const ScorerParams params = ScorerParams::init({2, 4, 3}, hash_seed({o.seed, 3, static_cast<std::uint64_t>(t)}));
    const Vec x = uniform_vec(rng, 2, -2, 2);
    const Vec u = uniform_vec(rng, 3, -1, 1);
    auto flatten = [](ScorerParams p) {
      Vec out;
      p.for_each([&](double& v) { out.push_back(v); });
      return out;
    };
    const Fn objective = [&](const Vec& flat) {
      ScorerParams p = params;
      std::size_t i = 0;
      p.for_each([&](double& v) { v = flat[i++]; });
      const Vec f = forward(p, x);
      return u[0] * f[0] + u[1] * f[1] + u[2] * f[2];
    };
    Vec g = flatten(backward(params, x, u));
    corrupt(g, o.gradient_corruption);
    worst = std::max(worst, max_rel_error(g, central_difference(objective, flatten(params))));
  }
  return at_most("mlp_backward_fd", worst, 1e-4);
}

CheckResult check_margin_minimizer(const VerifyOptions& o) {
  CounterRng rng(hash_seed({o.seed, 4}));
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t m = 2 + rng.below(5);
    const Vec p = simplex_vec(rng, m);
    const Vec c = uniform_vec(rng, m, 0.2, 5);
    Vec f = uniform_vec(rng, m, -3, 3);
    for (int it = 0; it < 20000; ++it) {
      const Vec g = margin_loss_grad(p, f, c);
      for (std::size_t j = 0; j < m; ++j) f[j] -= 2.0 * static_cast<double>(m) * g[j];
    }
    worst = std::max(worst, l1(softmax(f), normalized_product(c, p)));
  }
  return at_most("margin_minimizer_l1", worst, 1e-5);
}

CheckResult check_shift_invariance(const VerifyOptions& o) {
  CounterRng rng(hash_seed({o.seed, 5}));
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const Vec f = uniform_vec(rng, 5, -20, 20);
    const double a = -100.0 + 200.0 * rng.uniform();
    Vec g = f;
    for (double& v : g) v += a;
    worst = std::max(worst, l1(softmax(f), softmax(g)));
    if (argmax(f) != argmax(g)) worst = 1.0;
  }
  return at_most("softmax_shift_invariance", worst, 1e-12);
}

GaussianMixtureModel fixture_model(std::uint64_t seed) { return make_model(3, 2, {100.0, 3}, seed); }

CheckResult check_bayes_std(const VerifyOptions& o) {
  const auto model = fixture_model(o.seed);
  const BayesScorer s{&model, ObjectiveKind::Std, 1.0, {}};
  const Dataset d = sample(model, 1000, hash_seed({o.seed, 6}));
  double worst = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Vec p = softmax(bayes_logits(s, d.features.row(i)).logits);
    const Vec e = eta(model, d.features.row(i));
    for (std::size_t y = 0; y < 3; ++y) worst = std::max(worst, std::abs(p[y] - e[y]));
  }
  return at_most("bayes_std_is_posterior", worst, 1e-12);
}

CheckResult check_bayes_bal(const VerifyOptions& o) {
  const auto model = fixture_model(o.seed);
  const BayesScorer s{&model, ObjectiveKind::Bal, 1.0, {}};
  const Dataset d = sample(model, 1000, hash_seed({o.seed, 7}));
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    Vec ratio = eta(model, d.features.row(i));
    for (std::size_t y = 0; y < 3; ++y) ratio[y] /= model.priors()[y];
    mismatches += argmax(bayes_logits(s, d.features.row(i)).logits) != argmax(ratio);
  }
  return at_most("bayes_bal_argmax_mismatch", static_cast<double>(mismatches) / 1000.0, 0.0);
}

CheckResult check_eg_regret(const VerifyOptions& o) {
  CounterRng rng(hash_seed({o.seed, 8}));
  double worst = 0.0;
  for (std::size_t m : {2u, 3u, 5u, 10u}) {
    const Vec r = uniform_vec(rng, m, 0.0, 2.0);
    const double rmax = *std::max_element(r.begin(), r.end());
    const std::size_t K = 10000;
    const double rate = std::sqrt(std::log(static_cast<double>(m)) / static_cast<double>(K));
    Vec lam(m, 1.0 / static_cast<double>(m));
    CompensatedSum avg;
    for (std::size_t k = 0; k < K; ++k) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += lam[j] * r[j];
      avg.add(dot / static_cast<double>(K));
      lam = eg_update(lam, r, rate / rmax).values();
    }
    worst = std::max(worst, (rmax - avg.value()) / (2.0 * rmax * rate));
  }
  return at_most("eg_regret_over_bound", worst, 1.0);
}

CheckResult check_approx_zero(const VerifyOptions& o) {
  const auto model = fixture_model(o.seed);
  const double err = approximation_error([&](std::span<const double> x) { return eta(model, x); }, model, 5000,
                                         hash_seed({o.seed, 9}));
  return at_most("approx_error_bayes_teacher", err, 1e-10);
}

CheckResult check_student_form(const VerifyOptions& o) {
  const auto model = fixture_model(o.seed);
  const Dataset train = sample_stratified(model, 150, 10, hash_seed({o.seed, 10}));
  const Dataset val = sample_stratified(model, 150, 10, hash_seed({o.seed, 11}));
  ScorerParams teacher = ScorerParams::init({2, 3}, hash_seed({o.seed, 12}));
  Matrix probs = forward_batch(teacher, train.features);
  for (std::size_t i = 0; i < probs.rows(); ++i) softmax_into(Vec(probs.row(i).begin(), probs.row(i).end()), probs.row(i));
  const SoftLabelSet soft(probs);
  DroConfig cfg;
  cfg.rounds = 8;
  cfg.eg_step = 1.0;
  cfg.val_labels = ValLabelSource::OneHot;
  cfg.return_mode = ReturnMode::Average;
  cfg.inner.learning_rate = 3.0;
  cfg.inner.weight_decay = 0.0;
  cfg.inner.batch_size = train.size();
  cfg.inner.epochs = 3000;
  cfg.seed = o.seed;
  const DroValidation v{val.features, val.labels, std::nullopt, 3};
  const auto res = distilled_margin_dro(soft, train.features, v, cfg, ScorerParams({2, 3}));
  Vec bar(3, 0.0);
  for (const auto& row : res.trace.rows) {
    for (std::size_t j = 0; j < 3; ++j) bar[j] += std::log(row.beta[j] / soft.teacher_marginal()[j]);
  }
  for (double& b : bar) b = std::exp(b / static_cast<double>(res.trace.rows.size()));
  double worst = 0.0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    worst = std::max(worst, l1(softmax(res.scorer.logits(train.features.row(i))),
                               normalized_product(bar, soft.probs().row(i))));
  }
  return at_most("dro_student_form_l1", worst, 1e-3);
}

CheckResult check_metric_identities(const VerifyOptions& o) {
  CounterRng rng(hash_seed({o.seed, 13}));
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t m = 2 + rng.below(8);
    const std::size_t n = m + rng.below(200);
    std::vector<std::size_t> labels(n), preds(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = i < m ? i : rng.below(m);
      preds[i] = rng.below(m);
    }
    const std::size_t k = 1 + rng.below(m);
    const EvalReport r = evaluate(preds, labels, m, k);
    const Vec pi = Dataset{Matrix(n, 0), labels, m}.empirical_priors();
    double weighted = 0.0, mean = 0.0;
    for (std::size_t y = 0; y < m; ++y) {
      weighted += pi[y] * r.per_class_recall[y];
      mean += r.per_class_recall[y] / static_cast<double>(m);
    }
    const double mn = *std::min_element(r.per_class_recall.begin(), r.per_class_recall.end());
    worst = std::max({worst, std::abs(r.acc_std - weighted), std::abs(r.acc_bal - mean), std::abs(r.acc_worst - mn)});
    if (!(r.acc_worst <= r.acc_worst_k && r.acc_worst_k <= r.acc_bal)) worst = 1.0;
  }
  return at_most("metric_identities", worst, 1e-12);
}

CheckResult check_lambda_star(const VerifyOptions& o) {
  const auto model = fixture_model(o.seed);
  const auto ps = make_population_sample(model, 20000, hash_seed({o.seed, 14}));
  const auto lam = solve_lambda_star(model, 1.0, ps, 2000, 0.5);
  double best = 1e300;
  Vec arg;
  for (int a = 0; a <= 100; ++a) {
    for (int b = 0; a + b <= 100; ++b) {
      Vec l{a / 100.0, b / 100.0, (100 - a - b) / 100.0};
      Vec w(3);
      for (std::size_t y = 0; y < 3; ++y) w[y] = std::max(l[y], 1e-300) / model.priors()[y];
      const Vec r = population_class_risks(ps, model.priors(), w, Loss::Xent);
      const double mx = *std::max_element(r.begin(), r.end());
      if (mx < best) {
        best = mx;
        arg = l;
      }
    }
  }
  double gap = 0.0;
  for (std::size_t y = 0; y < 3; ++y) gap = std::max(gap, std::abs(lam[y] - arg[y]));
  return at_most("lambda_star_grid_linf", gap, 0.03);
}

}  // namespace

std::vector<CheckResult> run_verification(const VerifyOptions& o) {
  std::vector<CheckResult> out;
  out.push_back(check_xent_gradient(o));
  out.push_back(check_margin_gradient(o));
  out.push_back(check_mlp_backward(o));
  out.push_back(check_margin_minimizer(o));
  out.push_back(check_shift_invariance(o));
  out.push_back(check_bayes_std(o));
  out.push_back(check_bayes_bal(o));
  out.push_back(check_eg_regret(o));
  out.push_back(check_approx_zero(o));
  out.push_back(check_student_form(o));
  out.push_back(check_metric_identities(o));
  if (o.full) out.push_back(check_lambda_star(o));
  return out;
}

void print_checks(const std::vector<CheckResult>& checks, std::ostream& os) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-28s %-14s %-14s %s\n", "check", "measured", "tolerance", "status");
  os << buf;
  for (const auto& c : checks) {
    std::snprintf(buf, sizeof buf, "%-28s %-14s %-14s %s\n", c.name.c_str(), format_sig6(c.measured).c_str(),
                  format_sig6(c.tolerance).c_str(), c.passed ? "PASS" : "FAIL");
    os << buf;
  }
}

}  // namespace rdistill::cli
