#include "rdistill/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include "json_codec.hpp"
#include "rdistill/errors.hpp"
#include "rdistill/rng.hpp"

namespace rdistill {

GaussianMixtureModel MixtureConfig::build() const {
  return make_model(num_classes, dim, LongTailSpec{imbalance_ratio, num_classes}, seed, options);
}

void validate(const SweepSpec& spec) {
  auto check_grid = [](const std::vector<double>& g, const char* name) {
    if (g.empty()) throw InvalidInput(std::string(name) + " grid is empty");
    for (double a : g) {
      if (!(a >= 0.0 && a <= 1.0)) throw InvalidInput(std::string(name) + " values must lie in [0, 1]");
    }
  };
  check_grid(spec.alpha_t, "alpha_t");
  check_grid(spec.alpha_s, "alpha_s");
  if (spec.replicates < 1) throw InvalidInput("sweep needs at least one replicate");
  if (spec.workers < 1) throw InvalidInput("sweep needs at least one worker");
  validate(spec.pipeline);
}

std::uint64_t cell_seed(std::uint64_t base, std::size_t alpha_t_index, std::size_t alpha_s_index,
                        std::size_t replicate) {
  return hash_seed({base, alpha_t_index, alpha_s_index, replicate});
}

MetricSummary summarize(std::vector<double> values) {
  MetricSummary s;
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / n;
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stderr_ = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return s;
}

namespace {

// Runs task(i) for i in [0, count) on up to `workers` threads. Results are
// written by index, so completion order never matters.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& task) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) task(i);
    });
  }
  for (auto& t : pool) t.join();
}

std::string describe(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& ex) {
    return ex.what();
  } catch (...) {
    return "unknown error";
  }
}

ObjectiveSpec tdf(double alpha, bool distilled) {
  ObjectiveSpec s;
  s.kind = ObjectiveKind::Tdf;
  s.alpha = alpha;
  s.distilled = distilled;
  return s;
}

}  // namespace

SweepResult run_sweep(const SweepSpec& spec) {
  validate(spec);
  const GaussianMixtureModel model = spec.model.build();
  const std::size_t nt = spec.alpha_t.size();
  const std::size_t ns = spec.alpha_s.size();
  const std::size_t reps = spec.replicates;

  std::vector<SplitData> data(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    data[r] = sample_splits(model, spec.sizes, hash_seed({spec.base_seed, 0x64617461ULL, r}));
  }

  // Phase 1: one teacher per (alpha_t, replicate).
  std::vector<std::optional<TeacherBundle>> teachers(nt * reps);
  std::vector<std::string> teacher_errors(nt * reps);
  parallel_for(nt * reps, spec.workers, [&](std::size_t idx) {
    const std::size_t it = idx / reps;
    const std::size_t r = idx % reps;
    PipelineConfig cfg = spec.pipeline;
    cfg.teacher_objective = tdf(spec.alpha_t[it], false);
    try {
      teachers[idx] = fit_teacher(cfg, model, data[r],
                                  hash_seed({spec.base_seed, 0x74656163ULL, it, r}));
    } catch (...) {
      teacher_errors[idx] = describe(std::current_exception());
    }
  });

  // Phase 2: students for every (alpha_t, alpha_s, replicate), reusing teachers.
  const std::size_t total = nt * ns * reps;
  std::vector<std::optional<RunResult>> runs(total);
  std::vector<std::string> run_errors(total);
  parallel_for(total, spec.workers, [&](std::size_t idx) {
    const std::size_t it = idx / (ns * reps);
    const std::size_t is = (idx / reps) % ns;
    const std::size_t r = idx % reps;
    const auto& teacher = teachers[it * reps + r];
    if (!teacher) {
      run_errors[idx] = "teacher failed: " + teacher_errors[it * reps + r];
      return;
    }
    PipelineConfig cfg = spec.pipeline;
    cfg.teacher_objective = tdf(spec.alpha_t[it], false);
    cfg.student_objective = tdf(spec.alpha_s[is], true);
    cfg.seed = cell_seed(spec.base_seed, it, is, r);
    try {
      runs[idx] = fit_student(cfg, data[r], *teacher, cfg.seed);
    } catch (...) {
      run_errors[idx] = describe(std::current_exception());
    }
  });

  SweepResult result;
  std::vector<ParetoPoint> points;
  std::vector<std::size_t> point_cell;
  for (std::size_t it = 0; it < nt; ++it) {
    for (std::size_t is = 0; is < ns; ++is) {
      SweepCell cell;
      cell.alpha_t_index = it;
      cell.alpha_s_index = is;
      cell.alpha_t = spec.alpha_t[it];
      cell.alpha_s = spec.alpha_s[is];
      std::vector<double> s, b, w, wk, ae;
      for (std::size_t r = 0; r < reps; ++r) {
        const std::size_t idx = (it * ns + is) * reps + r;
        if (runs[idx]) {
          const RunResult& run = *runs[idx];
          s.push_back(run.student_test.acc_std);
          b.push_back(run.student_test.acc_bal);
          w.push_back(run.student_test.acc_worst);
          wk.push_back(run.student_test.acc_worst_k);
          ae.push_back(run.approx_err);
          cell.runs.push_back(run);
        } else {
          cell.failures.push_back("replicate " + std::to_string(r) + ": " + run_errors[idx]);
        }
      }
      cell.acc_std = summarize(s);
      cell.acc_bal = summarize(b);
      cell.acc_worst = summarize(w);
      cell.acc_worst_k = summarize(wk);
      cell.approx_err = summarize(ae);
      if (cell.runs.empty()) {
        result.warnings.push_back("cell (alpha_t=" + format_sig6(cell.alpha_t) +
                                  ", alpha_s=" + format_sig6(cell.alpha_s) +
                                  ") failed on every replicate; excluded from the front");
      } else {
        points.push_back(ParetoPoint{cell.acc_bal.mean, cell.acc_worst.mean});
        point_cell.push_back(result.cells.size());
      }
      result.cells.push_back(std::move(cell));
    }
  }
  for (std::size_t k : nondominated_indices(points)) {
    const SweepCell& c = result.cells[point_cell[k]];
    result.front.push_back(FrontPoint{points[k].balanced, points[k].worst, c.alpha_t, c.alpha_s});
  }
  return result;
}

namespace {

nlohmann::json summary_json(const MetricSummary& s) {
  nlohmann::json j = {{"mean", s.mean}};
  j["stderr"] = s.stderr_ ? nlohmann::json(*s.stderr_) : nlohmann::json(nullptr);
  return j;
}

}  // namespace

std::string sweep_result_to_json(const SweepResult& result) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : result.cells) {
    cells.push_back({{"alpha_t", c.alpha_t},
                     {"alpha_s", c.alpha_s},
                     {"runs", c.runs},
                     {"failures", c.failures},
                     {"acc_std", summary_json(c.acc_std)},
                     {"acc_bal", summary_json(c.acc_bal)},
                     {"acc_worst", summary_json(c.acc_worst)},
                     {"acc_worst_k", summary_json(c.acc_worst_k)},
                     {"approx_err", summary_json(c.approx_err)}});
  }
  nlohmann::json front = nlohmann::json::array();
  for (const auto& p : result.front) {
    front.push_back({{"balanced", p.balanced}, {"worst", p.worst}, {"alpha_t", p.alpha_t},
                     {"alpha_s", p.alpha_s}});
  }
  nlohmann::json j = {{"format", "rdistill.sweep"},
                      {"version", 1},
                      {"cells", cells},
                      {"front", front},
                      {"warnings", result.warnings}};
  return j.dump(2);
}

std::string front_svg(const SweepResult& result) {
  constexpr double kW = 480, kH = 360, kPad = 50;
  double xmin = 1, xmax = 0, ymin = 1, ymax = 0;
  for (const auto& c : result.cells) {
    if (c.runs.empty()) continue;
    xmin = std::min(xmin, c.acc_bal.mean);
    xmax = std::max(xmax, c.acc_bal.mean);
    ymin = std::min(ymin, c.acc_worst.mean);
    ymax = std::max(ymax, c.acc_worst.mean);
  }
  if (xmin > xmax) {
    xmin = ymin = 0;
    xmax = ymax = 1;
  }
  const double xspan = std::max(xmax - xmin, 1e-3);
  const double yspan = std::max(ymax - ymin, 1e-3);
  xmin -= 0.05 * xspan;
  ymin -= 0.05 * yspan;
  const double xs = (kW - 2 * kPad) / (1.1 * xspan);
  const double ys = (kH - 2 * kPad) / (1.1 * yspan);
  auto px = [&](double x) { return kPad + (x - xmin) * xs; };
  auto py = [&](double y) { return kH - kPad - (y - ymin) * ys; };
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << kPad << "\" y1=\"" << kH - kPad << "\" x2=\"" << kW - kPad << "\" y2=\""
     << kH - kPad << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kPad << "\" y1=\"" << kPad << "\" x2=\"" << kPad << "\" y2=\"" << kH - kPad
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">balanced accuracy</text>\n";
  os << "<text x=\"14\" y=\"" << kH / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
     << kH / 2 << ")\">worst-class accuracy</text>\n";
  os << "<text x=\"" << kPad << "\" y=\"" << kH - kPad + 14 << "\">" << format_sig6(xmin) << "</text>\n";
  os << "<text x=\"" << kW - kPad << "\" y=\"" << kH - kPad + 14 << "\" text-anchor=\"end\">"
     << format_sig6(xmin + 1.1 * xspan) << "</text>\n";
  os << "<text x=\"" << kPad - 4 << "\" y=\"" << kH - kPad << "\" text-anchor=\"end\">" << format_sig6(ymin)
     << "</text>\n";
  os << "<text x=\"" << kPad - 4 << "\" y=\"" << kPad + 4 << "\" text-anchor=\"end\">"
     << format_sig6(ymin + 1.1 * yspan) << "</text>\n";

  std::vector<double> series;
  for (const auto& c : result.cells) {
    if (std::find(series.begin(), series.end(), c.alpha_t) == series.end()) series.push_back(c.alpha_t);
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % 10];
    os << "<g fill=\"" << color << "\">\n";
    for (const auto& c : result.cells) {
      if (c.alpha_t != series[s] || c.runs.empty()) continue;
      os << "<circle cx=\"" << format_sig6(px(c.acc_bal.mean)) << "\" cy=\""
         << format_sig6(py(c.acc_worst.mean)) << "\" r=\"4\"><title>alpha_t=" << format_sig6(c.alpha_t)
         << " alpha_s=" << format_sig6(c.alpha_s) << "</title></circle>\n";
    }
    os << "</g>\n";
    os << "<circle cx=\"" << kW - kPad - 70 << "\" cy=\"" << kPad + 14 * s << "\" r=\"4\" fill=\"" << color
       << "\"/><text x=\"" << kW - kPad - 62 << "\" y=\"" << kPad + 4 + 14 * s << "\">alpha_t="
       << format_sig6(series[s]) << "</text>\n";
  }
  if (!result.front.empty()) {
    os << "<polyline fill=\"none\" stroke=\"black\" stroke-dasharray=\"4 2\" points=\"";
    for (const auto& p : result.front) os << format_sig6(px(p.balanced)) << ',' << format_sig6(py(p.worst)) << ' ';
    os << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_sweep_outputs(const SweepResult& result, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
  auto open = [&](const std::string& name) {
    std::ofstream os(std::filesystem::path(dir) / name);
    if (!os) throw IoError("cannot write " + name + " in " + dir);
    return os;
  };
  {
    auto os = open("sweep.json");
    os << sweep_result_to_json(result) << '\n';
  }
  {
    auto os = open("cells.csv");
    os << results_csv_header() << '\n';
    for (const auto& c : result.cells) {
      for (const auto& r : c.runs) os << results_csv_row(r) << '\n';
    }
  }
  {
    auto os = open("front.csv");
    os << "balanced,worst,alpha_t,alpha_s\n";
    for (const auto& p : result.front) {
      os << format_sig6(p.balanced) << ',' << format_sig6(p.worst) << ',' << format_sig6(p.alpha_t)
         << ',' << format_sig6(p.alpha_s) << '\n';
    }
  }
  {
    auto os = open("front.svg");
    os << front_svg(result);
  }
}

}  // namespace rdistill
