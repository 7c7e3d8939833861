#include "app.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "config.hpp"
#include "json.hpp"
#include "rdistill/baselines.hpp"
#include "rdistill/core_math.hpp"
#include "rdistill/errors.hpp"
#include "rdistill/metrics.hpp"
#include "rdistill/sweep.hpp"
#include "rdistill/teacher_student.hpp"
#include "verify.hpp"

namespace rdistill::cli {

namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

struct ObjectiveFlags {
  std::string objective;
  std::optional<double> alpha;
  std::string val_labels;
  std::optional<double> temperature;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool needs_out) {
  cmd->add_option("-c,--config", f.config_path, "INI configuration file (defaults apply when omitted)");
  cmd->add_option("--seed", f.seed, "master seed (overrides ROBUST_DISTILL_SEED and the config)");
  auto* out = cmd->add_option("-o,--out", f.out_dir, "output directory");
  if (needs_out) out->required();
}

void add_objective(CLI::App* cmd, ObjectiveFlags& f, const std::string& help) {
  cmd->add_option("--objective", f.objective, help);
  cmd->add_option("--alpha", f.alpha, "trade-off weight in [0, 1] for tdf objectives");
  cmd->add_option("--val-labels", f.val_labels, "validation labels for the robust step: teacher | one-hot");
  cmd->add_option("--temperature", f.temperature, "soft-label temperature (> 0)");
}

AppConfig load(const CommonFlags& f) {
  AppConfig c = f.config_path.empty() ? parse_config(default_config_text(), "defaults") : load_config(f.config_path);
  apply_seed_override(c, f.seed);
  return c;
}

ObjectiveSpec resolve_objective(const std::string& name, std::optional<double> alpha, ObjectiveSpec fallback) {
  ObjectiveSpec spec = name.empty() ? fallback : parse_objective(name);
  if (alpha) {
    if (spec.kind != ObjectiveKind::Tdf) throw InvalidInput("--alpha only applies to the tdf objective");
    spec.alpha = *alpha;
  }
  validate(spec);
  return spec;
}

void apply_common_objective_flags(PipelineConfig& p, const ObjectiveFlags& f) {
  if (!f.val_labels.empty()) p.val_label_source = parse_val_label_source(f.val_labels);
  if (f.temperature) p.temperature = *f.temperature;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("failed writing " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir);
}

struct LoadedData {
  GaussianMixtureModel model;
  SplitData splits;
};

LoadedData obtain_data(const AppConfig& c, const std::string& data_dir) {
  if (data_dir.empty()) {
    GaussianMixtureModel model = c.model.build();
    SplitData splits = sample_splits(model, c.sizes, data_seed(c.pipeline.seed));
    return {std::move(model), std::move(splits)};
  }
  const fs::path d(data_dir);
  GaussianMixtureModel model = model_from_json(read_file(d / "model.json"));
  const std::size_t m = model.num_classes();
  SplitData s;
  s.train = read_dataset_csv((d / "train.csv").string(), m);
  s.val = read_dataset_csv((d / "val.csv").string(), m);
  s.test = read_dataset_csv((d / "test.csv").string(), m);
  for (const Dataset* ds : {&s.train, &s.val, &s.test}) {
    if (ds->dim() != model.dim()) throw InvalidInput("data dimension does not match model.json in " + data_dir);
  }
  return {std::move(model), std::move(s)};
}

nlohmann::json report_json(const EvalReport& r) {
  return {{"acc_std", r.acc_std},   {"acc_bal", r.acc_bal},       {"acc_worst", r.acc_worst},
          {"acc_worst_k", r.acc_worst_k}, {"k", r.k},             {"per_class_recall", r.per_class_recall},
          {"confusion", r.confusion}};
}

void print_report(std::ostream& out, const std::string& label, const EvalReport& r) {
  out << label << ": acc_std=" << format_sig6(r.acc_std) << " acc_bal=" << format_sig6(r.acc_bal)
      << " acc_worst=" << format_sig6(r.acc_worst) << " acc_worst_k=" << format_sig6(r.acc_worst_k)
      << " (k=" << r.k << ")\n";
}

int cmd_gen_data(const CommonFlags& f, std::ostream& out) {
  const AppConfig c = load(f);
  const LoadedData data = obtain_data(c, "");
  make_dir(f.out_dir);
  const fs::path d(f.out_dir);
  write_dataset_csv(data.splits.train, (d / "train.csv").string());
  write_dataset_csv(data.splits.val, (d / "val.csv").string());
  write_dataset_csv(data.splits.test, (d / "test.csv").string());
  write_file(d / "model.json", model_to_json(data.model) + "\n");
  const Vec empirical = data.splits.train.empirical_priors();
  out << "class,prior,train_fraction\n";
  for (std::size_t y = 0; y < data.model.num_classes(); ++y) {
    out << (y + 1) << ',' << format_sig6(data.model.priors()[y]) << ',' << format_sig6(empirical[y]) << '\n';
  }
  return kOk;
}

int cmd_train(const CommonFlags& f, const ObjectiveFlags& of, const std::string& data_dir, std::ostream& out) {
  AppConfig c = load(f);
  apply_common_objective_flags(c.pipeline, of);
  c.pipeline.teacher_objective = resolve_objective(of.objective, of.alpha, c.pipeline.teacher_objective);
  if (c.pipeline.teacher_objective.distilled) throw InvalidInput("train needs a non-distilled objective; use distill");
  validate(c.pipeline);
  const LoadedData data = obtain_data(c, data_dir);
  const TeacherBundle t = fit_teacher(c.pipeline, data.model, data.splits, teacher_seed(c.pipeline.seed));

  make_dir(f.out_dir);
  const fs::path d(f.out_dir);
  save_scorer(t.scorer, (d / "teacher.json").string());
  const ObjectiveSpec& spec = c.pipeline.teacher_objective;
  nlohmann::json j{{"objective", objective_name(spec)},
                   {"alpha", spec.alpha},
                   {"seed", c.pipeline.seed},
                   {"temperature", c.pipeline.temperature},
                   {"test", report_json(t.test_report)},
                   {"approx_err", t.approx_err}};
  write_file(d / "report.json", j.dump(2) + "\n");
  std::ostringstream csv;
  csv << "objective,alpha,seed,acc_std,acc_bal,acc_worst,acc_worst_k,approx_err\n"
      << objective_name(spec) << ',' << format_sig6(spec.alpha) << ',' << c.pipeline.seed << ','
      << format_sig6(t.test_report.acc_std) << ',' << format_sig6(t.test_report.acc_bal) << ','
      << format_sig6(t.test_report.acc_worst) << ',' << format_sig6(t.test_report.acc_worst_k) << ','
      << format_sig6(t.approx_err) << '\n';
  write_file(d / "report.csv", csv.str());
  print_report(out, "teacher " + objective_name(spec) + " test", t.test_report);
  out << "approx_err=" << format_sig6(t.approx_err) << '\n';
  return kOk;
}

int cmd_distill(const CommonFlags& f, const ObjectiveFlags& of, const std::string& teacher_objective,
                std::optional<double> teacher_alpha, const std::string& teacher_ckpt, const std::string& data_dir,
                std::ostream& out) {
  AppConfig c = load(f);
  apply_common_objective_flags(c.pipeline, of);
  c.pipeline.student_objective = resolve_objective(of.objective, of.alpha, c.pipeline.student_objective);
  c.pipeline.teacher_objective = resolve_objective(teacher_objective, teacher_alpha, c.pipeline.teacher_objective);
  validate(c.pipeline);
  const LoadedData data = obtain_data(c, data_dir);
  const std::uint64_t tseed = teacher_seed(c.pipeline.seed);
  const TeacherBundle t = teacher_ckpt.empty()
                              ? fit_teacher(c.pipeline, data.model, data.splits, tseed)
                              : evaluate_teacher(c.pipeline, data.model, data.splits, load_scorer(teacher_ckpt), tseed);
  Scorer student;
  const RunResult r = fit_student(c.pipeline, data.splits, t, student_seed(c.pipeline.seed), &student);

  make_dir(f.out_dir);
  const fs::path d(f.out_dir);
  if (teacher_ckpt.empty()) save_scorer(t.scorer, (d / "teacher.json").string());
  save_scorer(student, (d / "student.json").string());
  write_file(d / "result.json", run_result_to_json(r) + "\n");
  write_file(d / "result.csv", results_csv_header() + "\n" + results_csv_row(r) + "\n");
  print_report(out, "teacher " + r.teacher_obj + " test", r.teacher_test);
  print_report(out, "student " + r.student_obj + " test", r.student_test);
  out << "approx_err=" << format_sig6(r.approx_err) << '\n';
  return kOk;
}

int cmd_sweep(const CommonFlags& f, std::optional<std::size_t> workers, std::ostream& out) {
  AppConfig c = load(f);
  if (workers) c.workers = *workers;
  const SweepResult r = run_sweep(c.sweep_spec());
  write_sweep_outputs(r, f.out_dir);
  out << "alpha_t,alpha_s,acc_bal,acc_worst,runs\n";
  for (const auto& cell : r.cells) {
    out << format_sig6(cell.alpha_t) << ',' << format_sig6(cell.alpha_s) << ',' << format_sig6(cell.acc_bal.mean)
        << ',' << format_sig6(cell.acc_worst.mean) << ',' << cell.runs.size() << '\n';
  }
  for (const auto& w : r.warnings) out << "warning: " << w << '\n';
  out << "front points: " << r.front.size() << '\n';
  return kOk;
}

int cmd_verify(const std::string& level, std::optional<std::uint64_t> seed, double corruption, std::ostream& out) {
  VerifyOptions o;
  if (level == "full") {
    o.full = true;
  } else if (level != "quick") {
    throw InvalidInput("--level must be quick or full");
  }
  AppConfig defaults;
  apply_seed_override(defaults, seed);
  o.seed = defaults.pipeline.seed;
  o.gradient_corruption = corruption;
  const auto checks = run_verification(o);
  print_checks(checks, out);
  std::size_t failed = 0;
  for (const auto& c : checks) failed += !c.passed;
  out << (checks.size() - failed) << '/' << checks.size() << " checks passed\n";
  return failed == 0 ? kOk : kVerifyFailed;
}

Matrix teacher_probs(const Scorer& teacher, const Matrix& features, double temperature) {
  return soft_labels(teacher, features, temperature).probs();
}

int cmd_postshift(const CommonFlags& f, const std::string& teacher_ckpt, const std::string& data_dir,
                  std::optional<double> temperature, std::ostream& out) {
  AppConfig c = load(f);
  if (temperature) c.pipeline.temperature = *temperature;
  const Scorer teacher = load_scorer(teacher_ckpt);
  const LoadedData data = obtain_data(c, data_dir);
  const std::size_t m = data.model.num_classes();
  const Matrix pv = teacher_probs(teacher, data.splits.val.features, c.pipeline.temperature);
  const Matrix pt = teacher_probs(teacher, data.splits.test.features, c.pipeline.temperature);
  const PostShiftAdjustment adj = post_shift_fit(pv, data.splits.val.labels, m);
  const PostShiftAdjustment zero{Vec(m, 0.0)};
  const double val_before = post_shift_worst_accuracy(zero, pv, data.splits.val.labels, m);
  const double val_after = post_shift_worst_accuracy(adj, pv, data.splits.val.labels, m);
  const double test_before = post_shift_worst_accuracy(zero, pt, data.splits.test.labels, m);
  const double test_after = post_shift_worst_accuracy(adj, pt, data.splits.test.labels, m);

  make_dir(f.out_dir);
  const fs::path d(f.out_dir);
  write_file(d / "adjustment.json", adjustment_to_json(adj) + "\n");
  nlohmann::json j{{"log_gamma", adj.log_gamma},
                   {"temperature", c.pipeline.temperature},
                   {"val_worst_unadjusted", val_before},
                   {"val_worst_adjusted", val_after},
                   {"test_worst_unadjusted", test_before},
                   {"test_worst_adjusted", test_after}};
  write_file(d / "postshift_report.json", j.dump(2) + "\n");
  out << "split,worst_unadjusted,worst_adjusted\n"
      << "val," << format_sig6(val_before) << ',' << format_sig6(val_after) << '\n'
      << "test," << format_sig6(test_before) << ',' << format_sig6(test_after) << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Robust knowledge distillation for worst-class accuracy", "robust_distill"};
  app.require_subcommand(1);

  CommonFlags common;
  ObjectiveFlags obj;
  std::string data_dir, teacher_ckpt, teacher_objective, level = "quick";
  std::optional<double> teacher_alpha, temperature;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> verify_seed;
  double corruption = 0.0;

  auto* gen = app.add_subcommand("gen-data", "sample train/val/test CSVs and the model spec");
  add_common(gen, common, true);

  auto* train = app.add_subcommand("train", "train a teacher and report its test metrics");
  add_common(train, common, true);
  add_objective(train, obj, "teacher objective: std | bal | rob | tdf");
  train->add_option("--data", data_dir, "directory written by gen-data (sampled from the config when omitted)");

  auto* distill = app.add_subcommand("distill", "train (or load) a teacher, then distill a student");
  add_common(distill, common, true);
  add_objective(distill, obj, "student objective: std | bal | rob | tdf, optionally with -d");
  distill->add_option("--teacher-objective", teacher_objective, "teacher objective: std | bal | rob | tdf");
  distill->add_option("--teacher-alpha", teacher_alpha, "teacher trade-off weight for tdf");
  distill->add_option("--teacher", teacher_ckpt, "existing teacher checkpoint instead of training one");
  distill->add_option("--data", data_dir, "directory written by gen-data");

  auto* sweep = app.add_subcommand("sweep", "grid over teacher and student trade-off weights");
  add_common(sweep, common, true);
  sweep->add_option("--workers", workers, "parallel workers")->check(CLI::PositiveNumber);

  auto* verify = app.add_subcommand("verify", "run the numerical verification suite");
  verify->add_option("--level", level, "quick | full")->check(CLI::IsMember({"quick", "full"}));
  verify->add_option("--seed", verify_seed, "fixture seed");
  verify->add_option("--corrupt-gradient", corruption)->group("");

  auto* post = app.add_subcommand("postshift", "fit a post-hoc per-class adjustment of a teacher");
  add_common(post, common, true);
  post->add_option("--teacher", teacher_ckpt, "teacher checkpoint")->required();
  post->add_option("--data", data_dir, "directory written by gen-data");
  post->add_option("--temperature", temperature, "temperature applied to the teacher logits");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (*gen) return cmd_gen_data(common, out);
    if (*train) return cmd_train(common, obj, data_dir, out);
    if (*distill) return cmd_distill(common, obj, teacher_objective, teacher_alpha, teacher_ckpt, data_dir, out);
    if (*sweep) return cmd_sweep(common, workers, out);
    if (*verify) return cmd_verify(level, verify_seed, corruption, out);
    if (*post) return cmd_postshift(common, teacher_ckpt, data_dir, temperature, out);
  } catch (const MissingClassError& e) {
    err << "error: " << e.what() << '\n';
    return kPrecondition;
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kPrecondition;
  }
  return kUsage;
}

}  // namespace rdistill::cli
