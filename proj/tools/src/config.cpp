#include "config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "rdistill/errors.hpp"

namespace rdistill::cli {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw InvalidInput("invalid value '" + value + "' for key '" + key + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw InvalidInput("invalid boolean '" + value + "' for key '" + key + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& value) {
  std::vector<T> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<T>(key, item));
  }
  return out;
}

using Setter = std::function<void(const std::string& key, const std::string& value)>;
using Section = std::map<std::string, Setter>;

template <typename T>
Setter number(T& target) {
  return [&target](const std::string& k, const std::string& v) { target = parse_number<T>(k, v); };
}

void add_sgd_keys(Section& s, SgdConfig& sgd, ObjectiveSpec& objective, double& alpha) {
  s["objective"] = [&objective](const std::string&, const std::string& v) {
    const double a = objective.alpha;
    objective = parse_objective(v, a);
  };
  s["alpha"] = number(alpha);
  s["learning_rate"] = number(sgd.learning_rate);
  s["momentum"] = number(sgd.momentum);
  s["weight_decay"] = number(sgd.weight_decay);
  s["batch_size"] = number(sgd.batch_size);
  s["epochs"] = number(sgd.epochs);
  s["cosine_decay"] = [&sgd](const std::string& k, const std::string& v) { sgd.cosine_decay = parse_bool(k, v); };
}

}  // namespace

void AppConfig::finalize() {
  pipeline.teacher_dro.inner = pipeline.teacher_sgd;
  pipeline.teacher_dro.inner.epochs = inner_epochs;
  pipeline.student_dro.rounds = pipeline.teacher_dro.rounds;
  pipeline.student_dro.eg_step = pipeline.teacher_dro.eg_step;
  pipeline.student_dro.lambda_loss = pipeline.teacher_dro.lambda_loss;
  pipeline.student_dro.return_mode = pipeline.teacher_dro.return_mode;
  pipeline.student_dro.inner = pipeline.student_sgd;
  pipeline.student_dro.inner.epochs = inner_epochs;
  validate(pipeline);
}

SweepSpec AppConfig::sweep_spec() const {
  SweepSpec s;
  s.alpha_t = alpha_t;
  s.alpha_s = alpha_s;
  s.replicates = replicates;
  s.base_seed = pipeline.seed;
  s.pipeline = pipeline;
  s.model = model;
  s.sizes = sizes;
  s.workers = workers;
  return s;
}

AppConfig parse_config(const std::string& text, const std::string& origin) {
  AppConfig c;
  double teacher_alpha = 0.0, student_alpha = 0.0;
  DroConfig& dro = c.pipeline.teacher_dro;

  std::map<std::string, Section> table;
  Section& model = table["model"];
  model["classes"] = number(c.model.num_classes);
  model["dim"] = number(c.model.dim);
  model["ratio"] = number(c.model.imbalance_ratio);
  model["radius"] = number(c.model.options.radius);
  model["sigma"] = number(c.model.options.sigma);
  model["seed"] = number(c.model.seed);

  Section& data = table["data"];
  data["n_train"] = number(c.sizes.n_train);
  data["n_val"] = number(c.sizes.n_val);
  data["n_test"] = number(c.sizes.n_test);
  data["min_per_class"] = number(c.sizes.val_min_per_class);

  Section& pipe = table["pipeline"];
  pipe["seed"] = number(c.pipeline.seed);
  pipe["temperature"] = number(c.pipeline.temperature);
  pipe["val_labels"] = [&c](const std::string&, const std::string& v) {
    c.pipeline.val_label_source = parse_val_label_source(v);
  };
  pipe["hidden"] = [&c](const std::string& k, const std::string& v) {
    c.pipeline.hidden = parse_list<std::size_t>(k, v);
  };
  pipe["worst_k"] = number(c.pipeline.worst_k);
  pipe["approx_mc_samples"] = number(c.pipeline.approx_mc_samples);

  add_sgd_keys(table["teacher"], c.pipeline.teacher_sgd, c.pipeline.teacher_objective, teacher_alpha);
  add_sgd_keys(table["student"], c.pipeline.student_sgd, c.pipeline.student_objective, student_alpha);

  Section& d = table["dro"];
  d["rounds"] = number(dro.rounds);
  d["eg_step"] = number(dro.eg_step);
  d["inner_epochs"] = number(c.inner_epochs);
  d["lambda_loss"] = [&dro](const std::string&, const std::string& v) { dro.lambda_loss = parse_loss(v); };
  d["return_mode"] = [&dro](const std::string&, const std::string& v) { dro.return_mode = parse_return_mode(v); };

  Section& sw = table["sweep"];
  sw["alpha_t"] = [&c](const std::string& k, const std::string& v) { c.alpha_t = parse_list<double>(k, v); };
  sw["alpha_s"] = [&c](const std::string& k, const std::string& v) { c.alpha_s = parse_list<double>(k, v); };
  sw["replicates"] = number(c.replicates);
  sw["workers"] = number(c.workers);

  std::istringstream is(text);
  std::string line, section;
  std::set<std::string> seen;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw InvalidInput(where + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!table.count(section)) throw InvalidInput(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidInput(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw InvalidInput(where + "key '" + key + "' outside any section");
    auto& keys = table[section];
    const auto it = keys.find(key);
    if (it == keys.end()) throw InvalidInput(where + "unknown key '" + key + "' in section [" + section + "]");
    if (!seen.insert(section + "." + key).second) {
      throw InvalidInput(where + "duplicate key '" + key + "' in section [" + section + "]");
    }
    try {
      it->second(key, value);
    } catch (const InvalidInput& e) {
      throw InvalidInput(where + e.what());
    }
  }
  for (auto [spec, alpha, role] : {std::tuple{&c.pipeline.teacher_objective, teacher_alpha, "teacher"},
                                   std::tuple{&c.pipeline.student_objective, student_alpha, "student"}}) {
    if (spec->kind != ObjectiveKind::Tdf && alpha != 0.0) {
      throw InvalidInput(origin + ": [" + role + "] alpha only applies to the tdf objective");
    }
    spec->alpha = alpha;
  }
  c.finalize();
  return c;
}

AppConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), path);
}

std::string default_config_text() {
  return R"(# Mixture model: class count, feature dimension, imbalance ratio
# (largest / smallest prior), radius of the class means, per-class sigma.
[model]
classes = 5
dim = 2
ratio = 100
radius = 2
sigma = 1
seed = 0

# Split sizes; val and test hold at least min_per_class rows of every class.
[data]
n_train = 5000
n_val = 1000
n_test = 20000
min_per_class = 5

# Master seed (overridden by ROBUST_DISTILL_SEED or --seed), soft-label
# temperature, validation label source (teacher | one-hot), hidden layers.
[pipeline]
seed = 0
temperature = 1
val_labels = teacher
hidden = 64, 64
worst_k = 2
approx_mc_samples = 20000

# Objective: std | bal | rob | tdf, with -d for distilled (student).
[teacher]
objective = std
alpha = 0
learning_rate = 0.05
momentum = 0.9
weight_decay = 0.0001
batch_size = 64
epochs = 100
cosine_decay = false

[student]
objective = std-d
alpha = 0
learning_rate = 0.05
momentum = 0.9
weight_decay = 0.0001
batch_size = 64
epochs = 100
cosine_decay = false

# Shared by teacher and student robust training: rounds K, EG step,
# SGD epochs per round, loss driving the multipliers (zero-one | xent),
# returned scorer (last | average).
[dro]
rounds = 50
eg_step = 0.1
inner_epochs = 1
lambda_loss = zero-one
return_mode = last

[sweep]
alpha_t = 0, 0.25, 0.5, 0.75, 1
alpha_s = 0, 0.25, 0.5, 0.75, 1
replicates = 5
workers = 1
)";
}

void apply_seed_override(AppConfig& config, std::optional<std::uint64_t> flag_seed) {
  if (flag_seed) {
    config.pipeline.seed = *flag_seed;
    return;
  }
  if (const char* env = std::getenv("ROBUST_DISTILL_SEED"); env != nullptr && *env != '\0') {
    try {
      config.pipeline.seed = parse_number<std::uint64_t>("ROBUST_DISTILL_SEED", trim(env));
    } catch (const InvalidInput&) {
      throw InvalidInput(std::string("ROBUST_DISTILL_SEED is not an unsigned integer: '") + env + "'");
    }
  }
}

}  // namespace rdistill::cli
