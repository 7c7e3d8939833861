#pragma once

// nlohmann::json conversions for the library's config and result types.
// Private to the core library.

#include "json.hpp"
#include "rdistill/dro.hpp"
#include "rdistill/metrics.hpp"
#include "rdistill/mlp.hpp"
#include "rdistill/objectives.hpp"
#include "rdistill/teacher_student.hpp"

namespace rdistill {

inline void to_json(nlohmann::json& j, const SgdConfig& c) {
  j = {{"learning_rate", c.learning_rate}, {"momentum", c.momentum},
       {"weight_decay", c.weight_decay},   {"batch_size", c.batch_size},
       {"epochs", c.epochs},               {"seed", c.seed},
       {"cosine_decay", c.cosine_decay}};
}

inline void from_json(const nlohmann::json& j, SgdConfig& c) {
  c.learning_rate = j.at("learning_rate").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.cosine_decay = j.at("cosine_decay").get<bool>();
}

inline void to_json(nlohmann::json& j, const DroConfig& c) {
  j = {{"rounds", c.rounds},
       {"eg_step", c.eg_step},
       {"inner", c.inner},
       {"lambda_loss", loss_name(c.lambda_loss)},
       {"val_labels", val_label_source_name(c.val_labels)},
       {"return_mode", return_mode_name(c.return_mode)},
       {"alpha", c.alpha},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, DroConfig& c) {
  c.rounds = j.at("rounds").get<std::size_t>();
  c.eg_step = j.at("eg_step").get<double>();
  c.inner = j.at("inner").get<SgdConfig>();
  c.lambda_loss = parse_loss(j.at("lambda_loss").get<std::string>());
  c.val_labels = parse_val_label_source(j.at("val_labels").get<std::string>());
  c.return_mode = parse_return_mode(j.at("return_mode").get<std::string>());
  c.alpha = j.at("alpha").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

inline void to_json(nlohmann::json& j, const ObjectiveSpec& s) {
  j = {{"name", objective_name(s)}, {"alpha", s.alpha}, {"loss", loss_name(s.loss)}};
}

inline void from_json(const nlohmann::json& j, ObjectiveSpec& s) {
  s = parse_objective(j.at("name").get<std::string>(), j.at("alpha").get<double>());
  s.loss = parse_loss(j.at("loss").get<std::string>());
}

inline void to_json(nlohmann::json& j, const EvalReport& r) {
  j = {{"per_class_recall", r.per_class_recall},
       {"acc_std", r.acc_std},
       {"acc_bal", r.acc_bal},
       {"acc_worst", r.acc_worst},
       {"acc_worst_k", r.acc_worst_k},
       {"k", r.k},
       {"confusion", r.confusion}};
}

inline void from_json(const nlohmann::json& j, EvalReport& r) {
  r.per_class_recall = j.at("per_class_recall").get<Vec>();
  r.acc_std = j.at("acc_std").get<double>();
  r.acc_bal = j.at("acc_bal").get<double>();
  r.acc_worst = j.at("acc_worst").get<double>();
  r.acc_worst_k = j.at("acc_worst_k").get<double>();
  r.k = j.at("k").get<std::size_t>();
  r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
}

inline void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = {{"teacher_objective", c.teacher_objective},
       {"student_objective", c.student_objective},
       {"temperature", c.temperature},
       {"val_labels", val_label_source_name(c.val_label_source)},
       {"hidden", c.hidden},
       {"teacher_sgd", c.teacher_sgd},
       {"student_sgd", c.student_sgd},
       {"teacher_dro", c.teacher_dro},
       {"student_dro", c.student_dro},
       {"worst_k", c.worst_k},
       {"approx_mc_samples", c.approx_mc_samples},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, PipelineConfig& c) {
  c.teacher_objective = j.at("teacher_objective").get<ObjectiveSpec>();
  c.student_objective = j.at("student_objective").get<ObjectiveSpec>();
  c.temperature = j.at("temperature").get<double>();
  c.val_label_source = parse_val_label_source(j.at("val_labels").get<std::string>());
  c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  c.teacher_sgd = j.at("teacher_sgd").get<SgdConfig>();
  c.student_sgd = j.at("student_sgd").get<SgdConfig>();
  c.teacher_dro = j.at("teacher_dro").get<DroConfig>();
  c.student_dro = j.at("student_dro").get<DroConfig>();
  c.worst_k = j.at("worst_k").get<std::size_t>();
  c.approx_mc_samples = j.at("approx_mc_samples").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

inline void to_json(nlohmann::json& j, const RunResult& r) {
  j = {{"teacher_obj", r.teacher_obj},
       {"student_obj", r.student_obj},
       {"alpha_t", r.alpha_t},
       {"alpha_s", r.alpha_s},
       {"seed", r.seed},
       {"temperature", r.temperature},
       {"val_labels", r.val_labels},
       {"student_test", r.student_test},
       {"teacher_test", r.teacher_test},
       {"approx_err", r.approx_err},
       {"config", nlohmann::json::parse(r.config_json.empty() ? "null" : r.config_json)}};
}

inline void from_json(const nlohmann::json& j, RunResult& r) {
  r.teacher_obj = j.at("teacher_obj").get<std::string>();
  r.student_obj = j.at("student_obj").get<std::string>();
  r.alpha_t = j.at("alpha_t").get<double>();
  r.alpha_s = j.at("alpha_s").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.temperature = j.at("temperature").get<double>();
  r.val_labels = j.at("val_labels").get<std::string>();
  r.student_test = j.at("student_test").get<EvalReport>();
  r.teacher_test = j.at("teacher_test").get<EvalReport>();
  r.approx_err = j.at("approx_err").get<double>();
  const auto& cfg = j.at("config");
  r.config_json = cfg.is_null() ? std::string{} : cfg.dump();
}

}  // namespace rdistill
