#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "rdistill/sweep.hpp"

using namespace rdistill;

namespace {

SweepSpec tiny_spec() {
  SweepSpec s;
  s.alpha_t = {0.0, 1.0};
  s.alpha_s = {0.0, 1.0};
  s.replicates = 2;
  s.base_seed = 5;
  s.model.num_classes = 3;
  s.model.imbalance_ratio = 10.0;
  s.sizes = {300, 90, 300, 5};
  s.pipeline.hidden = {8};
  s.pipeline.teacher_dro.rounds = 5;
  s.pipeline.student_dro.rounds = 5;
  s.pipeline.approx_mc_samples = 1000;
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("summaries use the n-1 denominator and ignore order") {
  const auto s = summarize({3.0, 1.0, 2.0});
  CHECK(s.mean == doctest::Approx(2.0));
  REQUIRE(s.stderr_.has_value());
  CHECK(*s.stderr_ == doctest::Approx(1.0 / std::sqrt(3.0)));
  CHECK(summarize({0.1, 0.7, 0.3, 0.9}) == summarize({0.9, 0.3, 0.1, 0.7}));
  const auto one = summarize({0.4});
  CHECK(one.mean == 0.4);
  CHECK(!one.stderr_.has_value());
}

TEST_CASE("cell seeds are distinct per coordinate") {
  CHECK(cell_seed(1, 0, 0, 0) == cell_seed(1, 0, 0, 0));
  CHECK(cell_seed(1, 0, 0, 0) != cell_seed(1, 1, 0, 0));
  CHECK(cell_seed(1, 0, 1, 0) != cell_seed(1, 1, 0, 0));
  CHECK(cell_seed(1, 0, 0, 1) != cell_seed(1, 0, 1, 0));
  CHECK(cell_seed(2, 0, 0, 0) != cell_seed(1, 0, 0, 0));
}

TEST_CASE("single-cell sweep") {
  SweepSpec s = tiny_spec();
  s.alpha_t = {0.5};
  s.alpha_s = {0.25};
  s.replicates = 1;
  const auto r = run_sweep(s);
  REQUIRE(r.cells.size() == 1);
  REQUIRE(r.cells[0].runs.size() == 1);
  CHECK(!r.cells[0].acc_worst.stderr_.has_value());
  REQUIRE(r.front.size() == 1);
  CHECK(r.front[0].balanced == r.cells[0].runs[0].student_test.acc_bal);
  CHECK(r.front[0].worst == r.cells[0].runs[0].student_test.acc_worst);
  CHECK(r.front[0].alpha_t == 0.5);
  CHECK(r.cells[0].runs[0].teacher_obj == "tdf");
  CHECK(r.cells[0].runs[0].student_obj == "tdf-d");
}

TEST_CASE("sweeps are deterministic, worker-count independent and reuse teachers") {
  SweepSpec s = tiny_spec();
  const auto a = run_sweep(s);
  s.workers = 3;
  const auto b = run_sweep(s);
  CHECK(a == b);
  CHECK(sweep_result_to_json(a) == sweep_result_to_json(b));
  REQUIRE(a.cells.size() == 4);
  for (const auto& c : a.cells) CHECK(c.runs.size() == 2);
  // Cells sharing alpha_t see the same teacher on each replicate.
  for (std::size_t r = 0; r < 2; ++r) {
    CHECK(a.cells[0].runs[r].teacher_test == a.cells[1].runs[r].teacher_test);
    CHECK(a.cells[0].runs[r].approx_err == a.cells[1].runs[r].approx_err);
    CHECK(a.cells[2].runs[r].teacher_test == a.cells[3].runs[r].teacher_test);
  }
  CHECK(!a.front.empty());
  for (const auto& p : a.front) {
    for (const auto& q : a.front) {
      CHECK(!(q.balanced >= p.balanced && q.worst >= p.worst && (q.balanced > p.balanced || q.worst > p.worst)));
    }
  }
}

TEST_CASE("failed cells are isolated and reported") {
  SweepSpec s = tiny_spec();
  s.replicates = 1;
  s.pipeline.teacher_dro.inner.learning_rate = 1e300;
  const auto r = run_sweep(s);
  CHECK(r.cells.size() == 4);
  CHECK(r.front.empty());
  CHECK(r.warnings.size() == 4);
  for (const auto& c : r.cells) {
    CHECK(c.runs.empty());
    CHECK(c.failures.size() == 1);
  }
}

TEST_CASE("sweep outputs") {
  SweepSpec s = tiny_spec();
  s.replicates = 1;
  const auto r = run_sweep(s);
  const auto dir = std::filesystem::temp_directory_path() / "rdistill_sweep_out";
  std::filesystem::remove_all(dir);
  write_sweep_outputs(r, dir.string());
  for (const char* f : {"sweep.json", "cells.csv", "front.csv", "front.svg"}) {
    CHECK(std::filesystem::exists(dir / f));
  }
  const std::string cells = slurp(dir / "cells.csv");
  CHECK(cells.rfind("teacher_obj,student_obj,alpha_t,alpha_s,seed,acc_std,acc_bal,acc_worst,acc_worst_k,approx_err\n", 0) == 0);
  CHECK(std::count(cells.begin(), cells.end(), '\n') == 5);
  CHECK(slurp(dir / "front.csv").rfind("balanced,worst,alpha_t,alpha_s\n", 0) == 0);
  CHECK(slurp(dir / "front.svg").find("<svg") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("sweep spec validation") {
  SweepSpec s = tiny_spec();
  s.alpha_t = {};
  CHECK_THROWS(run_sweep(s));
  s = tiny_spec();
  s.alpha_s = {1.5};
  CHECK_THROWS(run_sweep(s));
  s = tiny_spec();
  s.replicates = 0;
  CHECK_THROWS(run_sweep(s));
}
