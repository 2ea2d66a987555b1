/*
 * Copyright 2026 The ppgrisk Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Drives the command-line tool named by $PPGRISK_CLI end to end.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string Cli() {
  const char* p = std::getenv("PPGRISK_CLI");
  REQUIRE_MESSAGE(p != nullptr, "PPGRISK_CLI must name the ppgrisk binary");
  return p;
}

fs::path Scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() /
                       ("ppgrisk_pipeline_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t Lines(const fs::path& p) {
  const std::string s = Slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

struct Result {
  int code = -1;
  std::string err;
};

Result Run(const std::string& args, const fs::path& dir) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = Cli() + " " + args + " >" + (dir / "stdout.txt").string() + " 2>" +
                          err.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = Slurp(err);
  return r;
}

json BaseConfig(std::size_t n) {
  return {{"out_dir", "out"},
          {"seed", 7},
          {"synthetic",
           {{"n_subjects", n},
            {"baseline_rate", 0.02},
            {"true_coefficients",
             {{"age", 0.6}, {"sex", -0.3}, {"smoker", 0.25}, {"sbp", 0.2}, {"vascular", 0.5}}}}},
          {"encoder", {{"epochs", 2}, {"learning_rate", 0.003}}},
          {"n_bootstrap", 50},
          {"n_permutations", 100},
          {"subgroup_permutations", 20}};
}

fs::path WriteConfig(const fs::path& dir, const json& config) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << config.dump(2);
  return p;
}

std::string Args(const std::string& sub, const fs::path& config) {
  return sub + " --config " + config.string();
}

}  // namespace

TEST_CASE("simulate writes counted, reproducible outputs") {
  const fs::path dir = Scratch("simulate");
  const fs::path cfg = WriteConfig(dir, BaseConfig(1000));
  REQUIRE(Run(Args("simulate", cfg), dir).code == 0);
  const fs::path out = dir / "out";
  CHECK(Lines(out / "cohort.csv") == 1001);
  CHECK(Lines(out / "waveforms.csv") == 1001);  // #length line + one per subject
  const json truth = json::parse(Slurp(out / "truth.json"));
  CHECK(truth.dump().find("vascular") != std::string::npos);

  const std::string first = Slurp(out / "cohort.csv");
  const std::string waves = Slurp(out / "waveforms.csv");
  REQUIRE(Run(Args("simulate", cfg), dir).code == 0);
  CHECK(Slurp(out / "cohort.csv") == first);
  CHECK(Slurp(out / "waveforms.csv") == waves);

  REQUIRE(Run(Args("simulate", cfg) + " --seed 8 --out " + (dir / "other").string(), dir).code == 0);
  CHECK(Slurp(dir / "other" / "cohort.csv") != first);
}

TEST_CASE("invalid configurations exit with code 2") {
  const fs::path dir = Scratch("invalid");
  json c = BaseConfig(0);
  CHECK(Run(Args("simulate", WriteConfig(dir, c)), dir).code == 2);
  c = BaseConfig(100);
  c["colour"] = "blue";
  const Result unknown = Run(Args("simulate", WriteConfig(dir, c)), dir);
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("colour") != std::string::npos);
  c = BaseConfig(100);
  c["margin"] = -0.1;
  CHECK(Run(Args("simulate", WriteConfig(dir, c)), dir).code == 2);
  CHECK(Run("simulate --config " + (dir / "absent.json").string(), dir).code == 2);
  CHECK(Run("frobnicate", dir).code == 2);
}

TEST_CASE("fit without encoder outputs") {
  const fs::path dir = Scratch("fit");
  json c = BaseConfig(1000);
  c["models"] = {"metadata", "office_refit_who", "sbp140"};
  const fs::path cfg = WriteConfig(dir, c);
  CHECK(Run(Args("fit", cfg), dir).code == 3);  // nothing simulated yet
  REQUIRE(Run(Args("simulate", cfg), dir).code == 0);
  fs::remove(dir / "out" / "waveforms.csv");
  const Result fit = Run(Args("fit", cfg), dir);
  REQUIRE_MESSAGE(fit.code == 0, fit.err);
  const std::string cox = Slurp(dir / "out" / "fits" / "metadata.cox");
  CHECK(cox.rfind("ppgrisk-coxfit 1", 0) == 0);
  // The selected ridge value is one of the grid points.
  const auto pos = cox.find("\nlambda ");
  REQUIRE(pos != std::string::npos);
  const double lambda = std::stod(cox.substr(pos + 8));
  CHECK((lambda == 1e-5 || lambda == 3e-5 || lambda == 1e-4));
  CHECK(Lines(dir / "out" / "fits" / "ridge_selection.csv") == 1 + 3 * 2);

  // The reference must stay in the model list.
  CHECK(Run(Args("fit", cfg) + " --models dls", dir).code == 2);
  REQUIRE(Run(Args("simulate", cfg), dir).code == 0);
  const Result dls = Run(Args("fit", cfg) + " --models office_refit_who,dls", dir);
  CHECK(dls.code == 3);
  CHECK(dls.err.find("run train first") != std::string::npos);
  CHECK(Run(Args("evaluate", cfg) + " --models office_refit_who,dls", dir).code == 3);
  CHECK(Run(Args("report", cfg), dir).code == 3);
}

TEST_CASE("train needs a tune split") {
  const fs::path dir = Scratch("notune");
  json c = BaseConfig(400);
  c["split"] = {{"A", "train"}, {"B", "train"}, {"C", "test"}, {"D", "test"}};
  const fs::path cfg = WriteConfig(dir, c);
  REQUIRE(Run(Args("simulate", cfg), dir).code == 0);
  const Result r = Run(Args("train", cfg), dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("tune") != std::string::npos);
}

TEST_CASE("full pipeline on a small cohort") {
  const fs::path dir = Scratch("full");
  json c = BaseConfig(1000);
  c["models"] = {"metadata", "office_refit_who", "metadata_ppg_morph", "dls", "sbp140"};
  const fs::path cfg = WriteConfig(dir, c);
  const fs::path out = dir / "out";
  REQUIRE(Run(Args("simulate", cfg), dir).code == 0);

  const auto start = std::chrono::steady_clock::now();
  const Result train = Run(Args("train", cfg), dir);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  REQUIRE_MESSAGE(train.code == 0, train.err);
  CHECK(seconds < 60.0);
  CHECK(Lines(out / "train_log.csv") == 1 + 2);
  CHECK(fs::exists(out / "encoder.weights"));
  CHECK(Lines(out / "pca.csv") == 7);

  const Result fit = Run(Args("fit", cfg), dir);
  REQUIRE_MESSAGE(fit.code == 0, fit.err);
  const Result eval = Run(Args("evaluate", cfg), dir);
  REQUIRE_MESSAGE(eval.code == 0, eval.err);

  const std::string text = Slurp(out / "report.json");
  const json report = json::parse(text);
  CHECK(report["reference"] == "office_refit_who");
  REQUIRE(report["models"].size() == 5);
  for (const auto& m : report["models"]) {
    for (const char* key :
         {"c_statistic", "c_ci", "delta_vs_reference", "p_noninferiority", "p_superiority", "cfnri",
          "cfnri_event", "cfnri_nonevent", "nri", "sensitivity", "sensitivity_ci", "specificity",
          "specificity_ci", "calibration_slope", "calibration_mace", "km_curves", "enrichment"}) {
      CHECK_MESSAGE(m.contains(key), m["name"], " lacks ", key);
    }
    CHECK(m["nri"].contains("match_sensitivity"));
    CHECK(m["nri"].contains("match_specificity"));
    // A 0/1 rule has no 10% risk cut.
    CHECK(m["nri"].contains("fixed_risk") == (m["name"] != "sbp140"));
  }
  CHECK(report["subgroups"].size() == 10);

  // The reference against itself.
  const json* self = nullptr;
  for (const auto& m : report["models"]) {
    if (m["name"] == "office_refit_who") self = &m;
  }
  REQUIRE(self != nullptr);
  CHECK((*self)["delta_vs_reference"].get<double>() == 0.0);
  CHECK((*self)["p_noninferiority"].get<double>() < 0.05);

  // Survival never rises within a risk group.
  std::ifstream km(out / "km_dls.csv");
  std::string line, last_group;
  double last = 2.0;
  std::getline(km, line);
  std::size_t rows = 0;
  while (std::getline(km, line)) {
    std::stringstream ss(line);
    std::string group, time, surv;
    std::getline(ss, group, ',');
    std::getline(ss, time, ',');
    std::getline(ss, surv, ',');
    if (group != last_group) last = 2.0;
    CHECK(std::stod(surv) <= last);
    last = std::stod(surv);
    last_group = group;
    ++rows;
  }
  CHECK(rows > 0);
  CHECK(fs::exists(out / "calibration_dls.csv"));

  // Same inputs, same bytes.
  REQUIRE(Run(Args("evaluate", cfg), dir).code == 0);
  CHECK(Slurp(out / "report.json") == text);

  const Result rep = Run(Args("report", cfg), dir);
  CHECK(rep.code == 0);
  const std::string tables = Slurp(dir / "stdout.txt");
  CHECK(tables.find("dls") != std::string::npos);
  CHECK(tables.find("office_refit_who") != std::string::npos);

  // Margin override flows into the report.
  REQUIRE(Run(Args("evaluate", cfg) + " --margin 0.05 --models office_refit_who,dls", dir).code == 0);
  const json wide = json::parse(Slurp(out / "report.json"));
  CHECK(wide["margin"].get<double>() == 0.05);
  CHECK(wide["models"].size() == 2);
}
