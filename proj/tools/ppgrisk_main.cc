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

// ppgrisk: simulate | train | fit | evaluate | report
//
// Exit codes: 0 success, 2 validation error, 3 missing dependency,
// 4 numerical failure.

#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "ppgrisk/errors.h"
#include "ppgrisk/pipeline.h"

namespace {

std::vector<std::string> SplitCsv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PPG-based 10-year cardiovascular risk pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir, models;
  double margin = 0.0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration");
    sub->add_option("--seed", seed, "Seed for every random stream in the run");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--models", models, "Comma-separated model names");
    sub->add_option("--margin", margin, "Non-inferiority margin (absolute C units)");
  };
  CLI::App* simulate = app.add_subcommand("simulate", "Write a synthetic cohort");
  CLI::App* train = app.add_subcommand("train", "Train the waveform encoder and PCA");
  CLI::App* fit = app.add_subcommand("fit", "Fit every listed Cox model");
  CLI::App* evaluate = app.add_subcommand("evaluate", "Score the test split");
  CLI::App* report = app.add_subcommand("report", "Print report.json as tables");
  for (CLI::App* s : {simulate, train, fit, evaluate, report}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ppgrisk::RunConfig config;
    if (!config_path.empty()) config = ppgrisk::LoadRunConfig(config_path);
    ppgrisk::CliOverrides o;
    CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--seed")) o.seed = seed;
    if (sub->count("--out")) o.out = out_dir;
    if (sub->count("--models")) o.models = SplitCsv(models);
    if (sub->count("--margin")) o.margin = margin;
    ppgrisk::ApplyOverrides(config, o);

    if (sub == simulate) {
      ppgrisk::CmdSimulate(config);
    } else if (sub == train) {
      ppgrisk::CmdTrain(config);
    } else if (sub == fit) {
      ppgrisk::CmdFit(config);
    } else if (sub == evaluate) {
      ppgrisk::CmdEvaluate(config);
    } else {
      ppgrisk::CmdReport(config, std::cout);
    }
  } catch (const ppgrisk::DependencyError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const ppgrisk::NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const ppgrisk::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
