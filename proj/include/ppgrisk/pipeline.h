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

// End-to-end pipeline behind the command-line tool. Every step reads and
// writes files under the run's output directory:
//
//   simulate  cohort.csv, waveforms.csv, truth.json
//   train     encoder.weights, pca.csv, train_log.csv
//   fit       fits/<model>.cox, fits/ridge_selection.csv
//   evaluate  report.json, calibration_<model>.csv, km_<model>.csv

#ifndef PPGRISK_PIPELINE_H_
#define PPGRISK_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ppgrisk/cohort.h"
#include "ppgrisk/encoder.h"
#include "ppgrisk/metrics.h"
#include "ppgrisk/signal.h"

namespace ppgrisk {

struct RunConfig {
  std::filesystem::path out_dir = "run";
  // Default to <out_dir>/cohort.csv and <out_dir>/waveforms.csv.
  std::filesystem::path cohort_csv;
  std::filesystem::path waveform_store;
  CsvSchema schema;

  SyntheticSpec synthetic;
  SplitAssignment split = {{"A", Split::kTrain},
                           {"B", Split::kTrain},
                           {"C", Split::kTune},
                           {"D", Split::kTest}};
  EncoderConfig encoder;
  MorphologyOptions morphology;

  std::vector<double> ridge_grid = {1e-5, 3e-5, 1e-4};
  std::vector<std::string> models;  // empty: every known model
  std::string reference = "office_refit_who";
  double margin = 0.025;
  double horizon_years = 10.0;

  std::uint64_t seed = 0;  // evaluation resampling
  std::size_t n_bootstrap = 1000;
  std::size_t n_permutations = 1000;
  std::size_t subgroup_permutations = 1000;
  std::size_t calibration_bins = 10;
  std::size_t quintile_cutoff = 3000;
  ObservedRate calibration_mode = ObservedRate::kKaplanMeier;
  bool subgroups = true;

  std::filesystem::path CohortPath() const;
  std::filesystem::path WaveformPath() const;
  const std::vector<std::string>& ModelList() const;

  // Throws ValidationError.
  void Validate() const;
};

// Relative paths in the file resolve against the file's directory. Unknown
// keys are rejected. A missing file yields ValidationError.
RunConfig LoadRunConfig(const std::filesystem::path& path);
RunConfig ParseRunConfig(const std::string& json_text,
                         const std::filesystem::path& base_dir = {});

struct CliOverrides {
  std::optional<std::uint64_t> seed;  // every seed in the run
  std::optional<std::filesystem::path> out;
  std::optional<std::vector<std::string>> models;
  std::optional<double> margin;
};
void ApplyOverrides(RunConfig& config, const CliOverrides& overrides);

void CmdSimulate(const RunConfig& config);
void CmdTrain(const RunConfig& config);
void CmdFit(const RunConfig& config);
void CmdEvaluate(const RunConfig& config);
// Aligned text tables from <out_dir>/report.json.
void CmdReport(const RunConfig& config, std::ostream& out);

// Writes through a temporary sibling file and renames it into place.
void WriteFileAtomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace ppgrisk

#endif  // PPGRISK_PIPELINE_H_
