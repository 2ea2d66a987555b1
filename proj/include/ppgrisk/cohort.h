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

#ifndef PPGRISK_COHORT_H_
#define PPGRISK_COHORT_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace ppgrisk {

inline constexpr double kDaysPerYear = 365.25;

// One participant at the baseline visit. Smoking is ever-smoker.
struct CohortRow {
  std::string subject_id;
  std::string site;
  std::optional<double> age;   // years
  std::optional<bool> female;  // CSV column "sex"
  std::optional<bool> smoker;
  std::optional<double> height;  // cm
  std::optional<double> bmi;     // kg/m^2
  std::optional<double> sbp;     // mmHg
  std::optional<double> total_cholesterol;  // mmol/L
  std::optional<double> glucose;            // mmol/L
  std::optional<double> hba1c;              // mmol/mol
  std::optional<bool> hypertension;
  bool prior_mi_or_stroke = false;
  double followup_days = 0.0;
  bool event = false;
  std::optional<std::string> ppg_ref;
  std::optional<double> ppg_hr;  // beats/min

  double followup_years() const { return followup_days / kDaysPerYear; }
};

// Canonical cohort CSV header.
inline constexpr const char* kCohortCsvHeader =
    "subject_id,site,age,sex,smoker,height,bmi,sbp,total_cholesterol,glucose,"
    "hba1c,hypertension,prior_mi_or_stroke,followup_days,event,ppg_hr";

// Maps each canonical field name to the column header used in a file.
// Fields not listed keep their canonical name. subject_id, site,
// followup_days and event must be present in the file; every other column
// may be absent, leaving its field unset.
struct CsvSchema {
  std::map<std::string, std::string> columns;

  std::string ColumnFor(const std::string& field) const;
};

// Parses a cohort CSV. Empty cells and "NA" are missing values. Errors name
// the 1-based data row and the column.
std::vector<CohortRow> ReadCohort(std::istream& in,
                                  const CsvSchema& schema = {});
std::vector<CohortRow> LoadCohort(const std::filesystem::path& path,
                                  const CsvSchema& schema = {});
void WriteCohort(std::ostream& out, const std::vector<CohortRow>& rows);

enum class ExclusionReason : std::size_t {
  kAgeOutOfRange = 0,
  kPriorEvent = 1,
  kMissingDemographics = 2,
  kMissingVitals = 3,
};
inline constexpr std::size_t kExclusionReasonCount = 4;
std::string_view ExclusionReasonName(ExclusionReason reason);

struct ExclusionLog {
  std::array<std::size_t, kExclusionReasonCount> counts{};

  std::size_t count(ExclusionReason r) const {
    return counts[static_cast<std::size_t>(r)];
  }
  std::size_t total() const;
};

struct InclusionResult {
  std::vector<CohortRow> kept;
  ExclusionLog log;
};

// Rules in order, each row attributed to the first rule it fails:
//   1. age outside [40, 74]
//   2. prior MI or stroke
//   3. age, sex or smoking missing
//   4. BMI or SBP missing
InclusionResult ApplyInclusion(const std::vector<CohortRow>& rows);

enum class Split { kTrain, kTune, kTest };
std::string_view SplitName(Split s);
Split ParseSplit(std::string_view name);

using SplitAssignment = std::map<std::string, Split>;

struct SplitRows {
  std::vector<CohortRow> train;
  std::vector<CohortRow> tune;
  std::vector<CohortRow> test;

  const std::vector<CohortRow>& at(Split s) const;
};

// Partition by site, order preserved. Throws ValidationError on an unmapped
// site.
SplitRows SplitBySite(const std::vector<CohortRow>& rows,
                      const SplitAssignment& assignment);

// Outcome sources after ICD-code / death-cause mapping upstream
// (I21, I22, I23 -> mi; I63, I64 -> stroke).
enum class MaceSource { kMi, kStroke, kCvdDeath };
MaceSource ParseMaceSource(std::string_view tag);

struct EventRecord {
  std::string subject_id;
  MaceSource source;
  double day;  // days since baseline visit
};

struct MaceOutcome {
  std::string subject_id;
  std::optional<double> earliest_day;
  bool event = false;
};

// Composite MACE: earliest record over all sources. One output per entry of
// `subject_ids`, in that order. Throws on a record dated before baseline or
// belonging to an unknown subject.
std::vector<MaceOutcome> BuildMaceOutcome(
    const std::vector<EventRecord>& records,
    const std::vector<std::string>& subject_ids);

// Subject id -> samples, all of one fixed length.
struct WaveformStore {
  std::size_t length = 0;
  std::map<std::string, std::vector<double>> waveforms;

  const std::vector<double>* Find(const std::string& subject_id) const;
};

// Format: first line "#length=L", then "subject_id,s_0,...,s_{L-1}".
WaveformStore ReadWaveformStore(std::istream& in);
WaveformStore LoadWaveformStore(const std::filesystem::path& path);
// `order` fixes the line order; subjects missing from the store are skipped.
void WriteWaveformStore(std::ostream& out, const WaveformStore& store,
                        const std::vector<std::string>& order);

// Synthetic cohort recipe. Covariates per subject (all from keyed streams):
//   age ~ U[40, 74]          female ~ Bernoulli(0.5)   smoker ~ Bernoulli(0.4)
//   height ~ N(163, 6.5) female / N(176, 7) male
//   bmi ~ N(27, 4) clipped to >= 12       sbp ~ N(137, 18) clipped to >= 60
//   total_cholesterol ~ N(5.7, 1.1), glucose ~ N(5.1, 1.2), hba1c ~ N(36, 6),
//     each missing with probability 0.1
//   hypertension ~ Bernoulli(0.6) if sbp >= 140 else Bernoulli(0.15)
//   prior_mi_or_stroke ~ Bernoulli(0.02)   ppg_hr ~ N(70, 10) clipped >= 35
// Standardized covariates use the population moments below (kSynth*). The
// vascular latent is
//   v = (0.5 z_age + 0.3 z_sbp + 0.2 z_bmi + 0.8 e) / sqrt(1.02),  e ~ N(0,1)
// and drives the subject's SynthPulse. With eta = sum_k beta_k z_k over
// coefficient names {age, sex, smoker, bmi, sbp, vascular} (sex = female
// flag, vascular = v), event time T = -ln(U) / (baseline_rate exp(eta)) years,
// censoring C = min(censor_horizon, Exp(censor_rate)), follow-up = min(T, C).
struct SyntheticSpec {
  std::size_t n_subjects = 1000;
  std::map<std::string, double> true_coefficients;
  double baseline_rate = 0.01;  // events per year
  double censor_horizon = 12.0;  // years
  double censor_rate = 0.05;     // per year; 0 disables random censoring
  std::uint64_t seed = 0;
  std::size_t waveform_length = 100;
  double waveform_noise = 0.005;
  // Subject i is seen at sites[i % sites.size()].
  std::vector<std::string> sites = {"A", "B", "C", "D"};
};

inline constexpr double kSynthAgeMean = 57.0;
inline constexpr double kSynthAgeSd = 9.814954576223638;  // 34 / sqrt(12)
inline constexpr double kSynthFemaleMean = 0.5;
inline constexpr double kSynthFemaleSd = 0.5;
inline constexpr double kSynthSmokerMean = 0.4;
inline constexpr double kSynthSmokerSd = 0.4898979485566356;  // sqrt(0.24)
inline constexpr double kSynthBmiMean = 27.0;
inline constexpr double kSynthBmiSd = 4.0;
inline constexpr double kSynthSbpMean = 137.0;
inline constexpr double kSynthSbpSd = 18.0;

struct SyntheticCohort {
  std::vector<CohortRow> rows;
  WaveformStore waveforms;
  std::map<std::string, double> truth;
  std::vector<double> true_eta;
  std::vector<double> vascular_latent;
  double baseline_rate = 0.0;

  // 1 - exp(-baseline_rate * horizon * exp(eta_i)).
  double TrueRisk(std::size_t i, double horizon_years = 10.0) const;
};

// Deterministic for a fixed spec. Throws ValidationError on an invalid spec
// or an unknown coefficient name.
SyntheticCohort GenerateSynthetic(const SyntheticSpec& spec);

}  // namespace ppgrisk

#endif  // PPGRISK_COHORT_H_
