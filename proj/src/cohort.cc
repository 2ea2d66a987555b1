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

#include "ppgrisk/cohort.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "ppgrisk/errors.h"
#include "ppgrisk/rng.h"
#include "ppgrisk/signal.h"
#include "text.h"

namespace ppgrisk {

using internal::FormatDouble;
using internal::ParseDouble;
using internal::SplitFields;
using internal::Trim;

std::string CsvSchema::ColumnFor(const std::string& field) const {
  auto it = columns.find(field);
  return it == columns.end() ? field : it->second;
}

namespace {

bool IsMissing(std::string_view cell) { return cell.empty() || cell == "NA"; }

class RowParser {
 public:
  RowParser(const std::vector<std::string_view>& cells,
            const std::unordered_map<std::string, std::size_t>& index,
            const CsvSchema& schema, std::size_t row)
      : cells_(cells), index_(index), schema_(schema), row_(row) {}

  std::optional<std::string_view> Cell(const std::string& field) const {
    const std::string column = schema_.ColumnFor(field);
    auto it = index_.find(column);
    if (it == index_.end() || it->second >= cells_.size()) return std::nullopt;
    if (IsMissing(cells_[it->second])) return std::nullopt;
    return cells_[it->second];
  }

  std::string RequiredString(const std::string& field) const {
    auto cell = Cell(field);
    if (!cell) Fail(field, "missing value");
    return std::string(*cell);
  }

  std::optional<double> Number(const std::string& field) const {
    auto cell = Cell(field);
    if (!cell) return std::nullopt;
    auto v = ParseDouble(*cell);
    if (!v) Fail(field, "not a number: \"" + std::string(*cell) + "\"");
    return v;
  }

  std::optional<double> Positive(const std::string& field) const {
    auto v = Number(field);
    if (v && !(*v > 0.0)) Fail(field, "must be positive");
    return v;
  }

  std::optional<bool> Flag(const std::string& field) const {
    auto cell = Cell(field);
    if (!cell) return std::nullopt;
    if (*cell == "1" || *cell == "true") return true;
    if (*cell == "0" || *cell == "false") return false;
    Fail(field, "not a binary flag: \"" + std::string(*cell) + "\"");
  }

  [[noreturn]] void Fail(const std::string& field,
                         const std::string& detail) const {
    throw ParseError(row_, schema_.ColumnFor(field), detail);
  }

 private:
  const std::vector<std::string_view>& cells_;
  const std::unordered_map<std::string, std::size_t>& index_;
  const CsvSchema& schema_;
  std::size_t row_;
};

template <typename T>
void WriteOptional(std::ostream& out, const std::optional<T>& v) {
  if (!v) return;
  if constexpr (std::is_same_v<T, bool>) {
    out << (*v ? '1' : '0');
  } else {
    out << FormatDouble(*v);
  }
}

}  // namespace

std::vector<CohortRow> ReadCohort(std::istream& in, const CsvSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("cohort: missing header row");
  const auto header = SplitFields(line);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header.size(); ++i) {
    index.emplace(std::string(header[i]), i);
  }
  for (const char* field : {"subject_id", "site", "followup_days", "event"}) {
    const std::string column = schema.ColumnFor(field);
    if (!index.contains(column)) {
      throw ValidationError("cohort: missing mandatory column \"" + column + "\"");
    }
  }

  std::vector<CohortRow> rows;
  std::unordered_set<std::string> seen;
  std::size_t row_number = 0;
  while (std::getline(in, line)) {
    if (Trim(line).empty()) continue;
    ++row_number;
    const auto cells = SplitFields(line);
    RowParser p(cells, index, schema, row_number);
    CohortRow r;
    r.subject_id = p.RequiredString("subject_id");
    r.site = p.RequiredString("site");
    r.age = p.Positive("age");
    r.female = p.Flag("sex");
    r.smoker = p.Flag("smoker");
    r.height = p.Positive("height");
    r.bmi = p.Positive("bmi");
    r.sbp = p.Positive("sbp");
    r.total_cholesterol = p.Number("total_cholesterol");
    r.glucose = p.Number("glucose");
    r.hba1c = p.Number("hba1c");
    r.hypertension = p.Flag("hypertension");
    r.prior_mi_or_stroke = p.Flag("prior_mi_or_stroke").value_or(false);
    auto followup = p.Number("followup_days");
    if (!followup) p.Fail("followup_days", "missing value");
    if (*followup < 0.0) p.Fail("followup_days", "must be >= 0");
    r.followup_days = *followup;
    auto event = p.Flag("event");
    if (!event) p.Fail("event", "missing value");
    r.event = *event;
    r.ppg_hr = p.Positive("ppg_hr");
    if (!seen.insert(r.subject_id).second) {
      throw ValidationError("cohort: duplicate subject_id \"" + r.subject_id +
                            "\" at row " + std::to_string(row_number));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<CohortRow> LoadCohort(const std::filesystem::path& path,
                                  const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cohort: cannot open " + path.string());
  return ReadCohort(in, schema);
}

void WriteCohort(std::ostream& out, const std::vector<CohortRow>& rows) {
  out << kCohortCsvHeader << '\n';
  for (const CohortRow& r : rows) {
    out << r.subject_id << ',' << r.site << ',';
    WriteOptional(out, r.age);
    out << ',';
    WriteOptional(out, r.female);
    out << ',';
    WriteOptional(out, r.smoker);
    out << ',';
    WriteOptional(out, r.height);
    out << ',';
    WriteOptional(out, r.bmi);
    out << ',';
    WriteOptional(out, r.sbp);
    out << ',';
    WriteOptional(out, r.total_cholesterol);
    out << ',';
    WriteOptional(out, r.glucose);
    out << ',';
    WriteOptional(out, r.hba1c);
    out << ',';
    WriteOptional(out, r.hypertension);
    out << ',' << (r.prior_mi_or_stroke ? '1' : '0') << ','
        << FormatDouble(r.followup_days) << ',' << (r.event ? '1' : '0') << ',';
    WriteOptional(out, r.ppg_hr);
    out << '\n';
  }
}

std::string_view ExclusionReasonName(ExclusionReason reason) {
  switch (reason) {
    case ExclusionReason::kAgeOutOfRange:
      return "age";
    case ExclusionReason::kPriorEvent:
      return "prior event";
    case ExclusionReason::kMissingDemographics:
      return "missing demographics";
    case ExclusionReason::kMissingVitals:
      return "missing bmi/sbp";
  }
  return "unknown";
}

std::size_t ExclusionLog::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

InclusionResult ApplyInclusion(const std::vector<CohortRow>& rows) {
  InclusionResult result;
  for (const CohortRow& r : rows) {
    std::optional<ExclusionReason> reason;
    if (r.age && (*r.age < 40.0 || *r.age > 74.0)) {
      reason = ExclusionReason::kAgeOutOfRange;
    } else if (r.prior_mi_or_stroke) {
      reason = ExclusionReason::kPriorEvent;
    } else if (!r.age || !r.female || !r.smoker) {
      reason = ExclusionReason::kMissingDemographics;
    } else if (!r.bmi || !r.sbp) {
      reason = ExclusionReason::kMissingVitals;
    }
    if (reason) {
      ++result.log.counts[static_cast<std::size_t>(*reason)];
    } else {
      result.kept.push_back(r);
    }
  }
  return result;
}

std::string_view SplitName(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kTune:
      return "tune";
    case Split::kTest:
      return "test";
  }
  return "unknown";
}

Split ParseSplit(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "tune") return Split::kTune;
  if (name == "test") return Split::kTest;
  throw ValidationError("unknown split \"" + std::string(name) + "\"");
}

const std::vector<CohortRow>& SplitRows::at(Split s) const {
  switch (s) {
    case Split::kTrain:
      return train;
    case Split::kTune:
      return tune;
    case Split::kTest:
      break;
  }
  return test;
}

SplitRows SplitBySite(const std::vector<CohortRow>& rows,
                      const SplitAssignment& assignment) {
  SplitRows out;
  for (const CohortRow& r : rows) {
    auto it = assignment.find(r.site);
    if (it == assignment.end()) {
      throw ValidationError("unknown site " + r.site);
    }
    switch (it->second) {
      case Split::kTrain:
        out.train.push_back(r);
        break;
      case Split::kTune:
        out.tune.push_back(r);
        break;
      case Split::kTest:
        out.test.push_back(r);
        break;
    }
  }
  return out;
}

MaceSource ParseMaceSource(std::string_view tag) {
  if (tag == "mi") return MaceSource::kMi;
  if (tag == "stroke") return MaceSource::kStroke;
  if (tag == "cvd_death") return MaceSource::kCvdDeath;
  throw ValidationError("unknown MACE source \"" + std::string(tag) + "\"");
}

std::vector<MaceOutcome> BuildMaceOutcome(
    const std::vector<EventRecord>& records,
    const std::vector<std::string>& subject_ids) {
  std::unordered_map<std::string, std::size_t> position;
  std::vector<MaceOutcome> out(subject_ids.size());
  for (std::size_t i = 0; i < subject_ids.size(); ++i) {
    out[i].subject_id = subject_ids[i];
    position.emplace(subject_ids[i], i);
  }
  for (const EventRecord& rec : records) {
    auto it = position.find(rec.subject_id);
    if (it == position.end()) {
      throw ValidationError("MACE record for unknown subject " + rec.subject_id);
    }
    if (rec.day < 0.0) {
      throw ValidationError("MACE record for " + rec.subject_id +
                            " predates the baseline visit");
    }
    MaceOutcome& o = out[it->second];
    if (!o.earliest_day || rec.day < *o.earliest_day) o.earliest_day = rec.day;
    o.event = true;
  }
  return out;
}

const std::vector<double>* WaveformStore::Find(
    const std::string& subject_id) const {
  auto it = waveforms.find(subject_id);
  return it == waveforms.end() ? nullptr : &it->second;
}

WaveformStore ReadWaveformStore(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || !Trim(line).starts_with("#length=")) {
    throw ValidationError("waveform store: first line must be #length=L");
  }
  WaveformStore store;
  const auto len = ParseDouble(Trim(line).substr(8));
  if (!len || *len < static_cast<double>(kMinWaveformLength) ||
      *len != std::floor(*len)) {
    throw ValidationError("waveform store: invalid length declaration");
  }
  store.length = static_cast<std::size_t>(*len);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (Trim(line).empty()) continue;
    ++row;
    const auto cells = SplitFields(line);
    if (cells.size() != store.length + 1) {
      throw ParseError(row, "s_*",
                       "expected " + std::to_string(store.length) + " samples");
    }
    std::vector<double> samples(store.length);
    for (std::size_t i = 0; i < store.length; ++i) {
      auto v = ParseDouble(cells[i + 1]);
      if (!v) throw ParseError(row, "s_" + std::to_string(i), "not a number");
      samples[i] = *v;
    }
    if (!store.waveforms.emplace(std::string(cells[0]), std::move(samples))
             .second) {
      throw ValidationError("waveform store: duplicate subject " +
                            std::string(cells[0]));
    }
  }
  return store;
}

WaveformStore LoadWaveformStore(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("waveform store: cannot open " + path.string());
  return ReadWaveformStore(in);
}

void WriteWaveformStore(std::ostream& out, const WaveformStore& store,
                        const std::vector<std::string>& order) {
  out << "#length=" << store.length << '\n';
  for (const std::string& id : order) {
    const auto* samples = store.Find(id);
    if (!samples) continue;
    out << id;
    for (double s : *samples) out << ',' << FormatDouble(s);
    out << '\n';
  }
}

double SyntheticCohort::TrueRisk(std::size_t i, double horizon_years) const {
  return -std::expm1(-baseline_rate * horizon_years * std::exp(true_eta.at(i)));
}

namespace {

enum Stream : std::uint64_t {
  kDemographics = 1,
  kVitals = 2,
  kLabs = 3,
  kLatent = 4,
  kWaveform = 5,
  kEventTime = 6,
  kCensoring = 7,
};

const std::set<std::string>& KnownCoefficients() {
  static const std::set<std::string> names = {"age", "sex",  "smoker",
                                              "bmi", "sbp", "vascular"};
  return names;
}

}  // namespace

SyntheticCohort GenerateSynthetic(const SyntheticSpec& spec) {
  if (spec.n_subjects < 1) throw ValidationError("synthetic: n_subjects must be >= 1");
  if (!(spec.baseline_rate > 0.0)) {
    throw ValidationError("synthetic: baseline_rate must be > 0");
  }
  if (!(spec.censor_horizon > 0.0)) {
    throw ValidationError("synthetic: censor_horizon must be > 0");
  }
  if (spec.censor_rate < 0.0) {
    throw ValidationError("synthetic: censor_rate must be >= 0");
  }
  if (spec.sites.empty()) throw ValidationError("synthetic: no sites");
  for (const auto& [name, beta] : spec.true_coefficients) {
    if (!KnownCoefficients().contains(name)) {
      throw ValidationError("synthetic: unknown coefficient \"" + name + "\"");
    }
  }
  auto coef = [&spec](const char* name) {
    auto it = spec.true_coefficients.find(name);
    return it == spec.true_coefficients.end() ? 0.0 : it->second;
  };
  const double b_age = coef("age"), b_sex = coef("sex"),
               b_smoker = coef("smoker"), b_bmi = coef("bmi"),
               b_sbp = coef("sbp"), b_vascular = coef("vascular");

  const std::size_t n = spec.n_subjects;
  SyntheticCohort out;
  out.rows.resize(n);
  out.true_eta.resize(n);
  out.vascular_latent.resize(n);
  out.truth = spec.true_coefficients;
  out.baseline_rate = spec.baseline_rate;
  out.waveforms.length = spec.waveform_length;
  std::vector<std::vector<double>> pulses(n);

  const int width = std::max<int>(6, static_cast<int>(std::to_string(n).size()));
  ParallelFor(n, [&](std::size_t i) {
    CohortRow& r = out.rows[i];
    std::string id = std::to_string(i);
    r.subject_id = "S" + std::string(width - id.size(), '0') + id;
    r.site = spec.sites[i % spec.sites.size()];

    KeyedRng demo(spec.seed, kDemographics, i);
    const double age = 40.0 + 34.0 * demo.Uniform();
    const bool female = demo.Bernoulli(0.5);
    const bool smoker = demo.Bernoulli(0.4);
    r.age = age;
    r.female = female;
    r.smoker = smoker;
    r.prior_mi_or_stroke = demo.Bernoulli(0.02);

    KeyedRng vitals(spec.seed, kVitals, i);
    r.height = female ? vitals.Normal(163.0, 6.5) : vitals.Normal(176.0, 7.0);
    const double bmi = std::max(12.0, vitals.Normal(27.0, 4.0));
    const double sbp = std::max(60.0, vitals.Normal(137.0, 18.0));
    r.bmi = bmi;
    r.sbp = sbp;
    r.hypertension = vitals.Bernoulli(sbp >= 140.0 ? 0.6 : 0.15);
    r.ppg_hr = std::max(35.0, vitals.Normal(70.0, 10.0));

    KeyedRng labs(spec.seed, kLabs, i);
    const double chol = labs.Normal(5.7, 1.1);
    const double glucose = std::max(2.0, labs.Normal(5.1, 1.2));
    const double hba1c = std::max(20.0, labs.Normal(36.0, 6.0));
    if (!labs.Bernoulli(0.1)) r.total_cholesterol = chol;
    if (!labs.Bernoulli(0.1)) r.glucose = glucose;
    if (!labs.Bernoulli(0.1)) r.hba1c = hba1c;

    const double z_age = (age - kSynthAgeMean) / kSynthAgeSd;
    const double z_sex = ((female ? 1.0 : 0.0) - kSynthFemaleMean) / kSynthFemaleSd;
    const double z_smoker = ((smoker ? 1.0 : 0.0) - kSynthSmokerMean) / kSynthSmokerSd;
    const double z_bmi = (bmi - kSynthBmiMean) / kSynthBmiSd;
    const double z_sbp = (sbp - kSynthSbpMean) / kSynthSbpSd;

    KeyedRng latent(spec.seed, kLatent, i);
    const double v = (0.5 * z_age + 0.3 * z_sbp + 0.2 * z_bmi +
                      0.8 * latent.Normal()) /
                     std::sqrt(1.02);
    out.vascular_latent[i] = v;
    pulses[i] = SynthPulse(v, spec.waveform_length,
                           DeriveKey(spec.seed, kWaveform, i),
                           spec.waveform_noise)
                    .samples;
    r.ppg_ref = r.subject_id;

    const double eta = b_age * z_age + b_sex * z_sex + b_smoker * z_smoker +
                       b_bmi * z_bmi + b_sbp * z_sbp + b_vascular * v;
    out.true_eta[i] = eta;

    KeyedRng event_rng(spec.seed, kEventTime, i);
    const double t_event =
        -std::log(event_rng.UniformOpen()) / (spec.baseline_rate * std::exp(eta));
    double t_censor = spec.censor_horizon;
    if (spec.censor_rate > 0.0) {
      KeyedRng censor_rng(spec.seed, kCensoring, i);
      t_censor = std::min(t_censor, censor_rng.Exponential(spec.censor_rate));
    }
    r.event = t_event <= t_censor;
    r.followup_days = std::min(t_event, t_censor) * kDaysPerYear;
  });

  for (std::size_t i = 0; i < n; ++i) {
    out.waveforms.waveforms.emplace(out.rows[i].subject_id, std::move(pulses[i]));
  }
  return out;
}

}  // namespace ppgrisk
