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

// Evaluation harness for 10-year risk scores: discrimination,
// reclassification, calibration, operating points, survival curves,
// enrichment, subgroups and the resampling tests around them.
//
// Times are in years throughout. Event flags are 0/1 bytes.

#ifndef PPGRISK_METRICS_H_
#define PPGRISK_METRICS_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ppgrisk/cohort.h"

namespace ppgrisk {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------------------
// Discrimination

struct ConcordanceCounts {
  std::uint64_t concordant = 0;
  std::uint64_t tied = 0;
  std::uint64_t comparable = 0;

  // (concordant + tied / 2) / comparable.
  double C() const;
};

// Harrell's C in O(n log n). A pair (i, j) is comparable when i has an event
// at t_i and t_j > t_i, or j is censored at t_j == t_i. Higher risk for the
// earlier event is concordant; equal risks count one half.
ConcordanceCounts HarrellConcordance(std::span<const double> risk,
                                     std::span<const double> time,
                                     std::span<const std::uint8_t> event);
// Throws ValidationError without a comparable pair.
double HarrellC(std::span<const double> risk, std::span<const double> time,
                std::span<const std::uint8_t> event);

// ---------------------------------------------------------------------------
// Survival curves

struct KmStep {
  double time = 0.0;
  double survival = 1.0;
  std::size_t at_risk = 0;
  std::size_t events = 0;
  std::size_t censored = 0;  // censored at this time, after the events
};

// Product-limit estimate with one step per distinct observed time.
// S(t) changes only at event times.
struct KmCurve {
  std::vector<KmStep> steps;

  double SurvivalAt(double t) const;
};

KmCurve KaplanMeier(std::span<const double> time,
                    std::span<const std::uint8_t> event);

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::string method;
  double margin = 0.0;
  std::size_t n_resamples = 0;
  std::uint64_t seed = 0;
  bool degenerate = false;
  bool low_resample_warning = false;
};

// Two-group log-rank, chi-square with one degree of freedom.
TestResult LogRank(std::span<const double> time_a,
                   std::span<const std::uint8_t> event_a,
                   std::span<const double> time_b,
                   std::span<const std::uint8_t> event_b);

// Administrative censoring at the horizon: events after it become censored
// at the horizon.
void CensorAtHorizon(std::vector<double>& time, std::vector<std::uint8_t>& event,
                     double horizon_years);

// ---------------------------------------------------------------------------
// Binary 10-year outcome

enum class OutcomeStatus : std::uint8_t {
  kEventWithin,
  kEventFree,
  kExcludedCensored,
};

// Event at or before the horizon: event. Followed to the horizon without an
// event: event-free. Otherwise censored before the horizon: excluded.
std::vector<OutcomeStatus> BinaryOutcomeView(
    std::span<const double> time, std::span<const std::uint8_t> event,
    double horizon_years = 10.0);

struct Proportion {
  std::size_t successes = 0;
  std::size_t trials = 0;
  double estimate = kNaN;
  double lo = kNaN;
  double hi = kNaN;
};

// Exact binomial interval by beta-quantile inversion.
Proportion ClopperPearson(std::size_t successes, std::size_t trials,
                          double alpha = 0.05);

struct ConfusionResult {
  Proportion sensitivity;
  Proportion specificity;
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
};

// Positive call: score >= threshold. Excluded subjects are dropped. Throws
// ValidationError with zero events or zero event-free subjects.
ConfusionResult BinaryConfusion(std::span<const double> scores,
                                double threshold,
                                std::span<const OutcomeStatus> outcome,
                                double alpha = 0.05);

enum class OperatingMode { kMatchSensitivity, kMatchSpecificity, kFixedRisk };
inline constexpr double kFixedRiskThreshold = 0.10;

// Threshold among the distinct observed scores (at least one positive call).
//   kMatchSpecificity: smallest threshold with specificity >= target, then
//     moved up while sensitivity is unchanged.
//   kMatchSensitivity: largest threshold with sensitivity >= target.
//   kFixedRisk: 0.10.
// Throws ValidationError naming the achievable frontier when unreachable.
double MatchOperatingPoint(double target, std::span<const double> scores,
                           std::span<const OutcomeStatus> outcome,
                           OperatingMode mode);

// ---------------------------------------------------------------------------
// Reclassification

struct NriResult {
  double nri = 0.0;
  double event = 0.0;     // P(up | event) - P(down | event)
  double nonevent = 0.0;  // P(down | non-event) - P(up | non-event)
};

// Two categories per model (score >= own threshold is high).
NriResult NriCategorical(std::span<const double> new_scores,
                         std::span<const double> old_scores,
                         double threshold_new, double threshold_old,
                         std::span<const OutcomeStatus> outcome);

// "Up" when new > old, "down" when new < old, ties neither.
NriResult NriCategoryFree(std::span<const double> new_scores,
                          std::span<const double> old_scores,
                          std::span<const OutcomeStatus> outcome);

// ---------------------------------------------------------------------------
// Calibration

enum class ObservedRate { kKaplanMeier, kRawProportion };

struct CalibrationBin {
  double mean_predicted = 0.0;
  double observed = 0.0;
  std::size_t count = 0;
  double lower_score = 0.0;
  double upper_score = 0.0;
};

struct CalibrationTable {
  std::vector<CalibrationBin> bins;
  double slope = kNaN;
  double intercept = kNaN;
  // Mean over bins of |observed - predicted|.
  double mean_absolute_error = kNaN;
  bool merged = false;      // tie groups collapsed requested bins
  bool degenerate = false;  // fewer than two bins or no spread; slope unset
};

// Bins by predicted-risk quantile, keeping tied scores together; observed
// risk per bin is 1 - S(horizon) from a within-bin Kaplan-Meier (or the raw
// event proportion). Slope/intercept: OLS of observed on mean predicted.
CalibrationTable Calibration(std::span<const double> scores,
                             std::span<const double> time,
                             std::span<const std::uint8_t> event,
                             std::size_t bins = 10, double horizon_years = 10.0,
                             ObservedRate mode = ObservedRate::kKaplanMeier);

// ---------------------------------------------------------------------------
// Resampling

struct BootstrapResult {
  double point = kNaN;
  double lo = kNaN;
  double hi = kNaN;
  double se = kNaN;
  std::size_t n_resamples = 0;
  std::uint64_t seed = 0;
};

// Metric over a resample, given as subject indices into the caller's data.
using ResampleMetric = std::function<double(std::span<const std::size_t>)>;

// Percentile 2.5/97.5 bootstrap over subjects. Iteration i draws from a
// generator keyed by (seed, i); a resample on which the metric throws is
// redrawn up to 10 times before the error propagates.
BootstrapResult BootstrapCi(std::size_t n_subjects, const ResampleMetric& metric,
                            std::size_t n_resamples = 1000,
                            std::uint64_t seed = 0);

enum class PermutationMode { kNonInferiority, kSuperiority };

// Paired sign-flip permutation test for delta = C(new) - C(ref). Each
// permutation swaps each subject's two scores with probability 1/2.
//   non-inferiority p = #(delta* >= delta_obs + margin) / n
//   superiority p     = #(delta* >= delta_obs) / n
// statistic holds delta_obs. Fewer than 100 permutations sets the warning.
TestResult PermTestCStat(std::span<const double> new_scores,
                         std::span<const double> ref_scores,
                         std::span<const double> time,
                         std::span<const std::uint8_t> event, double margin,
                         PermutationMode mode, std::size_t n_permutations = 1000,
                         std::uint64_t seed = 0);

struct PermutationTests {
  TestResult noninferiority;
  TestResult superiority;
};

// Both modes from one shared set of permutations.
PermutationTests PermTestCStatBoth(std::span<const double> new_scores,
                                   std::span<const double> ref_scores,
                                   std::span<const double> time,
                                   std::span<const std::uint8_t> event,
                                   double margin,
                                   std::size_t n_permutations = 1000,
                                   std::uint64_t seed = 0);

// z = (delta + margin) / se, p = 1 - Phi(z) for H0: delta <= -margin.
TestResult WaldOneSided(double delta, double se, double margin);

// ---------------------------------------------------------------------------
// Enrichment

struct EnrichmentResult {
  double requested_fraction = 0.0;
  double effective_fraction = 0.0;
  std::size_t n_top = 0;
  double fold = kNaN;
};

inline constexpr std::array<double, 3> kDefaultEnrichmentFractions = {0.20, 0.10,
                                                                     0.05};

// Prevalence among the top fraction of scores over overall prevalence on the
// binary outcome view. Subjects tied with the cut score are all included.
std::vector<EnrichmentResult> Enrichment(
    std::span<const double> scores, std::span<const OutcomeStatus> outcome,
    std::span<const double> top_fractions = kDefaultEnrichmentFractions);

// ---------------------------------------------------------------------------
// Subgroups

struct Subgroup {
  std::string name;
  std::function<bool(const CohortRow&)> member;
};

// smoker / never smoked, age < 55 / >= 55, female / male, HbA1c <= 48 / > 48,
// hypertension / no hypertension.
std::vector<Subgroup> DefaultSubgroups();

struct ScoredModel {
  std::string name;
  std::vector<double> risk;  // per row of the evaluated cohort
  // Thresholds fixed on the full cohort (not re-matched per subgroup).
  double threshold = 0.0;
  bool binary_score = false;  // skip calibration
};

struct SubgroupModelReport {
  std::string model;
  double c_statistic = kNaN;
  std::optional<TestResult> noninferiority;  // vs the reference model
  std::optional<TestResult> superiority;
  std::optional<ConfusionResult> confusion;
  double average_predicted_risk = kNaN;
  std::optional<CalibrationTable> calibration;
};

struct SubgroupReport {
  std::string subgroup;
  std::size_t n = 0;
  bool skipped = false;  // empty or without both outcome classes
  std::vector<SubgroupModelReport> models;
};

struct SubgroupOptions {
  std::size_t quintile_cutoff = 3000;  // n below this: 5 calibration bins
  double margin = 0.025;
  std::size_t n_permutations = 1000;
  std::uint64_t seed = 0;
  double horizon_years = 10.0;
  std::size_t reference_index = 0;  // into models
};

std::vector<SubgroupReport> SubgroupAnalysis(
    const std::vector<ScoredModel>& models, const std::vector<CohortRow>& rows,
    const std::vector<Subgroup>& subgroups, const SubgroupOptions& options);

}  // namespace ppgrisk

#endif  // PPGRISK_METRICS_H_
