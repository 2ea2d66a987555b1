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

#include "ppgrisk/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "ppgrisk/errors.h"
#include "ppgrisk/rng.h"

namespace ppgrisk {
namespace {

void CheckSameSize(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ValidationError(std::string(what) + ": length mismatch (" +
                          std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void Add(std::size_t i) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }
  // Count of inserted ranks < i.
  std::uint64_t Below(std::size_t i) const {
    std::uint64_t s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::uint64_t> tree_;
};

// Time grouping reused across many concordance evaluations on the same
// outcome data.
struct TimeOrder {
  std::vector<std::size_t> order;  // descending time
  std::vector<std::size_t> group_start;

  TimeOrder(std::span<const double> time) {
    order.resize(time.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return time[a] > time[b];
    });
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (k == 0 || time[order[k]] != time[order[k - 1]]) group_start.push_back(k);
    }
    group_start.push_back(order.size());
  }
};

ConcordanceCounts Concordance(const TimeOrder& to, std::span<const double> risk,
                              std::span<const std::uint8_t> event) {
  const std::size_t n = risk.size();
  std::vector<double> sorted(risk.begin(), risk.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    rank[i] = static_cast<std::size_t>(
        std::lower_bound(sorted.begin(), sorted.end(), risk[i]) - sorted.begin());
  }
  Fenwick bit(sorted.size());
  std::uint64_t inserted = 0;
  ConcordanceCounts c;
  for (std::size_t g = 0; g + 1 < to.group_start.size(); ++g) {
    const std::size_t b = to.group_start[g], e = to.group_start[g + 1];
    for (std::size_t k = b; k < e; ++k) {
      const std::size_t i = to.order[k];
      if (!event[i]) {
        bit.Add(rank[i]);
        ++inserted;
      }
    }
    for (std::size_t k = b; k < e; ++k) {
      const std::size_t i = to.order[k];
      if (!event[i]) continue;
      const std::uint64_t below = bit.Below(rank[i]);
      const std::uint64_t upto = bit.Below(rank[i] + 1);
      c.concordant += below;
      c.tied += upto - below;
      c.comparable += inserted;
    }
    for (std::size_t k = b; k < e; ++k) {
      const std::size_t i = to.order[k];
      if (event[i]) {
        bit.Add(rank[i]);
        ++inserted;
      }
    }
  }
  return c;
}

void CheckNoNaN(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (std::isnan(x)) throw ValidationError(std::string(what) + " contains NaN");
  }
}

std::vector<std::size_t> Included(std::span<const OutcomeStatus> outcome) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < outcome.size(); ++i) {
    if (outcome[i] != OutcomeStatus::kExcludedCensored) idx.push_back(i);
  }
  return idx;
}

double Percentile7(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return kNaN;
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

double ConcordanceCounts::C() const {
  if (comparable == 0) return kNaN;
  return (2.0 * static_cast<double>(concordant) + static_cast<double>(tied)) /
         (2.0 * static_cast<double>(comparable));
}

ConcordanceCounts HarrellConcordance(std::span<const double> risk,
                                     std::span<const double> time,
                                     std::span<const std::uint8_t> event) {
  CheckSameSize(risk.size(), time.size(), "concordance");
  CheckSameSize(risk.size(), event.size(), "concordance");
  CheckNoNaN(risk, "risk");
  return Concordance(TimeOrder(time), risk, event);
}

double HarrellC(std::span<const double> risk, std::span<const double> time,
                std::span<const std::uint8_t> event) {
  const ConcordanceCounts c = HarrellConcordance(risk, time, event);
  if (c.comparable == 0) throw ValidationError("no comparable pairs");
  return c.C();
}

// ---------------------------------------------------------------------------

double KmCurve::SurvivalAt(double t) const {
  double s = 1.0;
  for (const KmStep& step : steps) {
    if (step.time > t) break;
    s = step.survival;
  }
  return s;
}

KmCurve KaplanMeier(std::span<const double> time,
                    std::span<const std::uint8_t> event) {
  CheckSameSize(time.size(), event.size(), "kaplan-meier");
  std::vector<std::size_t> order(time.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return time[a] < time[b]; });
  KmCurve curve;
  std::size_t at_risk = time.size();
  double s = 1.0;
  for (std::size_t k = 0; k < order.size();) {
    KmStep step;
    step.time = time[order[k]];
    step.at_risk = at_risk;
    std::size_t m = k;
    while (m < order.size() && time[order[m]] == step.time) {
      if (event[order[m]]) {
        ++step.events;
      } else {
        ++step.censored;
      }
      ++m;
    }
    if (step.events > 0) {
      s *= 1.0 - static_cast<double>(step.events) / static_cast<double>(at_risk);
    }
    step.survival = s;
    curve.steps.push_back(step);
    at_risk -= m - k;
    k = m;
  }
  return curve;
}

TestResult LogRank(std::span<const double> time_a,
                   std::span<const std::uint8_t> event_a,
                   std::span<const double> time_b,
                   std::span<const std::uint8_t> event_b) {
  CheckSameSize(time_a.size(), event_a.size(), "log-rank group a");
  CheckSameSize(time_b.size(), event_b.size(), "log-rank group b");
  if (time_a.empty() || time_b.empty()) {
    throw ValidationError("log-rank needs two non-empty groups");
  }
  struct Obs {
    double t;
    bool event;
    bool in_a;
  };
  std::vector<Obs> all;
  all.reserve(time_a.size() + time_b.size());
  for (std::size_t i = 0; i < time_a.size(); ++i) {
    all.push_back({time_a[i], event_a[i] != 0, true});
  }
  for (std::size_t i = 0; i < time_b.size(); ++i) {
    all.push_back({time_b[i], event_b[i] != 0, false});
  }
  std::sort(all.begin(), all.end(),
            [](const Obs& x, const Obs& y) { return x.t < y.t; });
  double n_a = static_cast<double>(time_a.size());
  double n = static_cast<double>(all.size());
  double o_minus_e = 0.0, var = 0.0;
  for (std::size_t k = 0; k < all.size();) {
    std::size_t m = k;
    double d = 0.0, d_a = 0.0, leave_a = 0.0;
    while (m < all.size() && all[m].t == all[k].t) {
      if (all[m].event) {
        d += 1.0;
        if (all[m].in_a) d_a += 1.0;
      }
      if (all[m].in_a) leave_a += 1.0;
      ++m;
    }
    if (d > 0.0) {
      const double frac = n_a / n;
      o_minus_e += d_a - d * frac;
      if (n > 1.0) var += d * frac * (1.0 - frac) * (n - d) / (n - 1.0);
    }
    n_a -= leave_a;
    n -= static_cast<double>(m - k);
    k = m;
  }
  TestResult r;
  r.method = "log-rank";
  if (!(var > 0.0)) {
    r.degenerate = true;
    r.statistic = 0.0;
    r.p_value = 1.0;
    return r;
  }
  r.statistic = o_minus_e * o_minus_e / var;
  boost::math::chi_squared chi(1.0);
  r.p_value = boost::math::cdf(boost::math::complement(chi, r.statistic));
  return r;
}

void CensorAtHorizon(std::vector<double>& time, std::vector<std::uint8_t>& event,
                     double horizon_years) {
  CheckSameSize(time.size(), event.size(), "censor at horizon");
  for (std::size_t i = 0; i < time.size(); ++i) {
    if (time[i] > horizon_years) {
      time[i] = horizon_years;
      event[i] = 0;
    }
  }
}

// ---------------------------------------------------------------------------

std::vector<OutcomeStatus> BinaryOutcomeView(std::span<const double> time,
                                             std::span<const std::uint8_t> event,
                                             double horizon_years) {
  CheckSameSize(time.size(), event.size(), "outcome view");
  std::vector<OutcomeStatus> out(time.size());
  for (std::size_t i = 0; i < time.size(); ++i) {
    if (event[i] && time[i] <= horizon_years) {
      out[i] = OutcomeStatus::kEventWithin;
    } else if (time[i] >= horizon_years) {
      out[i] = OutcomeStatus::kEventFree;
    } else {
      out[i] = OutcomeStatus::kExcludedCensored;
    }
  }
  return out;
}

Proportion ClopperPearson(std::size_t successes, std::size_t trials,
                          double alpha) {
  if (successes > trials) throw ValidationError("successes exceed trials");
  Proportion p;
  p.successes = successes;
  p.trials = trials;
  if (trials == 0) return p;
  const double k = static_cast<double>(successes);
  const double n = static_cast<double>(trials);
  p.estimate = k / n;
  p.lo = successes == 0 ? 0.0
                        : boost::math::ibeta_inv(k, n - k + 1.0, alpha / 2.0);
  p.hi = successes == trials
             ? 1.0
             : boost::math::ibeta_inv(k + 1.0, n - k, 1.0 - alpha / 2.0);
  return p;
}

ConfusionResult BinaryConfusion(std::span<const double> scores, double threshold,
                                std::span<const OutcomeStatus> outcome,
                                double alpha) {
  CheckSameSize(scores.size(), outcome.size(), "confusion");
  ConfusionResult r;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pos = scores[i] >= threshold;
    switch (outcome[i]) {
      case OutcomeStatus::kEventWithin:
        (pos ? r.tp : r.fn)++;
        break;
      case OutcomeStatus::kEventFree:
        (pos ? r.fp : r.tn)++;
        break;
      case OutcomeStatus::kExcludedCensored:
        break;
    }
  }
  if (r.tp + r.fn == 0) throw ValidationError("no events in the outcome view");
  if (r.tn + r.fp == 0) {
    throw ValidationError("no event-free subjects in the outcome view");
  }
  r.sensitivity = ClopperPearson(r.tp, r.tp + r.fn, alpha);
  r.specificity = ClopperPearson(r.tn, r.tn + r.fp, alpha);
  return r;
}

double MatchOperatingPoint(double target, std::span<const double> scores,
                           std::span<const OutcomeStatus> outcome,
                           OperatingMode mode) {
  if (mode == OperatingMode::kFixedRisk) return kFixedRiskThreshold;
  CheckSameSize(scores.size(), outcome.size(), "operating point");
  CheckNoNaN(scores, "scores");
  std::vector<std::size_t> idx = Included(outcome);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i : idx) {
    (outcome[i] == OutcomeStatus::kEventWithin ? n_pos : n_neg)++;
  }
  if (n_pos == 0 || n_neg == 0) {
    throw ValidationError("operating point needs events and event-free subjects");
  }
  // One candidate per distinct score, in decreasing threshold order.
  std::vector<double> thr, sens, spec;
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < idx.size();) {
    const double s = scores[idx[k]];
    while (k < idx.size() && scores[idx[k]] == s) {
      (outcome[idx[k]] == OutcomeStatus::kEventWithin ? tp : fp)++;
      ++k;
    }
    thr.push_back(s);
    sens.push_back(static_cast<double>(tp) / static_cast<double>(n_pos));
    spec.push_back(static_cast<double>(n_neg - fp) / static_cast<double>(n_neg));
  }
  constexpr double kSlack = 1e-12;
  std::ostringstream msg;
  if (mode == OperatingMode::kMatchSpecificity) {
    std::size_t best = thr.size();
    for (std::size_t k = 0; k < thr.size() && spec[k] >= target - kSlack; ++k) {
      best = k;
    }
    if (best == thr.size()) {
      msg << "specificity " << target << " unreachable; highest achievable is "
          << spec.front();
      throw ValidationError(msg.str());
    }
    while (best > 0 && sens[best - 1] == sens[best]) --best;
    return thr[best];
  }
  for (std::size_t k = 0; k < thr.size(); ++k) {
    if (sens[k] >= target - kSlack) return thr[k];
  }
  msg << "sensitivity " << target << " unreachable; highest achievable is "
      << sens.back();
  throw ValidationError(msg.str());
}

// ---------------------------------------------------------------------------

namespace {

template <typename Direction>
NriResult Nri(std::span<const OutcomeStatus> outcome, Direction dir) {
  double up_e = 0, down_e = 0, up_n = 0, down_n = 0, n_e = 0, n_n = 0;
  for (std::size_t i = 0; i < outcome.size(); ++i) {
    if (outcome[i] == OutcomeStatus::kExcludedCensored) continue;
    const int d = dir(i);
    if (outcome[i] == OutcomeStatus::kEventWithin) {
      n_e += 1;
      if (d > 0) up_e += 1;
      if (d < 0) down_e += 1;
    } else {
      n_n += 1;
      if (d > 0) up_n += 1;
      if (d < 0) down_n += 1;
    }
  }
  if (n_e == 0 || n_n == 0) {
    throw ValidationError("reclassification needs events and event-free subjects");
  }
  NriResult r;
  r.event = (up_e - down_e) / n_e;
  r.nonevent = (down_n - up_n) / n_n;
  r.nri = r.event + r.nonevent;
  return r;
}

}  // namespace

NriResult NriCategorical(std::span<const double> new_scores,
                         std::span<const double> old_scores, double threshold_new,
                         double threshold_old,
                         std::span<const OutcomeStatus> outcome) {
  CheckSameSize(new_scores.size(), old_scores.size(), "nri");
  CheckSameSize(new_scores.size(), outcome.size(), "nri");
  return Nri(outcome, [&](std::size_t i) {
    const int hn = new_scores[i] >= threshold_new;
    const int ho = old_scores[i] >= threshold_old;
    return hn - ho;
  });
}

NriResult NriCategoryFree(std::span<const double> new_scores,
                          std::span<const double> old_scores,
                          std::span<const OutcomeStatus> outcome) {
  CheckSameSize(new_scores.size(), old_scores.size(), "nri");
  CheckSameSize(new_scores.size(), outcome.size(), "nri");
  return Nri(outcome, [&](std::size_t i) {
    return (new_scores[i] > old_scores[i]) - (new_scores[i] < old_scores[i]);
  });
}

// ---------------------------------------------------------------------------

CalibrationTable Calibration(std::span<const double> scores,
                             std::span<const double> time,
                             std::span<const std::uint8_t> event, std::size_t bins,
                             double horizon_years, ObservedRate mode) {
  CheckSameSize(scores.size(), time.size(), "calibration");
  CheckSameSize(scores.size(), event.size(), "calibration");
  CheckNoNaN(scores, "scores");
  const std::size_t n = scores.size();
  if (bins == 0) throw ValidationError("calibration needs at least one bin");
  if (n < bins) {
    throw ValidationError("calibration needs at least " + std::to_string(bins) +
                          " subjects, got " + std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // A tie group goes to the bin of its first rank.
  std::vector<std::vector<std::size_t>> members(bins);
  for (std::size_t k = 0; k < n;) {
    const std::size_t bin = k * bins / n;
    const double s = scores[order[k]];
    while (k < n && scores[order[k]] == s) members[bin].push_back(order[k++]);
  }
  CalibrationTable table;
  std::vector<double> t, e_d;
  std::vector<std::uint8_t> e;
  for (const auto& m : members) {
    if (m.empty()) {
      table.merged = true;
      continue;
    }
    CalibrationBin b;
    b.count = m.size();
    b.lower_score = scores[m.front()];
    b.upper_score = scores[m.back()];
    double sum = 0.0;
    t.clear();
    e.clear();
    std::size_t raw_events = 0;
    for (std::size_t i : m) {
      sum += scores[i];
      t.push_back(time[i]);
      e.push_back(event[i]);
      if (event[i] && time[i] <= horizon_years) ++raw_events;
    }
    b.mean_predicted = sum / static_cast<double>(m.size());
    b.observed = mode == ObservedRate::kKaplanMeier
                     ? 1.0 - KaplanMeier(t, e).SurvivalAt(horizon_years)
                     : static_cast<double>(raw_events) /
                           static_cast<double>(m.size());
    table.bins.push_back(b);
  }
  double mae = 0.0, mx = 0.0, my = 0.0;
  for (const auto& b : table.bins) {
    mae += std::abs(b.observed - b.mean_predicted);
    mx += b.mean_predicted;
    my += b.observed;
  }
  const double k = static_cast<double>(table.bins.size());
  table.mean_absolute_error = mae / k;
  mx /= k;
  my /= k;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& b : table.bins) {
    sxx += (b.mean_predicted - mx) * (b.mean_predicted - mx);
    sxy += (b.mean_predicted - mx) * (b.observed - my);
  }
  if (table.bins.size() < 2 || !(sxx > 0.0)) {
    table.degenerate = true;
    return table;
  }
  table.slope = sxy / sxx;
  table.intercept = my - table.slope * mx;
  return table;
}

// ---------------------------------------------------------------------------

BootstrapResult BootstrapCi(std::size_t n_subjects, const ResampleMetric& metric,
                            std::size_t n_resamples, std::uint64_t seed) {
  if (n_subjects == 0) throw ValidationError("bootstrap over zero subjects");
  if (n_resamples == 0) throw ValidationError("bootstrap needs resamples");
  BootstrapResult r;
  r.seed = seed;
  r.n_resamples = n_resamples;
  std::vector<std::size_t> all(n_subjects);
  std::iota(all.begin(), all.end(), std::size_t{0});
  r.point = metric(all);
  constexpr std::uint64_t kMaxRedraws = 10;
  std::vector<double> reps(n_resamples);
  ParallelFor(n_resamples, [&](std::size_t i) {
    std::vector<std::size_t> idx(n_subjects);
    for (std::uint64_t attempt = 0;; ++attempt) {
      KeyedRng rng(seed, i, attempt);
      for (auto& v : idx) v = static_cast<std::size_t>(rng.Below(n_subjects));
      try {
        reps[i] = metric(idx);
        return;
      } catch (const ValidationError&) {
        if (attempt == kMaxRedraws) throw;
      }
    }
  });
  std::sort(reps.begin(), reps.end());
  r.lo = Percentile7(reps, 0.025);
  r.hi = Percentile7(reps, 0.975);
  if (reps.size() > 1) {
    const double mean =
        std::accumulate(reps.begin(), reps.end(), 0.0) / static_cast<double>(reps.size());
    double ss = 0.0;
    for (double v : reps) ss += (v - mean) * (v - mean);
    r.se = std::sqrt(ss / static_cast<double>(reps.size() - 1));
  }
  return r;
}

PermutationTests PermTestCStatBoth(std::span<const double> new_scores,
                                   std::span<const double> ref_scores,
                                   std::span<const double> time,
                                   std::span<const std::uint8_t> event,
                                   double margin, std::size_t n_permutations,
                                   std::uint64_t seed) {
  CheckSameSize(new_scores.size(), ref_scores.size(), "permutation test");
  CheckSameSize(new_scores.size(), time.size(), "permutation test");
  CheckSameSize(new_scores.size(), event.size(), "permutation test");
  CheckNoNaN(new_scores, "scores");
  CheckNoNaN(ref_scores, "scores");
  if (n_permutations == 0) throw ValidationError("permutation test needs permutations");
  const TimeOrder to(time);
  const ConcordanceCounts cn = Concordance(to, new_scores, event);
  if (cn.comparable == 0) throw ValidationError("no comparable pairs");
  const double observed = cn.C() - Concordance(to, ref_scores, event).C();
  const std::size_t n = new_scores.size();
  std::vector<double> deltas(n_permutations);
  ParallelFor(n_permutations, [&](std::size_t p) {
    KeyedRng rng(seed, p);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      const bool swap = rng.NextU64() >> 63;
      a[i] = swap ? ref_scores[i] : new_scores[i];
      b[i] = swap ? new_scores[i] : ref_scores[i];
    }
    deltas[p] = Concordance(to, a, event).C() - Concordance(to, b, event).C();
  });
  std::size_t ge_ni = 0, ge_sup = 0;
  for (double d : deltas) {
    if (d >= observed + margin) ++ge_ni;
    if (d >= observed) ++ge_sup;
  }
  PermutationTests out;
  for (TestResult* r : {&out.noninferiority, &out.superiority}) {
    r->statistic = observed;
    r->n_resamples = n_permutations;
    r->seed = seed;
    r->low_resample_warning = n_permutations < 100;
  }
  const double np = static_cast<double>(n_permutations);
  out.noninferiority.method = "permutation non-inferiority";
  out.noninferiority.margin = margin;
  out.noninferiority.p_value = static_cast<double>(ge_ni) / np;
  out.superiority.method = "permutation superiority";
  out.superiority.p_value = static_cast<double>(ge_sup) / np;
  return out;
}

TestResult PermTestCStat(std::span<const double> new_scores,
                         std::span<const double> ref_scores,
                         std::span<const double> time,
                         std::span<const std::uint8_t> event, double margin,
                         PermutationMode mode, std::size_t n_permutations,
                         std::uint64_t seed) {
  PermutationTests both = PermTestCStatBoth(new_scores, ref_scores, time, event,
                                            margin, n_permutations, seed);
  return mode == PermutationMode::kNonInferiority ? both.noninferiority
                                                  : both.superiority;
}

TestResult WaldOneSided(double delta, double se, double margin) {
  TestResult r;
  r.method = "wald one-sided";
  r.margin = margin;
  if (!std::isfinite(delta) || !std::isfinite(se) || se < 0.0) {
    throw ValidationError("wald test needs a finite delta and se >= 0");
  }
  if (se == 0.0) {
    r.degenerate = true;
    r.statistic = delta + margin > 0.0 ? std::numeric_limits<double>::infinity()
                                       : -std::numeric_limits<double>::infinity();
    r.p_value = delta + margin > 0.0 ? 0.0 : 1.0;
    return r;
  }
  r.statistic = (delta + margin) / se;
  r.p_value = 0.5 * std::erfc(r.statistic / std::sqrt(2.0));
  return r;
}

// ---------------------------------------------------------------------------

std::vector<EnrichmentResult> Enrichment(std::span<const double> scores,
                                         std::span<const OutcomeStatus> outcome,
                                         std::span<const double> top_fractions) {
  CheckSameSize(scores.size(), outcome.size(), "enrichment");
  CheckNoNaN(scores, "scores");
  std::vector<std::size_t> idx = Included(outcome);
  if (idx.empty()) throw ValidationError("enrichment over an empty outcome view");
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const double n = static_cast<double>(idx.size());
  std::vector<std::size_t> cum(idx.size() + 1, 0);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    cum[k + 1] = cum[k] + (outcome[idx[k]] == OutcomeStatus::kEventWithin);
  }
  if (cum.back() == 0) throw ValidationError("enrichment without events");
  const double overall = static_cast<double>(cum.back()) / n;
  std::vector<EnrichmentResult> out;
  for (double f : top_fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ValidationError("top fraction outside (0, 1]");
    std::size_t k = static_cast<std::size_t>(std::ceil(f * n - 1e-9));
    k = std::clamp<std::size_t>(k, 1, idx.size());
    const double cut = scores[idx[k - 1]];
    while (k < idx.size() && scores[idx[k]] == cut) ++k;
    EnrichmentResult r;
    r.requested_fraction = f;
    r.n_top = k;
    r.effective_fraction = static_cast<double>(k) / n;
    r.fold = (static_cast<double>(cum[k]) / static_cast<double>(k)) / overall;
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<Subgroup> DefaultSubgroups() {
  return {
      {"never_smoked", [](const CohortRow& r) { return r.smoker && !*r.smoker; }},
      {"smoker", [](const CohortRow& r) { return r.smoker && *r.smoker; }},
      {"age_lt_55", [](const CohortRow& r) { return r.age && *r.age < 55.0; }},
      {"age_ge_55", [](const CohortRow& r) { return r.age && *r.age >= 55.0; }},
      {"female", [](const CohortRow& r) { return r.female && *r.female; }},
      {"male", [](const CohortRow& r) { return r.female && !*r.female; }},
      {"hba1c_le_48", [](const CohortRow& r) { return r.hba1c && *r.hba1c <= 48.0; }},
      {"hba1c_gt_48", [](const CohortRow& r) { return r.hba1c && *r.hba1c > 48.0; }},
      {"no_hypertension",
       [](const CohortRow& r) { return r.hypertension && !*r.hypertension; }},
      {"hypertension",
       [](const CohortRow& r) { return r.hypertension && *r.hypertension; }},
  };
}

std::vector<SubgroupReport> SubgroupAnalysis(const std::vector<ScoredModel>& models,
                                             const std::vector<CohortRow>& rows,
                                             const std::vector<Subgroup>& subgroups,
                                             const SubgroupOptions& options) {
  for (const auto& m : models) {
    CheckSameSize(m.risk.size(), rows.size(), "subgroup scores");
  }
  if (!models.empty() && options.reference_index >= models.size()) {
    throw ValidationError("reference model index out of range");
  }
  std::vector<SubgroupReport> out;
  for (std::size_t g = 0; g < subgroups.size(); ++g) {
    SubgroupReport rep;
    rep.subgroup = subgroups[g].name;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (subgroups[g].member(rows[i])) idx.push_back(i);
    }
    rep.n = idx.size();
    std::vector<double> time, time_c;
    std::vector<std::uint8_t> event, event_c;
    for (std::size_t i : idx) {
      time.push_back(rows[i].followup_years());
      event.push_back(rows[i].event);
    }
    time_c = time;
    event_c = event;
    CensorAtHorizon(time_c, event_c, options.horizon_years);
    const auto outcome = BinaryOutcomeView(time, event, options.horizon_years);
    bool has_event = false, has_free = false;
    for (auto s : outcome) {
      has_event |= s == OutcomeStatus::kEventWithin;
      has_free |= s == OutcomeStatus::kEventFree;
    }
    if (idx.empty() || !has_event || !has_free) {
      rep.skipped = true;
      out.push_back(std::move(rep));
      continue;
    }
    const std::size_t bins = idx.size() < options.quintile_cutoff ? 5 : 10;
    std::vector<std::vector<double>> sub(models.size());
    for (std::size_t m = 0; m < models.size(); ++m) {
      for (std::size_t i : idx) sub[m].push_back(models[m].risk[i]);
    }
    for (std::size_t m = 0; m < models.size(); ++m) {
      SubgroupModelReport mr;
      mr.model = models[m].name;
      try {
        mr.c_statistic = HarrellC(sub[m], time_c, event_c);
      } catch (const ValidationError&) {
      }
      if (m != options.reference_index) {
        try {
          PermutationTests t = PermTestCStatBoth(
              sub[m], sub[options.reference_index], time_c, event_c,
              options.margin, options.n_permutations, DeriveKey(options.seed, g, m));
          mr.noninferiority = t.noninferiority;
          mr.superiority = t.superiority;
        } catch (const ValidationError&) {
        }
      }
      try {
        mr.confusion = BinaryConfusion(sub[m], models[m].threshold, outcome);
      } catch (const ValidationError&) {
      }
      mr.average_predicted_risk =
          std::accumulate(sub[m].begin(), sub[m].end(), 0.0) /
          static_cast<double>(sub[m].size());
      if (!models[m].binary_score && idx.size() >= bins) {
        try {
          mr.calibration = Calibration(sub[m], time, event, bins, options.horizon_years);
        } catch (const ValidationError&) {
        }
      }
      rep.models.push_back(std::move(mr));
    }
    out.push_back(std::move(rep));
  }
  return out;
}

}  // namespace ppgrisk
