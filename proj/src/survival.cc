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

#include "ppgrisk/survival.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "text.h"

namespace ppgrisk {

using internal::FormatDouble;

namespace {

// Function-local statics: specs may be built during static initialization
// of other translation units.
const std::vector<std::string>& MetadataNames() {
  static const std::vector<std::string> v = {"age", "sex", "male_smoker",
                                             "female_smoker"};
  return v;
}
const std::vector<std::string>& DlsFeatureNames() {
  static const std::vector<std::string> v = {"ppg_1", "ppg_2", "ppg_3",
                                             "ppg_4", "ppg_5"};
  return v;
}
const std::vector<std::string>& MorphFeatureNames() {
  static const std::vector<std::string> v = {
      "ri", "dt_s", "peak_idx", "notch_idx", "shoulder_idx", "notch_absent",
      "si_mps"};
  return v;
}

std::vector<std::string> Concat(
    std::initializer_list<std::vector<std::string>> parts) {
  std::vector<std::string> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

bool Contains(const std::vector<std::string>& v, std::string_view s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::size_t IndexOf(const std::vector<std::string>& v, std::string_view s) {
  return static_cast<std::size_t>(std::find(v.begin(), v.end(), s) - v.begin());
}

std::optional<double> Flag(const std::optional<bool>& b) {
  if (!b) return std::nullopt;
  return *b ? 1.0 : 0.0;
}

std::optional<double> CovariateValue(const std::string& name,
                                     const CohortRow& row,
                                     const FeatureSources& src) {
  if (name == "age") return row.age;
  if (name == "sex") return Flag(row.female);
  if (name == "smoker") return Flag(row.smoker);
  if (name == "male_smoker" || name == "female_smoker") {
    if (!row.smoker || !row.female) return std::nullopt;
    const bool female = name == "female_smoker";
    return (*row.smoker && *row.female == female) ? 1.0 : 0.0;
  }
  if (name == "height") return row.height;
  if (name == "bmi") return row.bmi;
  if (name == "sbp") return row.sbp;
  if (name == "total_cholesterol") return row.total_cholesterol;
  if (name == "glucose") return row.glucose;
  if (name == "hba1c") return row.hba1c;
  if (name == "hypertension") return Flag(row.hypertension);
  if (name == "ppg_hr") return src.ppg_hr ? src.ppg_hr : row.ppg_hr;
  if (name.starts_with("ppg_")) {
    if (!src.dls) return std::nullopt;
    const std::size_t k = IndexOf(DlsFeatureNames(), name);
    return (*src.dls)[k];
  }
  if (!src.morphology) return std::nullopt;
  const MorphologyFeatures& m = *src.morphology;
  if (name == "ri") return m.reflection_index.value_or(0.0);
  if (name == "dt_s") return m.peak_to_peak_time.value_or(0.0);
  if (name == "peak_idx") return static_cast<double>(m.peak_position);
  if (name == "notch_idx") {
    return static_cast<double>(m.notch_position.value_or(0));
  }
  if (name == "shoulder_idx") {
    return static_cast<double>(m.shoulder_position.value_or(0));
  }
  if (name == "notch_absent") return m.notch_absent ? 1.0 : 0.0;
  if (name == "si_mps") return m.stiffness_index.value_or(0.0);
  return std::nullopt;
}

bool IsKnownCovariate(const std::string& name) {
  static const std::vector<std::string> known = Concat(
      {MetadataNames(), DlsFeatureNames(), MorphFeatureNames(),
       {"smoker", "height", "bmi", "sbp", "total_cholesterol", "glucose",
        "hba1c", "hypertension", "ppg_hr"}});
  return Contains(known, name);
}

std::string JoinNames(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) {
    if (!out.empty()) out += ", ";
    out += n;
  }
  return out;
}

}  // namespace

const std::vector<std::string>& ModelNames() {
  static const std::vector<std::string> names = {
      "metadata", "office_refit_who", "lab_refit_who", "metadata_ppg_morph",
      "dls", "dls_plus", "dls_plus_plus", "full", "sbp140", "smoking_only",
      "office_no_smoking", "dls_no_smoking"};
  return names;
}

bool ModelSpec::UsesDls() const { return Contains(covariates, "ppg_1"); }

bool ModelSpec::UsesMorphology() const { return Contains(covariates, "ri"); }

ModelSpec ModelSpec::Custom(std::string name, std::vector<std::string> covariates,
                            std::vector<std::string> interactions) {
  for (const auto& c : covariates) {
    if (!IsKnownCovariate(c)) {
      throw ValidationError("unknown covariate \"" + c + "\"");
    }
  }
  for (const auto& c : interactions) {
    if (!Contains(covariates, c)) {
      throw ValidationError("interaction references undeclared covariate \"" +
                            c + "\"");
    }
    if (!Contains(covariates, "age")) {
      throw ValidationError("age interactions require an age covariate");
    }
  }
  return ModelSpec{std::move(name), std::move(covariates),
                   std::move(interactions)};
}

ModelSpec ModelSpec::Named(std::string_view name) {
  const std::string n(name);
  const std::vector<std::string> dls = Concat({MetadataNames(), DlsFeatureNames(), {"ppg_hr"}});
  if (n == "metadata") return Custom(n, MetadataNames(), {"male_smoker"});
  if (n == "office_refit_who") {
    return Custom(n, Concat({MetadataNames(), {"bmi", "sbp"}}),
                  {"male_smoker", "bmi", "sbp"});
  }
  if (n == "lab_refit_who") {
    return Custom(n, Concat({MetadataNames(), {"sbp", "total_cholesterol", "glucose"}}),
                  {"male_smoker", "sbp", "total_cholesterol", "glucose"});
  }
  if (n == "metadata_ppg_morph") {
    return Custom(n, Concat({MetadataNames(), MorphFeatureNames(), {"ppg_hr"}}),
                  {"male_smoker"});
  }
  if (n == "dls") return Custom(n, dls, {"male_smoker"});
  if (n == "dls_plus") {
    return Custom(n, Concat({dls, {"bmi"}}), {"male_smoker", "bmi"});
  }
  if (n == "dls_plus_plus") {
    return Custom(n, Concat({dls, {"bmi", "sbp"}}), {"male_smoker", "bmi", "sbp"});
  }
  if (n == "full") {
    return Custom(n,
                  Concat({MetadataNames(),
                          {"bmi", "sbp", "total_cholesterol", "glucose", "hba1c",
                           "hypertension"}}),
                  {"male_smoker", "bmi", "sbp"});
  }
  if (n == "sbp140") return Custom(n, {"sbp"});
  if (n == "smoking_only") return Custom(n, {"smoker"});
  if (n == "office_no_smoking") {
    return Custom(n, {"age", "sex", "bmi", "sbp"}, {"bmi", "sbp"});
  }
  if (n == "dls_no_smoking") {
    return Custom(n, Concat({{"age", "sex"}, DlsFeatureNames(), {"ppg_hr"}}));
  }
  throw ValidationError("unknown model \"" + n + "\"");
}

std::vector<std::string> ModelSpec::DesignNames() const {
  std::vector<std::string> out = covariates;
  for (const auto& c : interactions) out.push_back(c + ":age");
  return out;
}

MissingCovariateError::MissingCovariateError(std::vector<std::string> missing)
    : ValidationError("missing " + JoinNames(missing)),
      missing_(std::move(missing)) {}

FeatureVector BuildFeatures(const ModelSpec& spec, const CohortRow& row,
                            const FeatureSources& sources) {
  FeatureVector fv;
  fv.names = spec.covariates;
  fv.values.reserve(spec.covariates.size());
  std::vector<std::string> missing;
  for (const auto& name : spec.covariates) {
    auto v = CovariateValue(name, row, sources);
    if (!v) {
      missing.push_back(name);
      fv.values.push_back(0.0);
    } else {
      fv.values.push_back(*v);
    }
  }
  if (!missing.empty()) throw MissingCovariateError(std::move(missing));
  return fv;
}

Scaler Scaler::Fit(const Eigen::MatrixXd& raw) {
  Scaler s;
  const auto n = raw.rows();
  s.mean.resize(raw.cols());
  s.sd.resize(raw.cols());
  for (Eigen::Index c = 0; c < raw.cols(); ++c) {
    const double mean = raw.col(c).mean();
    double ss = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
      const double d = raw(r, c) - mean;
      ss += d * d;
    }
    s.mean[c] = mean;
    s.sd[c] = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  }
  return s;
}

Eigen::MatrixXd DesignMatrix(const ModelSpec& spec, const Scaler& scaler,
                             const Eigen::MatrixXd& raw) {
  const auto p = static_cast<Eigen::Index>(spec.covariates.size());
  if (raw.cols() != p || static_cast<Eigen::Index>(scaler.mean.size()) != p) {
    throw ValidationError("design: feature width does not match model " +
                          spec.name);
  }
  Eigen::MatrixXd design(raw.rows(), spec.DesignWidth());
  for (Eigen::Index c = 0; c < p; ++c) {
    if (scaler.sd[c] > 0.0) {
      design.col(c) = (raw.col(c).array() - scaler.mean[c]) / scaler.sd[c];
    } else {
      design.col(c).setZero();
    }
  }
  if (!spec.interactions.empty()) {
    const auto age = static_cast<Eigen::Index>(IndexOf(spec.covariates, "age"));
    for (std::size_t k = 0; k < spec.interactions.size(); ++k) {
      const auto c =
          static_cast<Eigen::Index>(IndexOf(spec.covariates, spec.interactions[k]));
      design.col(p + static_cast<Eigen::Index>(k)) =
          design.col(c).cwiseProduct(design.col(age));
    }
  }
  return design;
}

PartialLikelihood CoxPartialLikelihood(const Eigen::MatrixXd& design,
                                       std::span<const double> times,
                                       std::span<const std::uint8_t> events,
                                       const Eigen::VectorXd& beta,
                                       bool with_derivatives) {
  const std::size_t n = times.size();
  const Eigen::Index p = design.cols();
  const Eigen::VectorXd eta = design * beta;
  const double offset = n > 0 ? eta.maxCoeff() : 0.0;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return times[a] > times[b];
  });

  PartialLikelihood out;
  if (with_derivatives) {
    out.gradient = Eigen::VectorXd::Zero(p);
    out.hessian = Eigen::MatrixXd::Zero(p, p);
  }
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(with_derivatives ? p : 0);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(with_derivatives ? p : 0,
                                             with_derivatives ? p : 0);
  Eigen::VectorXd event_x_sum = Eigen::VectorXd::Zero(with_derivatives ? p : 0);

  std::size_t k = 0;
  while (k < n) {
    std::size_t end = k;
    const double t = times[order[k]];
    double events_eta = 0.0;
    double deaths = 0.0;
    if (with_derivatives) event_x_sum.setZero();
    while (end < n && times[order[end]] == t) {
      const std::size_t i = order[end];
      const double w = std::exp(eta[i] - offset);
      s0 += w;
      if (with_derivatives) {
        const auto x = design.row(i).transpose();
        s1.noalias() += w * x;
        s2.selfadjointView<Eigen::Lower>().rankUpdate(x, w);
        if (events[i]) event_x_sum += x;
      }
      if (events[i]) {
        events_eta += eta[i];
        deaths += 1.0;
      }
      ++end;
    }
    if (deaths > 0.0) {
      out.value += events_eta - deaths * (std::log(s0) + offset);
      if (with_derivatives) {
        const Eigen::VectorXd mean = s1 / s0;
        out.gradient += event_x_sum - deaths * mean;
        Eigen::MatrixXd second = s2.selfadjointView<Eigen::Lower>();
        out.hessian -= deaths * (second / s0 - mean * mean.transpose());
      }
    }
    k = end;
  }
  return out;
}

double CoxFit::CumulativeHazard(double t) const {
  auto it = std::upper_bound(
      baseline_cumhaz.begin(), baseline_cumhaz.end(), t,
      [](double value, const std::pair<double, double>& step) {
        return value < step.first;
      });
  if (it == baseline_cumhaz.begin()) return 0.0;
  return std::prev(it)->second;
}

Eigen::VectorXd CoxFit::LinearPredictor(const Eigen::MatrixXd& raw) const {
  return DesignMatrix(spec, scaler, raw) * beta;
}

namespace {

double PenalizedValue(const Eigen::MatrixXd& design, std::span<const double> times,
                      std::span<const std::uint8_t> events,
                      const Eigen::VectorXd& beta, double lambda) {
  return CoxPartialLikelihood(design, times, events, beta, false).value -
         0.5 * lambda * beta.squaredNorm();
}

std::string Trace(const std::vector<double>& trace) {
  std::ostringstream os;
  os << "trace:";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    os << " [" << i << "] " << trace[i];
  }
  return os.str();
}

std::vector<std::pair<double, double>> BreslowBaseline(
    const Eigen::VectorXd& eta, std::span<const double> times,
    std::span<const std::uint8_t> events) {
  const std::size_t n = times.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return times[a] > times[b];
  });
  // Risk-set sums in descending time, then cumulated in ascending time.
  std::vector<std::pair<double, double>> jumps;
  double risk_sum = 0.0;
  std::size_t k = 0;
  while (k < n) {
    const double t = times[order[k]];
    double deaths = 0.0;
    while (k < n && times[order[k]] == t) {
      risk_sum += std::exp(eta[order[k]]);
      if (events[order[k]]) deaths += 1.0;
      ++k;
    }
    if (deaths > 0.0) jumps.emplace_back(t, deaths / risk_sum);
  }
  std::reverse(jumps.begin(), jumps.end());
  double cumulative = 0.0;
  for (auto& [t, h] : jumps) {
    cumulative += h;
    h = cumulative;
  }
  return jumps;
}

}  // namespace

CoxFit FitCox(const ModelSpec& spec, const Eigen::MatrixXd& raw,
              std::span<const double> times,
              std::span<const std::uint8_t> events, double lambda,
              const CoxOptions& options) {
  const std::size_t n = times.size();
  if (events.size() != n || static_cast<std::size_t>(raw.rows()) != n) {
    throw ValidationError("fit_cox: times, events and features differ in length");
  }
  if (lambda < 0.0) throw ValidationError("fit_cox: ridge lambda must be >= 0");
  if (std::none_of(events.begin(), events.end(), [](auto e) { return e != 0; })) {
    throw ValidationError("fit_cox: no events in training data for model " +
                          spec.name);
  }
  for (double t : times) {
    if (!std::isfinite(t) || t < 0.0) {
      throw ValidationError("fit_cox: invalid follow-up time");
    }
  }
  if (!raw.allFinite()) throw ValidationError("fit_cox: non-finite covariate");

  CoxFit fit;
  fit.spec = spec;
  fit.ridge_lambda = lambda;
  fit.scaler = Scaler::Fit(raw);
  const Eigen::MatrixXd design = DesignMatrix(spec, fit.scaler, raw);
  const Eigen::Index p = design.cols();
  fit.max_followup = *std::max_element(times.begin(), times.end());

  std::vector<Eigen::Index> active;
  for (Eigen::Index c = 0; c < p; ++c) {
    if (design.col(c).maxCoeff() > design.col(c).minCoeff()) active.push_back(c);
  }
  const auto q = static_cast<Eigen::Index>(active.size());

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double objective = PenalizedValue(design, times, events, beta, lambda);
  fit.loglik_trace.push_back(objective);
  if (!std::isfinite(objective)) {
    throw NumericalError("fit_cox: non-finite likelihood at start; " +
                         Trace(fit.loglik_trace));
  }

  PartialLikelihood pl;
  for (int iter = 1; iter <= options.max_iterations && q > 0; ++iter) {
    fit.iterations = iter;
    pl = CoxPartialLikelihood(design, times, events, beta, true);
    Eigen::VectorXd g(q);
    Eigen::MatrixXd info(q, q);
    for (Eigen::Index a = 0; a < q; ++a) {
      g[a] = pl.gradient[active[a]] - lambda * beta[active[a]];
      for (Eigen::Index b = 0; b < q; ++b) {
        info(a, b) = -pl.hessian(active[a], active[b]);
      }
      info(a, a) += lambda;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    Eigen::VectorXd step = ldlt.solve(g);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) {
      throw NumericalError("fit_cox: singular information matrix at iteration " +
                           std::to_string(iter) + "; " + Trace(fit.loglik_trace));
    }

    double scale = 1.0;
    Eigen::VectorXd candidate = beta;
    double candidate_objective = objective;
    bool accepted = false;
    for (int h = 0; h <= options.max_step_halvings; ++h) {
      candidate = beta;
      for (Eigen::Index a = 0; a < q; ++a) candidate[active[a]] += scale * step[a];
      candidate_objective = PenalizedValue(design, times, events, candidate, lambda);
      if (std::isfinite(candidate_objective) && candidate_objective >= objective) {
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    const double max_change = scale * step.cwiseAbs().maxCoeff();
    if (!accepted) {
      // No ascent direction left at machine precision.
      fit.converged = step.cwiseAbs().maxCoeff() < 1e-6;
      break;
    }
    beta = candidate;
    objective = candidate_objective;
    fit.loglik_trace.push_back(objective);
    if (max_change < options.tolerance) {
      fit.converged = true;
      break;
    }
  }
  if (q == 0) fit.converged = true;

  pl = CoxPartialLikelihood(design, times, events, beta, true);
  if (!std::isfinite(pl.value)) {
    throw NumericalError("fit_cox: non-finite likelihood at optimum; " +
                         Trace(fit.loglik_trace));
  }
  fit.beta = beta;
  fit.penalized_loglik = objective;
  fit.covariance = Eigen::MatrixXd::Zero(p, p);
  if (q > 0) {
    Eigen::MatrixXd info(q, q);
    for (Eigen::Index a = 0; a < q; ++a) {
      for (Eigen::Index b = 0; b < q; ++b) {
        info(a, b) = -pl.hessian(active[a], active[b]);
      }
      info(a, a) += lambda;
    }
    const Eigen::MatrixXd inv =
        info.ldlt().solve(Eigen::MatrixXd::Identity(q, q));
    for (Eigen::Index a = 0; a < q; ++a) {
      for (Eigen::Index b = 0; b < q; ++b) {
        fit.covariance(active[a], active[b]) = 0.5 * (inv(a, b) + inv(b, a));
      }
    }
  }
  fit.baseline_cumhaz = BreslowBaseline(design * beta, times, events);
  return fit;
}

double HeldOutLogLikelihood(const CoxFit& fit, const Eigen::MatrixXd& raw,
                            std::span<const double> times,
                            std::span<const std::uint8_t> events) {
  const Eigen::MatrixXd design = DesignMatrix(fit.spec, fit.scaler, raw);
  return CoxPartialLikelihood(design, times, events, fit.beta, false).value;
}

RiskScore PredictRisk(const CoxFit& fit, std::span<const double> features,
                      double horizon_years) {
  Eigen::MatrixXd raw(1, static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) {
    raw(0, static_cast<Eigen::Index>(i)) = features[i];
  }
  RiskScore score;
  score.eta = fit.LinearPredictor(raw)[0];
  const double h0 = fit.CumulativeHazard(horizon_years);
  score.risk = -std::expm1(-h0 * std::exp(score.eta));
  score.extrapolated = horizon_years > fit.max_followup;
  return score;
}

HazardRatio HazardRatioAtAge(const CoxFit& fit, std::string_view covariate,
                             double reference_age) {
  const auto& cov = fit.spec.covariates;
  if (!Contains(cov, covariate)) {
    throw ValidationError("hazard ratio: unknown covariate \"" +
                          std::string(covariate) + "\"");
  }
  const auto main = static_cast<Eigen::Index>(IndexOf(cov, covariate));
  double log_hr = fit.beta[main];
  double var = fit.covariance(main, main);
  if (Contains(fit.spec.interactions, covariate)) {
    const auto age = IndexOf(cov, "age");
    const double z = fit.scaler.sd[age] > 0.0
                         ? (reference_age - fit.scaler.mean[age]) / fit.scaler.sd[age]
                         : 0.0;
    const auto inter = static_cast<Eigen::Index>(
        cov.size() + IndexOf(fit.spec.interactions, covariate));
    log_hr += fit.beta[inter] * z;
    var += z * z * fit.covariance(inter, inter) +
           2.0 * z * fit.covariance(main, inter);
  }
  constexpr double kZ975 = 1.959963984540054;
  HazardRatio hr;
  hr.log_hr = log_hr;
  hr.se = std::sqrt(std::max(0.0, var));
  hr.hr = std::exp(log_hr);
  hr.lo = std::exp(log_hr - kZ975 * hr.se);
  hr.hi = std::exp(log_hr + kZ975 * hr.se);
  return hr;
}

std::vector<WaldTest> WaldPValues(const CoxFit& fit) {
  const auto names = fit.spec.DesignNames();
  std::vector<WaldTest> out(names.size());
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    WaldTest& w = out[k];
    w.name = names[k];
    w.beta = fit.beta[i];
    const double var = fit.covariance(i, i);
    if (!(var > 0.0)) {
      w.degenerate = true;
      w.p_value = 1.0;
      continue;
    }
    w.se = std::sqrt(var);
    w.z = w.beta / w.se;
    w.p_value = std::erfc(std::abs(w.z) / std::sqrt(2.0));
  }
  return out;
}

void WriteCoxFit(std::ostream& out, const CoxFit& fit) {
  auto names = [&out](const char* key, const std::vector<std::string>& v) {
    out << key << ' ' << v.size();
    for (const auto& s : v) out << ' ' << s;
    out << '\n';
  };
  auto values = [&out](const char* key, const auto& v) {
    out << key;
    for (double x : v) out << ' ' << FormatDouble(x);
    out << '\n';
  };
  out << "ppgrisk-coxfit 1\n";
  out << "model " << fit.spec.name << '\n';
  names("covariates", fit.spec.covariates);
  names("interactions", fit.spec.interactions);
  values("scaler_mean", fit.scaler.mean);
  values("scaler_sd", fit.scaler.sd);
  out << "lambda " << FormatDouble(fit.ridge_lambda) << '\n';
  out << "converged " << (fit.converged ? 1 : 0) << '\n';
  out << "iterations " << fit.iterations << '\n';
  out << "penalized_loglik " << FormatDouble(fit.penalized_loglik) << '\n';
  out << "max_followup " << FormatDouble(fit.max_followup) << '\n';
  out << "beta " << fit.beta.size();
  for (Eigen::Index i = 0; i < fit.beta.size(); ++i) {
    out << ' ' << FormatDouble(fit.beta[i]);
  }
  out << '\n';
  out << "covariance " << fit.covariance.rows() << '\n';
  for (Eigen::Index r = 0; r < fit.covariance.rows(); ++r) {
    for (Eigen::Index c = 0; c < fit.covariance.cols(); ++c) {
      out << (c ? " " : "") << FormatDouble(fit.covariance(r, c));
    }
    out << '\n';
  }
  out << "baseline " << fit.baseline_cumhaz.size() << '\n';
  for (const auto& [t, h] : fit.baseline_cumhaz) {
    out << FormatDouble(t) << ' ' << FormatDouble(h) << '\n';
  }
}

namespace {

class TokenReader {
 public:
  explicit TokenReader(std::istream& in) : in_(in) {}

  void Expect(const std::string& word) {
    const std::string got = Word();
    if (got != word) {
      throw ValidationError("cox fit file: expected \"" + word + "\", got \"" +
                            got + "\"");
    }
  }
  std::string Word() {
    std::string s;
    if (!(in_ >> s)) throw ValidationError("cox fit file: truncated");
    return s;
  }
  double Number() {
    const std::string s = Word();
    // Accept non-finite spellings that to_chars may emit.
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
    auto v = internal::ParseDouble(s);
    if (!v) throw ValidationError("cox fit file: bad number \"" + s + "\"");
    return *v;
  }
  std::size_t Count() {
    const double v = Number();
    if (v < 0 || v != std::floor(v)) {
      throw ValidationError("cox fit file: bad count");
    }
    return static_cast<std::size_t>(v);
  }
  std::vector<std::string> Names() {
    std::vector<std::string> out(Count());
    for (auto& s : out) s = Word();
    return out;
  }
  std::vector<double> Numbers(std::size_t n) {
    std::vector<double> out(n);
    for (auto& x : out) x = Number();
    return out;
  }

 private:
  std::istream& in_;
};

}  // namespace

CoxFit ReadCoxFit(std::istream& in) {
  TokenReader r(in);
  r.Expect("ppgrisk-coxfit");
  r.Expect("1");
  CoxFit fit;
  r.Expect("model");
  const std::string name = r.Word();
  r.Expect("covariates");
  auto covariates = r.Names();
  r.Expect("interactions");
  auto interactions = r.Names();
  fit.spec = ModelSpec::Custom(name, std::move(covariates), std::move(interactions));
  const std::size_t p = fit.spec.covariates.size();
  r.Expect("scaler_mean");
  fit.scaler.mean = r.Numbers(p);
  r.Expect("scaler_sd");
  fit.scaler.sd = r.Numbers(p);
  r.Expect("lambda");
  fit.ridge_lambda = r.Number();
  r.Expect("converged");
  fit.converged = r.Number() != 0.0;
  r.Expect("iterations");
  fit.iterations = static_cast<int>(r.Count());
  r.Expect("penalized_loglik");
  fit.penalized_loglik = r.Number();
  r.Expect("max_followup");
  fit.max_followup = r.Number();
  r.Expect("beta");
  const std::size_t width = r.Count();
  if (width != fit.spec.DesignWidth()) {
    throw ValidationError("cox fit file: beta width does not match model");
  }
  fit.beta.resize(static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < width; ++i) fit.beta[static_cast<Eigen::Index>(i)] = r.Number();
  r.Expect("covariance");
  if (r.Count() != width) {
    throw ValidationError("cox fit file: covariance size does not match model");
  }
  fit.covariance.resize(static_cast<Eigen::Index>(width),
                        static_cast<Eigen::Index>(width));
  for (Eigen::Index a = 0; a < fit.covariance.rows(); ++a) {
    for (Eigen::Index b = 0; b < fit.covariance.cols(); ++b) {
      fit.covariance(a, b) = r.Number();
    }
  }
  r.Expect("baseline");
  const std::size_t steps = r.Count();
  fit.baseline_cumhaz.resize(steps);
  for (auto& [t, h] : fit.baseline_cumhaz) {
    t = r.Number();
    h = r.Number();
  }
  return fit;
}

}  // namespace ppgrisk
