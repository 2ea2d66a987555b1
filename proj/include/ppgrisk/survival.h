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

// Ridge-penalized Cox proportional hazards: feature sets for every compared
// model, Newton-Raphson fitting with Breslow ties, Breslow baseline hazard,
// absolute risk, hazard ratios at a reference age and Wald tests.

#ifndef PPGRISK_SURVIVAL_H_
#define PPGRISK_SURVIVAL_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ppgrisk/cohort.h"
#include "ppgrisk/errors.h"
#include "ppgrisk/signal.h"

namespace ppgrisk {

inline constexpr double kDefaultRidgeLambda = 3e-5;
inline constexpr double kDefaultHorizonYears = 10.0;
inline constexpr double kHazardRatioReferenceAge = 63.0;
inline constexpr std::size_t kDlsFeatureCount = 5;

// Covariates and age interactions of one survival model. Every interaction
// is "<covariate> x age" and refers to a declared covariate.
struct ModelSpec {
  std::string name;
  std::vector<std::string> covariates;
  std::vector<std::string> interactions;

  // SBP-140 is a fixed rule (score = 1 if sbp >= 140) without a Cox fit.
  bool IsThresholdRule() const { return name == "sbp140"; }
  bool UsesDls() const;
  bool UsesMorphology() const;

  // Throws ValidationError for an unknown name.
  static ModelSpec Named(std::string_view name);
  // Arbitrary covariate list; validates interactions.
  static ModelSpec Custom(std::string name, std::vector<std::string> covariates,
                          std::vector<std::string> interactions = {});

  // Covariate names followed by "<covariate>:age" interaction names.
  std::vector<std::string> DesignNames() const;
  std::size_t DesignWidth() const {
    return covariates.size() + interactions.size();
  }
};

// metadata, office_refit_who, lab_refit_who, metadata_ppg_morph, dls,
// dls_plus, dls_plus_plus, full, sbp140, smoking_only, office_no_smoking,
// dls_no_smoking.
const std::vector<std::string>& ModelNames();

// Raw (unscaled) covariate values in ModelSpec::covariates order.
struct FeatureVector {
  std::vector<std::string> names;
  std::vector<double> values;
};

// Optional per-subject inputs beyond the cohort row.
struct FeatureSources {
  const MorphologyFeatures* morphology = nullptr;
  const std::array<double, kDlsFeatureCount>* dls = nullptr;
  // Falls back to CohortRow::ppg_hr when unset.
  std::optional<double> ppg_hr;
};

// Throws MissingCovariateError listing every unavailable covariate. For the
// morphology set, features that do not exist because the notch is absent are
// encoded as 0 next to the notch_absent indicator.
FeatureVector BuildFeatures(const ModelSpec& spec, const CohortRow& row,
                            const FeatureSources& sources = {});

class MissingCovariateError : public ValidationError {
 public:
  explicit MissingCovariateError(std::vector<std::string> missing);
  const std::vector<std::string>& missing() const { return missing_; }

 private:
  std::vector<std::string> missing_;
};

// Train-split statistics for each raw covariate. Columns with zero spread
// keep sd = 0 and map to a constant-zero design column.
struct Scaler {
  std::vector<double> mean;
  std::vector<double> sd;

  static Scaler Fit(const Eigen::MatrixXd& raw);
};

// Standardized covariates followed by z(covariate) * z(age) interactions.
Eigen::MatrixXd DesignMatrix(const ModelSpec& spec, const Scaler& scaler,
                             const Eigen::MatrixXd& raw);

// Log partial likelihood with Breslow ties,
//   l(b) = sum over event times t_k [ sum_{i in D_k} eta_i
//                                     - d_k log sum_{j: t_j >= t_k} e^eta_j ],
// and its gradient and Hessian.
struct PartialLikelihood {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};
PartialLikelihood CoxPartialLikelihood(const Eigen::MatrixXd& design,
                                       std::span<const double> times,
                                       std::span<const std::uint8_t> events,
                                       const Eigen::VectorXd& beta,
                                       bool with_derivatives = true);

struct CoxOptions {
  double tolerance = 1e-9;  // on max |delta beta|
  int max_iterations = 100;
  int max_step_halvings = 40;
};

struct CoxFit {
  ModelSpec spec;
  Scaler scaler;
  Eigen::VectorXd beta;
  Eigen::MatrixXd covariance;
  // (event time, H0(t)) steps; H0 is 0 before the first entry.
  std::vector<std::pair<double, double>> baseline_cumhaz;
  double ridge_lambda = 0.0;
  bool converged = false;
  int iterations = 0;
  double penalized_loglik = 0.0;
  double max_followup = 0.0;
  std::vector<double> loglik_trace;

  double CumulativeHazard(double t) const;
  Eigen::VectorXd LinearPredictor(const Eigen::MatrixXd& raw) const;
};

// Maximizes l(b) - lambda |b|^2 / 2 over the standardized design by
// Newton-Raphson with step halving from b = 0. Times are in years.
// Throws ValidationError without events, NumericalError on a non-finite
// likelihood (message carries the iteration trace).
CoxFit FitCox(const ModelSpec& spec, const Eigen::MatrixXd& raw,
              std::span<const double> times,
              std::span<const std::uint8_t> events, double lambda,
              const CoxOptions& options = {});

// Unpenalized partial log-likelihood of an existing fit on other data, used
// for ridge selection on the tune split.
double HeldOutLogLikelihood(const CoxFit& fit, const Eigen::MatrixXd& raw,
                            std::span<const double> times,
                            std::span<const std::uint8_t> events);

struct RiskScore {
  double eta = 0.0;
  double risk = 0.0;
  // Horizon past the last training follow-up; H0 held at its last value.
  bool extrapolated = false;
};

// risk = 1 - exp(-H0(horizon) exp(eta)).
RiskScore PredictRisk(const CoxFit& fit, std::span<const double> features,
                      double horizon_years = kDefaultHorizonYears);

struct HazardRatio {
  double hr = 1.0;
  double lo = 1.0;
  double hi = 1.0;
  double log_hr = 0.0;
  double se = 0.0;
};

// exp(b_main + b_int z(reference_age)) per 1-SD increase, with a delta-method
// 95% CI from the stored covariance.
HazardRatio HazardRatioAtAge(const CoxFit& fit, std::string_view covariate,
                             double reference_age = kHazardRatioReferenceAge);

struct WaldTest {
  std::string name;
  double beta = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p_value = 1.0;
  bool degenerate = false;
};

std::vector<WaldTest> WaldPValues(const CoxFit& fit);

// Text format: "ppgrisk-coxfit 1", then keyword lines (model, covariates,
// interactions, scaler, lambda, ...), matrix rows and "baseline <n>" pairs.
void WriteCoxFit(std::ostream& out, const CoxFit& fit);
CoxFit ReadCoxFit(std::istream& in);

}  // namespace ppgrisk

#endif  // PPGRISK_SURVIVAL_H_
