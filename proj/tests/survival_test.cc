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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "ppgrisk/rng.h"
#include "ppgrisk/survival.h"

using namespace ppgrisk;

namespace {

// Breslow log partial likelihood for one standardized covariate, written
// out pair by pair.
double BruteLogLik(const std::vector<double>& z, const std::vector<double>& t,
                   const std::vector<std::uint8_t>& e, double b) {
  double ll = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!e[i]) continue;
    double denom = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      if (t[j] >= t[i]) denom += std::exp(b * z[j]);
    }
    ll += b * z[i] - std::log(denom);
  }
  return ll;
}

std::vector<double> Standardize(const std::vector<double>& x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(x.size() - 1));
  std::vector<double> z;
  for (double v : x) z.push_back((v - mean) / sd);
  return z;
}

double GridArgmax(const std::vector<double>& x, const std::vector<double>& t,
                  const std::vector<std::uint8_t>& e, double lambda) {
  const auto z = Standardize(x);
  double best = -1e300, arg = 0.0;
  for (int k = -50000; k <= 50000; ++k) {
    const double b = k * 1e-4;
    const double v = BruteLogLik(z, t, e, b) - 0.5 * lambda * b * b;
    if (v > best) {
      best = v;
      arg = b;
    }
  }
  return arg;
}

Eigen::MatrixXd AsMatrix(const std::vector<double>& x) {
  Eigen::MatrixXd m(x.size(), 1);
  for (std::size_t i = 0; i < x.size(); ++i) m(i, 0) = x[i];
  return m;
}

const ModelSpec kOne = ModelSpec::Custom("one", {"bmi"});

CohortRow FullRow() {
  CohortRow r;
  r.subject_id = "r";
  r.site = "A";
  r.age = 60.0;
  r.female = false;
  r.smoker = true;
  r.height = 175.0;
  r.bmi = 28.0;
  r.sbp = 145.0;
  r.total_cholesterol = 5.0;
  r.glucose = 5.0;
  r.hba1c = 40.0;
  r.hypertension = true;
  r.ppg_hr = 66.0;
  return r;
}

}  // namespace

TEST_CASE("six subject ridge fit matches the grid oracle") {
  const std::vector<double> x = {0.3, -1.2, 2.0, 0.7, -0.4, 1.1};
  const std::vector<double> t = {2.0, 5.0, 1.0, 3.5, 6.0, 4.0};
  const std::vector<std::uint8_t> e = {1, 0, 1, 1, 0, 1};
  for (double lambda : {0.0, 0.1, 1.0}) {
    const CoxFit fit = FitCox(kOne, AsMatrix(x), t, e, lambda);
    CHECK(fit.converged);
    CHECK(std::abs(fit.beta[0] - GridArgmax(x, t, e, lambda)) <= 2e-4);
  }
}

TEST_CASE("gradient and hessian match central differences") {
  KeyedRng r(4);
  const int n = 40;
  Eigen::MatrixXd design(n, 3);
  std::vector<double> t(n);
  std::vector<std::uint8_t> e(n);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) design(i, c) = r.Normal();
    // Rounded times give tied event groups.
    t[i] = std::round(r.Exponential(1.0) * 4.0) / 4.0;
    e[i] = r.Uniform() < 0.7;
  }
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd b(3);
    for (int c = 0; c < 3; ++c) b[c] = r.Normal(0.0, 0.5);
    const auto pl = CoxPartialLikelihood(design, t, e, b);
    const double h = 1e-5;
    for (int c = 0; c < 3; ++c) {
      Eigen::VectorXd up = b, dn = b;
      up[c] += h;
      dn[c] -= h;
      const auto pu = CoxPartialLikelihood(design, t, e, up);
      const auto pd = CoxPartialLikelihood(design, t, e, dn);
      const double g = (pu.value - pd.value) / (2.0 * h);
      CHECK(std::abs(g - pl.gradient[c]) <= 1e-6 * std::max(1.0, std::abs(g)));
      for (int k = 0; k < 3; ++k) {
        const double hk = (pu.gradient[k] - pd.gradient[k]) / (2.0 * h);
        CHECK(std::abs(hk - pl.hessian(c, k)) <= 1e-6 * std::max(1.0, std::abs(hk)));
      }
    }
  }
}

TEST_CASE("unpenalized fits without ties match the grid oracle") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    KeyedRng r(seed, 77);
    const std::size_t n = 8;
    std::vector<double> x(n), t(n);
    std::vector<std::uint8_t> e(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = r.Normal();
      t[i] = static_cast<double>(i + 1) + 0.1 * r.Uniform();
      e[i] = 1;
    }
    // Alternate labels keep the likelihood bounded (no perfect ordering).
    std::swap(t[1], t[6]);
    std::swap(t[3], t[4]);
    e[2] = 0;
    const CoxFit fit = FitCox(kOne, AsMatrix(x), t, e, 0.0);
    const double grid = GridArgmax(x, t, e, 0.0);
    if (std::abs(grid) < 4.9) CHECK(std::abs(fit.beta[0] - grid) <= 1e-3);
  }
}

TEST_CASE("constant covariate gets a zero coefficient") {
  const std::vector<double> t = {1, 2, 3, 4, 5};
  const std::vector<std::uint8_t> e = {1, 1, 0, 1, 1};
  Eigen::MatrixXd raw(5, 2);
  raw << 1, 7, 2, 7, 0, 7, 3, 7, 1, 7;
  const CoxFit fit = FitCox(ModelSpec::Custom("c", {"bmi", "sbp"}), raw, t, e, 1e-5);
  CHECK(fit.beta[1] == 0.0);
  CHECK(fit.scaler.sd[1] == 0.0);
}

TEST_CASE("huge penalty gives the Nelson-Aalen baseline") {
  const std::vector<double> x = {0.3, -1.2, 2.0, 0.7, -0.4, 1.1};
  const std::vector<double> t = {2.0, 5.0, 1.0, 3.5, 6.0, 4.0};
  const std::vector<std::uint8_t> e = {1, 0, 1, 1, 0, 1};
  const CoxFit fit = FitCox(kOne, AsMatrix(x), t, e, 1e6);
  CHECK(std::abs(fit.beta[0]) < 1e-3);
  // Event times 1, 2, 3.5, 4 with 6, 5, 4, 3 at risk.
  const double na[] = {1.0 / 6, 1.0 / 6 + 1.0 / 5, 1.0 / 6 + 1.0 / 5 + 1.0 / 4,
                       1.0 / 6 + 1.0 / 5 + 1.0 / 4 + 1.0 / 3};
  REQUIRE(fit.baseline_cumhaz.size() == 4);
  for (int k = 0; k < 4; ++k) {
    CHECK(fit.baseline_cumhaz[k].second == doctest::Approx(na[k]).epsilon(1e-5));
  }
}

TEST_CASE("four subject Breslow baseline and prediction by hand") {
  const std::vector<double> x = {0.0, 1.0, 0.0, 1.0};
  const std::vector<double> t = {1.0, 2.0, 3.0, 4.0};
  const std::vector<std::uint8_t> e = {1, 1, 0, 1};
  const CoxFit fit = FitCox(kOne, AsMatrix(x), t, e, 0.5);
  // z = (x - 0.5) / sd, sd = sqrt(1/3).
  const double sd = std::sqrt(1.0 / 3.0);
  const double b = fit.beta[0];
  const double lo = std::exp(b * -0.5 / sd), hi = std::exp(b * 0.5 / sd);
  const double h1 = 1.0 / (2 * lo + 2 * hi);
  const double h2 = h1 + 1.0 / (lo + 2 * hi);
  const double h4 = h2 + 1.0 / hi;
  REQUIRE(fit.baseline_cumhaz.size() == 3);
  CHECK(fit.baseline_cumhaz[0].first == 1.0);
  CHECK(fit.baseline_cumhaz[0].second == doctest::Approx(h1));
  CHECK(fit.baseline_cumhaz[1].second == doctest::Approx(h2));
  CHECK(fit.baseline_cumhaz[2].second == doctest::Approx(h4));
  CHECK(fit.CumulativeHazard(0.5) == 0.0);
  CHECK(fit.CumulativeHazard(3.0) == doctest::Approx(h2));

  const double feature = 1.0;
  const RiskScore s = PredictRisk(fit, std::span(&feature, 1), 2.5);
  CHECK(s.eta == doctest::Approx(b * 0.5 / sd));
  CHECK(s.risk == doctest::Approx(1.0 - std::exp(-h2 * hi)));
  CHECK_FALSE(s.extrapolated);
  CHECK(PredictRisk(fit, std::span(&feature, 1), 10.0).extrapolated);
}

TEST_CASE("empty hazard and null coefficients") {
  CoxFit fit;
  fit.spec = kOne;
  fit.scaler.mean = {0.0};
  fit.scaler.sd = {1.0};
  fit.beta = Eigen::VectorXd::Zero(1);
  fit.covariance = Eigen::MatrixXd::Identity(1, 1);
  fit.baseline_cumhaz = {{11.0, 0.2}};
  fit.max_followup = 12.0;
  for (double v : {-2.0, 0.0, 3.0}) CHECK(PredictRisk(fit, std::span(&v, 1)).risk == 0.0);
  fit.baseline_cumhaz = {{4.0, 0.2}};
  for (double v : {-2.0, 0.0, 3.0}) {
    CHECK(PredictRisk(fit, std::span(&v, 1)).risk == doctest::Approx(1.0 - std::exp(-0.2)));
  }
  const auto hr = HazardRatioAtAge(fit, "bmi");
  CHECK(hr.hr == 1.0);
  CHECK(hr.lo < 1.0);
  CHECK(hr.hi > 1.0);
  const auto w = WaldPValues(fit);
  CHECK(w[0].p_value == 1.0);
  fit.beta[0] = 1.959963984540054;
  CHECK(WaldPValues(fit)[0].p_value == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(HazardRatioAtAge(fit, "bmi").hr == doctest::Approx(std::exp(fit.beta[0])));
  fit.covariance(0, 0) = 0.0;
  CHECK(WaldPValues(fit)[0].degenerate);
  CHECK(WaldPValues(fit)[0].p_value == 1.0);
  CHECK_THROWS_AS(HazardRatioAtAge(fit, "sbp"), ValidationError);
}

TEST_CASE("fit properties on a random cohort") {
  KeyedRng r(12);
  const int n = 400;
  Eigen::MatrixXd raw(n, 3);
  std::vector<double> t(n);
  std::vector<std::uint8_t> e(n);
  for (int i = 0; i < n; ++i) {
    raw(i, 0) = 40.0 + 34.0 * r.Uniform();
    raw(i, 1) = r.Normal(27.0, 4.0);
    raw(i, 2) = r.Normal(137.0, 18.0);
    const double eta = 0.05 * (raw(i, 0) - 57.0) + 0.02 * (raw(i, 2) - 137.0);
    t[i] = r.Exponential(0.1 * std::exp(eta));
    e[i] = t[i] < 8.0;
    t[i] = std::min(t[i], 8.0);
  }
  const auto spec = ModelSpec::Custom("p", {"age", "bmi", "sbp"}, {"bmi"});
  const CoxFit fit = FitCox(spec, raw, t, e, 3e-5);
  CHECK(fit.converged);
  for (std::size_t k = 1; k < fit.loglik_trace.size(); ++k) {
    CHECK(fit.loglik_trace[k] >= fit.loglik_trace[k - 1]);
  }
  // Baseline jumps exactly at the distinct event times.
  std::vector<double> event_times;
  for (int i = 0; i < n; ++i) {
    if (e[i]) event_times.push_back(t[i]);
  }
  std::sort(event_times.begin(), event_times.end());
  event_times.erase(std::unique(event_times.begin(), event_times.end()), event_times.end());
  REQUIRE(fit.baseline_cumhaz.size() == event_times.size());
  for (std::size_t k = 0; k < event_times.size(); ++k) {
    CHECK(fit.baseline_cumhaz[k].first == event_times[k]);
    if (k > 0) CHECK(fit.baseline_cumhaz[k].second > fit.baseline_cumhaz[k - 1].second);
  }
  const Eigen::MatrixXd sym = fit.covariance - fit.covariance.transpose();
  CHECK(sym.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(fit.covariance).eigenvalues().minCoeff() >= 0.0);

  // Positive scaling of a raw column leaves every prediction unchanged.
  Eigen::MatrixXd scaled = raw;
  scaled.col(1) *= 3.7;
  scaled.col(2) *= 0.01;
  const CoxFit refit = FitCox(spec, scaled, t, e, 3e-5);
  const Eigen::VectorXd eta_a = fit.LinearPredictor(raw);
  const Eigen::VectorXd eta_b = refit.LinearPredictor(scaled);
  for (int i = 0; i < n; ++i) {
    CHECK(std::abs(eta_a[i] - eta_b[i]) < 1e-10);
    const std::vector<double> fa = {raw(i, 0), raw(i, 1), raw(i, 2)};
    const std::vector<double> fb = {scaled(i, 0), scaled(i, 1), scaled(i, 2)};
    CHECK(std::abs(PredictRisk(fit, fa).risk - PredictRisk(refit, fb).risk) < 1e-10);
  }

  // Risk increases with sbp, whose coefficient is positive.
  REQUIRE(fit.beta[2] > 0.0);
  double last = -1.0;
  for (double sbp = 100.0; sbp <= 180.0; sbp += 10.0) {
    const std::vector<double> f = {60.0, 27.0, sbp};
    const double risk = PredictRisk(fit, f).risk;
    CHECK(risk > last);
    last = risk;
  }

  // Interaction hazard ratio by hand.
  const double z63 = (63.0 - fit.scaler.mean[0]) / fit.scaler.sd[0];
  CHECK(HazardRatioAtAge(fit, "bmi").hr == doctest::Approx(std::exp(fit.beta[1] + fit.beta[3] * z63)));
  CHECK(HazardRatioAtAge(fit, "sbp").hr == doctest::Approx(std::exp(fit.beta[2])));

  std::stringstream io;
  WriteCoxFit(io, fit);
  const CoxFit back = ReadCoxFit(io);
  CHECK(back.spec.DesignNames() == fit.spec.DesignNames());
  CHECK((back.beta - fit.beta).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.covariance - fit.covariance).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.baseline_cumhaz == fit.baseline_cumhaz);
  CHECK(back.scaler.mean == fit.scaler.mean);
  CHECK(back.ridge_lambda == fit.ridge_lambda);
}

TEST_CASE("interaction hazard ratio recovers the generating truth") {
  KeyedRng r(31);
  const int n = 20000;
  Eigen::MatrixXd raw(n, 2);
  std::vector<double> t(n);
  std::vector<std::uint8_t> e(n);
  const double age_sd = 34.0 / std::sqrt(12.0);
  for (int i = 0; i < n; ++i) {
    raw(i, 0) = 40.0 + 34.0 * r.Uniform();
    raw(i, 1) = r.Normal(27.0, 4.0);
    const double za = (raw(i, 0) - 57.0) / age_sd, zb = (raw(i, 1) - 27.0) / 4.0;
    t[i] = r.Exponential(0.05 * std::exp(0.3 * zb + 0.1 * zb * za));
    e[i] = t[i] < 10.0;
    t[i] = std::min(t[i], 10.0);
  }
  const CoxFit fit = FitCox(ModelSpec::Custom("i", {"age", "bmi"}, {"bmi"}), raw, t, e, 3e-5);
  const double truth = 0.3 + 0.1 * (63.0 - 57.0) / age_sd;
  const auto hr = HazardRatioAtAge(fit, "bmi");
  CHECK(std::abs(hr.log_hr - truth) < 0.06);
  CHECK(hr.lo < std::exp(truth));
  CHECK(hr.hi > std::exp(truth));
}

TEST_CASE("strong effects are significant") {
  KeyedRng r(2);
  const int n = 20000;
  Eigen::MatrixXd raw(n, 1);
  std::vector<double> t(n);
  std::vector<std::uint8_t> e(n);
  for (int i = 0; i < n; ++i) {
    raw(i, 0) = r.Normal(27.0, 4.0);
    t[i] = r.Exponential(0.01 * std::exp((raw(i, 0) - 27.0) / 4.0));
    e[i] = t[i] < 10.0;
    t[i] = std::min(t[i], 10.0);
  }
  const CoxFit fit = FitCox(kOne, raw, t, e, 3e-5);
  CHECK(fit.beta[0] == doctest::Approx(1.0).epsilon(0.1));
  CHECK(WaldPValues(fit)[0].p_value < 1e-6);
}

TEST_CASE("fit rejects data without events") {
  const std::vector<double> x = {1, 2, 3};
  const std::vector<double> t = {1, 2, 3};
  const std::vector<std::uint8_t> e = {0, 0, 0};
  CHECK_THROWS_AS(FitCox(kOne, AsMatrix(x), t, e, 0.0), ValidationError);
}

TEST_CASE("feature builders follow each model's layout") {
  const CohortRow row = FullRow();
  const std::array<double, kDlsFeatureCount> dls = {0.1, 0.2, 0.3, 0.4, 0.5};
  FeatureSources src;
  src.dls = &dls;
  const auto spec = ModelSpec::Named("dls");
  const auto f = BuildFeatures(spec, row, src);
  REQUIRE(f.values.size() == 10);
  CHECK(f.names[0] == "age");
  CHECK(f.values[2] == 1.0);  // male smoker
  CHECK(f.values[3] == 0.0);  // female smoker
  CHECK(f.values[8] == 0.5);
  CHECK(f.values[9] == 66.0);
  CHECK(spec.DesignWidth() == 11);
  CHECK(spec.DesignNames().back() == "male_smoker:age");
  CHECK(spec.UsesDls());

  src.ppg_hr = 80.0;
  CHECK(BuildFeatures(spec, row, src).values[9] == 80.0);

  auto no_sbp = row;
  no_sbp.sbp.reset();
  try {
    BuildFeatures(ModelSpec::Named("office_refit_who"), no_sbp);
    FAIL("expected a missing covariate");
  } catch (const MissingCovariateError& e) {
    CHECK(e.missing() == std::vector<std::string>{"sbp"});
    CHECK(std::string(e.what()).find("missing sbp") != std::string::npos);
  }
  const auto sbp140 = ModelSpec::Named("sbp140");
  CHECK(sbp140.IsThresholdRule());
  CHECK(BuildFeatures(sbp140, row).values == std::vector<double>{145.0});

  CHECK_THROWS_AS(BuildFeatures(spec, row), MissingCovariateError);
  CHECK_THROWS_AS(ModelSpec::Named("ecg"), ValidationError);
  CHECK_THROWS_AS(ModelSpec::Custom("x", {"bmi"}, {"sbp"}), ValidationError);
  for (const auto& name : ModelNames()) CHECK(ModelSpec::Named(name).name == name);
  CHECK(ModelNames().size() == 12);

  MorphologyFeatures m;
  m.peak_position = 20;
  m.notch_absent = true;
  FeatureSources morph;
  morph.morphology = &m;
  const auto mf = BuildFeatures(ModelSpec::Named("metadata_ppg_morph"), row, morph);
  CHECK(mf.values[4] == 0.0);  // ri absent
  CHECK(mf.values[6] == 20.0);
  CHECK(mf.values[9] == 1.0);  // notch_absent
}
