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

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "ppgrisk/encoder.h"
#include "ppgrisk/errors.h"
#include "ppgrisk/pca.h"
#include "ppgrisk/rng.h"
#include "ppgrisk/signal.h"

using namespace ppgrisk;

namespace {

EncoderConfig SmallConfig() {
  EncoderConfig c;
  c.input_length = 24;
  c.blocks = 3;
  c.channels = {3, 4, 6};
  c.embedding_dim = 6;
  c.batch_size = 8;
  c.calibration_samples = 16;
  return c;
}

std::vector<std::vector<double>> RandomWaveforms(std::uint64_t seed, std::size_t n,
                                                 std::size_t length) {
  std::vector<std::vector<double>> out(n, std::vector<double>(length));
  for (std::size_t i = 0; i < n; ++i) {
    KeyedRng r(seed, i);
    for (auto& v : out[i]) v = r.Uniform();
  }
  return out;
}

// Initialized net with every trainable value perturbed so no path is
// trivially flat.
EncoderParams RandomNet(std::uint64_t seed) {
  const EncoderConfig c = SmallConfig();
  EncoderParams p = InitParams(c, RandomWaveforms(seed, 16, c.input_length));
  KeyedRng r(seed, 99);
  for (const auto& t : p.tensors) {
    if (!t.trainable) continue;
    for (double& v : p.Slice(t)) v += r.Normal(0.0, 0.2);
  }
  return p;
}

ProxyTargets AllTargets(std::uint64_t seed) {
  KeyedRng r(seed, 5);
  ProxyTargets t;
  for (std::size_t k = 0; k < kProxyTaskCount; ++k) {
    t.values[k] = IsRegressionTask(k) ? r.Normal() : (r.Uniform() < 0.5 ? 1.0 : 0.0);
  }
  return t;
}

double Loss(const EncoderParams& p, std::span<const double> x, const ProxyTargets& t) {
  return MultitaskLoss(Forward(p, x).outputs, t).total;
}

// Five-point central difference with step 1e-4. The stem norm can make the
// loss sharply curved, where the three-point rule's h^2 error alone nears
// the tolerance.
double CentralDifference(const EncoderParams& p, std::size_t idx,
                         std::span<const double> x, const ProxyTargets& t) {
  constexpr double h = 1e-4;
  auto at = [&](double delta) {
    EncoderParams q = p;
    q.values[idx] += delta;
    return Loss(q, x, t);
  };
  return (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
}

double Norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Toy data: the pulse amplitude encodes sex; every other task is absent.
struct Toy {
  EncoderTrainSet train;
  EncoderTuneSet tune;
};

Toy MakeToy(std::size_t n, std::size_t length) {
  Toy toy;
  for (std::size_t i = 0; i < n; ++i) {
    const bool female = i % 2 == 0;
    const Waveform w = SynthPulse(0.0, length, i);
    std::vector<double> x(w.samples);
    for (auto& v : x) v *= female ? 1.0 : 0.4;
    toy.train.waveforms.push_back(x);
    ProxyTargets t;
    t.values[static_cast<std::size_t>(ProxyTask::kSex)] = female ? 1.0 : 0.0;
    toy.train.targets.push_back(t);
    toy.tune.waveforms.push_back(x);
    toy.tune.times.push_back(1.0 + static_cast<double>(i % 7));
    toy.tune.events.push_back(i % 3 == 0);
  }
  return toy;
}

EncoderConfig ToyConfig() {
  EncoderConfig c = SmallConfig();
  c.input_length = 32;
  c.epochs = 5;
  c.learning_rate = 1e-2;
  c.augment.apply_probability = 0.0;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("zero weights give a zero embedding and even odds") {
  const EncoderConfig c = SmallConfig();
  const EncoderParams p = ZeroParams(c);
  for (const auto& x : RandomWaveforms(1, 5, c.input_length)) {
    const auto out = Forward(p, x);
    REQUIRE(out.embedding.size() == 6);
    for (double v : out.embedding) CHECK(v == 0.0);
    for (double o : out.outputs) CHECK(o == 0.0);
  }
  std::vector<double> wrong(c.input_length + 1, 0.0);
  CHECK_THROWS_AS(Forward(p, wrong), ValidationError);
}

TEST_CASE("multitask loss values") {
  std::array<double, kProxyTaskCount> outputs{};
  ProxyTargets one;
  one.values[0] = 1.0;
  CHECK(MultitaskLoss(outputs, one).total == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  one.values[0] = 0.0;
  CHECK(MultitaskLoss(outputs, one).total == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  ProxyTargets age;
  age.values[1] = 0.7;
  outputs[1] = 0.7;
  CHECK(MultitaskLoss(outputs, age).total == 0.0);

  // Squared errors 0.2 and 0.6 on the regression head and a logit whose
  // cross-entropy is 0.6.
  ProxyTargets two;
  two.values[1] = 0.0;
  outputs[1] = std::sqrt(0.2);
  two.values[2] = 1.0;
  outputs[2] = -std::log(std::exp(0.6) - 1.0);
  const auto loss = MultitaskLoss(outputs, two);
  CHECK(loss.per_task[2].value() == doctest::Approx(0.6));
  CHECK(loss.total == doctest::Approx(0.4));
  CHECK_FALSE(loss.per_task[0].has_value());

  CHECK_THROWS_AS(MultitaskLoss(outputs, ProxyTargets{}), ValidationError);
}

TEST_CASE("backward matches central differences for every tensor") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const EncoderParams p = RandomNet(seed);
    const auto x = RandomWaveforms(seed + 100, 1, p.input_length)[0];
    const ProxyTargets t = AllTargets(seed);
    const Gradient g = Backward(p, x, t);
    CHECK(g.loss == doctest::Approx(Loss(p, x, t)).epsilon(1e-14));
    for (const auto& info : p.tensors) {
      std::vector<double> analytic, numeric;
      for (std::size_t k = 0; k < info.size(); ++k) {
        const std::size_t idx = info.offset + k;
        analytic.push_back(g.values[idx]);
        numeric.push_back(info.trainable ? CentralDifference(p, idx, x, t) : 0.0);
      }
      std::vector<double> diff(analytic.size());
      for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = analytic[k] - numeric[k];
      const double scale = std::max(Norm(analytic), Norm(numeric));
      INFO("tensor ", info.name, " seed ", seed);
      if (!info.trainable) {
        CHECK(Norm(analytic) == 0.0);
      } else {
        REQUIRE(scale > 0.0);
        CHECK(Norm(diff) / scale < 1e-5);
      }
    }
  }
}

TEST_CASE("heads without a target get exactly zero gradient") {
  const EncoderParams p = RandomNet(7);
  const auto x = RandomWaveforms(8, 1, p.input_length)[0];
  ProxyTargets t;
  t.values[0] = 1.0;
  t.values[4] = 0.0;
  const Gradient g = Backward(p, x, t);
  const auto& w = p.Tensor("head.w");
  const auto& b = p.Tensor("head.b");
  const std::size_t e = p.embedding_dim();
  for (std::size_t task = 0; task < kProxyTaskCount; ++task) {
    const bool active = task == 0 || task == 4;
    double row = 0.0;
    for (std::size_t j = 0; j < e; ++j) row += std::abs(g.values[w.offset + task * e + j]);
    row += std::abs(g.values[b.offset + task]);
    if (active) {
      CHECK(row > 0.0);
    } else {
      CHECK(row == 0.0);
    }
  }
}

TEST_CASE("embedding mask enters as a plain multiplier") {
  const EncoderParams p = RandomNet(4);
  const auto x = RandomWaveforms(9, 1, p.input_length)[0];
  const ProxyTargets t = AllTargets(4);
  const std::vector<double> ones(p.embedding_dim(), 1.0);
  CHECK(Backward(p, x, t, ones).values == Backward(p, x, t).values);
  // A zero mask cuts every path except the head biases.
  const std::vector<double> zeros(p.embedding_dim(), 0.0);
  const Gradient dead = Backward(p, x, t, zeros);
  const auto& bias = p.Tensor("head.b");
  for (std::size_t i = 0; i < dead.values.size(); ++i) {
    if (i >= bias.offset && i < bias.offset + bias.size()) continue;
    CHECK(dead.values[i] == 0.0);
  }
}

TEST_CASE("learning rate schedule") {
  CHECK(ScheduledLearningRate(1.0, 0, 10, 100) == doctest::Approx(0.1));
  CHECK(ScheduledLearningRate(1.0, 9, 10, 100) == doctest::Approx(1.0));
  CHECK(ScheduledLearningRate(1.0, 55, 10, 100) == doctest::Approx(0.5).epsilon(0.05));
  double last = 2.0;
  for (std::size_t s = 9; s < 100; ++s) {
    const double lr = ScheduledLearningRate(1.0, s, 10, 100);
    CHECK(lr <= last);
    CHECK(lr >= 0.0);
    last = lr;
  }
}

TEST_CASE("toy task loss decreases every epoch") {
  const Toy toy = MakeToy(64, 32);
  const TrainResult r = TrainEncoder(ToyConfig(), toy.train, toy.tune);
  REQUIRE(r.log.size() == 5);
  for (std::size_t e = 1; e < r.log.size(); ++e) {
    CHECK(r.log[e].train_loss < r.log[e - 1].train_loss);
  }
  CHECK(r.log[0].task_loss[0] == doctest::Approx(r.log[0].train_loss));
  CHECK(std::isnan(r.log[0].task_loss[1]));
}

TEST_CASE("selection keeps the best tune likelihood") {
  const Toy toy = MakeToy(48, 32);
  EncoderConfig c = ToyConfig();
  c.epochs = 4;
  const TrainResult r = TrainEncoder(c, toy.train, toy.tune);
  std::size_t selected = 0;
  for (const auto& e : r.log) {
    selected += e.selected;
    CHECK(r.log[r.best_epoch - 1].tune_loglik >= e.tune_loglik);
  }
  CHECK(selected == 1);
  CHECK(r.log[r.best_epoch - 1].selected);

  c.epochs = 1;
  const TrainResult one = TrainEncoder(c, toy.train, toy.tune);
  CHECK(one.best_epoch == 1);
  REQUIRE(one.log.size() == 1);
  CHECK(one.log[0].selected);
}

TEST_CASE("training is reproducible and seed dependent") {
  const Toy toy = MakeToy(40, 32);
  EncoderConfig c = ToyConfig();
  c.epochs = 2;
  c.augment.apply_probability = 0.5;
  c.dropout = 0.1;
  const auto a = TrainEncoder(c, toy.train, toy.tune);
  const auto b = TrainEncoder(c, toy.train, toy.tune);
  CHECK(a.params.values == b.params.values);
  c.seed = 4;
  CHECK(TrainEncoder(c, toy.train, toy.tune).params.values != a.params.values);
}

TEST_CASE("a zero learning rate leaves the initial weights") {
  const Toy toy = MakeToy(32, 32);
  EncoderConfig c = ToyConfig();
  c.epochs = 2;
  c.learning_rate = 0.0;
  const auto r = TrainEncoder(c, toy.train, toy.tune);
  CHECK(r.params.values == InitParams(c, toy.train.waveforms).values);
  CHECK(r.log[1].train_loss == doctest::Approx(r.log[0].train_loss).epsilon(1e-12));
}

TEST_CASE("training rejects bad inputs") {
  Toy toy = MakeToy(16, 32);
  EncoderConfig c = ToyConfig();
  EncoderTuneSet empty;
  CHECK_THROWS_AS(TrainEncoder(c, toy.train, empty), ValidationError);
  toy.train.targets[3] = ProxyTargets{};
  CHECK_THROWS_AS(TrainEncoder(c, toy.train, toy.tune), ValidationError);
  c.channels = {4, 4};
  CHECK_THROWS_AS(c.Validate(), ValidationError);
  c = ToyConfig();
  c.learning_rate = 1e30;
  toy = MakeToy(16, 32);
  CHECK_THROWS_AS(TrainEncoder(c, toy.train, toy.tune), NumericalError);
}

TEST_CASE("weights file round trip") {
  const EncoderParams p = RandomNet(11);
  std::stringstream io;
  WriteEncoderParams(io, p);
  const EncoderParams back = ReadEncoderParams(io);
  CHECK(back.values == p.values);
  CHECK(back.channels == p.channels);
  CHECK(back.input_length == p.input_length);
  REQUIRE(back.tensors.size() == p.tensors.size());
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    CHECK(back.tensors[i].name == p.tensors[i].name);
    CHECK(back.tensors[i].shape == p.tensors[i].shape);
    CHECK(back.tensors[i].trainable == p.tensors[i].trainable);
  }
  std::istringstream junk("not a weights file\n");
  CHECK_THROWS_AS(ReadEncoderParams(junk), ValidationError);
}

TEST_CASE("training log csv has one row per epoch") {
  std::vector<EpochLog> log(3);
  for (std::size_t i = 0; i < 3; ++i) log[i].epoch = i + 1;
  std::ostringstream out;
  WriteTrainingLog(out, log);
  const std::string s = out.str();
  CHECK(std::count(s.begin(), s.end(), '\n') == 4);
  CHECK(s.rfind("epoch,train_loss,loss_sex", 0) == 0);
}

TEST_CASE("proxy targets from a cohort row") {
  CohortRow r;
  r.age = 60.0;
  r.female = true;
  r.bmi = 33.0;
  r.sbp = 161.0;
  r.hba1c = 49.0;
  const auto t = MakeProxyTargets(r, 50.0, 5.0, true);
  CHECK(t.values[0] == 1.0);
  CHECK(t.values[1] == 2.0);
  CHECK(t.values[2] == 0.0);
  CHECK_FALSE(t.values[3].has_value());
  CHECK(t.values[4] == 1.0);
  CHECK_FALSE(t.values[5].has_value());
  CHECK(t.values[6] == 1.0);
  CHECK(t.values[7] == 0.0);
  CHECK(t.values[8] == 1.0);
}

TEST_CASE("pca on axis aligned data") {
  KeyedRng r(6);
  const std::vector<double> sd = {2.0, std::sqrt(3.0), std::sqrt(2.0), 1.0, std::sqrt(0.5), 0.1};
  const int n = 2000;
  Eigen::MatrixXd x(n, 6);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < 6; ++c) x(i, c) = r.Normal(0.0, sd[c]);
  }
  // Make the sample covariance exactly diagonal with the target variances.
  x.rowwise() -= x.colwise().mean();
  Eigen::MatrixXd cov = x.transpose() * x / (n - 1);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  Eigen::MatrixXd target = Eigen::MatrixXd::Zero(6, 6);
  for (int c = 0; c < 6; ++c) target(c, c) = sd[c] * sd[c];
  x = x * llt.matrixU().solve(Eigen::MatrixXd::Identity(6, 6)) * target.cwiseSqrt();
  const PcaModel m = FitPca(x);
  REQUIRE(m.k() == 5);
  for (int k = 0; k < 5; ++k) {
    CHECK(m.explained_variance[k] == doctest::Approx(sd[k] * sd[k]).epsilon(1e-10));
    CHECK(m.components(k, k) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(m.components.row(k).norm() == doctest::Approx(1.0));
  }
  const std::vector<double> mean(m.mean.data(), m.mean.data() + 6);
  CHECK(Project(m, mean).norm() == 0.0);
}

TEST_CASE("pca on a correlated plane matches the closed form") {
  KeyedRng r(8);
  const int n = 500;
  Eigen::MatrixXd x(n, 2);
  for (int i = 0; i < n; ++i) {
    const double a = r.Normal(), b = r.Normal();
    x(i, 0) = 3.0 + 2.0 * a;
    x(i, 1) = -1.0 + 1.2 * a + 0.5 * b;
  }
  const PcaModel m = FitPca(x, 5);
  REQUIRE(m.k() == 2);
  const Eigen::RowVector2d mu = x.colwise().mean();
  const Eigen::MatrixXd c = x.rowwise() - mu;
  const double sxx = c.col(0).squaredNorm() / (n - 1);
  const double syy = c.col(1).squaredNorm() / (n - 1);
  const double sxy = c.col(0).dot(c.col(1)) / (n - 1);
  const double tr = sxx + syy, det = sxx * syy - sxy * sxy;
  const double l1 = tr / 2 + std::sqrt(tr * tr / 4 - det);
  const double l2 = tr / 2 - std::sqrt(tr * tr / 4 - det);
  CHECK(std::abs(m.explained_variance[0] - l1) < 1e-8);
  CHECK(std::abs(m.explained_variance[1] - l2) < 1e-8);
  for (int k = 0; k < 2; ++k) {
    const double l = k == 0 ? l1 : l2;
    Eigen::Vector2d v(sxy, l - sxx);
    v.normalize();
    if (std::abs(v[1]) > std::abs(v[0]) ? v[1] < 0 : v[0] < 0) v = -v;
    CHECK(std::abs(m.components(k, 0) - v[0]) < 1e-8);
    CHECK(std::abs(m.components(k, 1) - v[1]) < 1e-8);
  }
  CHECK(std::abs(m.components.row(0).dot(m.components.row(1))) < 1e-8);
}

TEST_CASE("full pca reconstructs its inputs") {
  KeyedRng r(10);
  Eigen::MatrixXd x(50, 4);
  for (int i = 0; i < 50; ++i) {
    for (int c = 0; c < 4; ++c) x(i, c) = r.Normal(c, 1.0 + c);
  }
  const PcaModel m = FitPca(x, 4);
  const Eigen::MatrixXd z = ProjectRows(m, x);
  const Eigen::MatrixXd back = (z * m.components).rowwise() + m.mean.transpose();
  CHECK((back - x).cwiseAbs().maxCoeff() < 1e-8);
  const Eigen::MatrixXd gram = m.components * m.components.transpose();
  CHECK((gram - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-8);
  for (int k = 1; k < 4; ++k) CHECK(m.explained_variance[k] <= m.explained_variance[k - 1]);

  std::stringstream io;
  WritePcaCsv(io, m);
  const PcaModel back_model = ReadPcaCsv(io);
  CHECK((back_model.components - m.components).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((back_model.mean - m.mean).cwiseAbs().maxCoeff() < 1e-15);

  CHECK_THROWS_AS(FitPca(Eigen::MatrixXd::Zero(4, 3)), ValidationError);
  Eigen::MatrixXd bad = x;
  bad(3, 1) = std::nan("");
  CHECK_THROWS_AS(FitPca(bad), ValidationError);
}
