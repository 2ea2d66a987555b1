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

// Compact residual 1D CNN over single pulse waveforms, trained with nine
// proxy heads by hand-written backpropagation.
//
// Layout for channels {C0, ..., C(B-1)}:
//
//   stem     conv k7 (1 -> C0), norm, SiLU
//   block b  [b > 0: conv k3 stride 2 (C(b-1) -> Cb), norm, SiLU]
//            h -> conv k3, norm, SiLU, conv k3, norm, + h, SiLU
//   pool     mean over time -> embedding (C(B-1) = embedding_dim)
//   heads    linear, 9 outputs
//
// Norm layers are per-channel affine maps gamma * (x - mean) * inv_std + beta.
// mean and inv_std are buffers set once from a calibration batch at
// initialization and never trained, so forward passes are batch free.

#ifndef PPGRISK_ENCODER_H_
#define PPGRISK_ENCODER_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ppgrisk/cohort.h"
#include "ppgrisk/signal.h"

namespace ppgrisk {

enum class ProxyTask : std::size_t {
  kSex,
  kAge,  // regression on standardized age
  kBmiOver33,
  kHypertension,
  kHba1cOver48,
  kCholesterolOver716,
  kSbpOver160,
  kPriorMace,
  kNotchPresent,
};
inline constexpr std::size_t kProxyTaskCount = 9;
const char* ProxyTaskName(std::size_t task);
inline bool IsRegressionTask(std::size_t task) {
  return task == static_cast<std::size_t>(ProxyTask::kAge);
}

// Missing entries are left out of that task's loss.
struct ProxyTargets {
  std::array<std::optional<double>, kProxyTaskCount> values;

  bool any() const;
};

// Labels from a cohort row; age is standardized with the given train
// statistics and notch presence comes from the waveform's morphology.
ProxyTargets MakeProxyTargets(const CohortRow& row, double age_mean,
                              double age_sd, std::optional<bool> notch_present);

enum class OptimizerKind { kAdamW, kSgd };

struct EncoderConfig {
  std::size_t input_length = kCanonicalWaveformLength;
  std::size_t blocks = 3;
  std::vector<std::size_t> channels = {8, 12, 16};
  std::size_t embedding_dim = 16;
  std::size_t epochs = 80;
  std::size_t batch_size = 64;
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  double dropout = 0.0;  // on the embedding, training only
  OptimizerKind optimizer = OptimizerKind::kAdamW;
  AugmentConfig augment;  // seed is replaced per sample
  std::uint64_t seed = 0;
  std::size_t calibration_samples = 256;

  // Throws ValidationError.
  void Validate() const;
};

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  bool trainable = true;

  std::size_t size() const;
};

// All weights and norm buffers in one flat vector.
struct EncoderParams {
  std::size_t input_length = 0;
  std::vector<std::size_t> channels;
  std::vector<TensorInfo> tensors;
  std::vector<double> values;

  std::size_t embedding_dim() const { return channels.back(); }
  const TensorInfo& Tensor(const std::string& name) const;
  std::span<double> Slice(const TensorInfo& t) { return {values.data() + t.offset, t.size()}; }
  std::span<const double> Slice(const TensorInfo& t) const {
    return {values.data() + t.offset, t.size()};
  }
};

// Layout with every value zero except inv_std buffers (1).
EncoderParams ZeroParams(const EncoderConfig& config);
// Kaiming-normal convolutions, small heads, unit gamma, zero biases, norm
// buffers from the calibration waveforms.
EncoderParams InitParams(const EncoderConfig& config,
                         const std::vector<std::vector<double>>& calibration);
// Resets norm buffers from pre-norm statistics over the waveforms, one
// layer at a time.
void CalibrateNorms(EncoderParams& params,
                    const std::vector<std::vector<double>>& waveforms);

struct ForwardResult {
  std::vector<double> embedding;
  std::array<double, kProxyTaskCount> outputs{};  // logits / age prediction
};

// Throws ValidationError on a length mismatch.
ForwardResult Forward(const EncoderParams& params, std::span<const double> x);

struct TaskLoss {
  double total = 0.0;
  std::array<std::optional<double>, kProxyTaskCount> per_task;
};

// Mean over present tasks of softplus(o) - y o (classification) or (o - y)^2
// (age). Throws ValidationError without any target.
TaskLoss MultitaskLoss(const std::array<double, kProxyTaskCount>& outputs,
                       const ProxyTargets& targets);

struct Gradient {
  double loss = 0.0;
  TaskLoss task_loss;
  std::vector<double> values;  // same layout as EncoderParams::values
};

// Exact gradient of MultitaskLoss. `embedding_mask`, when given, multiplies
// the pooled embedding elementwise (inverted dropout). Buffers get 0.
Gradient Backward(const EncoderParams& params, std::span<const double> x,
                  const ProxyTargets& targets,
                  std::span<const double> embedding_mask = {});

// Learning rate at global step `step` (0-based): linear warmup over the
// first `warmup_steps` then cosine decay to 0 at `total_steps`.
double ScheduledLearningRate(double base, std::size_t step,
                             std::size_t warmup_steps, std::size_t total_steps);

struct EncoderTrainSet {
  std::vector<std::vector<double>> waveforms;
  std::vector<ProxyTargets> targets;
};

struct EncoderTuneSet {
  std::vector<std::vector<double>> waveforms;
  std::vector<double> times;  // years
  std::vector<std::uint8_t> events;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::array<double, kProxyTaskCount> task_loss{};  // NaN when absent
  double learning_rate = 0.0;  // at the last step of the epoch
  // Cox partial log-likelihood of 5 tune principal components; -inf when the
  // quick fit fails.
  double tune_loglik = 0.0;
  bool selected = false;
};

struct TrainResult {
  EncoderParams params;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

// Mini-batch training with decoupled weight decay. After every epoch the
// tune embeddings are reduced to 5 principal components and scored by an
// unpenalized Cox fit; the best epoch (ties to the later one) is returned.
// Throws NumericalError naming the epoch on a non-finite loss.
TrainResult TrainEncoder(const EncoderConfig& config, const EncoderTrainSet& train,
                         const EncoderTuneSet& tune);

std::vector<std::vector<double>> Embed(const EncoderParams& params,
                                       const std::vector<std::vector<double>>& x);

// Text header with tensor names and shapes, then little-endian doubles.
void WriteEncoderParams(std::ostream& out, const EncoderParams& params);
EncoderParams ReadEncoderParams(std::istream& in);

void WriteTrainingLog(std::ostream& out, const std::vector<EpochLog>& log);

}  // namespace ppgrisk

#endif  // PPGRISK_ENCODER_H_
