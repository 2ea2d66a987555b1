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

#include "ppgrisk/encoder.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <sstream>

#include "ppgrisk/errors.h"
#include "ppgrisk/pca.h"
#include "ppgrisk/rng.h"
#include "ppgrisk/survival.h"
#include "text.h"

namespace ppgrisk {
namespace {

constexpr std::uint64_t kInitStream = 0x696e6974;     // "init"
constexpr std::uint64_t kShuffleStream = 0x73687566;  // "shuf"
constexpr std::uint64_t kDropoutStream = 0x64726f70;  // "drop"
constexpr double kNormEps = 1e-5;

constexpr std::array<const char*, kProxyTaskCount> kTaskNames = {
    "sex",          "age",           "bmi_gt_33",  "hypertension",
    "hba1c_gt_48",  "chol_gt_7_16",  "sbp_gt_160", "prior_mace",
    "notch_present"};

// ---------------------------------------------------------------------------
// Network program: a flat list of ops over numbered activation buffers.

struct ConvSlot {
  std::size_t w = 0, b = 0;
  std::size_t co = 0, ci = 0, k = 0, stride = 1, pad = 0;
};

struct NormSlot {
  std::size_t mean = 0, inv_std = 0, gamma = 0, beta = 0;
};

enum class OpKind { kConv, kNorm, kSilu, kAdd, kPool, kLinear };

struct Op {
  OpKind kind;
  std::size_t in = 0, in2 = 0, out = 0;
  std::size_t slot = 0;  // into convs / norms
};

struct Shape {
  std::size_t c = 0, len = 0;
  std::size_t size() const { return c * len; }
};

struct Program {
  std::vector<Shape> buffers;
  std::vector<ConvSlot> convs;
  std::vector<NormSlot> norms;
  std::vector<Op> ops;
  std::size_t head_w = 0, head_b = 0, embedding_dim = 0;
  std::size_t embedding_buffer = 0, output_buffer = 0;
};

class Builder {
 public:
  Builder(std::vector<TensorInfo>* tensors) : tensors_(tensors) {}

  std::size_t Add(const std::string& name, std::vector<std::size_t> shape,
                  bool trainable = true) {
    TensorInfo t{name, std::move(shape), offset_, trainable};
    offset_ += t.size();
    tensors_->push_back(t);
    return t.offset;
  }
  std::size_t total() const { return offset_; }

 private:
  std::vector<TensorInfo>* tensors_;
  std::size_t offset_ = 0;
};

Program BuildProgram(std::size_t input_length,
                     const std::vector<std::size_t>& channels,
                     std::vector<TensorInfo>* tensors) {
  Program p;
  Builder b(tensors);
  p.buffers.push_back({1, input_length});

  auto buffer = [&](Shape s) {
    p.buffers.push_back(s);
    return p.buffers.size() - 1;
  };
  auto conv = [&](const std::string& name, std::size_t in, std::size_t co,
                  std::size_t k, std::size_t stride, std::size_t pad) {
    const Shape s = p.buffers[in];
    ConvSlot c;
    c.co = co;
    c.ci = s.c;
    c.k = k;
    c.stride = stride;
    c.pad = pad;
    c.w = b.Add(name + ".w", {co, s.c, k});
    c.b = b.Add(name + ".b", {co});
    p.convs.push_back(c);
    const std::size_t len = (s.len + 2 * pad - k) / stride + 1;
    const std::size_t out = buffer({co, len});
    p.ops.push_back({OpKind::kConv, in, 0, out, p.convs.size() - 1});
    return out;
  };
  auto norm = [&](const std::string& name, std::size_t in) {
    const std::size_t c = p.buffers[in].c;
    NormSlot n;
    n.mean = b.Add(name + ".mean", {c}, false);
    n.inv_std = b.Add(name + ".inv_std", {c}, false);
    n.gamma = b.Add(name + ".gamma", {c});
    n.beta = b.Add(name + ".beta", {c});
    p.norms.push_back(n);
    const std::size_t out = buffer(p.buffers[in]);
    p.ops.push_back({OpKind::kNorm, in, 0, out, p.norms.size() - 1});
    return out;
  };
  auto silu = [&](std::size_t in) {
    const std::size_t out = buffer(p.buffers[in]);
    p.ops.push_back({OpKind::kSilu, in, 0, out, 0});
    return out;
  };

  std::size_t h = silu(norm("stem.norm", conv("stem.conv", 0, channels[0], 7, 1, 3)));
  for (std::size_t blk = 0; blk < channels.size(); ++blk) {
    const std::string pre = "block" + std::to_string(blk);
    if (blk > 0) {
      h = silu(norm(pre + ".down.norm", conv(pre + ".down.conv", h, channels[blk], 3, 2, 1)));
    }
    const std::size_t r1 = silu(norm(pre + ".norm1", conv(pre + ".conv1", h, channels[blk], 3, 1, 1)));
    const std::size_t n2 = norm(pre + ".norm2", conv(pre + ".conv2", r1, channels[blk], 3, 1, 1));
    const std::size_t sum = buffer(p.buffers[n2]);
    p.ops.push_back({OpKind::kAdd, n2, h, sum, 0});
    h = silu(sum);
  }
  p.embedding_dim = channels.back();
  p.embedding_buffer = buffer({p.embedding_dim, 1});
  p.ops.push_back({OpKind::kPool, h, 0, p.embedding_buffer, 0});
  p.head_w = b.Add("head.w", {kProxyTaskCount, p.embedding_dim});
  p.head_b = b.Add("head.b", {kProxyTaskCount});
  p.output_buffer = buffer({kProxyTaskCount, 1});
  p.ops.push_back({OpKind::kLinear, p.embedding_buffer, 0, p.output_buffer, 0});
  return p;
}

Program ProgramFor(const EncoderParams& params) {
  std::vector<TensorInfo> scratch;
  return BuildProgram(params.input_length, params.channels, &scratch);
}

double Sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double Softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

void ConvForward(const ConvSlot& c, const double* w, const double* bias,
                 const double* in, std::size_t li, double* out, std::size_t lo) {
  for (std::size_t o = 0; o < c.co; ++o) {
    double* y = out + o * lo;
    std::fill(y, y + lo, bias[o]);
    for (std::size_t i = 0; i < c.ci; ++i) {
      const double* x = in + i * li;
      for (std::size_t k = 0; k < c.k; ++k) {
        const double wk = w[(o * c.ci + i) * c.k + k];
        // positions l * stride + k - pad inside [0, li)
        for (std::size_t l = 0; l < lo; ++l) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(l * c.stride + k) -
                                     static_cast<std::ptrdiff_t>(c.pad);
          if (pos < 0) continue;
          if (pos >= static_cast<std::ptrdiff_t>(li)) break;
          y[l] += wk * x[pos];
        }
      }
    }
  }
}

void ConvBackward(const ConvSlot& c, const double* w, const double* in,
                  std::size_t li, const double* dy, std::size_t lo, double* dw,
                  double* db, double* din) {
  for (std::size_t o = 0; o < c.co; ++o) {
    const double* g = dy + o * lo;
    double sb = 0.0;
    for (std::size_t l = 0; l < lo; ++l) sb += g[l];
    db[o] += sb;
    for (std::size_t i = 0; i < c.ci; ++i) {
      const double* x = in + i * li;
      double* dx = din + i * li;
      for (std::size_t k = 0; k < c.k; ++k) {
        const std::size_t wi = (o * c.ci + i) * c.k + k;
        const double wk = w[wi];
        double sw = 0.0;
        for (std::size_t l = 0; l < lo; ++l) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(l * c.stride + k) -
                                     static_cast<std::ptrdiff_t>(c.pad);
          if (pos < 0) continue;
          if (pos >= static_cast<std::ptrdiff_t>(li)) break;
          sw += g[l] * x[pos];
          dx[pos] += wk * g[l];
        }
        dw[wi] += sw;
      }
    }
  }
}

using Buffers = std::vector<std::vector<double>>;

// Runs ops [0, stop) and leaves every activation in `acts`.
void Run(const Program& p, const std::vector<double>& v, std::span<const double> x,
         std::span<const double> mask, std::size_t stop, Buffers& acts) {
  acts.resize(p.buffers.size());
  for (std::size_t i = 0; i < p.buffers.size(); ++i) acts[i].assign(p.buffers[i].size(), 0.0);
  std::copy(x.begin(), x.end(), acts[0].begin());
  for (std::size_t k = 0; k < stop; ++k) {
    const Op& op = p.ops[k];
    const Shape si = p.buffers[op.in];
    const Shape so = p.buffers[op.out];
    const std::vector<double>& in = acts[op.in];
    std::vector<double>& out = acts[op.out];
    switch (op.kind) {
      case OpKind::kConv: {
        const ConvSlot& c = p.convs[op.slot];
        ConvForward(c, &v[c.w], &v[c.b], in.data(), si.len, out.data(), so.len);
        break;
      }
      case OpKind::kNorm: {
        const NormSlot& n = p.norms[op.slot];
        for (std::size_t c = 0; c < si.c; ++c) {
          const double scale = v[n.gamma + c] * v[n.inv_std + c];
          const double mu = v[n.mean + c];
          const double beta = v[n.beta + c];
          for (std::size_t l = 0; l < si.len; ++l) {
            out[c * si.len + l] = scale * (in[c * si.len + l] - mu) + beta;
          }
        }
        break;
      }
      case OpKind::kSilu:
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * Sigmoid(in[i]);
        break;
      case OpKind::kAdd: {
        const std::vector<double>& in2 = acts[op.in2];
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] + in2[i];
        break;
      }
      case OpKind::kPool:
        for (std::size_t c = 0; c < si.c; ++c) {
          double s = 0.0;
          for (std::size_t l = 0; l < si.len; ++l) s += in[c * si.len + l];
          out[c] = s / static_cast<double>(si.len);
          if (!mask.empty()) out[c] *= mask[c];
        }
        break;
      case OpKind::kLinear:
        for (std::size_t t = 0; t < kProxyTaskCount; ++t) {
          double s = v[p.head_b + t];
          for (std::size_t j = 0; j < p.embedding_dim; ++j) {
            s += v[p.head_w + t * p.embedding_dim + j] * in[j];
          }
          out[t] = s;
        }
        break;
    }
  }
}

void CheckInput(const EncoderParams& params, std::span<const double> x) {
  if (x.size() != params.input_length) {
    throw ValidationError("waveform length " + std::to_string(x.size()) +
                          " does not match encoder input length " +
                          std::to_string(params.input_length));
  }
}

EncoderParams MakeLayout(std::size_t input_length,
                         const std::vector<std::size_t>& channels) {
  EncoderParams params;
  params.input_length = input_length;
  params.channels = channels;
  BuildProgram(input_length, channels, &params.tensors);
  std::size_t total = 0;
  for (const auto& t : params.tensors) total += t.size();
  params.values.assign(total, 0.0);
  for (const auto& t : params.tensors) {
    if (t.name.ends_with(".inv_std")) {
      std::fill_n(params.values.begin() + static_cast<std::ptrdiff_t>(t.offset), t.size(), 1.0);
    }
  }
  return params;
}

void WriteLe(std::ostream& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

double ReadLe(std::istream& in) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) {
    throw ValidationError("encoder weights file is truncated");
  }
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

// ---------------------------------------------------------------------------

const char* ProxyTaskName(std::size_t task) {
  if (task >= kProxyTaskCount) return "unknown";
  return kTaskNames[task];
}

bool ProxyTargets::any() const {
  return std::any_of(values.begin(), values.end(), [](const auto& v) { return v.has_value(); });
}

ProxyTargets MakeProxyTargets(const CohortRow& row, double age_mean, double age_sd,
                              std::optional<bool> notch_present) {
  ProxyTargets t;
  auto set = [&](ProxyTask task, std::optional<double> v) {
    t.values[static_cast<std::size_t>(task)] = v;
  };
  auto flag = [](bool b) { return b ? 1.0 : 0.0; };
  if (row.female) set(ProxyTask::kSex, flag(*row.female));
  if (row.age && age_sd > 0.0) set(ProxyTask::kAge, (*row.age - age_mean) / age_sd);
  if (row.bmi) set(ProxyTask::kBmiOver33, flag(*row.bmi > 33.0));
  if (row.hypertension) set(ProxyTask::kHypertension, flag(*row.hypertension));
  if (row.hba1c) set(ProxyTask::kHba1cOver48, flag(*row.hba1c > 48.0));
  if (row.total_cholesterol) {
    set(ProxyTask::kCholesterolOver716, flag(*row.total_cholesterol > 7.16));
  }
  if (row.sbp) set(ProxyTask::kSbpOver160, flag(*row.sbp > 160.0));
  set(ProxyTask::kPriorMace, flag(row.prior_mi_or_stroke));
  if (notch_present) set(ProxyTask::kNotchPresent, flag(*notch_present));
  return t;
}

void EncoderConfig::Validate() const {
  if (input_length < 8) throw ValidationError("encoder input_length must be >= 8");
  if (blocks == 0) throw ValidationError("encoder needs at least one block");
  if (channels.size() != blocks) {
    throw ValidationError("encoder channels list has " + std::to_string(channels.size()) +
                          " entries for " + std::to_string(blocks) + " blocks");
  }
  for (std::size_t c : channels) {
    if (c == 0) throw ValidationError("encoder channel count must be positive");
  }
  if (embedding_dim < 5) throw ValidationError("embedding_dim must be >= 5");
  if (channels.back() != embedding_dim) {
    throw ValidationError("last block width must equal embedding_dim");
  }
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw ValidationError("learning_rate must be >= 0");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must be in [0, 1)");
  if (!(augment.magnitude >= 0.0)) throw ValidationError("augment magnitude must be >= 0");
}

std::size_t TensorInfo::size() const {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}

const TensorInfo& EncoderParams::Tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw ValidationError("no tensor named \"" + name + "\"");
}

EncoderParams ZeroParams(const EncoderConfig& config) {
  config.Validate();
  return MakeLayout(config.input_length, config.channels);
}

EncoderParams InitParams(const EncoderConfig& config,
                         const std::vector<std::vector<double>>& calibration) {
  EncoderParams params = ZeroParams(config);
  KeyedRng rng(config.seed, kInitStream);
  for (const auto& t : params.tensors) {
    std::span<double> s = params.Slice(t);
    if (t.name.ends_with(".gamma")) {
      std::fill(s.begin(), s.end(), 1.0);
    } else if (t.name == "head.w") {
      const double sd = 0.1 / std::sqrt(static_cast<double>(t.shape[1]));
      for (double& v : s) v = rng.Normal(0.0, sd);
    } else if (t.name.ends_with(".w")) {
      const double fan_in = static_cast<double>(t.shape[1] * t.shape[2]);
      const double sd = std::sqrt(2.0 / fan_in);
      for (double& v : s) v = rng.Normal(0.0, sd);
    }
  }
  if (!calibration.empty()) {
    const std::size_t n = std::min(calibration.size(), config.calibration_samples);
    std::vector<std::vector<double>> head(calibration.begin(),
                                          calibration.begin() + static_cast<std::ptrdiff_t>(n));
    CalibrateNorms(params, head);
  }
  return params;
}

void CalibrateNorms(EncoderParams& params,
                    const std::vector<std::vector<double>>& waveforms) {
  if (waveforms.empty()) throw ValidationError("norm calibration needs waveforms");
  for (const auto& w : waveforms) CheckInput(params, w);
  const Program p = ProgramFor(params);
  Buffers acts;
  for (std::size_t k = 0; k < p.ops.size(); ++k) {
    const Op& op = p.ops[k];
    if (op.kind != OpKind::kNorm) continue;
    const Shape s = p.buffers[op.in];
    std::vector<double> sum(s.c, 0.0), sq(s.c, 0.0);
    for (const auto& w : waveforms) {
      Run(p, params.values, w, {}, k, acts);
      const auto& a = acts[op.in];
      for (std::size_t c = 0; c < s.c; ++c) {
        for (std::size_t l = 0; l < s.len; ++l) {
          sum[c] += a[c * s.len + l];
          sq[c] += a[c * s.len + l] * a[c * s.len + l];
        }
      }
    }
    const NormSlot& n = p.norms[op.slot];
    const double count = static_cast<double>(waveforms.size() * s.len);
    for (std::size_t c = 0; c < s.c; ++c) {
      const double mean = sum[c] / count;
      const double var = std::max(0.0, sq[c] / count - mean * mean);
      params.values[n.mean + c] = mean;
      params.values[n.inv_std + c] = 1.0 / std::sqrt(var + kNormEps);
    }
  }
}

ForwardResult Forward(const EncoderParams& params, std::span<const double> x) {
  CheckInput(params, x);
  const Program p = ProgramFor(params);
  Buffers acts;
  Run(p, params.values, x, {}, p.ops.size(), acts);
  ForwardResult r;
  r.embedding = acts[p.embedding_buffer];
  std::copy(acts[p.output_buffer].begin(), acts[p.output_buffer].end(), r.outputs.begin());
  return r;
}

TaskLoss MultitaskLoss(const std::array<double, kProxyTaskCount>& outputs,
                       const ProxyTargets& targets) {
  TaskLoss r;
  std::size_t present = 0;
  for (std::size_t t = 0; t < kProxyTaskCount; ++t) {
    if (!targets.values[t]) continue;
    const double y = *targets.values[t];
    const double o = outputs[t];
    const double l = IsRegressionTask(t) ? (o - y) * (o - y) : Softplus(o) - y * o;
    r.per_task[t] = l;
    r.total += l;
    ++present;
  }
  if (present == 0) throw ValidationError("no proxy target present");
  r.total /= static_cast<double>(present);
  return r;
}

Gradient Backward(const EncoderParams& params, std::span<const double> x,
                  const ProxyTargets& targets, std::span<const double> embedding_mask) {
  CheckInput(params, x);
  const Program p = ProgramFor(params);
  if (!embedding_mask.empty() && embedding_mask.size() != p.embedding_dim) {
    throw ValidationError("embedding mask has the wrong width");
  }
  const std::vector<double>& v = params.values;
  Buffers acts;
  Run(p, v, x, embedding_mask, p.ops.size(), acts);

  Gradient g;
  std::array<double, kProxyTaskCount> outputs{};
  std::copy(acts[p.output_buffer].begin(), acts[p.output_buffer].end(), outputs.begin());
  g.task_loss = MultitaskLoss(outputs, targets);
  g.loss = g.task_loss.total;
  g.values.assign(v.size(), 0.0);

  Buffers grads(p.buffers.size());
  for (std::size_t i = 0; i < p.buffers.size(); ++i) grads[i].assign(p.buffers[i].size(), 0.0);
  std::size_t present = 0;
  for (const auto& t : targets.values) present += t.has_value();
  for (std::size_t t = 0; t < kProxyTaskCount; ++t) {
    if (!targets.values[t]) continue;
    const double y = *targets.values[t];
    const double o = outputs[t];
    const double d = IsRegressionTask(t) ? 2.0 * (o - y) : Sigmoid(o) - y;
    grads[p.output_buffer][t] = d / static_cast<double>(present);
  }

  for (std::size_t k = p.ops.size(); k-- > 0;) {
    const Op& op = p.ops[k];
    const Shape si = p.buffers[op.in];
    const Shape so = p.buffers[op.out];
    const std::vector<double>& in = acts[op.in];
    const std::vector<double>& dy = grads[op.out];
    std::vector<double>& din = grads[op.in];
    switch (op.kind) {
      case OpKind::kLinear:
        for (std::size_t t = 0; t < kProxyTaskCount; ++t) {
          if (dy[t] == 0.0) continue;
          g.values[p.head_b + t] += dy[t];
          for (std::size_t j = 0; j < p.embedding_dim; ++j) {
            g.values[p.head_w + t * p.embedding_dim + j] += dy[t] * in[j];
            din[j] += dy[t] * v[p.head_w + t * p.embedding_dim + j];
          }
        }
        break;
      case OpKind::kPool:
        for (std::size_t c = 0; c < si.c; ++c) {
          double d = dy[c] / static_cast<double>(si.len);
          if (!embedding_mask.empty()) d *= embedding_mask[c];
          for (std::size_t l = 0; l < si.len; ++l) din[c * si.len + l] += d;
        }
        break;
      case OpKind::kAdd: {
        std::vector<double>& din2 = grads[op.in2];
        for (std::size_t i = 0; i < dy.size(); ++i) {
          din[i] += dy[i];
          din2[i] += dy[i];
        }
        break;
      }
      case OpKind::kSilu:
        for (std::size_t i = 0; i < dy.size(); ++i) {
          const double s = Sigmoid(in[i]);
          din[i] += dy[i] * s * (1.0 + in[i] * (1.0 - s));
        }
        break;
      case OpKind::kNorm: {
        const NormSlot& n = p.norms[op.slot];
        for (std::size_t c = 0; c < si.c; ++c) {
          const double mu = v[n.mean + c], is = v[n.inv_std + c], gm = v[n.gamma + c];
          double dg = 0.0, db = 0.0;
          for (std::size_t l = 0; l < si.len; ++l) {
            const std::size_t i = c * si.len + l;
            dg += dy[i] * (in[i] - mu) * is;
            db += dy[i];
            din[i] += dy[i] * gm * is;
          }
          g.values[n.gamma + c] += dg;
          g.values[n.beta + c] += db;
        }
        break;
      }
      case OpKind::kConv: {
        const ConvSlot& c = p.convs[op.slot];
        ConvBackward(c, &v[c.w], in.data(), si.len, dy.data(), so.len, &g.values[c.w],
                     &g.values[c.b], din.data());
        break;
      }
    }
  }
  return g;
}

double ScheduledLearningRate(double base, std::size_t step, std::size_t warmup_steps,
                             std::size_t total_steps) {
  if (step < warmup_steps) {
    return base * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  if (total_steps <= warmup_steps) return base;
  const double progress = static_cast<double>(step - warmup_steps) /
                          static_cast<double>(total_steps - warmup_steps);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
}

std::vector<std::vector<double>> Embed(const EncoderParams& params,
                                       const std::vector<std::vector<double>>& x) {
  for (const auto& w : x) CheckInput(params, w);
  const Program p = ProgramFor(params);
  std::vector<std::vector<double>> out(x.size());
  ParallelFor(x.size(), [&](std::size_t i) {
    Buffers acts;
    Run(p, params.values, x[i], {}, p.ops.size() - 1, acts);
    out[i] = acts[p.embedding_buffer];
  });
  return out;
}

namespace {

double TuneLogLikelihood(const EncoderParams& params, const EncoderTuneSet& tune) {
  try {
    const auto emb = Embed(params, tune.waveforms);
    const PcaModel pca = FitPca(emb, kDlsFeatureCount);
    Eigen::MatrixXd raw(emb.size(), kDlsFeatureCount);
    raw.setZero();
    for (std::size_t i = 0; i < emb.size(); ++i) {
      const Eigen::VectorXd z = Project(pca, emb[i]);
      for (Eigen::Index j = 0; j < z.size(); ++j) raw(i, j) = z(j);
    }
    std::vector<std::string> names;
    for (std::size_t j = 1; j <= kDlsFeatureCount; ++j) names.push_back("ppg_" + std::to_string(j));
    const CoxFit fit = FitCox(ModelSpec::Custom("epoch_select", names), raw, tune.times,
                              tune.events, 0.0);
    if (!std::isfinite(fit.penalized_loglik)) return -std::numeric_limits<double>::infinity();
    return fit.penalized_loglik;
  } catch (const Error&) {
    return -std::numeric_limits<double>::infinity();
  }
}

}  // namespace

TrainResult TrainEncoder(const EncoderConfig& config, const EncoderTrainSet& train,
                         const EncoderTuneSet& tune) {
  config.Validate();
  if (train.waveforms.empty()) throw ValidationError("empty train split");
  if (tune.waveforms.empty()) throw ValidationError("empty tune split");
  if (train.targets.size() != train.waveforms.size()) {
    throw ValidationError("train targets and waveforms differ in count");
  }
  if (tune.times.size() != tune.waveforms.size() ||
      tune.events.size() != tune.waveforms.size()) {
    throw ValidationError("tune outcomes and waveforms differ in count");
  }
  for (std::size_t i = 0; i < train.targets.size(); ++i) {
    if (!train.targets[i].any()) {
      throw ValidationError("train subject " + std::to_string(i) + " has no proxy target");
    }
  }

  EncoderParams params = InitParams(config, train.waveforms);
  const std::size_t n = train.waveforms.size();
  const std::size_t np = params.values.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps_per_epoch * config.epochs;
  std::vector<char> trainable(np, 0);
  for (const auto& t : params.tensors) {
    if (t.trainable) std::fill_n(trainable.begin() + static_cast<std::ptrdiff_t>(t.offset), t.size(), 1);
  }

  std::vector<double> m1(np, 0.0), m2(np, 0.0);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
  const std::size_t emb_dim = params.embedding_dim();

  TrainResult result;
  double best = -std::numeric_limits<double>::infinity();
  std::size_t step = 0;
  std::vector<std::size_t> order(n);
  std::vector<Gradient> grads(config.batch_size);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    KeyedRng shuffle(config.seed, kShuffleStream, epoch);
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.Below(i)]);
    }
    EpochLog log;
    log.epoch = epoch;
    double loss_sum = 0.0;
    std::array<double, kProxyTaskCount> task_sum{}, task_count{};

    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const std::size_t lo = s * config.batch_size;
      const std::size_t hi = std::min(n, lo + config.batch_size);
      const std::size_t bs = hi - lo;
      ParallelFor(bs, [&](std::size_t j) {
        const std::size_t idx = order[lo + j];
        AugmentConfig aug = config.augment;
        aug.seed = DeriveKey(config.seed, epoch, idx);
        Waveform w{train.waveforms[idx], kDefaultSamplePeriod};
        const Waveform warped = BrownianTapeWarp(w, aug);
        std::vector<double> mask;
        if (config.dropout > 0.0) {
          KeyedRng drop(DeriveKey(config.seed, kDropoutStream), epoch, idx);
          mask.resize(emb_dim);
          for (double& mv : mask) {
            mv = drop.Uniform() < config.dropout ? 0.0 : 1.0 / (1.0 - config.dropout);
          }
        }
        grads[j] = Backward(params, warped.samples, train.targets[idx], mask);
      });
      std::vector<double> g(np, 0.0);
      for (std::size_t j = 0; j < bs; ++j) {
        const Gradient& gj = grads[j];
        if (!std::isfinite(gj.loss)) {
          throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch));
        }
        loss_sum += gj.loss;
        for (std::size_t t = 0; t < kProxyTaskCount; ++t) {
          if (gj.task_loss.per_task[t]) {
            task_sum[t] += *gj.task_loss.per_task[t];
            task_count[t] += 1.0;
          }
        }
        for (std::size_t q = 0; q < np; ++q) g[q] += gj.values[q];
      }
      const double inv = 1.0 / static_cast<double>(bs);
      const double lr = ScheduledLearningRate(config.learning_rate, step, steps_per_epoch,
                                              total_steps);
      ++step;
      const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      for (std::size_t q = 0; q < np; ++q) {
        if (!trainable[q]) continue;
        const double gq = g[q] * inv;
        double& pv = params.values[q];
        if (config.optimizer == OptimizerKind::kAdamW) {
          m1[q] = kBeta1 * m1[q] + (1.0 - kBeta1) * gq;
          m2[q] = kBeta2 * m2[q] + (1.0 - kBeta2) * gq * gq;
          const double update = (m1[q] / bc1) / (std::sqrt(m2[q] / bc2) + kAdamEps);
          pv -= lr * (update + config.weight_decay * pv);
        } else {
          pv -= lr * (gq + config.weight_decay * pv);
        }
      }
      for (double pv : params.values) {
        if (!std::isfinite(pv)) {
          throw NumericalError("non-finite encoder weights at epoch " + std::to_string(epoch));
        }
      }
      log.learning_rate = lr;
    }
    log.train_loss = loss_sum / static_cast<double>(n);
    for (std::size_t t = 0; t < kProxyTaskCount; ++t) {
      log.task_loss[t] = task_count[t] > 0.0 ? task_sum[t] / task_count[t]
                                             : std::numeric_limits<double>::quiet_NaN();
    }
    log.tune_loglik = TuneLogLikelihood(params, tune);
    if (result.log.empty() || log.tune_loglik >= best) {
      best = log.tune_loglik;
      result.params = params;
      result.best_epoch = epoch;
    }
    result.log.push_back(log);
  }
  for (auto& l : result.log) l.selected = l.epoch == result.best_epoch;
  return result;
}

// ---------------------------------------------------------------------------

void WriteEncoderParams(std::ostream& out, const EncoderParams& params) {
  out << "ppgrisk-encoder 1\n";
  out << "input_length " << params.input_length << '\n';
  out << "channels " << params.channels.size();
  for (std::size_t c : params.channels) out << ' ' << c;
  out << '\n';
  out << "tensors " << params.tensors.size() << '\n';
  for (const auto& t : params.tensors) {
    out << t.name << ' ' << (t.trainable ? "param" : "buffer") << ' ' << t.shape.size();
    for (std::size_t s : t.shape) out << ' ' << s;
    out << '\n';
  }
  out << "data " << params.values.size() << '\n';
  for (double v : params.values) WriteLe(out, v);
}

EncoderParams ReadEncoderParams(std::istream& in) {
  auto bad = [](const std::string& what) {
    return ValidationError("encoder weights file: " + what);
  };
  std::string line, key;
  if (!std::getline(in, line) || line != "ppgrisk-encoder 1") throw bad("bad header");
  std::size_t input_length = 0, nc = 0;
  if (!std::getline(in, line)) throw bad("missing input_length");
  std::istringstream(line) >> key >> input_length;
  if (key != "input_length") throw bad("missing input_length");
  if (!std::getline(in, line)) throw bad("missing channels");
  std::istringstream cs(line);
  cs >> key >> nc;
  if (key != "channels" || nc == 0) throw bad("missing channels");
  std::vector<std::size_t> channels(nc);
  for (auto& c : channels) {
    if (!(cs >> c)) throw bad("truncated channels line");
  }
  EncoderParams params = MakeLayout(input_length, channels);
  std::size_t nt = 0;
  if (!std::getline(in, line)) throw bad("missing tensors");
  std::istringstream(line) >> key >> nt;
  if (key != "tensors" || nt != params.tensors.size()) throw bad("tensor count mismatch");
  for (const auto& t : params.tensors) {
    if (!std::getline(in, line)) throw bad("truncated tensor list");
    std::istringstream ts(line);
    std::string name, kind;
    std::size_t rank = 0;
    ts >> name >> kind >> rank;
    std::vector<std::size_t> shape(rank);
    for (auto& s : shape) ts >> s;
    if (name != t.name || shape != t.shape) throw bad("unexpected tensor \"" + name + "\"");
  }
  std::size_t count = 0;
  if (!std::getline(in, line)) throw bad("missing data");
  std::istringstream(line) >> key >> count;
  if (key != "data" || count != params.values.size()) throw bad("data size mismatch");
  for (double& v : params.values) v = ReadLe(in);
  return params;
}

void WriteTrainingLog(std::ostream& out, const std::vector<EpochLog>& log) {
  out << "epoch,train_loss";
  for (std::size_t t = 0; t < kProxyTaskCount; ++t) out << ",loss_" << kTaskNames[t];
  out << ",learning_rate,tune_loglik,selected\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << internal::FormatDouble(e.train_loss);
    for (double v : e.task_loss) {
      out << ',';
      if (std::isfinite(v)) out << internal::FormatDouble(v);
    }
    out << ',' << internal::FormatDouble(e.learning_rate) << ','
        << (std::isfinite(e.tune_loglik) ? internal::FormatDouble(e.tune_loglik) : "-inf")
        << ',' << (e.selected ? 1 : 0) << '\n';
  }
}

}  // namespace ppgrisk
