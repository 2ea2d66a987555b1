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

#include "ppgrisk/signal.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "ppgrisk/errors.h"
#include "ppgrisk/rng.h"

namespace ppgrisk {

namespace {

constexpr std::uint64_t kWarpStream = 0x77617270;   // "warp"
constexpr std::uint64_t kPulseStream = 0x70756c73;  // "puls"

std::vector<double> MovingAverage(std::span<const double> x,
                                  std::size_t window) {
  if (window <= 1) return {x.begin(), x.end()};
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(window / 2);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
  std::vector<double> out(x.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - half);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, i + half);
    double sum = 0.0;
    for (std::ptrdiff_t j = lo; j <= hi; ++j) sum += x[j];
    out[i] = sum / static_cast<double>(hi - lo + 1);
  }
  return out;
}

double InterpolateClamped(std::span<const double> s, double pos) {
  const double last = static_cast<double>(s.size() - 1);
  pos = std::clamp(pos, 0.0, last);
  const auto i0 = static_cast<std::size_t>(std::floor(pos));
  if (i0 + 1 >= s.size()) return s.back();
  const double frac = pos - static_cast<double>(i0);
  return s[i0] * (1.0 - frac) + s[i0 + 1] * frac;
}

double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Waveform Preprocess(std::span<const double> raw, double sample_period) {
  if (raw.empty()) throw ValidationError("preprocess: empty waveform");
  const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  Waveform w;
  w.sample_period = sample_period;
  w.samples.resize(raw.size(), 0.0);
  if (range > 0.0) {
    for (std::size_t i = 0; i < raw.size(); ++i) {
      w.samples[i] = (raw[i] - lo) / range;
    }
  }
  return w;
}

std::vector<double> ResampleLinear(std::span<const double> samples,
                                   std::size_t length) {
  if (samples.empty() || length == 0) {
    throw ValidationError("resample: empty input or target length");
  }
  if (samples.size() == length) return {samples.begin(), samples.end()};
  std::vector<double> out(length);
  const double scale = length == 1 ? 0.0
                                   : static_cast<double>(samples.size() - 1) /
                                         static_cast<double>(length - 1);
  for (std::size_t i = 0; i < length; ++i) {
    out[i] = InterpolateClamped(samples, scale * static_cast<double>(i));
  }
  return out;
}

MorphologyFeatures ExtractMorphology(const Waveform& w, double height_cm,
                                     const MorphologyOptions& options) {
  if (w.size() < kMinWaveformLength) {
    throw ValidationError("morphology: waveform shorter than " +
                          std::to_string(kMinWaveformLength) + " samples");
  }
  if (!(height_cm > 0.0)) {
    throw ValidationError("morphology: height must be positive");
  }
  const std::vector<double> s = MovingAverage(w.samples, options.smoothing_window);
  const std::size_t n = s.size();

  MorphologyFeatures m;
  m.peak_position = static_cast<std::size_t>(
      std::max_element(s.begin(), s.end()) - s.begin());
  if (m.peak_position == n - 1) {
    throw ValidationError("morphology: no falling edge after systolic peak");
  }

  std::optional<std::size_t> diastolic;
  for (std::size_t i = m.peak_position + 1; i + 1 < n; ++i) {
    if (s[i] > s[i - 1] && s[i] >= s[i + 1]) {
      if (!diastolic || s[i] > s[*diastolic]) diastolic = i;
    }
  }

  if (!diastolic) {
    m.notch_absent = true;
    for (std::size_t i = m.peak_position + 1; i + 1 < n; ++i) {
      if (s[i + 1] - 2.0 * s[i] + s[i - 1] >= 0.0) {
        m.shoulder_position = i;
        break;
      }
    }
    return m;
  }

  std::size_t notch = m.peak_position + 1;
  for (std::size_t i = m.peak_position + 1; i < *diastolic; ++i) {
    if (s[i] < s[notch]) notch = i;
  }
  m.notch_absent = false;
  m.notch_position = notch;
  m.reflection_index = s[*diastolic] / s[m.peak_position];
  m.peak_to_peak_time =
      static_cast<double>(*diastolic - m.peak_position) * w.sample_period;
  m.stiffness_index = (height_cm / 100.0) / *m.peak_to_peak_time;
  return m;
}

void WriteMorphologyRow(std::ostream& out, const MorphologyFeatures& m) {
  auto opt = [&out](const auto& v) {
    if (v) out << *v;
  };
  opt(m.reflection_index);
  out << ',';
  opt(m.peak_to_peak_time);
  out << ',' << m.peak_position << ',';
  opt(m.notch_position);
  out << ',';
  opt(m.shoulder_position);
  out << ',' << (m.notch_absent ? 1 : 0) << ',';
  opt(m.stiffness_index);
  out << '\n';
}

std::vector<double> TapeDisplacement(std::span<const double> increments) {
  std::vector<double> pos(increments.size());
  double speed = 1.0;
  double travelled = 0.0;
  double first_speed = 0.0;
  for (std::size_t i = 0; i < increments.size(); ++i) {
    speed += increments[i];
    if (i == 0) first_speed = speed;
    travelled += speed;
    pos[i] = travelled - first_speed;
  }
  return pos;
}

Waveform WarpWithIncrements(const Waveform& w,
                            std::span<const double> increments) {
  if (increments.size() != w.size()) {
    throw ValidationError("warp: increment count does not match length");
  }
  const std::vector<double> pos = TapeDisplacement(increments);
  Waveform out;
  out.sample_period = w.sample_period;
  out.samples.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    out.samples[i] = InterpolateClamped(w.samples, pos[i]);
  }
  return out;
}

Waveform BrownianTapeWarp(const Waveform& w, const AugmentConfig& cfg) {
  if (cfg.magnitude < 0.0) {
    throw ValidationError("warp: magnitude must be non-negative");
  }
  if (w.samples.empty()) return w;
  KeyedRng rng(cfg.seed, kWarpStream);
  if (!(rng.Uniform() < cfg.apply_probability)) return w;
  const double sd = cfg.magnitude / static_cast<double>(w.size());
  std::vector<double> z(w.size());
  for (double& zi : z) zi = sd * rng.Normal();
  return WarpWithIncrements(w, z);
}

PulseGeometry SynthPulseGeometry(double vascular_latent, std::size_t length) {
  const double len = static_cast<double>(length);
  const double s = Sigmoid(vascular_latent);
  PulseGeometry g;
  g.systolic_index = static_cast<std::size_t>(std::lround(0.2 * len));
  g.diastolic_index =
      g.systolic_index +
      static_cast<std::size_t>(std::lround(len * (0.45 - 0.2 * s)));
  g.diastolic_amplitude = 0.6 * s;
  g.systolic_width = 0.05 * len;
  g.diastolic_width = 0.07 * len;
  return g;
}

Waveform SynthPulse(double vascular_latent, std::size_t length,
                    std::uint64_t seed, double noise) {
  if (length < 32) throw ValidationError("synth_pulse: length must be >= 32");
  const PulseGeometry g = SynthPulseGeometry(vascular_latent, length);
  KeyedRng rng(seed, kPulseStream);
  std::vector<double> raw(length);
  for (std::size_t i = 0; i < length; ++i) {
    const double x = static_cast<double>(i);
    const double ds = (x - static_cast<double>(g.systolic_index)) / g.systolic_width;
    const double dd =
        (x - static_cast<double>(g.diastolic_index)) / g.diastolic_width;
    raw[i] = std::exp(-0.5 * ds * ds) +
             g.diastolic_amplitude * std::exp(-0.5 * dd * dd);
    if (noise > 0.0) raw[i] += noise * rng.Normal();
  }
  return Preprocess(raw);
}

}  // namespace ppgrisk
