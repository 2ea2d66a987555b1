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

// Single-pulse PPG waveform handling: normalization, engineered morphology
// features, Brownian tape-speed augmentation and synthetic pulse synthesis.

#ifndef PPGRISK_SIGNAL_H_
#define PPGRISK_SIGNAL_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

namespace ppgrisk {

inline constexpr std::size_t kMinWaveformLength = 8;
inline constexpr std::size_t kCanonicalWaveformLength = 100;
inline constexpr double kDefaultSamplePeriod = 0.01;  // seconds

struct Waveform {
  std::vector<double> samples;
  double sample_period = kDefaultSamplePeriod;

  std::size_t size() const { return samples.size(); }
};

// Affine rescale to [0, 1]. A flat input maps to all zeros. Throws
// ValidationError on empty input.
Waveform Preprocess(std::span<const double> raw,
                    double sample_period = kDefaultSamplePeriod);

// Linear resampling onto `length` evenly spaced points spanning the input.
std::vector<double> ResampleLinear(std::span<const double> samples,
                                   std::size_t length);

struct MorphologyFeatures {
  std::optional<double> reflection_index;
  std::optional<double> peak_to_peak_time;  // seconds
  std::size_t peak_position = 0;
  std::optional<std::size_t> notch_position;
  std::optional<std::size_t> shoulder_position;
  bool notch_absent = true;
  std::optional<double> stiffness_index;  // m/s
};

struct MorphologyOptions {
  // Centered moving-average window applied before extrema detection; 0 or 1
  // disables smoothing.
  std::size_t smoothing_window = 0;
};

// Peaks and notch from discrete local extrema:
//   systolic peak   global maximum (first occurrence)
//   diastolic peak  largest interior local maximum after the systolic peak
//   notch           deepest sample strictly between the two peaks
//   shoulder        first sample after the systolic peak where the second
//                   difference turns non-negative; only when no notch exists
// RI = amp(diastolic) / amp(systolic), dT = index gap * sample_period,
// SI = height[m] / dT. Without a diastolic peak, RI, dT and SI stay unset.
// Throws ValidationError if the systolic peak is the last sample.
MorphologyFeatures ExtractMorphology(const Waveform& w, double height_cm,
                                     const MorphologyOptions& options = {});

// CSV column header matching WriteMorphologyRow.
inline constexpr const char* kMorphologyCsvHeader =
    "ri,dt_s,peak_idx,notch_idx,shoulder_idx,notch_absent,si_mps";
void WriteMorphologyRow(std::ostream& out, const MorphologyFeatures& m);

struct AugmentConfig {
  double magnitude = 2.0;
  double apply_probability = 0.5;
  std::uint64_t seed = 0;
};

// Brownian tape-speed warp. With probability apply_probability (seeded):
//   z_i ~ N(0, (magnitude / L)^2)
//   speed_i = 1 + sum_{j<=i} z_j
//   pos_i = sum_{j<=i} speed_j - speed_0        (so pos_0 = 0)
//   out_i = input linearly interpolated at clamp(pos_i, 0, L - 1)
// Otherwise returns the input unchanged. Throws on magnitude < 0.
Waveform BrownianTapeWarp(const Waveform& w, const AugmentConfig& cfg);

// The deterministic core of BrownianTapeWarp for already-scaled increments
// z_i (one per sample).
Waveform WarpWithIncrements(const Waveform& w,
                            std::span<const double> increments);

// Sample positions produced by WarpWithIncrements, before clamping.
std::vector<double> TapeDisplacement(std::span<const double> increments);

// Geometry of a synthetic pulse before noise and normalization.
//   systolic bump   center 0.2 L, width 0.05 L, amplitude 1
//   diastolic bump  center systolic + round(L * (0.45 - 0.2 s)), width 0.07 L,
//                   amplitude 0.6 s
// where s = sigmoid(latent). Larger latent: taller, earlier diastolic peak.
struct PulseGeometry {
  std::size_t systolic_index;
  std::size_t diastolic_index;
  double diastolic_amplitude;
  double systolic_width;
  double diastolic_width;
};
PulseGeometry SynthPulseGeometry(double vascular_latent, std::size_t length);

inline constexpr double kDefaultPulseNoise = 0.005;

// Two-Gaussian pulse with the geometry above plus N(0, noise^2) per-sample
// noise from `seed`, then Preprocess. Requires length >= 32.
Waveform SynthPulse(double vascular_latent, std::size_t length,
                    std::uint64_t seed, double noise = kDefaultPulseNoise);

}  // namespace ppgrisk

#endif  // PPGRISK_SIGNAL_H_
