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

#ifndef PPGRISK_RNG_H_
#define PPGRISK_RNG_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

namespace ppgrisk {

// SplitMix64 finalizer. Bijective on 64-bit words.
std::uint64_t Mix64(std::uint64_t x);

// Derives a key from a master seed and up to two sub-indices. Distinct
// (seed, a, b) triples give statistically independent keys.
std::uint64_t DeriveKey(std::uint64_t seed, std::uint64_t a = 0,
                        std::uint64_t b = 0);

// Counter-based generator: draw k of a stream is Mix64(key + k * gamma), a
// pure function of (key, k). Every consumer that needs reproducible, order
// independent randomness (per subject, per bootstrap iteration, per training
// sample) builds its own KeyedRng from a derived key instead of sharing state.
//
// Normal variates use Box-Muller without caching the second variate, so the
// n-th normal of a stream depends only on (key, n).
class KeyedRng {
 public:
  explicit KeyedRng(std::uint64_t seed, std::uint64_t stream = 0,
                    std::uint64_t substream = 0)
      : key_(DeriveKey(seed, stream, substream)) {}

  std::uint64_t NextU64();
  // Uniform on [0, 1) with 53 random bits.
  double Uniform();
  // Uniform on (0, 1); safe for log().
  double UniformOpen();
  double Normal();
  double Normal(double mean, double sd) { return mean + sd * Normal(); }
  // Exponential with the given rate; rate must be > 0.
  double Exponential(double rate);
  bool Bernoulli(double p) { return Uniform() < p; }
  // Uniform integer in [0, n).
  std::uint64_t Below(std::uint64_t n);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads. Work is
// split into contiguous chunks; callers write results by index so the output
// never depends on scheduling.
void ParallelFor(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace ppgrisk

#endif  // PPGRISK_RNG_H_
