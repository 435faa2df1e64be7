// voxlab/rng.h

// Copyright 2026  The voxlab authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef VOXLAB_RNG_H_
#define VOXLAB_RNG_H_

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace voxlab {

// Deterministic random source. All distribution transforms are implemented
// here (not via std:: distributions, which are implementation-defined) so that
// streams are reproducible across compilers. Every run owns one root seed;
// independent sub-streams are derived with child(), which hashes the parent
// seed together with a tag, so components can be re-run in isolation.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t seed() const { return seed_; }
  uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n), n >= 1. Rejection sampling, no modulo bias.
  int64_t uniform_int(int64_t n);
  bool bernoulli(double p);
  // Standard normal via Box-Muller (cached spare).
  double gaussian();

  Rng child(std::string_view tag) const;
  Rng child(std::string_view tag, uint64_t k) const;

  // k distinct values drawn uniformly from {0..n-1} \ {exclude}; pass
  // exclude < 0 to disable the exclusion. Result is in draw order.
  std::vector<int32_t> sample_without_replacement(int32_t n, int32_t k,
                                                  int32_t exclude);

 private:
  uint64_t seed_;
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a, used both for seed derivation and content digests.
uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 1469598103934665603ull);

}  // namespace voxlab

#endif  // VOXLAB_RNG_H_
