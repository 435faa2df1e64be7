// voxlab/rng.cc

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

#include "voxlab/rng.h"

#include <cmath>

#include "voxlab/common.h"

namespace voxlab {

uint64_t fnv1a64(const void* data, size_t len, uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

Rng::Rng(uint64_t seed) : seed_(seed), gen_(seed) {}

uint64_t Rng::next_u64() { return gen_(); }

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int64_t Rng::uniform_int(int64_t n) {
  VOXLAB_REQUIRE(n >= 1, ContractError, "uniform_int: n must be >= 1, got " << n);
  const uint64_t un = static_cast<uint64_t>(n);
  const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return static_cast<int64_t>(v % un);
}

bool Rng::bernoulli(double p) { return uniform() < p; }

double Rng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // 1-u keeps the log argument away from zero.
  const double u = 1.0 - uniform();
  const double a = std::sqrt(-2.0 * std::log(u));
  const double theta = 2.0 * 3.14159265358979323846 * uniform();
  spare_ = a * std::sin(theta);
  has_spare_ = true;
  return a * std::cos(theta);
}

Rng Rng::child(std::string_view tag) const { return child(tag, 0); }

Rng Rng::child(std::string_view tag, uint64_t k) const {
  uint64_t h = fnv1a64(&seed_, sizeof(seed_));
  h = fnv1a64(tag.data(), tag.size(), h);
  h = fnv1a64(&k, sizeof(k), h);
  // Avoid the degenerate all-zero seed.
  if (h == 0) h = 0x9e3779b97f4a7c15ull;
  return Rng(h);
}

std::vector<int32_t> Rng::sample_without_replacement(int32_t n, int32_t k,
                                                     int32_t exclude) {
  std::vector<int32_t> pool;
  pool.reserve(static_cast<size_t>(n));
  for (int32_t i = 0; i < n; ++i) {
    if (i != exclude) pool.push_back(i);
  }
  VOXLAB_REQUIRE(k >= 0 && k <= static_cast<int32_t>(pool.size()), ContractError,
                 "sample_without_replacement: cannot draw " << k << " from "
                                                            << pool.size());
  // Partial Fisher-Yates over the pool.
  for (int32_t i = 0; i < k; ++i) {
    const int64_t j = i + uniform_int(static_cast<int64_t>(pool.size()) - i);
    std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
  }
  pool.resize(static_cast<size_t>(k));
  return pool;
}

}  // namespace voxlab
