// voxlab/perturb.cc

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

#include "voxlab/perturb.h"

#include <cmath>

namespace voxlab {

TransformParams sample_transform(int feat_dim, Rng& rng) {
  TransformParams p;
  p.rho1 = rng.uniform(1.0, kMaxVoiceScale);
  if (rng.bernoulli(0.5)) p.rho1 = 1.0 / p.rho1;
  p.rho2 = rng.uniform(1.0, kMaxVoiceScale);
  if (rng.bernoulli(0.5)) p.rho2 = 1.0 / p.rho2;
  p.eq_curve = sample_eq_curve(feat_dim, rng);
  return p;
}

TransformParams identity_transform(int feat_dim) {
  TransformParams p;
  p.eq_curve.assign(static_cast<size_t>(feat_dim), 1.0);
  return p;
}

TransformParams inverse_transform(const TransformParams& p) {
  TransformParams inv;
  inv.rho1 = 1.0 / p.rho1;
  inv.rho2 = 1.0 / p.rho2;
  inv.eq_curve.resize(p.eq_curve.size());
  for (size_t i = 0; i < p.eq_curve.size(); ++i)
    inv.eq_curve[i] = 1.0 / p.eq_curve[i];
  return inv;
}

Utterance apply_transform(const Utterance& u, const TransformParams& p,
                          const PhoneInventory& inventory, double noise_std,
                          Rng* rng) {
  const int feat_dim = static_cast<int>(u.frames.cols);
  VOXLAB_REQUIRE(static_cast<int>(p.eq_curve.size()) == feat_dim, DimensionError,
                 "apply_transform: eq curve length " << p.eq_curve.size()
                                                     << " != feat_dim " << feat_dim);
  const double scale = u.speaker.formant_scale * p.rho1;
  for (const int32_t tok : u.tokens) {
    const Phone& ph = inventory.phones[static_cast<size_t>(tok)];
    const double top = ph.positions.back() * scale;
    VOXLAB_REQUIRE(top > 0.0 && top < 1.0, ContractError,
                   "apply_transform: formant position overflow (center " << top
                       << " for phone " << tok << ", scale " << scale << ")");
  }
  Utterance out = u;  // tokens, durations, labels, speaker identity unchanged
  // The voice factors compose: the output utterance carries the transformed
  // effective factors, so applying the inverse params undoes the transform.
  out.speaker.formant_scale = scale;
  out.speaker.f0_base = u.speaker.f0_base * p.rho2;
  for (int b = 0; b < feat_dim; ++b)
    out.speaker.eq_curve[static_cast<size_t>(b)] *= p.eq_curve[static_cast<size_t>(b)];
  out.frames = render_frames(out.tokens, out.durations, inventory, feat_dim,
                             out.speaker.formant_scale, out.speaker.f0_base,
                             out.speaker.eq_curve, noise_std, rng);
  return out;
}

}  // namespace voxlab
