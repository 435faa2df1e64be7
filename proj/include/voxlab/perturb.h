// voxlab/perturb.h

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

#ifndef VOXLAB_PERTURB_H_
#define VOXLAB_PERTURB_H_

#include "voxlab/corpus.h"
#include "voxlab/rng.h"

namespace voxlab {

// Random transformation that alters only voice identity: formant positions
// scaled by rho1, the pitch bump scaled by rho2, and a random equalizer
// multiplied onto the speaker's EQ curve. Content (tokens, durations, frame
// labels) is untouched, and relative formant ratios are preserved because a
// single scale multiplies every center.

struct TransformParams {
  double rho1 = 1.0;
  double rho2 = 1.0;
  std::vector<double> eq_curve;  // per-bin gains in [0.5, 2.0]
};

// rho1, rho2 ~ U([1, 1.4]), each independently flipped to its reciprocal with
// probability 0.5; EQ sampled as a smooth random curve.
TransformParams sample_transform(int feat_dim, Rng& rng);

TransformParams identity_transform(int feat_dim);

// Exact inverse: reciprocal scales, reciprocal EQ gains.
TransformParams inverse_transform(const TransformParams& p);

// Re-renders the utterance with the transformed voice factors. noise_std > 0
// draws fresh noise from rng (views of one utterance are independent
// augmentations); pass 0 to re-render clean.
Utterance apply_transform(const Utterance& u, const TransformParams& p,
                          const PhoneInventory& inventory, double noise_std,
                          Rng* rng);

}  // namespace voxlab

#endif  // VOXLAB_PERTURB_H_
