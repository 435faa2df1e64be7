// voxlab/tensor.h

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

#ifndef VOXLAB_TENSOR_H_
#define VOXLAB_TENSOR_H_

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "voxlab/common.h"

namespace voxlab {

// Reverse-mode autodiff over dense row-major matrices. A Tape records every
// primitive in creation order (which is a topological order by construction);
// backward() walks the record in reverse with a fixed sequential reduction
// order, so gradients are bitwise reproducible for a given record. Scalars
// are 1x1 tensors; vectors are 1xn.
//
// The engine is instantiated for float and double. Training runs in float by
// default; gradient-check oracles run the same code in double.

enum class Op : uint8_t {
  kLeaf,
  kAdd,
  kAddRow,
  kMul,
  kScale,
  kMatmul,
  kMatmulNt,
  kGelu,
  kExp,
  kDiv,
  kRowSum,
  kSumAll,
  kSoftmaxRows,
  kLayerNorm,
  kRowsL2Normalize,
  kCosineSim,
  kCrossEntropyLogits,
  kGatherRows,
  kGatherElems,
  kConcatCols,
  kSliceCols,
  kReplaceMaskedRows,
};

template <class Real>
struct Node {
  Op op = Op::kLeaf;
  bool requires_grad = false;
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<Real> value;
  std::vector<Real> grad;  // allocated by backward()
  std::array<int32_t, 3> in{{-1, -1, -1}};
  std::vector<int32_t> aux;  // per-op integer payload (indices, targets, mask)
  Real x0 = 0;               // per-op scalar payload (eps, scale factor)
};

template <class Real>
class Tape;

template <class Real>
struct Tensor {
  Tape<Real>* tape = nullptr;
  int32_t id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  int64_t rows() const;
  int64_t cols() const;
};

template <class Real>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor<Real> leaf(int64_t rows, int64_t cols, std::span<const Real> data,
                    bool requires_grad);
  Tensor<Real> constant(int64_t rows, int64_t cols, std::span<const Real> data) {
    return leaf(rows, cols, data, false);
  }
  Tensor<Real> scalar(Real v);
  Tensor<Real> zeros(int64_t rows, int64_t cols, bool requires_grad);

  Tensor<Real> add(Tensor<Real> a, Tensor<Real> b);
  // x: m x n, row: 1 x n broadcast over rows.
  Tensor<Real> add_row(Tensor<Real> x, Tensor<Real> row);
  Tensor<Real> mul(Tensor<Real> a, Tensor<Real> b);
  Tensor<Real> scale(Tensor<Real> a, Real c);
  Tensor<Real> matmul(Tensor<Real> a, Tensor<Real> b);
  // a (m x k) times b^T (k x n) where b is n x k.
  Tensor<Real> matmul_nt(Tensor<Real> a, Tensor<Real> b);
  Tensor<Real> gelu(Tensor<Real> a);
  Tensor<Real> exp(Tensor<Real> a);
  Tensor<Real> div(Tensor<Real> a, Tensor<Real> b);
  Tensor<Real> row_sum(Tensor<Real> a);  // m x n -> m x 1
  Tensor<Real> sum_all(Tensor<Real> a);  // -> 1 x 1
  Tensor<Real> softmax_rows(Tensor<Real> a);
  // Last-axis normalization of each row of x, then y*scale + bias with
  // scale/bias broadcast as 1 x n. Population variance; requires n >= 2.
  Tensor<Real> layer_norm(Tensor<Real> x, Tensor<Real> scale_row,
                          Tensor<Real> bias_row, Real eps);
  // Each row divided by max(||row||, eps).
  Tensor<Real> rows_l2_normalize(Tensor<Real> a, Real eps);
  // u, v: equal-shape vectors. dot(u,v) / max(|u||v|, eps), a 1x1 tensor.
  Tensor<Real> cosine_sim(Tensor<Real> u, Tensor<Real> v, Real eps);
  // Mean over masked rows of -log softmax(logits)[target]. mask entries are
  // 0/1; at least one row must be masked.
  Tensor<Real> cross_entropy_logits(Tensor<Real> logits,
                                    std::span<const int32_t> targets,
                                    std::span<const uint8_t> mask);
  Tensor<Real> gather_rows(Tensor<Real> a, std::span<const int32_t> idx);
  // out[i] = a[row_idx[i], col_idx[i]], reshaped to out_rows x out_cols.
  Tensor<Real> gather_elems(Tensor<Real> a, std::span<const int32_t> row_idx,
                            std::span<const int32_t> col_idx, int64_t out_rows,
                            int64_t out_cols);
  Tensor<Real> concat_cols(std::span<const Tensor<Real>> parts);
  Tensor<Real> slice_cols(Tensor<Real> a, int64_t c0, int64_t c1);
  // Rows with mask set are replaced by emb (1 x n); others pass through.
  Tensor<Real> replace_masked_rows(Tensor<Real> x, Tensor<Real> emb,
                                   std::span<const uint8_t> mask);

  void backward(Tensor<Real> loss);

  std::span<const Real> value(Tensor<Real> t) const;
  std::span<const Real> grad(Tensor<Real> t) const;
  Real scalar_value(Tensor<Real> t) const;

  int32_t size() const { return static_cast<int32_t>(nodes_.size()); }
  const Node<Real>& node(int32_t id) const { return nodes_[static_cast<size_t>(id)]; }
  // True if `node` depends (directly or transitively) on `ancestor`.
  bool depends_on(int32_t node, int32_t ancestor) const;
  void clear();

 private:
  Tensor<Real> emit(Node<Real> n);
  const Node<Real>& ref(Tensor<Real> t) const;
  void check_same_tape(Tensor<Real> t) const;
  void backprop_node(int32_t id);

  std::vector<Node<Real>> nodes_;
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

template <class Real>
int64_t Tensor<Real>::rows() const {
  return tape->node(id).rows;
}
template <class Real>
int64_t Tensor<Real>::cols() const {
  return tape->node(id).cols;
}

}  // namespace voxlab

#endif  // VOXLAB_TENSOR_H_
