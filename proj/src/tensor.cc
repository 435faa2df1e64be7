// voxlab/tensor.cc

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

#include "voxlab/tensor.h"

#include <algorithm>
#include <cmath>

namespace voxlab {

namespace {

// C[m x n] += A[m x k] * B[k x n]
template <class Real>
void acc_ab(Real* c, const Real* a, const Real* b, int64_t m, int64_t k,
            int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const Real* ai = a + i * k;
    Real* ci = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const Real aip = ai[p];
      const Real* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// C[m x n] += A[m x k] * B^T, with B stored n x k
template <class Real>
void acc_abt(Real* c, const Real* a, const Real* b, int64_t m, int64_t k,
             int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const Real* ai = a + i * k;
    Real* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const Real* bj = b + j * k;
      Real acc = 0;
      for (int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// C[k x n] += A^T * B, with A stored m x k and B stored m x n
template <class Real>
void acc_atb(Real* c, const Real* a, const Real* b, int64_t m, int64_t k,
             int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const Real* ai = a + i * k;
    const Real* bi = b + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const Real aip = ai[p];
      Real* cp = c + p * n;
      for (int64_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
    }
  }
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

template <class Real>
const Node<Real>& Tape<Real>::ref(Tensor<Real> t) const {
  VOXLAB_REQUIRE(t.tape == this, ContractError,
                 "tensor belongs to a different tape");
  VOXLAB_REQUIRE(t.id >= 0 && t.id < size(), IndexError,
                 "tensor id " << t.id << " out of range");
  return nodes_[static_cast<size_t>(t.id)];
}

template <class Real>
void Tape<Real>::check_same_tape(Tensor<Real> t) const {
  VOXLAB_REQUIRE(t.tape == this, ContractError,
                 "tensor belongs to a different tape");
}

template <class Real>
Tensor<Real> Tape<Real>::emit(Node<Real> n) {
  nodes_.push_back(std::move(n));
  return Tensor<Real>{this, static_cast<int32_t>(nodes_.size() - 1)};
}

template <class Real>
Tensor<Real> Tape<Real>::leaf(int64_t rows, int64_t cols,
                              std::span<const Real> data, bool requires_grad) {
  VOXLAB_REQUIRE(rows >= 1 && cols >= 1, DimensionError,
                 "leaf: bad shape " << shape_str(rows, cols));
  VOXLAB_REQUIRE(static_cast<int64_t>(data.size()) == rows * cols, DimensionError,
                 "leaf: buffer size " << data.size() << " does not match "
                                      << shape_str(rows, cols));
  Node<Real> n;
  n.op = Op::kLeaf;
  n.requires_grad = requires_grad;
  n.rows = rows;
  n.cols = cols;
  n.value.assign(data.begin(), data.end());
  return emit(std::move(n));
}

template <class Real>
Tensor<Real> Tape<Real>::scalar(Real v) {
  return leaf(1, 1, std::span<const Real>(&v, 1), false);
}

template <class Real>
Tensor<Real> Tape<Real>::zeros(int64_t rows, int64_t cols, bool requires_grad) {
  std::vector<Real> z(static_cast<size_t>(rows * cols), Real(0));
  return leaf(rows, cols, z, requires_grad);
}

template <class Real>
Tensor<Real> Tape<Real>::add(Tensor<Real> a, Tensor<Real> b) {
  const Node<Real>& na = ref(a);
  const Node<Real>& nb = ref(b);
  VOXLAB_REQUIRE(na.rows == nb.rows && na.cols == nb.cols, DimensionError,
                 "add: shape mismatch " << shape_str(na.rows, na.cols) << " vs "
                                        << shape_str(nb.rows, nb.cols));
  Node<Real> n;
  n.op = Op::kAdd;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.rows = na.rows;
  n.cols = na.cols;
  n.in = {a.id, b.id, -1};
  n.value.resize(na.value.size());
  for (size_t i = 0; i < n.value.size(); ++i) n.value[i] = na.value[i] + nb.value[i];
  return emit(std::move(n));
}

template <class Real>
Tensor<Real> Tape<Real>::add_row(Tensor<Real> x, Tensor<Real> row) {
  const Node<Real>& nx = ref(x);
  const Node<Real>& nr = ref(row);
  VOXLAB_REQUIRE(nr.rows == 1 && nr.cols == nx.cols, DimensionError,
                 "add_row: row shape " << shape_str(nr.rows, nr.cols)
                                       << " does not broadcast over "
                                       << shape_str(nx.rows, nx.cols));
  Node<Real> n;
  n.op = Op::kAddRow;
  n.requires_grad = nx.requires_grad || nr.requires_grad;
  n.rows = nx.rows;
  n.cols = nx.cols;
  n.in = {x.id, row.id, -1};
  n.value.resize(nx.value.size());
  for (int64_t i = 0; i < nx.rows; ++i) {
    const Real* xi = nx.value.data() + i * nx.cols;
    Real* oi = n.value.data() + i * nx.cols;
    for (int64_t j = 0; j < nx.cols; ++j) oi[j] = xi[j] + nr.value[static_cast<size_t>(j)];
  }
  return emit(std::move(n));
}

template <class Real>
Tensor<Real> Tape<Real>::mul(Tensor<Real> a, Tensor<Real> b) {
  const Node<Real>& na = ref(a);
  const Node<Real>& nb = ref(b);
  VOXLAB_REQUIRE(na.rows == nb.rows && na.cols == nb.cols, DimensionError,
                 "mul: shape mismatch " << shape_str(na.rows, na.cols) << " vs "
                                        << shape_str(nb.rows, nb.cols));
  Node<Real> n;
  n.op = Op::kMul;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.rows = na.rows;
  n.cols = na.cols;
  n.in = {a.id, b.id, -1};
  n.value.resize(na.value.size());
  for (size_t i = 0; i < n.value.size(); ++i) n.value[i] = na.value[i] * nb.value[i];
  return emit(std::move(n));
}

template <class Real>
Tensor<Real> Tape<Real>::scale(Tensor<Real> a, Real c) {
  const Node<Real>& na = ref(a);
  Node<Real> n;
  n.op = Op::kScale;
  n.requires_grad = na.requires_grad;
  n.rows = na.rows;
  n.cols = na.cols;
  n.in = {a.id, -1, -1};
  n.x0 = c;
  n.value.resize(na.value.size());
  for (size_t i = 0; i < n.value.size(); ++i) n.value[i] = na.value[i] * c;
  return emit(std::move(n));
}

template <class Real>
Tensor<Real> Tape<Real>::matmul(Tensor<Real> a, Tensor<Real> b) {
  const Node<Real>& na = ref(a);
  const Node<Real>& nb = ref(b);
  VOXLAB_REQUIRE(na.cols == nb.rows, DimensionError,
                 "matmul: inner dimensions disagree: "
                     << shape_str(na.rows, na.cols) << " vs "
                     << shape_str(nb.rows, nb.cols));
  Node<Real> n;
  n.op = Op::kMatmul;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.rows = na.rows;
  n.cols = nb.cols;
  n.in = {a.id, b.id, -1};
  n.value.assign(static_cast<size_t>(n.rows * n.cols), Real(0));
  acc_ab(n.value.data(), na.value.data(), nb.value.data(), na.rows, na.cols,
         nb.cols);
  return emit(std::move(n));
}

template <class Real>
Tensor<Real> Tape<Real>::matmul_nt(Tensor<Real> a, Tensor<Real> b) {
  const Node<Real>& na = ref(a);
  const Node<Real>& nb = ref(b);
  VOXLAB_REQUIRE(na.cols == nb.cols, DimensionError,
                 "matmul_nt: inner dimensions disagree: "
                     << shape_str(na.rows, na.cols) << " vs "
                     << shape_str(nb.rows, nb.cols) << " (transposed)");
  Node<Real> n;
  n.op = Op::kMatmulNt;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.rows = na.rows;
  n.cols = nb.rows;
  n.in = {a.id, b.id, -1};
  n.value.assign(static_cast<size_t>(n.rows * n.cols), Real(0));
  acc_abt(n.value.data(), na.value.data(), nb.value.data(), na.rows, na.cols,
          nb.rows);
  return emit(std::move(n));
}

template <class Real>
Tensor<Real> Tape<Real>::gelu(Tensor<Real> a) {
  const Node<Real>& na = ref(a);
  Node<Real> n;
  n.op = Op::kGelu;
  n.requires_grad = na.requires_grad;
  n.rows = na.rows;
  n.cols = na.cols;
  n.in = {a.id, -1, -1};
  n.value.resize(na.value.size());
  for (size_t i = 0; i < n.value.size(); ++i) {
    const double x = static_cast<double>(na.value[i]);
    n.value[i] = static_cast<Real>(0.5 * x * (1.0 + std::erf(x * kInvSqrt2)));
  }
  return emit(std::move(n));
}

template <class Real>
Tensor<Real> Tape<Real>::exp(Tensor<Real> a) {
  const Node<Real>& na = ref(a);
  Node<Real> n;
  n.op = Op::kExp;
  n.requires_grad = na.requires_grad;
  n.rows = na.rows;
  n.cols = na.cols;
  n.in = {a.id, -1, -1};
  n.value.resize(na.value.size());
  for (size_t i = 0; i < n.value.size(); ++i)
    n.value[i] = static_cast<Real>(std::exp(static_cast<double>(na.value[i])));
  return emit(std::move(n));
}

template <class Real>
Tensor<Real> Tape<Real>::div(Tensor<Real> a, Tensor<Real> b) {
  const Node<Real>& na = ref(a);
  const Node<Real>& nb = ref(b);
  VOXLAB_REQUIRE(na.rows == nb.rows && na.cols == nb.cols, DimensionError,
                 "div: shape mismatch " << shape_str(na.rows, na.cols) << " vs "
                                        << shape_str(nb.rows, nb.cols));
  Node<Real> n;
  n.op = Op::kDiv;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.rows = na.rows;
  n.cols = na.cols;
  n.in = {a.id, b.id, -1};
  n.value.resize(na.value.size());
  for (size_t i = 0; i < n.value.size(); ++i) n.value[i] = na.value[i] / nb.value[i];
  return emit(std::move(n));
}

template <class Real>
Tensor<Real> Tape<Real>::row_sum(Tensor<Real> a) {
  const Node<Real>& na = ref(a);
  Node<Real> n;
  n.op = Op::kRowSum;
  n.requires_grad = na.requires_grad;
  n.rows = na.rows;
  n.cols = 1;
  n.in = {a.id, -1, -1};
  n.value.assign(static_cast<size_t>(na.rows), Real(0));
  for (int64_t i = 0; i < na.rows; ++i) {
    const Real* ai = na.value.data() + i * na.cols;
    Real acc = 0;
    for (int64_t j = 0; j < na.cols; ++j) acc += ai[j];
    n.value[static_cast<size_t>(i)] = acc;
  }
  return emit(std::move(n));
}

template <class Real>
Tensor<Real> Tape<Real>::sum_all(Tensor<Real> a) {
  const Node<Real>& na = ref(a);
  Node<Real> n;
  n.op = Op::kSumAll;
  n.requires_grad = na.requires_grad;
  n.rows = 1;
  n.cols = 1;
  n.in = {a.id, -1, -1};
  Real acc = 0;
  for (const Real v : na.value) acc += v;
  n.value.assign(1, acc);
  return emit(std::move(n));
}

template <class Real>
Tensor<Real> Tape<Real>::softmax_rows(Tensor<Real> a) {
  const Node<Real>& na = ref(a);
  for (const Real v : na.value) {
    VOXLAB_REQUIRE(std::isfinite(static_cast<double>(v)), NumericError,
                   "softmax_rows: non-finite input");
  }
  Node<Real> n;
  n.op = Op::kSoftmaxRows;
  n.requires_grad = na.requires_grad;
  n.rows = na.rows;
  n.cols = na.cols;
  n.in = {a.id, -1, -1};
  n.value.resize(na.value.size());
  for (int64_t i = 0; i < na.rows; ++i) {
    const Real* xi = na.value.data() + i * na.cols;
    Real* yi = n.value.data() + i * na.cols;
    Real mx = xi[0];
    for (int64_t j = 1; j < na.cols; ++j) mx = std::max(mx, xi[j]);
    Real z = 0;
    for (int64_t j = 0; j < na.cols; ++j) {
      yi[j] = static_cast<Real>(std::exp(static_cast<double>(xi[j] - mx)));
      z += yi[j];
    }
    const Real inv = Real(1) / z;
    for (int64_t j = 0; j < na.cols; ++j) yi[j] *= inv;
  }
  return emit(std::move(n));
}

template <class Real>
Tensor<Real> Tape<Real>::layer_norm(Tensor<Real> x, Tensor<Real> scale_row,
                                    Tensor<Real> bias_row, Real eps) {
  const Node<Real>& nx = ref(x);
  const Node<Real>& ns = ref(scale_row);
  const Node<Real>& nb = ref(bias_row);
  VOXLAB_REQUIRE(nx.cols >= 2, DimensionError,
                 "layer_norm: last axis must have size >= 2, got " << nx.cols);
  VOXLAB_REQUIRE(ns.rows == 1 && ns.cols == nx.cols, DimensionError,
                 "layer_norm: scale shape " << shape_str(ns.rows, ns.cols)
                                            << " does not match width " << nx.cols);
  VOXLAB_REQUIRE(nb.rows == 1 && nb.cols == nx.cols, DimensionError,
                 "layer_norm: bias shape " << shape_str(nb.rows, nb.cols)
                                           << " does not match width " << nx.cols);
  Node<Real> n;
  n.op = Op::kLayerNorm;
  n.requires_grad = nx.requires_grad || ns.requires_grad || nb.requires_grad;
  n.rows = nx.rows;
  n.cols = nx.cols;
  n.in = {x.id, scale_row.id, bias_row.id};
  n.x0 = eps;
  n.value.resize(nx.value.size());
  const int64_t d = nx.cols;
  for (int64_t i = 0; i < nx.rows; ++i) {
    const Real* xi = nx.value.data() + i * d;
    Real* oi = n.value.data() + i * d;
    Real mean = 0;
    for (int64_t j = 0; j < d; ++j) mean += xi[j];
    mean /= static_cast<Real>(d);
    Real var = 0;
    for (int64_t j = 0; j < d; ++j) {
      const Real c = xi[j] - mean;
      var += c * c;
    }
    var /= static_cast<Real>(d);
    const Real inv = Real(1) / static_cast<Real>(std::sqrt(static_cast<double>(var + eps)));
    for (int64_t j = 0; j < d; ++j) {
      const Real y = (xi[j] - mean) * inv;
      oi[j] = y * ns.value[static_cast<size_t>(j)] + nb.value[static_cast<size_t>(j)];
    }
  }
  return emit(std::move(n));
}

template <class Real>
Tensor<Real> Tape<Real>::rows_l2_normalize(Tensor<Real> a, Real eps) {
  const Node<Real>& na = ref(a);
  Node<Real> n;
  n.op = Op::kRowsL2Normalize;
  n.requires_grad = na.requires_grad;
  n.rows = na.rows;
  n.cols = na.cols;
  n.in = {a.id, -1, -1};
  n.x0 = eps;
  n.value.resize(na.value.size());
  for (int64_t i = 0; i < na.rows; ++i) {
    const Real* xi = na.value.data() + i * na.cols;
    Real* yi = n.value.data() + i * na.cols;
    Real sq = 0;
    for (int64_t j = 0; j < na.cols; ++j) sq += xi[j] * xi[j];
    const Real norm = static_cast<Real>(std::sqrt(static_cast<double>(sq)));
    const Real den = std::max(norm, eps);
    const Real inv = Real(1) / den;
    for (int64_t j = 0; j < na.cols; ++j) yi[j] = xi[j] * inv;
  }
  return emit(std::move(n));
}

template <class Real>
Tensor<Real> Tape<Real>::cosine_sim(Tensor<Real> u, Tensor<Real> v, Real eps) {
  const Node<Real>& nu = ref(u);
  const Node<Real>& nv = ref(v);
  VOXLAB_REQUIRE(nu.rows == nv.rows && nu.cols == nv.cols, DimensionError,
                 "cosine_sim: shape mismatch " << shape_str(nu.rows, nu.cols)
                                               << " vs " << shape_str(nv.rows, nv.cols));
  VOXLAB_REQUIRE(nu.rows * nu.cols >= 1, DimensionError, "cosine_sim: empty input");
  Node<Real> n;
  n.op = Op::kCosineSim;
  n.requires_grad = nu.requires_grad || nv.requires_grad;
  n.rows = 1;
  n.cols = 1;
  n.in = {u.id, v.id, -1};
  n.x0 = eps;
  Real dot = 0, uu = 0, vv = 0;
  for (size_t i = 0; i < nu.value.size(); ++i) {
    dot += nu.value[i] * nv.value[i];
    uu += nu.value[i] * nu.value[i];
    vv += nv.value[i] * nv.value[i];
  }
  const Real den = std::max(
      static_cast<Real>(std::sqrt(static_cast<double>(uu)) *
                        std::sqrt(static_cast<double>(vv))),
      eps);
  n.value.assign(1, dot / den);
  return emit(std::move(n));
}

template <class Real>
Tensor<Real> Tape<Real>::cross_entropy_logits(Tensor<Real> logits,
                                              std::span<const int32_t> targets,
                                              std::span<const uint8_t> mask) {
  const Node<Real>& nl = ref(logits);
  const int64_t m = nl.rows;
  const int64_t c = nl.cols;
  VOXLAB_REQUIRE(static_cast<int64_t>(targets.size()) == m, DimensionError,
                 "cross_entropy_logits: " << targets.size() << " targets for "
                                          << m << " rows");
  VOXLAB_REQUIRE(static_cast<int64_t>(mask.size()) == m, DimensionError,
                 "cross_entropy_logits: " << mask.size() << " mask entries for "
                                          << m << " rows");
  int64_t count = 0;
  for (int64_t i = 0; i < m; ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    ++count;
    VOXLAB_REQUIRE(targets[static_cast<size_t>(i)] >= 0 &&
                       targets[static_cast<size_t>(i)] < c,
                   IndexError, "cross_entropy_logits: target "
                                   << targets[static_cast<size_t>(i)]
                                   << " out of range [0, " << c << ")");
  }
  VOXLAB_REQUIRE(count > 0, ContractError,
                 "cross_entropy_logits: empty mask (no rows selected)");
  Node<Real> n;
  n.op = Op::kCrossEntropyLogits;
  n.requires_grad = nl.requires_grad;
  n.rows = 1;
  n.cols = 1;
  n.in = {logits.id, -1, -1};
  n.aux.resize(static_cast<size_t>(2 * m));
  for (int64_t i = 0; i < m; ++i) {
    n.aux[static_cast<size_t>(i)] = targets[static_cast<size_t>(i)];
    n.aux[static_cast<size_t>(m + i)] = mask[static_cast<size_t>(i)] ? 1 : 0;
  }
  double total = 0;
  for (int64_t i = 0; i < m; ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    const Real* zi = nl.value.data() + i * c;
    Real mx = zi[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, zi[j]);
    double lse = 0;
    for (int64_t j = 0; j < c; ++j) lse += std::exp(static_cast<double>(zi[j] - mx));
    lse = std::log(lse) + static_cast<double>(mx);
    total += lse - static_cast<double>(zi[targets[static_cast<size_t>(i)]]);
  }
  n.value.assign(1, static_cast<Real>(total / static_cast<double>(count)));
  return emit(std::move(n));
}

template <class Real>
Tensor<Real> Tape<Real>::gather_rows(Tensor<Real> a, std::span<const int32_t> idx) {
  const Node<Real>& na = ref(a);
  for (const int32_t i : idx) {
    VOXLAB_REQUIRE(i >= 0 && i < na.rows, IndexError,
                   "gather_rows: row " << i << " out of range [0, " << na.rows << ")");
  }
  Node<Real> n;
  n.op = Op::kGatherRows;
  n.requires_grad = na.requires_grad;
  n.rows = static_cast<int64_t>(idx.size());
  n.cols = na.cols;
  n.in = {a.id, -1, -1};
  n.aux.assign(idx.begin(), idx.end());
  n.value.resize(static_cast<size_t>(n.rows * n.cols));
  for (int64_t i = 0; i < n.rows; ++i) {
    const Real* src = na.value.data() + static_cast<int64_t>(idx[static_cast<size_t>(i)]) * na.cols;
    std::copy(src, src + na.cols, n.value.data() + i * na.cols);
  }
  return emit(std::move(n));
}

template <class Real>
Tensor<Real> Tape<Real>::gather_elems(Tensor<Real> a,
                                      std::span<const int32_t> row_idx,
                                      std::span<const int32_t> col_idx,
                                      int64_t out_rows, int64_t out_cols) {
  const Node<Real>& na = ref(a);
  VOXLAB_REQUIRE(row_idx.size() == col_idx.size(), DimensionError,
                 "gather_elems: index arrays differ in length");
  VOXLAB_REQUIRE(static_cast<int64_t>(row_idx.size()) == out_rows * out_cols,
                 DimensionError, "gather_elems: " << row_idx.size()
                                                  << " indices cannot fill "
                                                  << shape_str(out_rows, out_cols));
  for (size_t i = 0; i < row_idx.size(); ++i) {
    VOXLAB_REQUIRE(row_idx[i] >= 0 && row_idx[i] < na.rows, IndexError,
                   "gather_elems: row " << row_idx[i] << " out of range");
    VOXLAB_REQUIRE(col_idx[i] >= 0 && col_idx[i] < na.cols, IndexError,
                   "gather_elems: col " << col_idx[i] << " out of range");
  }
  Node<Real> n;
  n.op = Op::kGatherElems;
  n.requires_grad = na.requires_grad;
  n.rows = out_rows;
  n.cols = out_cols;
  n.in = {a.id, -1, -1};
  n.aux.resize(2 * row_idx.size());
  for (size_t i = 0; i < row_idx.size(); ++i) {
    n.aux[i] = row_idx[i];
    n.aux[row_idx.size() + i] = col_idx[i];
  }
  n.value.resize(row_idx.size());
  for (size_t i = 0; i < row_idx.size(); ++i) {
    n.value[i] = na.value[static_cast<size_t>(
        static_cast<int64_t>(row_idx[i]) * na.cols + col_idx[i])];
  }
  return emit(std::move(n));
}

template <class Real>
Tensor<Real> Tape<Real>::concat_cols(std::span<const Tensor<Real>> parts) {
  VOXLAB_REQUIRE(!parts.empty(), ContractError, "concat_cols: no inputs");
  int64_t rows = ref(parts[0]).rows;
  int64_t cols = 0;
  bool rg = false;
  for (const auto& p : parts) {
    const Node<Real>& np = ref(p);
    VOXLAB_REQUIRE(np.rows == rows, DimensionError,
                   "concat_cols: row mismatch " << np.rows << " vs " << rows);
    cols += np.cols;
    rg = rg || np.requires_grad;
  }
  Node<Real> n;
  n.op = Op::kConcatCols;
  n.requires_grad = rg;
  n.rows = rows;
  n.cols = cols;
  n.aux.reserve(parts.size());
  for (const auto& p : parts) n.aux.push_back(p.id);
  n.value.resize(static_cast<size_t>(rows * cols));
  int64_t off = 0;
  for (const auto& p : parts) {
    const Node<Real>& np = nodes_[static_cast<size_t>(p.id)];
    for (int64_t i = 0; i < rows; ++i) {
      std::copy(np.value.data() + i * np.cols, np.value.data() + (i + 1) * np.cols,
                n.value.data() + i * cols + off);
    }
    off += np.cols;
  }
  return emit(std::move(n));
}

template <class Real>
Tensor<Real> Tape<Real>::slice_cols(Tensor<Real> a, int64_t c0, int64_t c1) {
  const Node<Real>& na = ref(a);
  VOXLAB_REQUIRE(0 <= c0 && c0 < c1 && c1 <= na.cols, IndexError,
                 "slice_cols: [" << c0 << ", " << c1 << ") out of range for width "
                                 << na.cols);
  Node<Real> n;
  n.op = Op::kSliceCols;
  n.requires_grad = na.requires_grad;
  n.rows = na.rows;
  n.cols = c1 - c0;
  n.in = {a.id, -1, -1};
  n.aux = {static_cast<int32_t>(c0), static_cast<int32_t>(c1)};
  n.value.resize(static_cast<size_t>(n.rows * n.cols));
  for (int64_t i = 0; i < na.rows; ++i) {
    std::copy(na.value.data() + i * na.cols + c0, na.value.data() + i * na.cols + c1,
              n.value.data() + i * n.cols);
  }
  return emit(std::move(n));
}

template <class Real>
Tensor<Real> Tape<Real>::replace_masked_rows(Tensor<Real> x, Tensor<Real> emb,
                                             std::span<const uint8_t> mask) {
  const Node<Real>& nx = ref(x);
  const Node<Real>& ne = ref(emb);
  VOXLAB_REQUIRE(ne.rows == 1 && ne.cols == nx.cols, DimensionError,
                 "replace_masked_rows: embedding shape "
                     << shape_str(ne.rows, ne.cols) << " does not match width "
                     << nx.cols);
  VOXLAB_REQUIRE(static_cast<int64_t>(mask.size()) == nx.rows, DimensionError,
                 "replace_masked_rows: mask length " << mask.size() << " for "
                                                     << nx.rows << " rows");
  Node<Real> n;
  n.op = Op::kReplaceMaskedRows;
  n.requires_grad = nx.requires_grad || ne.requires_grad;
  n.rows = nx.rows;
  n.cols = nx.cols;
  n.in = {x.id, emb.id, -1};
  n.aux.resize(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) n.aux[i] = mask[i] ? 1 : 0;
  n.value.resize(nx.value.size());
  for (int64_t i = 0; i < nx.rows; ++i) {
    const Real* src = mask[static_cast<size_t>(i)] ? ne.value.data()
                                                   : nx.value.data() + i * nx.cols;
    std::copy(src, src + nx.cols, n.value.data() + i * nx.cols);
  }
  return emit(std::move(n));
}

template <class Real>
std::span<const Real> Tape<Real>::value(Tensor<Real> t) const {
  const Node<Real>& n = ref(t);
  return std::span<const Real>(n.value.data(), n.value.size());
}

template <class Real>
std::span<const Real> Tape<Real>::grad(Tensor<Real> t) const {
  const Node<Real>& n = ref(t);
  VOXLAB_REQUIRE(!n.grad.empty(), ContractError,
                 "grad: backward() has not run over this tape");
  return std::span<const Real>(n.grad.data(), n.grad.size());
}

template <class Real>
Real Tape<Real>::scalar_value(Tensor<Real> t) const {
  const Node<Real>& n = ref(t);
  VOXLAB_REQUIRE(n.rows == 1 && n.cols == 1, ContractError,
                 "scalar_value: tensor is " << shape_str(n.rows, n.cols));
  return n.value[0];
}

template <class Real>
bool Tape<Real>::depends_on(int32_t node, int32_t ancestor) const {
  VOXLAB_REQUIRE(node >= 0 && node < size(), IndexError, "depends_on: bad node id");
  VOXLAB_REQUIRE(ancestor >= 0 && ancestor < size(), IndexError,
                 "depends_on: bad ancestor id");
  std::vector<uint8_t> seen(nodes_.size(), 0);
  std::vector<int32_t> stack{node};
  while (!stack.empty()) {
    const int32_t cur = stack.back();
    stack.pop_back();
    if (cur == ancestor) return true;
    if (seen[static_cast<size_t>(cur)]) continue;
    seen[static_cast<size_t>(cur)] = 1;
    const Node<Real>& n = nodes_[static_cast<size_t>(cur)];
    for (const int32_t i : n.in) {
      if (i >= 0) stack.push_back(i);
    }
    if (n.op == Op::kConcatCols) {
      for (const int32_t i : n.aux) stack.push_back(i);
    }
  }
  return false;
}

template <class Real>
void Tape<Real>::clear() {
  nodes_.clear();
}

template <class Real>
void Tape<Real>::backward(Tensor<Real> loss) {
  const Node<Real>& root = ref(loss);
  VOXLAB_REQUIRE(root.rows == 1 && root.cols == 1, ContractError,
                 "backward: root must be scalar, got "
                     << shape_str(root.rows, root.cols));
  for (auto& n : nodes_) n.grad.assign(n.value.size(), Real(0));
  nodes_[static_cast<size_t>(loss.id)].grad[0] = Real(1);
  for (int32_t id = loss.id; id >= 0; --id) backprop_node(id);
}

template <class Real>
void Tape<Real>::backprop_node(int32_t id) {
  Node<Real>& n = nodes_[static_cast<size_t>(id)];
  if (!n.requires_grad || n.op == Op::kLeaf) return;
  bool any = false;
  for (const Real g : n.grad) {
    if (g != Real(0)) {
      any = true;
      break;
    }
  }
  if (!any) return;
  const Real* g = n.grad.data();
  auto in_node = [&](int slot) -> Node<Real>& {
    return nodes_[static_cast<size_t>(n.in[static_cast<size_t>(slot)])];
  };
  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kAdd: {
      Node<Real>& a = in_node(0);
      Node<Real>& b = in_node(1);
      if (a.requires_grad)
        for (size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += g[i];
      if (b.requires_grad)
        for (size_t i = 0; i < b.grad.size(); ++i) b.grad[i] += g[i];
      break;
    }
    case Op::kAddRow: {
      Node<Real>& x = in_node(0);
      Node<Real>& r = in_node(1);
      if (x.requires_grad)
        for (size_t i = 0; i < x.grad.size(); ++i) x.grad[i] += g[i];
      if (r.requires_grad) {
        for (int64_t i = 0; i < n.rows; ++i)
          for (int64_t j = 0; j < n.cols; ++j)
            r.grad[static_cast<size_t>(j)] += g[i * n.cols + j];
      }
      break;
    }
    case Op::kMul: {
      Node<Real>& a = in_node(0);
      Node<Real>& b = in_node(1);
      if (a.requires_grad)
        for (size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += g[i] * b.value[i];
      if (b.requires_grad)
        for (size_t i = 0; i < b.grad.size(); ++i) b.grad[i] += g[i] * a.value[i];
      break;
    }
    case Op::kScale: {
      Node<Real>& a = in_node(0);
      if (a.requires_grad)
        for (size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += g[i] * n.x0;
      break;
    }
    case Op::kMatmul: {
      Node<Real>& a = in_node(0);
      Node<Real>& b = in_node(1);
      // dA += G * B^T ; dB += A^T * G
      if (a.requires_grad)
        acc_abt(a.grad.data(), g, b.value.data(), n.rows, n.cols, a.cols);
      if (b.requires_grad)
        acc_atb(b.grad.data(), a.value.data(), g, a.rows, a.cols, n.cols);
      break;
    }
    case Op::kMatmulNt: {
      Node<Real>& a = in_node(0);
      Node<Real>& b = in_node(1);
      // out = A * B^T: dA += G * B ; dB += G^T * A
      if (a.requires_grad)
        acc_ab(a.grad.data(), g, b.value.data(), n.rows, n.cols, a.cols);
      if (b.requires_grad)
        acc_atb(b.grad.data(), g, a.value.data(), n.rows, n.cols, a.cols);
      break;
    }
    case Op::kGelu: {
      Node<Real>& a = in_node(0);
      if (a.requires_grad) {
        for (size_t i = 0; i < a.grad.size(); ++i) {
          const double x = static_cast<double>(a.value[i]);
          const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
          const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
          a.grad[i] += g[i] * static_cast<Real>(cdf + x * pdf);
        }
      }
      break;
    }
    case Op::kExp: {
      Node<Real>& a = in_node(0);
      if (a.requires_grad)
        for (size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += g[i] * n.value[i];
      break;
    }
    case Op::kDiv: {
      Node<Real>& a = in_node(0);
      Node<Real>& b = in_node(1);
      if (a.requires_grad)
        for (size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += g[i] / b.value[i];
      if (b.requires_grad)
        for (size_t i = 0; i < b.grad.size(); ++i)
          b.grad[i] -= g[i] * n.value[i] / b.value[i];
      break;
    }
    case Op::kRowSum: {
      Node<Real>& a = in_node(0);
      if (a.requires_grad) {
        for (int64_t i = 0; i < a.rows; ++i)
          for (int64_t j = 0; j < a.cols; ++j)
            a.grad[static_cast<size_t>(i * a.cols + j)] += g[i];
      }
      break;
    }
    case Op::kSumAll: {
      Node<Real>& a = in_node(0);
      if (a.requires_grad)
        for (size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += g[0];
      break;
    }
    case Op::kSoftmaxRows: {
      Node<Real>& a = in_node(0);
      if (a.requires_grad) {
        for (int64_t i = 0; i < n.rows; ++i) {
          const Real* yi = n.value.data() + i * n.cols;
          const Real* gi = g + i * n.cols;
          Real dot = 0;
          for (int64_t j = 0; j < n.cols; ++j) dot += gi[j] * yi[j];
          Real* ai = a.grad.data() + i * n.cols;
          for (int64_t j = 0; j < n.cols; ++j) ai[j] += (gi[j] - dot) * yi[j];
        }
      }
      break;
    }
    case Op::kLayerNorm: {
      Node<Real>& x = in_node(0);
      Node<Real>& s = in_node(1);
      Node<Real>& b = in_node(2);
      const int64_t d = n.cols;
      const Real eps = n.x0;
      for (int64_t i = 0; i < n.rows; ++i) {
        const Real* xi = x.value.data() + i * d;
        const Real* gi = g + i * d;
        // Recompute the row statistics; cheaper than caching for these sizes.
        Real mean = 0;
        for (int64_t j = 0; j < d; ++j) mean += xi[j];
        mean /= static_cast<Real>(d);
        Real var = 0;
        for (int64_t j = 0; j < d; ++j) {
          const Real c = xi[j] - mean;
          var += c * c;
        }
        var /= static_cast<Real>(d);
        const Real inv = Real(1) / static_cast<Real>(std::sqrt(static_cast<double>(var + eps)));
        if (s.requires_grad || b.requires_grad) {
          for (int64_t j = 0; j < d; ++j) {
            const Real y = (xi[j] - mean) * inv;
            if (s.requires_grad) s.grad[static_cast<size_t>(j)] += gi[j] * y;
            if (b.requires_grad) b.grad[static_cast<size_t>(j)] += gi[j];
          }
        }
        if (x.requires_grad) {
          // dx = inv * (gy - mean(gy) - y * mean(gy . y)), gy = g * scale
          Real m1 = 0, m2 = 0;
          for (int64_t j = 0; j < d; ++j) {
            const Real gy = gi[j] * s.value[static_cast<size_t>(j)];
            const Real y = (xi[j] - mean) * inv;
            m1 += gy;
            m2 += gy * y;
          }
          m1 /= static_cast<Real>(d);
          m2 /= static_cast<Real>(d);
          Real* xg = x.grad.data() + i * d;
          for (int64_t j = 0; j < d; ++j) {
            const Real gy = gi[j] * s.value[static_cast<size_t>(j)];
            const Real y = (xi[j] - mean) * inv;
            xg[j] += inv * (gy - m1 - y * m2);
          }
        }
      }
      break;
    }
    case Op::kRowsL2Normalize: {
      Node<Real>& a = in_node(0);
      if (a.requires_grad) {
        const Real eps = n.x0;
        for (int64_t i = 0; i < n.rows; ++i) {
          const Real* xi = a.value.data() + i * n.cols;
          const Real* yi = n.value.data() + i * n.cols;
          const Real* gi = g + i * n.cols;
          Real sq = 0;
          for (int64_t j = 0; j < n.cols; ++j) sq += xi[j] * xi[j];
          const Real norm = static_cast<Real>(std::sqrt(static_cast<double>(sq)));
          Real* ag = a.grad.data() + i * n.cols;
          if (norm > eps) {
            Real gy = 0;
            for (int64_t j = 0; j < n.cols; ++j) gy += gi[j] * yi[j];
            const Real inv = Real(1) / norm;
            for (int64_t j = 0; j < n.cols; ++j)
              ag[j] += (gi[j] - yi[j] * gy) * inv;
          } else {
            const Real inv = Real(1) / eps;
            for (int64_t j = 0; j < n.cols; ++j) ag[j] += gi[j] * inv;
          }
        }
      }
      break;
    }
    case Op::kCosineSim: {
      Node<Real>& u = in_node(0);
      Node<Real>& v = in_node(1);
      const Real gs = g[0];
      Real dot = 0, uu = 0, vv = 0;
      for (size_t i = 0; i < u.value.size(); ++i) {
        dot += u.value[i] * v.value[i];
        uu += u.value[i] * u.value[i];
        vv += v.value[i] * v.value[i];
      }
      const Real nu = static_cast<Real>(std::sqrt(static_cast<double>(uu)));
      const Real nv = static_cast<Real>(std::sqrt(static_cast<double>(vv)));
      const Real prod = nu * nv;
      const Real eps = n.x0;
      if (prod > eps) {
        const Real s = dot / prod;
        if (u.requires_grad) {
          for (size_t i = 0; i < u.value.size(); ++i)
            u.grad[i] += gs * (v.value[i] / prod - s * u.value[i] / uu);
        }
        if (v.requires_grad) {
          for (size_t i = 0; i < v.value.size(); ++i)
            v.grad[i] += gs * (u.value[i] / prod - s * v.value[i] / vv);
        }
      } else {
        // Degenerate branch: denominator is the constant eps.
        if (u.requires_grad)
          for (size_t i = 0; i < u.value.size(); ++i)
            u.grad[i] += gs * v.value[i] / eps;
        if (v.requires_grad)
          for (size_t i = 0; i < v.value.size(); ++i)
            v.grad[i] += gs * u.value[i] / eps;
      }
      break;
    }
    case Op::kCrossEntropyLogits: {
      Node<Real>& l = in_node(0);
      if (l.requires_grad) {
        const int64_t m = l.rows;
        const int64_t c = l.cols;
        int64_t count = 0;
        for (int64_t i = 0; i < m; ++i) count += n.aux[static_cast<size_t>(m + i)];
        const Real w = g[0] / static_cast<Real>(count);
        for (int64_t i = 0; i < m; ++i) {
          if (!n.aux[static_cast<size_t>(m + i)]) continue;
          const Real* zi = l.value.data() + i * c;
          Real* gi = l.grad.data() + i * c;
          Real mx = zi[0];
          for (int64_t j = 1; j < c; ++j) mx = std::max(mx, zi[j]);
          double z = 0;
          for (int64_t j = 0; j < c; ++j) z += std::exp(static_cast<double>(zi[j] - mx));
          const double invz = 1.0 / z;
          const int32_t tgt = n.aux[static_cast<size_t>(i)];
          for (int64_t j = 0; j < c; ++j) {
            const Real p = static_cast<Real>(std::exp(static_cast<double>(zi[j] - mx)) * invz);
            gi[j] += w * (p - (j == tgt ? Real(1) : Real(0)));
          }
        }
      }
      break;
    }
    case Op::kGatherRows: {
      Node<Real>& a = in_node(0);
      if (a.requires_grad) {
        for (int64_t i = 0; i < n.rows; ++i) {
          Real* dst = a.grad.data() +
                      static_cast<int64_t>(n.aux[static_cast<size_t>(i)]) * a.cols;
          const Real* gi = g + i * n.cols;
          for (int64_t j = 0; j < n.cols; ++j) dst[j] += gi[j];
        }
      }
      break;
    }
    case Op::kGatherElems: {
      Node<Real>& a = in_node(0);
      if (a.requires_grad) {
        const size_t cnt = n.value.size();
        for (size_t i = 0; i < cnt; ++i) {
          const int64_t r = n.aux[i];
          const int64_t c = n.aux[cnt + i];
          a.grad[static_cast<size_t>(r * a.cols + c)] += g[i];
        }
      }
      break;
    }
    case Op::kConcatCols: {
      int64_t off = 0;
      for (const int32_t pid : n.aux) {
        Node<Real>& p = nodes_[static_cast<size_t>(pid)];
        if (p.requires_grad) {
          for (int64_t i = 0; i < n.rows; ++i) {
            const Real* gi = g + i * n.cols + off;
            Real* pg = p.grad.data() + i * p.cols;
            for (int64_t j = 0; j < p.cols; ++j) pg[j] += gi[j];
          }
        }
        off += p.cols;
      }
      break;
    }
    case Op::kSliceCols: {
      Node<Real>& a = in_node(0);
      if (a.requires_grad) {
        const int64_t c0 = n.aux[0];
        for (int64_t i = 0; i < n.rows; ++i) {
          const Real* gi = g + i * n.cols;
          Real* ag = a.grad.data() + i * a.cols + c0;
          for (int64_t j = 0; j < n.cols; ++j) ag[j] += gi[j];
        }
      }
      break;
    }
    case Op::kReplaceMaskedRows: {
      Node<Real>& x = in_node(0);
      Node<Real>& e = in_node(1);
      for (int64_t i = 0; i < n.rows; ++i) {
        const Real* gi = g + i * n.cols;
        if (n.aux[static_cast<size_t>(i)]) {
          if (e.requires_grad)
            for (int64_t j = 0; j < n.cols; ++j) e.grad[static_cast<size_t>(j)] += gi[j];
        } else {
          if (x.requires_grad) {
            Real* xg = x.grad.data() + i * n.cols;
            for (int64_t j = 0; j < n.cols; ++j) xg[j] += gi[j];
          }
        }
      }
      break;
    }
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace voxlab
