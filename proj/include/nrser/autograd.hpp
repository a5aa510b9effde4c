// nrser/autograd.hpp
// Copyright 2026 The nrser Authors

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

// Reverse-mode differentiation over dense float64 tensors.
//
// A Var is a shared handle to a graph node. Ops build new nodes whose
// backward closures accumulate exact gradients into their inputs. Nodes
// created from inputs that do not require gradients are plain constants and
// keep no closure, so frozen sub-networks cost only their forward pass.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "nrser/common.hpp"

namespace nrser::ag {

using Shape = std::vector<std::size_t>;

/// Cache-line aligned storage. Vectorized reductions peel according to the
/// buffer address, so a fixed alignment keeps results bit-identical across
/// allocations and processes.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlignment));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::string ShapeToString(const Shape& s);
std::size_t NumElements(const Shape& s);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);
  static Tensor Scalar(double v) { return Tensor({}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  /// Value of a one-element tensor.
  double item() const;

  void Fill(double v);
  bool AllFinite() const;
  bool operator==(const Tensor& o) const = default;

 private:
  Shape shape_;
  Buffer data_;
};

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor& GradBuffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  /// Direct access for optimizers and finite-difference probes.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  double item() const { return node_->value.item(); }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Empty tensor when no gradient has reached this node.
  const Tensor& grad() const { return node_->grad; }
  void ZeroGrad();

  /// Same values, cut from the graph.
  Var Detach() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Trainable leaf.
Var Parameter(Tensor t);
/// Leaf that never receives a gradient.
Var Constant(Tensor t);

// Elementwise binary ops. b may equal a's shape, hold one element, or match a
// suffix of a's shape (repeated over the leading dimensions).
Var Add(const Var& a, const Var& b);
Var Sub(const Var& a, const Var& b);
Var Mul(const Var& a, const Var& b);

Var Scale(const Var& a, double s);
Var AddScalar(const Var& a, double s);
Var Relu(const Var& a);
Var Tanh(const Var& a);
/// min(max(x, 0), 1); gradient 1 on the closed interval [0, 1], else 0.
Var Clamp01(const Var& a);

/// [m,k] x [k,n] -> [m,n].
Var MatMul(const Var& a, const Var& b);
/// 2-D transpose.
Var Transpose(const Var& a);
Var Reshape(const Var& a, Shape shape);
/// Rows [begin, end) of the leading dimension.
Var SliceRows(const Var& a, std::size_t begin, std::size_t end);

struct ConvGeometry {
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_top = 0, pad_left = 0;
  std::size_t out_h = 0, out_w = 0;
};

/// TensorFlow-style "same" padding: ceil(in/stride) outputs with the extra
/// padding row/column placed at the bottom/right.
ConvGeometry SameGeometry(std::size_t in_h, std::size_t in_w, std::size_t kernel,
                          std::size_t stride);

/// x [Ci,H,W], w [Co,Ci,kh,kw], bias [Co] (may be undefined) -> [Co,out_h,out_w].
/// Input positions outside [0,H) x [0,W) read as zero.
Var Conv2d(const Var& x, const Var& w, const Var& bias, const ConvGeometry& g);

/// Softmax along an axis of a rank-1 or rank-2 tensor.
Var Softmax(const Var& a, std::size_t axis = 0);
/// Softmax over the unmasked entries of a rank-1 tensor; masked entries get
/// probability 0 (logit -inf). Throws when nothing is unmasked.
Var MaskedSoftmax(const Var& a, const std::vector<bool>& mask);

Var Sum(const Var& a);
Var Mean(const Var& a);
/// Mean over one axis; the axis is removed from the shape.
Var MeanAxis(const Var& a, std::size_t axis);

/// mean((a - b)^2) over all elements.
Var Mse(const Var& a, const Var& b);
/// -log softmax(logits)[label] for rank-1 logits.
Var CrossEntropy(const Var& logits, std::size_t label);

/// Accumulates d(seed * loss)/d(leaf) into every requires_grad leaf. Gradients
/// of intermediate nodes are reset first; leaf gradients accumulate across
/// calls until zeroed.
void Backward(const Var& loss, double seed = 1.0);

}  // namespace nrser::ag
