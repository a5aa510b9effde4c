// src/autograd.cpp
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

#include "nrser/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <Eigen/Core>

namespace nrser::ag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

[[noreturn]] void ShapeError(const char* op, const Shape& a, const Shape& b) {
  throw Error(std::string(op) + ": shape mismatch " + ShapeToString(a) + " vs " +
              ShapeToString(b));
}

Var MakeNode(const char* op, Tensor value, std::vector<Var> inputs,
             std::function<void(Node&)> backward) {
  if (!value.AllFinite())
    throw NumericalError(std::string("non-finite result in ") + op);
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  node->is_leaf = false;
  for (const Var& v : inputs)
    if (v.defined() && v.requires_grad()) node->requires_grad = true;
  if (node->requires_grad) {
    node->parents.reserve(inputs.size());
    for (const Var& v : inputs) node->parents.push_back(v.shared());
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

// Parent accessor for backward closures: null when the parent needs no grad.
Node* GradTarget(Node& self, std::size_t i) {
  Node* p = self.parents[i].get();
  return (p != nullptr && p->requires_grad) ? p : nullptr;
}

void CheckBroadcast(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return;
  if (NumElements(b) == 1) return;
  if (b.size() <= a.size() && std::equal(b.rbegin(), b.rend(), a.rbegin())) return;
  ShapeError(op, a, b);
}

}  // namespace

std::string ShapeToString(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

std::size_t NumElements(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(NumElements(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (data_.size() != NumElements(shape_))
    throw Error("tensor data size " + std::to_string(data_.size()) +
                " does not match shape " + ShapeToString(shape_));
}

double Tensor::item() const {
  if (data_.size() != 1) throw Error("item() on tensor of shape " + ShapeToString(shape_));
  return data_[0];
}

void Tensor::Fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::AllFinite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor& Node::GradBuffer() {
  if (grad.empty() && !value.empty()) grad = Tensor(value.shape(), 0.0);
  if (grad.shape() != value.shape()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

void Var::ZeroGrad() {
  if (node_ && !node_->grad.empty()) node_->grad.Fill(0.0);
}

Var Var::Detach() const { return Constant(node_->value); }

Var Parameter(Tensor t) {
  auto node = std::make_shared<Node>();
  node->value = std::move(t);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var Constant(Tensor t) {
  auto node = std::make_shared<Node>();
  node->value = std::move(t);
  return Var(std::move(node));
}

Var Add(const Var& a, const Var& b) {
  CheckBroadcast("add", a.shape(), b.shape());
  Tensor out = a.value();
  const std::size_t bs = b.size();
  const double* pb = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += pb[i % bs];
  return MakeNode("add", std::move(out), {a, b}, [bs](Node& self) {
    const Tensor& g = self.grad;
    if (Node* pa = GradTarget(self, 0)) {
      Tensor& ga = pa->GradBuffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (Node* pb = GradTarget(self, 1)) {
      Tensor& gb = pb->GradBuffer();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % bs] += g[i];
    }
  });
}

Var Sub(const Var& a, const Var& b) {
  CheckBroadcast("sub", a.shape(), b.shape());
  Tensor out = a.value();
  const std::size_t bs = b.size();
  const double* pb = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= pb[i % bs];
  return MakeNode("sub", std::move(out), {a, b}, [bs](Node& self) {
    const Tensor& g = self.grad;
    if (Node* pa = GradTarget(self, 0)) {
      Tensor& ga = pa->GradBuffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (Node* pb = GradTarget(self, 1)) {
      Tensor& gb = pb->GradBuffer();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % bs] -= g[i];
    }
  });
}

Var Mul(const Var& a, const Var& b) {
  CheckBroadcast("mul", a.shape(), b.shape());
  Tensor out = a.value();
  const std::size_t bs = b.size();
  const double* pb = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= pb[i % bs];
  return MakeNode("mul", std::move(out), {a, b}, [bs](Node& self) {
    const Tensor& g = self.grad;
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    if (Node* pa = GradTarget(self, 0)) {
      Tensor& ga = pa->GradBuffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i % bs];
    }
    if (Node* pb = GradTarget(self, 1)) {
      Tensor& gb = pb->GradBuffer();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % bs] += g[i] * av[i];
    }
  });
}

Var Scale(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= s;
  return MakeNode("scale", std::move(out), {a}, [s](Node& self) {
    Tensor& ga = self.parents[0]->GradBuffer();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * self.grad[i];
  });
}

Var AddScalar(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v += s;
  return MakeNode("add_scalar", std::move(out), {a}, [](Node& self) {
    Tensor& ga = self.parents[0]->GradBuffer();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
  });
}

Var Relu(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return MakeNode("relu", std::move(out), {a}, [](Node& self) {
    const Tensor& x = self.parents[0]->value;
    Tensor& ga = self.parents[0]->GradBuffer();
    for (std::size_t i = 0; i < ga.size(); ++i)
      if (x[i] > 0.0) ga[i] += self.grad[i];
  });
}

Var Tanh(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::tanh(v);
  return MakeNode("tanh", std::move(out), {a}, [](Node& self) {
    Tensor& ga = self.parents[0]->GradBuffer();
    for (std::size_t i = 0; i < ga.size(); ++i) {
      const double y = self.value[i];
      ga[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Var Clamp01(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::min(std::max(0.0, v), 1.0);
  return MakeNode("clamp01", std::move(out), {a}, [](Node& self) {
    const Tensor& x = self.parents[0]->value;
    Tensor& ga = self.parents[0]->GradBuffer();
    for (std::size_t i = 0; i < ga.size(); ++i)
      if (x[i] >= 0.0 && x[i] <= 1.0) ga[i] += self.grad[i];
  });
}

Var MatMul(const Var& a, const Var& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
    ShapeError("matmul", a.shape(), b.shape());
  const auto m = static_cast<Eigen::Index>(a.shape()[0]);
  const auto k = static_cast<Eigen::Index>(a.shape()[1]);
  const auto n = static_cast<Eigen::Index>(b.shape()[1]);
  Tensor out({a.shape()[0], b.shape()[1]});
  MapMat(out.data(), m, n).noalias() =
      ConstMapMat(a.value().data(), m, k) * ConstMapMat(b.value().data(), k, n);
  return MakeNode("matmul", std::move(out), {a, b}, [m, k, n](Node& self) {
    ConstMapMat g(self.grad.data(), m, n);
    if (Node* pa = GradTarget(self, 0)) {
      MapMat(pa->GradBuffer().data(), m, k).noalias() +=
          g * ConstMapMat(self.parents[1]->value.data(), k, n).transpose();
    }
    if (Node* pb = GradTarget(self, 1)) {
      MapMat(pb->GradBuffer().data(), k, n).noalias() +=
          ConstMapMat(self.parents[0]->value.data(), m, k).transpose() * g;
    }
  });
}

Var Transpose(const Var& a) {
  if (a.shape().size() != 2) throw Error("transpose: rank-2 tensor required");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  Tensor out({c, r});
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  return MakeNode("transpose", std::move(out), {a}, [r, c](Node& self) {
    Tensor& ga = self.parents[0]->GradBuffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += self.grad[j * r + i];
  });
}

Var Reshape(const Var& a, Shape shape) {
  if (NumElements(shape) != a.size()) ShapeError("reshape", a.shape(), shape);
  Tensor out(std::move(shape), std::vector<double>(a.value().values().begin(),
                                                   a.value().values().end()));
  return MakeNode("reshape", std::move(out), {a}, [](Node& self) {
    Tensor& ga = self.parents[0]->GradBuffer();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
  });
}

Var SliceRows(const Var& a, std::size_t begin, std::size_t end) {
  if (a.shape().empty() || begin > end || end > a.shape()[0])
    throw Error("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                ") invalid for shape " + ShapeToString(a.shape()));
  const std::size_t inner = a.shape()[0] == 0 ? 0 : a.size() / a.shape()[0];
  Shape shape = a.shape();
  shape[0] = end - begin;
  const auto first = a.value().values().begin() + static_cast<std::ptrdiff_t>(begin * inner);
  Tensor out(std::move(shape),
             std::vector<double>(first, first + static_cast<std::ptrdiff_t>((end - begin) * inner)));
  return MakeNode("slice_rows", std::move(out), {a}, [begin, inner](Node& self) {
    Tensor& ga = self.parents[0]->GradBuffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[begin * inner + i] += self.grad[i];
  });
}

ConvGeometry SameGeometry(std::size_t in_h, std::size_t in_w, std::size_t kernel,
                          std::size_t stride) {
  ConvGeometry g;
  g.stride_h = g.stride_w = stride;
  g.out_h = (in_h + stride - 1) / stride;
  g.out_w = (in_w + stride - 1) / stride;
  const auto pad = [&](std::size_t in, std::size_t out) -> std::size_t {
    const std::size_t need = (out - 1) * stride + kernel;
    return need > in ? (need - in) / 2 : 0;
  };
  g.pad_top = pad(in_h, g.out_h);
  g.pad_left = pad(in_w, g.out_w);
  return g;
}

namespace {

// cols[(ci*kh + i)*kw + j][oh*out_w + ow] = x[ci][oh*sh - pt + i][ow*sw - pl + j]
void Im2Col(const double* x, std::size_t ci_n, std::size_t h, std::size_t w,
            std::size_t kh, std::size_t kw, const ConvGeometry& g, double* cols) {
  const std::size_t p = g.out_h * g.out_w;
  for (std::size_t ci = 0; ci < ci_n; ++ci) {
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        double* row = cols + ((ci * kh + i) * kw + j) * p;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride_h + i) -
                          static_cast<std::ptrdiff_t>(g.pad_top);
          double* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = x + (ci * h + static_cast<std::size_t>(ih)) * w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride_w + j) -
                            static_cast<std::ptrdiff_t>(g.pad_left);
            dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) ? 0.0 : src[iw];
          }
        }
      }
    }
  }
}

void Col2Im(const double* cols, std::size_t ci_n, std::size_t h, std::size_t w,
            std::size_t kh, std::size_t kw, const ConvGeometry& g, double* x) {
  const std::size_t p = g.out_h * g.out_w;
  for (std::size_t ci = 0; ci < ci_n; ++ci) {
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        const double* row = cols + ((ci * kh + i) * kw + j) * p;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride_h + i) -
                          static_cast<std::ptrdiff_t>(g.pad_top);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
          double* dst = x + (ci * h + static_cast<std::size_t>(ih)) * w;
          const double* src = row + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride_w + j) -
                            static_cast<std::ptrdiff_t>(g.pad_left);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(w)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace

Var Conv2d(const Var& x, const Var& w, const Var& bias, const ConvGeometry& g) {
  if (x.shape().size() != 3 || w.shape().size() != 4 || w.shape()[1] != x.shape()[0])
    ShapeError("conv2d", x.shape(), w.shape());
  const std::size_t ci = x.shape()[0], h = x.shape()[1], wd = x.shape()[2];
  const std::size_t co = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
  if (bias.defined() && bias.shape() != Shape{co}) ShapeError("conv2d bias", bias.shape(), {co});
  if (g.out_h == 0 || g.out_w == 0 || g.stride_h == 0 || g.stride_w == 0)
    throw Error("conv2d: empty output geometry");

  const std::size_t k = ci * kh * kw;
  const std::size_t p = g.out_h * g.out_w;
  auto cols = std::make_shared<Buffer>(k * p);
  Im2Col(x.value().data(), ci, h, wd, kh, kw, g, cols->data());

  Tensor out({co, g.out_h, g.out_w});
  MapMat om(out.data(), static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(p));
  om.noalias() = ConstMapMat(w.value().data(), static_cast<Eigen::Index>(co),
                             static_cast<Eigen::Index>(k)) *
                 ConstMapMat(cols->data(), static_cast<Eigen::Index>(k),
                             static_cast<Eigen::Index>(p));
  if (bias.defined())
    for (std::size_t c = 0; c < co; ++c) om.row(static_cast<Eigen::Index>(c)).array() += bias.value()[c];

  std::vector<Var> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return MakeNode("conv2d", std::move(out), std::move(inputs),
                  [=](Node& self) {
    const auto ek = static_cast<Eigen::Index>(k), ep = static_cast<Eigen::Index>(p),
               eco = static_cast<Eigen::Index>(co);
    ConstMapMat gm(self.grad.data(), eco, ep);
    if (Node* pw = GradTarget(self, 1)) {
      MapMat(pw->GradBuffer().data(), eco, ek).noalias() +=
          gm * ConstMapMat(cols->data(), ek, ep).transpose();
    }
    if (has_bias) {
      if (Node* pb = GradTarget(self, 2)) {
        Tensor& gb = pb->GradBuffer();
        for (std::size_t c = 0; c < co; ++c) gb[c] += gm.row(static_cast<Eigen::Index>(c)).sum();
      }
    }
    if (Node* px = GradTarget(self, 0)) {
      Buffer dcols(k * p);
      MapMat(dcols.data(), ek, ep).noalias() =
          ConstMapMat(self.parents[1]->value.data(), eco, ek).transpose() * gm;
      Col2Im(dcols.data(), ci, h, wd, kh, kw, g, px->GradBuffer().data());
    }
  });
}

namespace {

// Row-wise softmax over `count` groups of `len` entries with stride `stride`.
struct Lanes {
  std::size_t count, len, stride, group_step;
  std::size_t Index(std::size_t lane, std::size_t i) const {
    return (lane / stride) * group_step + (lane % stride) + i * stride;
  }
};

Lanes LanesFor(const Shape& s, std::size_t axis) {
  if (s.empty() || s.size() > 2 || axis >= s.size())
    throw Error("softmax: rank-1/2 tensor and valid axis required, got " + ShapeToString(s));
  if (s.size() == 1) return {1, s[0], 1, s[0]};
  if (axis == 1) return {s[0], s[1], 1, s[1]};
  return {s[1], s[0], s[1], 1};
}

}  // namespace

Var Softmax(const Var& a, std::size_t axis) {
  const Lanes lanes = LanesFor(a.shape(), axis);
  Tensor out(a.shape());
  const Tensor& x = a.value();
  for (std::size_t l = 0; l < lanes.count; ++l) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < lanes.len; ++i) mx = std::max(mx, x[lanes.Index(l, i)]);
    double z = 0.0;
    for (std::size_t i = 0; i < lanes.len; ++i) {
      const std::size_t idx = lanes.Index(l, i);
      out[idx] = std::exp(x[idx] - mx);
      z += out[idx];
    }
    for (std::size_t i = 0; i < lanes.len; ++i) out[lanes.Index(l, i)] /= z;
  }
  return MakeNode("softmax", std::move(out), {a}, [lanes](Node& self) {
    Tensor& ga = self.parents[0]->GradBuffer();
    for (std::size_t l = 0; l < lanes.count; ++l) {
      double dot = 0.0;
      for (std::size_t i = 0; i < lanes.len; ++i) {
        const std::size_t idx = lanes.Index(l, i);
        dot += self.grad[idx] * self.value[idx];
      }
      for (std::size_t i = 0; i < lanes.len; ++i) {
        const std::size_t idx = lanes.Index(l, i);
        ga[idx] += self.value[idx] * (self.grad[idx] - dot);
      }
    }
  });
}

Var MaskedSoftmax(const Var& a, const std::vector<bool>& mask) {
  if (a.shape().size() != 1 || mask.size() != a.size())
    throw Error("masked_softmax: rank-1 input with matching mask required");
  const Tensor& x = a.value();
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < x.size(); ++i)
    if (mask[i]) mx = std::max(mx, x[i]);
  if (!std::isfinite(mx)) throw DataError("masked_softmax: no unmasked entries");
  Tensor out(a.shape(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!mask[i]) continue;
    out[i] = std::exp(x[i] - mx);
    z += out[i];
  }
  for (double& v : out.values()) v /= z;
  return MakeNode("masked_softmax", std::move(out), {a}, [](Node& self) {
    Tensor& ga = self.parents[0]->GradBuffer();
    double dot = 0.0;
    for (std::size_t i = 0; i < ga.size(); ++i) dot += self.grad[i] * self.value[i];
    // Masked entries have probability 0 and therefore zero gradient.
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.value[i] * (self.grad[i] - dot);
  });
}

Var Sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return MakeNode("sum", Tensor::Scalar(s), {a}, [](Node& self) {
    Tensor& ga = self.parents[0]->GradBuffer();
    const double g = self.grad[0];
    for (double& v : ga.values()) v += g;
  });
}

Var Mean(const Var& a) {
  if (a.size() == 0) throw Error("mean of empty tensor");
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const double n = static_cast<double>(a.size());
  return MakeNode("mean", Tensor::Scalar(s / n), {a}, [n](Node& self) {
    Tensor& ga = self.parents[0]->GradBuffer();
    const double g = self.grad[0] / n;
    for (double& v : ga.values()) v += g;
  });
}

Var MeanAxis(const Var& a, std::size_t axis) {
  const Shape& s = a.shape();
  if (axis >= s.size() || s[axis] == 0)
    throw Error("mean_axis: invalid axis for shape " + ShapeToString(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out(out_shape, 0.0);
  const Tensor& x = a.value();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += x[(o * len + l) * inner + i];
  const double inv = 1.0 / static_cast<double>(len);
  for (double& v : out.values()) v *= inv;
  return MakeNode("mean_axis", std::move(out), {a}, [outer, len, inner, inv](Node& self) {
    Tensor& ga = self.parents[0]->GradBuffer();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t l = 0; l < len; ++l)
        for (std::size_t i = 0; i < inner; ++i)
          ga[(o * len + l) * inner + i] += self.grad[o * inner + i] * inv;
  });
}

Var Mse(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) ShapeError("mse", a.shape(), b.shape());
  if (a.size() == 0) throw Error("mse of empty tensors");
  const double n = static_cast<double>(a.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.value()[i] - b.value()[i];
    s += d * d;
  }
  return MakeNode("mse", Tensor::Scalar(s / n), {a, b}, [n](Node& self) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    const double g = 2.0 * self.grad[0] / n;
    if (Node* pa = GradTarget(self, 0)) {
      Tensor& ga = pa->GradBuffer();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * (av[i] - bv[i]);
    }
    if (Node* pb = GradTarget(self, 1)) {
      Tensor& gb = pb->GradBuffer();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g * (av[i] - bv[i]);
    }
  });
}

Var CrossEntropy(const Var& logits, std::size_t label) {
  if (logits.shape().size() != 1 || label >= logits.size())
    throw Error("cross_entropy: rank-1 logits and in-range label required");
  const Tensor& x = logits.value();
  double mx = x[0];
  for (double v : x.values()) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : x.values()) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  return MakeNode("cross_entropy", Tensor::Scalar(lse - x[label]), {logits},
                  [label, lse](Node& self) {
    const Tensor& xv = self.parents[0]->value;
    Tensor& ga = self.parents[0]->GradBuffer();
    const double g = self.grad[0];
    for (std::size_t i = 0; i < ga.size(); ++i)
      ga[i] += g * (std::exp(xv[i] - lse) - (i == label ? 1.0 : 0.0));
  });
}

void Backward(const Var& loss, double seed) {
  if (!loss.defined()) throw Error("backward on undefined tensor");
  if (loss.size() != 1)
    throw Error("backward requires a scalar loss, got shape " + ShapeToString(loss.shape()));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p != nullptr && p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order)
    if (!n->is_leaf && !n->grad.empty()) n->grad.Fill(0.0);
  loss.node()->GradBuffer()[0] += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

}  // namespace nrser::ag
