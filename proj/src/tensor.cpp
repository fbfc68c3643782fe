// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0

#include "m2n/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace m2n {

namespace {

thread_local Tape* g_active_tape = nullptr;
std::atomic<std::uint64_t> g_next_serial{1};

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

void check_finite(const std::vector<float>& data) {
  for (float v : data) {
    if (!std::isfinite(v)) throw std::domain_error("non-finite value produced by tensor operation");
  }
}

// Splits a shape around `axis` into (outer, length, inner) extents.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape strides_of(const Shape& shape) {
  Shape strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

// Maps every flat index of `out` to the flat index of an operand that is
// broadcast along its singleton axes.
std::vector<std::size_t> broadcast_index(const Shape& out, const Shape& operand) {
  const std::size_t n = shape_numel(out);
  std::vector<std::size_t> map(n);
  if (out == operand) {
    for (std::size_t i = 0; i < n; ++i) map[i] = i;
    return map;
  }
  const Shape ostr = strides_of(operand);
  std::vector<std::size_t> idx(out.size(), 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t src = 0;
    for (std::size_t a = 0; a < out.size(); ++a) {
      if (operand[a] != 1) src += idx[a] * ostr[a];
    }
    map[flat] = src;
    for (std::size_t a = out.size(); a-- > 0;) {
      if (++idx[a] < out[a]) break;
      idx[a] = 0;
    }
  }
  return map;
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

// ---- Tensor ----

Tensor::Tensor() : node_(std::make_shared<TensorNode>()) {
  node_->shape = {};
  node_->data = {0.0f};
}

Tensor::Tensor(Shape shape, std::vector<float> data, bool requires_grad)
    : node_(std::make_shared<TensorNode>()) {
  require(shape_numel(shape) == data.size(),
          "tensor data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
  check_finite(data);
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0f, requires_grad); }

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<float>(n, value), requires_grad);
}

Tensor Tensor::scalar(float value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

std::size_t Tensor::dim(std::size_t axis) const {
  require(axis < rank(), "axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
  return node_->shape[axis];
}

std::span<float> Tensor::mutable_grad() { return grad_buffer(*node_); }

float Tensor::item() const {
  require(numel() == 1, "item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

float Tensor::at(std::initializer_list<std::size_t> index) const {
  require(index.size() == rank(), "index rank mismatch for shape " + shape_str(shape()));
  std::size_t flat = 0, a = 0;
  for (auto i : index) {
    require(i < node_->shape[a], "index out of range");
    flat = flat * node_->shape[a] + i;
    ++a;
  }
  return node_->data[flat];
}

Tensor Tensor::clone() const { return Tensor(node_->shape, node_->data, node_->requires_grad); }

// ---- Tape ----

Tape::Tape() : serial_(g_next_serial.fetch_add(1)) {}
Tape::~Tape() {
  if (g_active_tape == this) g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

void Tape::reset() {
  entries_.clear();
  consumed_ = false;
  serial_ = g_next_serial.fetch_add(1);
}

std::vector<const TensorNode*> Tape::leaves() const {
  std::vector<const TensorNode*> out;
  std::unordered_set<const TensorNode*> seen;
  for (const auto& e : entries_) {
    for (const auto& in : e.inputs) {
      if (in->requires_grad && in->tape_serial == 0 && seen.insert(in.get()).second) out.push_back(in.get());
    }
  }
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw AutogradError("backward called twice on the same tape without reset()");
  if (loss.numel() != 1) throw AutogradError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  if (loss.node()->tape_serial != serial_) throw AutogradError("loss was not recorded on this tape");
  auto& seed = grad_buffer(*loss.node_);
  seed[0] += 1.0f;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward(*it->output);
  }
  entries_.clear();
  consumed_ = true;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (!tape) throw AutogradError("backward called with no active tape");
  tape->backward(loss);
}

std::vector<float>& grad_buffer(TensorNode& node) {
  if (node.grad.empty()) node.grad.assign(node.data.size(), 0.0f);
  return node.grad;
}

Tensor make_result(Shape shape, std::vector<float> data, std::initializer_list<const Tensor*> inputs,
                   std::function<void(TensorNode&)> backward_fn) {
  return make_result(std::move(shape), std::move(data), std::vector<const Tensor*>(inputs), std::move(backward_fn));
}

Tensor make_result(Shape shape, std::vector<float> data, const std::vector<const Tensor*>& inputs,
                   std::function<void(TensorNode&)> backward_fn) {
  check_finite(data);
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  Tape* tape = Tape::active();
  bool needs_grad = false;
  if (tape && !tape->consumed_) {
    for (const Tensor* t : inputs) needs_grad = needs_grad || t->requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    node->tape_serial = tape->serial_;
    Tape::Entry entry;
    entry.output = node;
    for (const Tensor* t : inputs) entry.inputs.push_back(t->shared_node());
    entry.backward = std::move(backward_fn);
    tape->entries_.push_back(std::move(entry));
  }
  return Tensor(std::move(node));
}

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul expects 2-D operands, got " + shape_str(a.shape()) + " and " +
                                              shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul inner dimension mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<float> c(m * n, 0.0f);
  const float* A = a.data().data();
  const float* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const float aip = A[i * k + p];
      const float* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  auto an = a.shared_node(), bn = b.shared_node();
  return make_result({m, n}, std::move(c), {&a, &b}, [an, bn, m, k, n](TensorNode& out) {
    const float* dC = out.grad.data();
    if (an->requires_grad) {
      auto& dA = grad_buffer(*an);
      const float* B = bn->data.data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          float acc = 0.0f;
          const float* brow = B + p * n;
          const float* grow = dC + i * n;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          dA[i * k + p] += acc;
        }
      }
    }
    if (bn->requires_grad) {
      auto& dB = grad_buffer(*bn);
      const float* A = an->data.data();
      for (std::size_t i = 0; i < m; ++i) {
        const float* grow = dC + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const float aip = A[i * k + p];
          float* drow = dB.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) drow[j] += aip * grow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& x) {
  require(x.rank() == 2, "transpose expects a 2-D tensor, got " + shape_str(x.shape()));
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<float> out(r * c);
  const auto src = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = src[i * c + j];
  auto xn = x.shared_node();
  return make_result({c, r}, std::move(out), {&x}, [xn, r, c](TensorNode& o) {
    auto& dx = grad_buffer(*xn);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += o.grad[j * r + i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape_numel(shape) == x.numel(),
          "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  auto xn = x.shared_node();
  std::vector<float> data(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(data), {&x}, [xn](TensorNode& o) {
    auto& dx = grad_buffer(*xn);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += o.grad[i];
  });
}

// ---- elementwise ----

Tensor elementwise(Binary op, const Tensor& a, const Tensor& b) {
  require(a.rank() == b.rank(), "elementwise rank mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Shape out_shape(a.rank());
  for (std::size_t i = 0; i < a.rank(); ++i) {
    const auto da = a.shape()[i], db = b.shape()[i];
    require(da == db || da == 1 || db == 1,
            "shapes not broadcastable: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    out_shape[i] = std::max(da, db);
  }
  const std::size_t n = shape_numel(out_shape);
  auto ia = std::make_shared<std::vector<std::size_t>>(broadcast_index(out_shape, a.shape()));
  auto ib = std::make_shared<std::vector<std::size_t>>(broadcast_index(out_shape, b.shape()));
  std::vector<float> out(n);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    const float x = A[(*ia)[i]], y = B[(*ib)[i]];
    switch (op) {
      case Binary::Add: out[i] = x + y; break;
      case Binary::Sub: out[i] = x - y; break;
      case Binary::Mul: out[i] = x * y; break;
    }
  }
  auto an = a.shared_node(), bn = b.shared_node();
  return make_result(std::move(out_shape), std::move(out), {&a, &b}, [op, an, bn, ia, ib, n](TensorNode& o) {
    if (an->requires_grad) {
      auto& da = grad_buffer(*an);
      for (std::size_t i = 0; i < n; ++i) {
        const float g = o.grad[i];
        da[(*ia)[i]] += op == Binary::Mul ? g * bn->data[(*ib)[i]] : g;
      }
    }
    if (bn->requires_grad) {
      auto& db = grad_buffer(*bn);
      for (std::size_t i = 0; i < n; ++i) {
        const float g = o.grad[i];
        switch (op) {
          case Binary::Add: db[(*ib)[i]] += g; break;
          case Binary::Sub: db[(*ib)[i]] -= g; break;
          case Binary::Mul: db[(*ib)[i]] += g * an->data[(*ia)[i]]; break;
        }
      }
    }
  });
}

Tensor elementwise(Unary op, const Tensor& x) {
  const auto src = x.data();
  std::vector<float> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    const float v = src[i];
    switch (op) {
      case Unary::Tanh: out[i] = std::tanh(v); break;
      case Unary::Sigmoid: out[i] = v >= 0 ? 1.0f / (1.0f + std::exp(-v)) : std::exp(v) / (1.0f + std::exp(v)); break;
      case Unary::Relu: out[i] = v > 0 ? v : 0.0f; break;
    }
  }
  auto xn = x.shared_node();
  return make_result(x.shape(), std::move(out), {&x}, [op, xn](TensorNode& o) {
    auto& dx = grad_buffer(*xn);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const float y = o.data[i];
      switch (op) {
        case Unary::Tanh: dx[i] += o.grad[i] * (1.0f - y * y); break;
        case Unary::Sigmoid: dx[i] += o.grad[i] * y * (1.0f - y); break;
        case Unary::Relu: dx[i] += xn->data[i] > 0 ? o.grad[i] : 0.0f; break;
      }
    }
  });
}

Tensor scale(const Tensor& x, float factor) {
  std::vector<float> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  auto xn = x.shared_node();
  return make_result(x.shape(), std::move(out), {&x}, [xn, factor](TensorNode& o) {
    auto& dx = grad_buffer(*xn);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += o.grad[i] * factor;
  });
}

// ---- softmax / reductions ----

Tensor softmax(const Tensor& x, std::size_t axis, const std::vector<bool>* mask) {
  require(axis < x.rank(), "softmax axis " + std::to_string(axis) + " invalid for shape " + shape_str(x.shape()));
  require(!mask || mask->size() == x.numel(), "softmax mask size mismatch");
  const AxisSplit s = split_axis(x.shape(), axis);
  const auto src = x.data();
  std::vector<float> out(src.size(), 0.0f);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      float mx = -std::numeric_limits<float>::infinity();
      for (std::size_t l = 0; l < s.len; ++l) {
        const std::size_t idx = base + l * s.inner;
        if (!mask || (*mask)[idx]) mx = std::max(mx, src[idx]);
      }
      if (mx == -std::numeric_limits<float>::infinity()) throw DimensionError("softmax slice fully masked");
      float total = 0.0f;
      for (std::size_t l = 0; l < s.len; ++l) {
        const std::size_t idx = base + l * s.inner;
        if (mask && !(*mask)[idx]) continue;
        out[idx] = std::exp(src[idx] - mx);
        total += out[idx];
      }
      for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] /= total;
    }
  }
  auto xn = x.shared_node();
  return make_result(x.shape(), std::move(out), {&x}, [xn, s](TensorNode& o) {
    auto& dx = grad_buffer(*xn);
    for (std::size_t oo = 0; oo < s.outer; ++oo) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = oo * s.len * s.inner + in;
        float dot = 0.0f;
        for (std::size_t l = 0; l < s.len; ++l) dot += o.grad[base + l * s.inner] * o.data[base + l * s.inner];
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t idx = base + l * s.inner;
          dx[idx] += o.data[idx] * (o.grad[idx] - dot);
        }
      }
    }
  });
}

std::vector<std::size_t> argmax(const Tensor& x, std::size_t axis) {
  require(axis < x.rank(), "argmax axis invalid for shape " + shape_str(x.shape()));
  const AxisSplit s = split_axis(x.shape(), axis);
  require(s.len > 0, "argmax over empty axis");
  const auto src = x.data();
  std::vector<std::size_t> out(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      std::size_t best = 0;
      for (std::size_t l = 1; l < s.len; ++l) {
        if (src[base + l * s.inner] > src[base + best * s.inner]) best = l;
      }
      out[o * s.inner + in] = best;
    }
  }
  return out;
}

Tensor reduce(Reduce op, const Tensor& x, std::size_t axis) {
  require(axis < x.rank(), "reduce axis " + std::to_string(axis) + " invalid for shape " + shape_str(x.shape()));
  const AxisSplit s = split_axis(x.shape(), axis);
  require(s.len > 0, "reduction over empty axis");
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  const auto src = x.data();
  std::vector<float> out(s.outer * s.inner, 0.0f);
  std::shared_ptr<std::vector<std::size_t>> arg;
  if (op == Reduce::Max) {
    arg = std::make_shared<std::vector<std::size_t>>(argmax(x, axis));
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t r = o * s.inner + in;
        out[r] = src[o * s.len * s.inner + (*arg)[r] * s.inner + in];
      }
  } else {
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t l = 0; l < s.len; ++l)
        for (std::size_t in = 0; in < s.inner; ++in) out[o * s.inner + in] += src[(o * s.len + l) * s.inner + in];
    if (op == Reduce::Mean) {
      for (auto& v : out) v /= static_cast<float>(s.len);
    }
  }
  auto xn = x.shared_node();
  return make_result(std::move(out_shape), std::move(out), {&x}, [op, xn, s, arg](TensorNode& o) {
    auto& dx = grad_buffer(*xn);
    const float f = op == Reduce::Mean ? 1.0f / static_cast<float>(s.len) : 1.0f;
    for (std::size_t oo = 0; oo < s.outer; ++oo) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t r = oo * s.inner + in;
        if (op == Reduce::Max) {
          dx[(oo * s.len + (*arg)[r]) * s.inner + in] += o.grad[r];
        } else {
          for (std::size_t l = 0; l < s.len; ++l) dx[(oo * s.len + l) * s.inner + in] += o.grad[r] * f;
        }
      }
    }
  });
}

// ---- indexing ----

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require(x.rank() == 2, "gather_rows expects a 2-D tensor, got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), d = x.dim(1);
  auto idx = std::make_shared<std::vector<std::size_t>>(rows.begin(), rows.end());
  std::vector<float> out(idx->size() * d);
  const auto src = x.data();
  for (std::size_t r = 0; r < idx->size(); ++r) {
    require((*idx)[r] < n, "gather_rows index out of range");
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>((*idx)[r] * d), d, out.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  auto xn = x.shared_node();
  return make_result({idx->size(), d}, std::move(out), {&x}, [xn, idx, d](TensorNode& o) {
    auto& dx = grad_buffer(*xn);
    for (std::size_t r = 0; r < idx->size(); ++r) {
      float* dst = dx.data() + (*idx)[r] * d;
      const float* g = o.grad.data() + r * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += g[c];
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_cols of nothing");
  const std::size_t n = parts[0].rank() == 2 ? parts[0].dim(0) : 0;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require(p.rank() == 2 && p.dim(0) == n, "concat_cols row mismatch at " + shape_str(p.shape()));
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<float> out(n * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].data();
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(i * widths[k]), widths[k],
                  out.begin() + static_cast<std::ptrdiff_t>(i * total + off));
    off += widths[k];
  }
  std::vector<std::shared_ptr<TensorNode>> nodes;
  for (const auto& p : parts) nodes.push_back(p.shared_node());
  auto fn = [nodes, widths, n, total](TensorNode& o) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (nodes[k]->requires_grad) {
        auto& dx = grad_buffer(*nodes[k]);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t c = 0; c < widths[k]; ++c) dx[i * widths[k] + c] += o.grad[i * total + off + c];
      }
      off += widths[k];
    }
  };
  std::vector<const Tensor*> inputs;
  for (const auto& p : parts) inputs.push_back(&p);
  return make_result({n, total}, std::move(out), inputs, fn);
}

// ---- normalization ----

Tensor normalize_rows(const Tensor& x, float eps) {
  require(x.rank() == 2, "normalize_rows expects a 2-D tensor, got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), d = x.dim(1);
  require(d >= 1, "normalize_rows over zero channels");
  const auto src = x.data();
  std::vector<float> out(n * d);
  auto centered = std::make_shared<std::vector<float>>(n * d);
  auto sigma = std::make_shared<std::vector<float>>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += src[i * d + c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double z = src[i * d + c] - mu;
      (*centered)[i * d + c] = static_cast<float>(z);
      var += z * z;
    }
    const float sd = static_cast<float>(std::sqrt(var / static_cast<double>(d)));
    (*sigma)[i] = sd;
    for (std::size_t c = 0; c < d; ++c) out[i * d + c] = (*centered)[i * d + c] / (sd + eps);
  }
  auto xn = x.shared_node();
  return make_result(x.shape(), std::move(out), {&x}, [xn, centered, sigma, n, d, eps](TensorNode& o) {
    auto& dx = grad_buffer(*xn);
    for (std::size_t i = 0; i < n; ++i) {
      const float sd = (*sigma)[i];
      const float s = sd + eps;
      const float* g = o.grad.data() + i * d;
      const float* z = centered->data() + i * d;
      float gmean = 0.0f, gz = 0.0f;
      for (std::size_t c = 0; c < d; ++c) {
        gmean += g[c];
        gz += g[c] * z[c];
      }
      gmean /= static_cast<float>(d);
      const float coef = sd > 0.0f ? gz / (s * s * static_cast<float>(d) * sd) : 0.0f;
      for (std::size_t c = 0; c < d; ++c) dx[i * d + c] += (g[c] - gmean) / s - coef * z[c];
    }
  });
}

// ---- convolution ----

Tensor conv2d_same(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require(x.rank() == 3, "conv2d_same expects an HxWxC map, got " + shape_str(x.shape()));
  require(weight.rank() == 4, "conv2d_same weight must be [k,k,Cin,Cout], got " + shape_str(weight.shape()));
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  const std::size_t k = weight.dim(0), Co = weight.dim(3);
  require(weight.dim(1) == k && k % 2 == 1, "conv2d_same kernel must be odd and square");
  require(weight.dim(2) == C, "conv2d_same channel mismatch: " + shape_str(x.shape()) + " vs " + shape_str(weight.shape()));
  require(bias.shape() == Shape{1, Co}, "conv2d_same bias must be [1," + std::to_string(Co) + "]");
  const long pad = static_cast<long>(k / 2);
  const auto in = x.data();
  const auto w = weight.data();
  const auto b = bias.data();
  std::vector<float> out(H * W * Co);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t xx = 0; xx < W; ++xx) {
      float* o = out.data() + (y * W + xx) * Co;
      std::copy(b.begin(), b.end(), o);
      for (std::size_t ky = 0; ky < k; ++ky) {
        const long sy = static_cast<long>(y + ky) - pad;
        if (sy < 0 || sy >= static_cast<long>(H)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const long sx = static_cast<long>(xx + kx) - pad;
          if (sx < 0 || sx >= static_cast<long>(W)) continue;
          const float* ip = in.data() + (static_cast<std::size_t>(sy) * W + static_cast<std::size_t>(sx)) * C;
          const float* wp = w.data() + (ky * k + kx) * C * Co;
          for (std::size_t ci = 0; ci < C; ++ci) {
            const float v = ip[ci];
            const float* wrow = wp + ci * Co;
            for (std::size_t co = 0; co < Co; ++co) o[co] += v * wrow[co];
          }
        }
      }
    }
  }
  auto xn = x.shared_node(), wn = weight.shared_node(), bn = bias.shared_node();
  return make_result({H, W, Co}, std::move(out), {&x, &weight, &bias},
                     [xn, wn, bn, H, W, C, Co, k, pad](TensorNode& o) {
                       const float* g = o.grad.data();
                       if (bn->requires_grad) {
                         auto& db = grad_buffer(*bn);
                         for (std::size_t p = 0; p < H * W; ++p)
                           for (std::size_t co = 0; co < Co; ++co) db[co] += g[p * Co + co];
                       }
                       float* dx = xn->requires_grad ? grad_buffer(*xn).data() : nullptr;
                       float* dw = wn->requires_grad ? grad_buffer(*wn).data() : nullptr;
                       const float* in = xn->data.data();
                       const float* w = wn->data.data();
                       for (std::size_t y = 0; y < H; ++y) {
                         for (std::size_t xx = 0; xx < W; ++xx) {
                           const float* go = g + (y * W + xx) * Co;
                           for (std::size_t ky = 0; ky < k; ++ky) {
                             const long sy = static_cast<long>(y + ky) - pad;
                             if (sy < 0 || sy >= static_cast<long>(H)) continue;
                             for (std::size_t kx = 0; kx < k; ++kx) {
                               const long sx = static_cast<long>(xx + kx) - pad;
                               if (sx < 0 || sx >= static_cast<long>(W)) continue;
                               const std::size_t ioff =
                                   (static_cast<std::size_t>(sy) * W + static_cast<std::size_t>(sx)) * C;
                               const std::size_t woff = (ky * k + kx) * C * Co;
                               for (std::size_t ci = 0; ci < C; ++ci) {
                                 const float* wrow = w + woff + ci * Co;
                                 if (dx) {
                                   float acc = 0.0f;
                                   for (std::size_t co = 0; co < Co; ++co) acc += go[co] * wrow[co];
                                   dx[ioff + ci] += acc;
                                 }
                                 if (dw) {
                                   const float v = in[ioff + ci];
                                   float* dwrow = dw + woff + ci * Co;
                                   for (std::size_t co = 0; co < Co; ++co) dwrow[co] += v * go[co];
                                 }
                               }
                             }
                           }
                         }
                       }
                     });
}

// ---- losses ----

Tensor binary_cross_entropy(const Tensor& p, std::span<const float> targets, float clamp) {
  require(p.numel() == targets.size(), "binary_cross_entropy target count mismatch");
  require(p.numel() > 0, "binary_cross_entropy of empty tensor");
  const std::size_t n = p.numel();
  const auto src = p.data();
  auto tgt = std::make_shared<std::vector<float>>(targets.begin(), targets.end());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double q = std::clamp(src[i], clamp, 1.0f - clamp);
    const double r = (*tgt)[i];
    total -= r * std::log(q) + (1.0 - r) * std::log(1.0 - q);
  }
  auto pn = p.shared_node();
  return make_result({}, {static_cast<float>(total / static_cast<double>(n))}, {&p},
                     [pn, tgt, n, clamp](TensorNode& o) {
                       auto& dp = grad_buffer(*pn);
                       const float g = o.grad[0] / static_cast<float>(n);
                       for (std::size_t i = 0; i < n; ++i) {
                         const float q = std::clamp(pn->data[i], clamp, 1.0f - clamp);
                         const float r = (*tgt)[i];
                         dp[i] += g * (-r / q + (1.0f - r) / (1.0f - q));
                       }
                     });
}

Tensor negative_log_likelihood(const Tensor& p, std::size_t index, float clamp) {
  require(p.rank() == 1, "negative_log_likelihood expects a 1-D tensor, got " + shape_str(p.shape()));
  require(index < p.numel(), "negative_log_likelihood class index out of range");
  const float q = std::clamp(p.data()[index], clamp, 1.0f - clamp);
  auto pn = p.shared_node();
  return make_result({}, {-std::log(q)}, {&p}, [pn, index, q](TensorNode& o) {
    grad_buffer(*pn)[index] += -o.grad[0] / q;
  });
}

}  // namespace m2n
