// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace m2n {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class AutogradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct TensorNode {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until a gradient arrives
  bool requires_grad = false;
  std::uint64_t tape_serial = 0;  // 0 for leaves and untaped results
};

// Dense row-major float32 tensor. Copies share storage; operations always
// produce new tensors.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<float> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->data.size(); }

  std::span<const float> data() const { return node_->data; }
  // In-place mutation; only valid outside any recorded computation.
  std::span<float> mutable_data() { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const float> grad() const { return node_->grad; }
  std::span<float> mutable_grad();
  void zero_grad() { node_->grad.clear(); }

  float item() const;
  float at(std::initializer_list<std::size_t> index) const;

  // Same values, fresh storage, detached from any tape.
  Tensor clone() const;

  const TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode>& shared_node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
  friend class Tape;
  friend Tensor make_result(Shape, std::vector<float>, const std::vector<const Tensor*>&,
                            std::function<void(TensorNode&)>);

  std::shared_ptr<TensorNode> node_;
};

// Records differentiable operations executed while it is active on the
// current thread. Entries are appended in execution order, so iterating them
// in reverse is a valid topological order for the backward pass.
//
// backward() consumes the tape: the recorded closures are released and a
// second backward() without reset() throws AutogradError. Leaf gradients
// accumulate across passes until zero_grad().
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void backward(const Tensor& loss);
  void reset();

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }
  std::uint64_t serial() const { return serial_; }

  // Leaf tensors requiring grad that fed any recorded operation.
  std::vector<const TensorNode*> leaves() const;

  static Tape* active();

 private:
  friend class TapeScope;
  friend Tensor make_result(Shape, std::vector<float>, const std::vector<const Tensor*>&,
                            std::function<void(TensorNode&)>);

  struct Entry {
    std::shared_ptr<TensorNode> output;
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::function<void(TensorNode&)> backward;
  };

  std::vector<Entry> entries_;
  std::uint64_t serial_;
  bool consumed_ = false;
};

// Makes a tape the active recorder for the current thread for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Runs the backward pass on the active tape.
void backward(const Tensor& loss);

// Builds an op result, recording it on the active tape when any input
// requires grad. The closure receives the output node (grad populated) and
// must accumulate into the inputs' grads through grad_buffer().
Tensor make_result(Shape shape, std::vector<float> data, const std::vector<const Tensor*>& inputs,
                   std::function<void(TensorNode&)> backward_fn);
Tensor make_result(Shape shape, std::vector<float> data, std::initializer_list<const Tensor*> inputs,
                   std::function<void(TensorNode&)> backward_fn);

// Returns the node's grad buffer, allocating zeros on first use.
std::vector<float>& grad_buffer(TensorNode& node);

// ---- operations ----

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

enum class Unary { Tanh, Sigmoid, Relu };
enum class Binary { Add, Sub, Mul };

// Binary ops require equal rank; an axis of length 1 on either side expands.
Tensor elementwise(Binary op, const Tensor& a, const Tensor& b);
Tensor elementwise(Unary op, const Tensor& x);
inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(Binary::Add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(Binary::Sub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(Binary::Mul, a, b); }
inline Tensor tanh(const Tensor& x) { return elementwise(Unary::Tanh, x); }
inline Tensor sigmoid(const Tensor& x) { return elementwise(Unary::Sigmoid, x); }
inline Tensor relu(const Tensor& x) { return elementwise(Unary::Relu, x); }
Tensor scale(const Tensor& x, float factor);

// Softmax along `axis`, max-subtracted. Positions where `mask` is false get
// probability exactly 0; every slice must keep at least one unmasked entry.
Tensor softmax(const Tensor& x, std::size_t axis, const std::vector<bool>* mask = nullptr);

enum class Reduce { Sum, Mean, Max };
// Removes `axis`. Max routes the gradient to the first maximal element.
Tensor reduce(Reduce op, const Tensor& x, std::size_t axis);
inline Tensor sum(const Tensor& x, std::size_t axis) { return reduce(Reduce::Sum, x, axis); }
inline Tensor mean(const Tensor& x, std::size_t axis) { return reduce(Reduce::Mean, x, axis); }
inline Tensor max(const Tensor& x, std::size_t axis) { return reduce(Reduce::Max, x, axis); }
// Argmax indices along `axis` of the same reduction layout as reduce().
std::vector<std::size_t> argmax(const Tensor& x, std::size_t axis);

// Picks rows of a 2-D tensor; repeated indices accumulate in backward.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
Tensor concat_cols(std::span<const Tensor> parts);

// Per-row (x - mean) / (population std + eps) over the last axis of a 2-D tensor.
Tensor normalize_rows(const Tensor& x, float eps);

// Same-size 2-D convolution over an H x W x C map with an odd square kernel
// stored as [k, k, C_in, C_out] and bias [1, C_out]; zero padding k/2.
Tensor conv2d_same(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Mean binary cross-entropy of probabilities against {0,1} targets. Inputs are
// clamped to [clamp, 1-clamp] before the log; the gradient is the clamped
// point's derivative passed straight through.
Tensor binary_cross_entropy(const Tensor& p, std::span<const float> targets, float clamp = 1e-7f);
// -log(clamp(p[index])) for a 1-D probability vector.
Tensor negative_log_likelihood(const Tensor& p, std::size_t index, float clamp = 1e-7f);

}  // namespace m2n
