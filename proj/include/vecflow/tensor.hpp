#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vecflow/errors.hpp"

namespace vecflow {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient flows in
  bool requires_grad = false;

  // Graph edges, populated only while recording.
  std::vector<std::shared_ptr<TensorNode>> inputs;
  std::function<void(TensorNode&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Dense row-major array of doubles with optional reverse-mode gradient
// tracking. Copies share the underlying storage (handle semantics); values are
// never modified after construction except through the optimizer or
// initialization helpers that explicitly ask for mutable access.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  // Leading extent for 2-D tensors, 1 for vectors.
  std::size_t rows() const;
  // Trailing extent.
  std::size_t cols() const;

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double operator[](std::size_t i) const { return node_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient view; zeros when no gradient has been accumulated yet.
  std::span<const double> grad() const;
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  // Same values, no gradient tracking, independent storage.
  Tensor detach() const;

  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// Recording switch for the current thread. Inference code disables recording
// so parameter-dependent activations do not keep graph edges alive.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Topologically ordered list of the grad-requiring nodes reachable from a
// scalar loss. Every node appears after all of its inputs.
class Tape {
 public:
  static Tape record(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::shared_ptr<detail::TensorNode>>& nodes() const { return nodes_; }

  // Seeds d(loss)/d(loss) = 1, runs every backward rule in reverse order and
  // releases the recorded graph edges.
  void backward();

 private:
  std::vector<std::shared_ptr<detail::TensorNode>> nodes_;
};

// Convenience wrapper: record + backward. Throws ContractError for non-scalar
// losses. Returns the number of nodes visited.
std::size_t backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Differentiable operations. 2-D tensors are [rows x cols], row-major.

Tensor matmul(const Tensor& a, const Tensor& b);      // [m,k]x[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);   // [m,k]x[n,k]^T
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor add_row(const Tensor& x, const Tensor& row);  // broadcast [d] over [m,d]
Tensor mul_row(const Tensor& x, const Tensor& row);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mse(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& x);
// gamma/beta may be undefined tensors for a parameter-free normalization.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);
Tensor gelu(const Tensor& x);
Tensor sin(const Tensor& x);
Tensor cos(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor reshape(const Tensor& x, Shape shape);

// Scaled dot-product attention for a single head: softmax(q k^T / sqrt(d)) v.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v);

}  // namespace vecflow
