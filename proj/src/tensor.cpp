#include "vecflow/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

namespace vecflow {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MutMap = Eigen::Map<RowMat>;

MutMap as_matrix(std::vector<double>& v, std::size_t r, std::size_t c) {
  return MutMap(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

void check_finite(const std::vector<double>& data, const char* op) {
  // Exponent-all-ones test on the raw bits; the OR-reduction vectorizes.
  constexpr std::uint64_t kExp = 0x7FF0000000000000ull;
  std::uint64_t bad = 0;
  for (double x : data) bad |= static_cast<std::uint64_t>((std::bit_cast<std::uint64_t>(x) & kExp) == kExp);
  if (bad) throw NumericError(std::string("non-finite value produced by ") + op);
}

// Wraps a freshly computed value into a tensor, recording graph edges when any
// input participates in differentiation.
Tensor finish(Shape shape, std::vector<double> data, std::vector<NodePtr> inputs,
              std::function<void(TensorNode&)> rule, const char* op) {
  check_finite(data, op);
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  const bool track = g_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                                                   [](const NodePtr& n) { return n->requires_grad; });
  if (track) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(rule);
  }
  return Tensor(std::move(node));
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_2d(const Tensor& a, const char* op) {
  require_defined(a, op);
  if (a.ndim() != 2) throw ShapeError(std::string(op) + ": expected 2-D tensor, got " + shape_str(a.shape()));
}

// Elementwise unary op with derivative expressed via input and output values.
template <typename F, typename DF>
Tensor unary(const Tensor& x, F f, DF df, const char* op) {
  require_defined(x, op);
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return finish(x.shape(), std::move(out), {x.node()},
                [df](TensorNode& self) {
                  auto& src = *self.inputs[0];
                  if (!src.requires_grad) return;
                  auto& g = src.grad_buffer();
                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(src.data[i], self.data[i]);
                },
                op);
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor extents must be positive: " + shape_str(shape));
  }
  auto node = std::make_shared<TensorNode>();
  node->data.assign(shape_numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor extents must be positive: " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " + shape_str(shape));
  }
  check_finite(values, "Tensor::from");
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

std::size_t Tensor::rows() const {
  if (ndim() == 0) return 1;
  return numel() / cols();
}

std::size_t Tensor::cols() const {
  if (ndim() == 0) return 1;
  return node_->shape.back();
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

std::span<const double> Tensor::grad() const {
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
  return node_->grad;
}

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---------------------------------------------------------------------------

Tape Tape::record(const Tensor& loss) {
  require_defined(loss, "Tape::record");
  Tape tape;
  if (!loss.requires_grad()) return tape;
  std::unordered_set<const TensorNode*> visited;
  // Iterative post-order DFS: (node, next input index).
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const NodePtr& child = node->inputs[next++];
      if (child->requires_grad && visited.insert(child.get()).second) stack.emplace_back(child, 0);
    } else {
      tape.nodes_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

void Tape::backward() {
  if (nodes_.empty()) return;
  auto& root = *nodes_.back();
  auto& seed = root.grad_buffer();
  seed[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    auto& node = **it;
    if (node.backward && !node.grad.empty()) node.backward(node);
  }
  for (auto& node : nodes_) {
    if (node->backward) {
      node->backward = nullptr;
      node->inputs.clear();
      node->grad.clear();
    }
  }
  nodes_.clear();
}

std::size_t backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.numel() != 1) throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  Tape tape = Tape::record(loss);
  const std::size_t n = tape.size();
  tape.backward();
  return n;
}

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  as_matrix(out, m, n).noalias() = as_matrix(a.node()->data, m, k) * as_matrix(b.node()->data, k, n);
  return finish({m, n}, std::move(out), {a.node(), b.node()},
                [m, k, n](TensorNode& self) {
                  auto& A = *self.inputs[0];
                  auto& B = *self.inputs[1];
                  auto dC = as_matrix(self.grad, m, n);
                  if (A.requires_grad) as_matrix(A.grad_buffer(), m, k).noalias() += dC * as_matrix(B.data, k, n).transpose();
                  if (B.requires_grad) as_matrix(B.grad_buffer(), k, n).noalias() += as_matrix(A.data, m, k).transpose() * dC;
                },
                "matmul");
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw ShapeError("matmul_nt: inner dimensions disagree " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  }
  std::vector<double> out(m * n);
  as_matrix(out, m, n).noalias() = as_matrix(a.node()->data, m, k) * as_matrix(b.node()->data, n, k).transpose();
  return finish({m, n}, std::move(out), {a.node(), b.node()},
                [m, k, n](TensorNode& self) {
                  auto& A = *self.inputs[0];
                  auto& B = *self.inputs[1];
                  auto dC = as_matrix(self.grad, m, n);
                  if (A.requires_grad) as_matrix(A.grad_buffer(), m, k).noalias() += dC * as_matrix(B.data, n, k);
                  if (B.requires_grad) as_matrix(B.grad_buffer(), n, k).noalias() += dC.transpose() * as_matrix(A.data, m, k);
                },
                "matmul_nt");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return finish(a.shape(), std::move(out), {a.node(), b.node()},
                [](TensorNode& self) {
                  for (auto& in : self.inputs) {
                    if (!in->requires_grad) continue;
                    auto& g = in->grad_buffer();
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                  }
                },
                "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return finish(a.shape(), std::move(out), {a.node(), b.node()},
                [](TensorNode& self) {
                  if (self.inputs[0]->requires_grad) {
                    auto& g = self.inputs[0]->grad_buffer();
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                  }
                  if (self.inputs[1]->requires_grad) {
                    auto& g = self.inputs[1]->grad_buffer();
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
                  }
                },
                "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return finish(a.shape(), std::move(out), {a.node(), b.node()},
                [](TensorNode& self) {
                  auto& A = *self.inputs[0];
                  auto& B = *self.inputs[1];
                  if (A.requires_grad) {
                    auto& g = A.grad_buffer();
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * B.data[i];
                  }
                  if (B.requires_grad) {
                    auto& g = B.grad_buffer();
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * A.data[i];
                  }
                },
                "mul");
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; }, "scale");
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; }, "add_scalar");
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  require_defined(x, "add_row");
  require_defined(row, "add_row");
  const std::size_t d = x.cols();
  if (row.numel() != d) throw ShapeError("add_row: row width " + std::to_string(row.numel()) + " vs " + shape_str(x.shape()));
  const std::size_t m = x.rows();
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = x[r * d + c] + row[c];
  return finish(x.shape(), std::move(out), {x.node(), row.node()},
                [m, d](TensorNode& self) {
                  auto& X = *self.inputs[0];
                  auto& R = *self.inputs[1];
                  if (X.requires_grad) {
                    auto& g = X.grad_buffer();
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                  }
                  if (R.requires_grad) {
                    auto& g = R.grad_buffer();
                    for (std::size_t r = 0; r < m; ++r)
                      for (std::size_t c = 0; c < d; ++c) g[c] += self.grad[r * d + c];
                  }
                },
                "add_row");
}

Tensor mul_row(const Tensor& x, const Tensor& row) {
  require_defined(x, "mul_row");
  require_defined(row, "mul_row");
  const std::size_t d = x.cols();
  if (row.numel() != d) throw ShapeError("mul_row: row width " + std::to_string(row.numel()) + " vs " + shape_str(x.shape()));
  const std::size_t m = x.rows();
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = x[r * d + c] * row[c];
  return finish(x.shape(), std::move(out), {x.node(), row.node()},
                [m, d](TensorNode& self) {
                  auto& X = *self.inputs[0];
                  auto& R = *self.inputs[1];
                  if (X.requires_grad) {
                    auto& g = X.grad_buffer();
                    for (std::size_t r = 0; r < m; ++r)
                      for (std::size_t c = 0; c < d; ++c) g[r * d + c] += self.grad[r * d + c] * R.data[c];
                  }
                  if (R.requires_grad) {
                    auto& g = R.grad_buffer();
                    for (std::size_t r = 0; r < m; ++r)
                      for (std::size_t c = 0; c < d; ++c) g[c] += self.grad[r * d + c] * X.data[r * d + c];
                  }
                },
                "mul_row");
}

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  double s = 0.0;
  for (double v : x.data()) s += v;
  return finish({}, {s}, {x.node()},
                [](TensorNode& self) {
                  auto& X = *self.inputs[0];
                  auto& g = X.grad_buffer();
                  for (auto& gi : g) gi += self.grad[0];
                },
                "sum");
}

Tensor mean(const Tensor& x) {
  require_defined(x, "mean");
  double s = 0.0;
  for (double v : x.data()) s += v;
  const double n = static_cast<double>(x.numel());
  return finish({}, {s / n}, {x.node()},
                [n](TensorNode& self) {
                  auto& g = self.inputs[0]->grad_buffer();
                  for (auto& gi : g) gi += self.grad[0] / n;
                },
                "mean");
}

Tensor mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  const double n = static_cast<double>(a.numel());
  return finish({}, {s / n}, {a.node(), b.node()},
                [n](TensorNode& self) {
                  auto& A = *self.inputs[0];
                  auto& B = *self.inputs[1];
                  const double k = 2.0 * self.grad[0] / n;
                  if (A.requires_grad) {
                    auto& g = A.grad_buffer();
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += k * (A.data[i] - B.data[i]);
                  }
                  if (B.requires_grad) {
                    auto& g = B.grad_buffer();
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= k * (A.data[i] - B.data[i]);
                  }
                },
                "mse");
}

Tensor softmax_rows(const Tensor& x) {
  require_defined(x, "softmax_rows");
  const std::size_t c = x.cols(), r = x.rows();
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < r; ++i) {
    const double* in = x.data().data() + i * c;
    double* o = out.data() + i * c;
    const double mx = *std::max_element(in, in + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < c; ++j) o[j] /= z;
  }
  return finish(x.shape(), std::move(out), {x.node()},
                [r, c](TensorNode& self) {
                  auto& g = self.inputs[0]->grad_buffer();
                  for (std::size_t i = 0; i < r; ++i) {
                    const double* y = self.data.data() + i * c;
                    const double* dy = self.grad.data() + i * c;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < c; ++j) dot += dy[j] * y[j];
                    for (std::size_t j = 0; j < c; ++j) g[i * c + j] += y[j] * (dy[j] - dot);
                  }
                },
                "softmax_rows");
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_defined(x, "layer_norm");
  const std::size_t d = x.cols(), r = x.rows();
  if (gamma.defined() && gamma.numel() != d) throw ShapeError("layer_norm: gamma width mismatch");
  if (beta.defined() && beta.numel() != d) throw ShapeError("layer_norm: beta width mismatch");
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto rstd = std::make_shared<std::vector<double>>(r);
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < r; ++i) {
    const double* in = x.data().data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[i] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (in[j] - mu) * rs;
      (*xhat)[i * d + j] = h;
      out[i * d + j] = h * (gamma.defined() ? gamma[j] : 1.0) + (beta.defined() ? beta[j] : 0.0);
    }
  }
  std::vector<NodePtr> inputs{x.node()};
  const bool has_gamma = gamma.defined(), has_beta = beta.defined();
  if (has_gamma) inputs.push_back(gamma.node());
  if (has_beta) inputs.push_back(beta.node());
  return finish(x.shape(), std::move(out), std::move(inputs),
                [r, d, xhat, rstd, has_gamma, has_beta](TensorNode& self) {
                  auto& X = *self.inputs[0];
                  TensorNode* G = has_gamma ? self.inputs[1].get() : nullptr;
                  TensorNode* B = has_beta ? self.inputs[has_gamma ? 2 : 1].get() : nullptr;
                  const auto& dy = self.grad;
                  const auto& h = *xhat;
                  if (G && G->requires_grad) {
                    auto& g = G->grad_buffer();
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < d; ++j) g[j] += dy[i * d + j] * h[i * d + j];
                  }
                  if (B && B->requires_grad) {
                    auto& g = B->grad_buffer();
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < d; ++j) g[j] += dy[i * d + j];
                  }
                  if (!X.requires_grad) return;
                  auto& gx = X.grad_buffer();
                  std::vector<double> gh(d);
                  for (std::size_t i = 0; i < r; ++i) {
                    double s1 = 0.0, s2 = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                      gh[j] = dy[i * d + j] * (G ? G->data[j] : 1.0);
                      s1 += gh[j];
                      s2 += gh[j] * h[i * d + j];
                    }
                    const double inv_d = 1.0 / static_cast<double>(d);
                    for (std::size_t j = 0; j < d; ++j) {
                      gx[i * d + j] += (*rstd)[i] * (gh[j] - s1 * inv_d - h[i * d + j] * s2 * inv_d);
                    }
                  }
                },
                "layer_norm");
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [inv_sqrt_2pi](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        return cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      },
      "gelu");
}

Tensor sin(const Tensor& x) {
  return unary(x, [](double v) { return std::sin(v); }, [](double v, double) { return std::cos(v); }, "sin");
}

Tensor cos(const Tensor& x) {
  return unary(x, [](double v) { return std::cos(v); }, [](double v, double) { return -std::sin(v); }, "cos");
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; }, "exp");
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_2d(x, "slice_cols");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (count == 0 || start + count > n) throw ShapeError("slice_cols: range out of bounds for " + shape_str(x.shape()));
  std::vector<double> out(m * count);
  for (std::size_t r = 0; r < m; ++r)
    std::copy_n(x.data().data() + r * n + start, count, out.data() + r * count);
  return finish({m, count}, std::move(out), {x.node()},
                [m, n, start, count](TensorNode& self) {
                  auto& g = self.inputs[0]->grad_buffer();
                  for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t c = 0; c < count; ++c) g[r * n + start + c] += self.grad[r * count + c];
                },
                "slice_cols");
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  for (const auto& p : parts) require_2d(p, "concat_cols");
  const std::size_t m = parts.front().dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  std::vector<NodePtr> inputs;
  for (const auto& p : parts) {
    if (p.dim(0) != m) throw ShapeError("concat_cols: row count mismatch");
    widths.push_back(p.dim(1));
    total += p.dim(1);
    inputs.push_back(p.node());
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t r = 0; r < m; ++r)
      std::copy_n(parts[k].data().data() + r * widths[k], widths[k], out.data() + r * total + offset);
    offset += widths[k];
  }
  return finish({m, total}, std::move(out), std::move(inputs),
                [m, total, widths](TensorNode& self) {
                  std::size_t off = 0;
                  for (std::size_t k = 0; k < widths.size(); ++k) {
                    auto& in = *self.inputs[k];
                    if (in.requires_grad) {
                      auto& g = in.grad_buffer();
                      for (std::size_t r = 0; r < m; ++r)
                        for (std::size_t c = 0; c < widths[k]; ++c) g[r * widths[k] + c] += self.grad[r * total + off + c];
                    }
                    off += widths[k];
                  }
                },
                "concat_cols");
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  return finish(std::move(shape), x.node()->data, {x.node()},
                [](TensorNode& self) {
                  auto& g = self.inputs[0]->grad_buffer();
                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                },
                "reshape");
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  require_2d(q, "attention");
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  return matmul(softmax_rows(scale(matmul_nt(q, k), inv)), v);
}

}  // namespace vecflow
