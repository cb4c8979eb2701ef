#pragma once

// Dense float64 tensors with tape-based reverse-mode differentiation.
//
// A Graph installs itself as the thread's active tape for its lifetime. Every
// op whose inputs include a tensor with requires_grad() is appended to the
// active tape; with no active tape, ops evaluate eagerly and record nothing.
// Graph::backward walks the tape in reverse insertion order, visiting each
// node once and accumulating gradients additively into its inputs.
//
// Shapes are rank 0 (scalar), rank 1 ([n], treated as a single row) or
// rank 2 ([rows, cols], row-major). There is no broadcasting apart from
// add_bias, which adds a length-cols vector to every row.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ccl {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first written
  bool requires_grad = false;
  std::uint64_t graph_id = 0;  // 0: not produced by any tape
  std::int64_t node_id = -1;
};

}  // namespace detail

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  // Rank 0/1 tensors behave as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double at(std::size_t i) const { return impl_->data.at(i); }
  double at(std::size_t r, std::size_t c) const { return impl_->data.at(r * cols() + c); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  bool has_grad() const { return !impl_->grad.empty(); }
  // All-zero view when no gradient has been written yet.
  std::vector<double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad() { impl_->grad.clear(); }

  std::int64_t node_id() const { return impl_->node_id; }

  // Deep copy of the values, detached from any tape.
  Tensor clone() const;
  // Same values, no gradient tracking; shares nothing with *this.
  Tensor detach() const { return clone(); }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  friend class Graph;

  std::shared_ptr<detail::TensorImpl> impl_;
};

class Graph {
 public:
  using BackwardFn = std::function<void(std::span<const double> out_grad)>;

  Graph();
  ~Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  static Graph* active();

  // Populates grad on every requires_grad leaf reachable from `loss`. Leaf
  // gradients accumulate across calls until zero_grad(); intermediate node
  // gradients are recomputed from scratch on each call.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(std::size_t node) const { return nodes_.at(node).op; }
  // Number of times the last backward() ran each node (diagnostics/tests).
  const std::vector<int>& visit_counts() const { return visits_; }

  // Records `out` as produced by `op` from `inputs`. Used by the op
  // implementations; returns false when nothing needs recording.
  bool record(const std::string& op, std::vector<Tensor> inputs, Tensor& out,
              BackwardFn fn);

 private:
  struct Node {
    std::string op;
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    std::shared_ptr<detail::TensorImpl> output;
    BackwardFn fn;
  };

  std::uint64_t id_;
  Graph* previous_;
  std::vector<Node> nodes_;
  std::vector<int> visits_;
};

// Scoped thread-local switch that suppresses recording, even under an active
// Graph. Used for evaluation passes and detached feature computation.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Graph* saved_;
};

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// x[rows, cols] + bias[cols] on every row.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor reshape(const Tensor& x, Shape shape);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);
// Subgradient at 0 is 0.
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
// Natural log; every entry must be > 0.
Tensor log(const Tensor& x);
// log(max(x, floor)); the gradient is zero where the floor is active.
Tensor clamped_log(const Tensor& x, double floor);
Tensor square(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Row-wise (last dimension) softmax with max subtraction.
Tensor softmax(const Tensor& x);
// Row-wise unit L2 normalization; throws DegenerateVectorError below 1e-12.
Tensor l2_normalize(const Tensor& x);
// out[i, j] = sum_c (a[i, c] - b[j, c])^2, computed by explicit differences
// so identical rows give exactly zero.
Tensor pairwise_sq_dist(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& x) { return scale(x, s); }

inline constexpr double kMinNorm = 1e-12;

}  // namespace ccl
