#include "ccl/numcore.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ccl/errors.hpp"

namespace ccl {

namespace {

thread_local Graph* g_active = nullptr;
std::atomic<std::uint64_t> g_next_graph_id{1};

using detail::TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

std::vector<double>& grad_buffer(TensorImpl& t) {
  if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
  return t.grad;
}

bool wants_tape(std::initializer_list<const Tensor*> inputs) {
  if (Graph::active() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_string(t.shape()));
  }
}

// Wraps a unary element-wise op whose local derivative depends on (x, y).
template <typename Fwd, typename Deriv>
Tensor unary(const char* op, const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  Tensor y(x.shape(), std::move(out));
  if (wants_tape({&x})) {
    ImplPtr xi = x.impl();
    ImplPtr yi = y.impl();
    Graph::active()->record(op, {x}, y, [xi, yi, deriv](std::span<const double> g) {
      auto& gx = grad_buffer(*xi);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xi->data[i], yi->data[i]);
    });
  }
  return y;
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : impl_(std::make_shared<TensorImpl>()) { impl_->data.assign(1, 0.0); }

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  if (shape.size() > 2) {
    throw DimensionError("tensor rank above 2 is not supported: " + shape_string(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return Tensor({rows, cols}, std::move(values), requires_grad);
}

std::size_t Tensor::rows() const { return rank() == 2 ? impl_->shape[0] : 1; }

std::size_t Tensor::cols() const {
  if (rank() == 0) return 1;
  return impl_->shape.back();
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on non-scalar tensor " + shape_string(shape()));
  }
  return impl_->data[0];
}

std::vector<double> Tensor::grad() const {
  if (impl_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() { return grad_buffer(*impl_); }

Tensor Tensor::clone() const { return Tensor(impl_->shape, impl_->data, false); }

// ---------------------------------------------------------------------------
// Graph

Graph::Graph() : id_(g_next_graph_id.fetch_add(1)), previous_(g_active) { g_active = this; }

Graph::~Graph() { g_active = previous_; }

Graph* Graph::active() { return g_active; }

bool Graph::record(const std::string& op, std::vector<Tensor> inputs, Tensor& out, BackwardFn fn) {
  Node node;
  node.op = op;
  for (const auto& t : inputs) node.inputs.push_back(t.impl());
  node.output = out.impl();
  node.fn = std::move(fn);
  out.impl_->requires_grad = true;
  out.impl_->graph_id = id_;
  out.impl_->node_id = static_cast<std::int64_t>(nodes_.size());
  nodes_.push_back(std::move(node));
  return true;
}

void Graph::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_string(loss.shape()));
  }
  const auto& li = *loss.impl();
  if (li.graph_id != id_ || li.node_id < 0 ||
      static_cast<std::size_t>(li.node_id) >= nodes_.size() ||
      nodes_[static_cast<std::size_t>(li.node_id)].output != loss.impl()) {
    throw ContractError("backward: loss is not a node of this graph");
  }
  const auto last = static_cast<std::size_t>(li.node_id);
  for (std::size_t i = 0; i <= last; ++i) {
    auto& out = *nodes_[i].output;
    out.grad.assign(out.data.size(), 0.0);
  }
  visits_.assign(nodes_.size(), 0);
  nodes_[last].output->grad[0] = 1.0;
  for (std::size_t i = last + 1; i-- > 0;) {
    ++visits_[i];
    nodes_[i].fn(nodes_[i].output->grad);
  }
}

NoGradGuard::NoGradGuard() : saved_(g_active) { g_active = nullptr; }

NoGradGuard::~NoGradGuard() { g_active = saved_; }

// ---------------------------------------------------------------------------
// Ops

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.rows(), n = a.cols(), p = b.cols();
  if (b.rows() != n) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_string(a.shape()) +
                         " x " + shape_string(b.shape()));
  }
  std::vector<double> out(m * p, 0.0);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = A[i * n + k];
      for (std::size_t j = 0; j < p; ++j) out[i * p + j] += aik * B[k * p + j];
    }
  }
  Tensor y({m, p}, std::move(out));
  if (wants_tape({&a, &b})) {
    ImplPtr ai = a.impl(), bi = b.impl();
    Graph::active()->record("matmul", {a, b}, y, [ai, bi, m, n, p](std::span<const double> g) {
      if (ai->requires_grad) {
        auto& ga = grad_buffer(*ai);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t k = 0; k < n; ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < p; ++j) acc += g[i * p + j] * bi->data[k * p + j];
            ga[i * n + k] += acc;
          }
      }
      if (bi->requires_grad) {
        auto& gb = grad_buffer(*bi);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t k = 0; k < n; ++k) {
            const double aik = ai->data[i * n + k];
            for (std::size_t j = 0; j < p; ++j) gb[k * p + j] += aik * g[i * p + j];
          }
      }
    });
  }
  return y;
}

namespace {

template <typename Combine, typename DA, typename DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Combine combine, DA da, DB db) {
  require_same_shape(op, a, b);
  std::vector<double> out(a.numel());
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = combine(A[i], B[i]);
  Tensor y(a.shape(), std::move(out));
  if (wants_tape({&a, &b})) {
    ImplPtr ai = a.impl(), bi = b.impl();
    Graph::active()->record(op, {a, b}, y, [ai, bi, da, db](std::span<const double> g) {
      // a and b may alias (x * x); each side accumulates its own term.
      if (ai->requires_grad) {
        auto& ga = grad_buffer(*ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * da(ai->data[i], bi->data[i]);
      }
      if (bi->requires_grad) {
        auto& gb = grad_buffer(*bi);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * db(ai->data[i], bi->data[i]);
      }
    });
  }
  return y;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t r = x.rows(), c = x.cols();
  if (x.rank() == 0 || bias.rank() != 1 || bias.numel() != c) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) +
                         " does not match rows of " + shape_string(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto B = bias.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += B[j];
  Tensor y(x.shape(), std::move(out));
  if (wants_tape({&x, &bias})) {
    ImplPtr xi = x.impl(), bi = bias.impl();
    Graph::active()->record("add_bias", {x, bias}, y, [xi, bi, r, c](std::span<const double> g) {
      if (xi->requires_grad) {
        auto& gx = grad_buffer(*xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bi->requires_grad) {
        auto& gb = grad_buffer(*bi);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
      }
    });
  }
  return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                         shape_string(shape));
  }
  Tensor y(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  if (wants_tape({&x})) {
    ImplPtr xi = x.impl();
    Graph::active()->record("reshape", {x}, y, [xi](std::span<const double> g) {
      auto& gx = grad_buffer(*xi);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return y;
}

Tensor scale(const Tensor& x, double s) {
  return unary(
      "scale", x, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& x, double s) {
  return unary(
      "add_scalar", x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw ContractError("log: non-positive input " + std::to_string(v));
  }
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor clamped_log(const Tensor& x, double floor) {
  return unary(
      "clamped_log", x, [floor](double v) { return std::log(std::max(v, floor)); },
      [floor](double v, double) { return v > floor ? 1.0 / v : 0.0; });
}

Tensor square(const Tensor& x) {
  return unary(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor y = Tensor::scalar(acc);
  if (wants_tape({&x})) {
    ImplPtr xi = x.impl();
    Graph::active()->record("sum", {x}, y, [xi](std::span<const double> g) {
      auto& gx = grad_buffer(*xi);
      for (double& v : gx) v += g[0];
    });
  }
  return y;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor softmax(const Tensor& x) {
  if (x.rank() == 0) throw DimensionError("softmax: needs a vector or matrix");
  const std::size_t r = x.rows(), c = x.cols();
  const auto X = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = X.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (out[i * c + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  Tensor y(x.shape(), std::move(out));
  if (wants_tape({&x})) {
    ImplPtr xi = x.impl(), yi = y.impl();
    Graph::active()->record("softmax", {x}, y, [xi, yi, r, c](std::span<const double> g) {
      auto& gx = grad_buffer(*xi);
      const auto& Y = yi->data;
      for (std::size_t i = 0; i < r; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * Y[i * c + j];
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += Y[i * c + j] * (g[i * c + j] - dot);
      }
    });
  }
  return y;
}

Tensor l2_normalize(const Tensor& x) {
  if (x.rank() == 0) throw DimensionError("l2_normalize: needs a vector or matrix");
  const std::size_t r = x.rows(), c = x.cols();
  const auto X = x.data();
  std::vector<double> out(x.numel());
  std::vector<double> norms(r);
  for (std::size_t i = 0; i < r; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < c; ++j) ss += X[i * c + j] * X[i * c + j];
    const double nrm = std::sqrt(ss);
    if (!(nrm >= kMinNorm)) {
      throw DegenerateVectorError("l2_normalize: row " + std::to_string(i) + " has norm " +
                                  std::to_string(nrm) + " (below 1e-12)");
    }
    norms[i] = nrm;
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = X[i * c + j] / nrm;
  }
  Tensor y(x.shape(), std::move(out));
  if (wants_tape({&x})) {
    ImplPtr xi = x.impl(), yi = y.impl();
    Graph::active()->record("l2_normalize", {x}, y,
                            [xi, yi, r, c, norms = std::move(norms)](std::span<const double> g) {
                              auto& gx = grad_buffer(*xi);
                              const auto& Y = yi->data;
                              for (std::size_t i = 0; i < r; ++i) {
                                double dot = 0.0;
                                for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * Y[i * c + j];
                                for (std::size_t j = 0; j < c; ++j)
                                  gx[i * c + j] += (g[i * c + j] - Y[i * c + j] * dot) / norms[i];
                              }
                            });
  }
  return y;
}

Tensor pairwise_sq_dist(const Tensor& a, const Tensor& b) {
  require_rank2("pairwise_sq_dist", a);
  require_rank2("pairwise_sq_dist", b);
  if (a.cols() != b.cols()) {
    throw DimensionError("pairwise_sq_dist: column mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = b.rows(), c = a.cols();
  const auto A = a.data();
  const auto B = b.data();
  std::vector<double> out(m * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < c; ++t) {
        const double d = A[i * c + t] - B[j * c + t];
        acc += d * d;
      }
      out[i * k + j] = acc;
    }
  Tensor y({m, k}, std::move(out));
  if (wants_tape({&a, &b})) {
    ImplPtr ai = a.impl(), bi = b.impl();
    Graph::active()->record("pairwise_sq_dist", {a, b}, y, [ai, bi, m, k, c](std::span<const double> g) {
      const auto& A = ai->data;
      const auto& B = bi->data;
      if (ai->requires_grad) {
        auto& ga = grad_buffer(*ai);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const double w = 2.0 * g[i * k + j];
            for (std::size_t t = 0; t < c; ++t) ga[i * c + t] += w * (A[i * c + t] - B[j * c + t]);
          }
      }
      if (bi->requires_grad) {
        auto& gb = grad_buffer(*bi);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const double w = 2.0 * g[i * k + j];
            for (std::size_t t = 0; t < c; ++t) gb[j * c + t] -= w * (A[i * c + t] - B[j * c + t]);
          }
      }
    });
  }
  return y;
}

}  // namespace ccl
