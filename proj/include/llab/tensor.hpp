#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "llab/errors.hpp"
#include "llab/rng.hpp"

namespace llab {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

/// Debug validation mode: when enabled, every op output is scanned for
/// NaN/Inf and a NumericError is raised at the offending op.
inline bool& debug_validation() {
  static bool enabled = false;
  return enabled;
}

struct ValidationGuard {
  bool prev;
  explicit ValidationGuard(bool on) : prev(debug_validation()) {
    debug_validation() = on;
  }
  ~ValidationGuard() { debug_validation() = prev; }
};

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

/// One executed operation (or leaf) on the implicit tape. `seq` is a
/// per-thread creation stamp; replaying nodes in decreasing `seq` order is
/// exactly reverse execution order, which is a valid reverse topological
/// order for a define-by-run graph.
struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<NodePtr> parents;
  std::function<void(TensorNode&)> backward_fn;

  std::size_t size() const { return value.size(); }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

inline std::uint64_t next_node_seq() {
  thread_local std::uint64_t counter = 0;
  return ++counter;
}

/// Value-semantic handle to a node in the autodiff graph. Tensors hold
/// 64-bit floats, row-major. Op outputs are immutable; leaf parameters are
/// mutated only by the optimizer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> data,
                     bool requires_grad = false) {
    if (shape_numel(shape) != data.size())
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    n->seq = next_node_seq();
    if (debug_validation()) {
      for (double v : n->value)
        if (!std::isfinite(v)) throw NumericError("non-finite value in tensor leaf");
    }
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, v), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  /// Learnable leaf.
  static Tensor param(Shape shape, std::vector<double> data) {
    return from(std::move(shape), std::move(data), true);
  }

  static Tensor randn(Shape shape, Rng& rng, double stdev,
                      bool requires_grad = false) {
    std::vector<double> d(shape_numel(shape));
    for (auto& x : d) x = rng.normal(0.0, stdev);
    return from(std::move(shape), std::move(d), requires_grad);
  }

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const { return n_->shape; }
  std::size_t size() const { return n_->value.size(); }
  std::size_t ndim() const { return n_->shape.size(); }

  std::size_t rows() const {
    check2d();
    return n_->shape[0];
  }
  std::size_t cols() const {
    check2d();
    return n_->shape[1];
  }

  const std::vector<double>& values() const { return n_->value; }
  double item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor");
    return n_->value[0];
  }

  bool requires_grad() const { return n_->requires_grad; }

  /// Gradient buffer (sized lazily). Valid after backward() for leaves
  /// reachable from the loss.
  const std::vector<double>& grad() const {
    n_->ensure_grad();
    return n_->grad;
  }

  void zero_grad() {
    if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), 0.0);
  }

  /// In-place value update for leaf parameters (optimizer use only).
  void set_values(const std::vector<double>& v) {
    if (v.size() != n_->value.size())
      throw ShapeError("set_values size mismatch");
    n_->value = v;
  }
  std::vector<double>& mutable_values() { return n_->value; }

  std::uint64_t seq() const { return n_->seq; }
  const NodePtr& node() const { return n_; }

  explicit Tensor(NodePtr n) : n_(std::move(n)) {}

 private:
  void check2d() const {
    if (n_->shape.size() != 2)
      throw ShapeError("expected 2-D tensor, got " + shape_str(n_->shape));
  }

  NodePtr n_;
};

namespace detail {

inline Tensor make_op(const char* op, Shape shape, std::vector<double> value,
                      std::vector<Tensor> parents,
                      std::function<void(TensorNode&)> backward_fn) {
  if (debug_validation()) {
    for (double v : value)
      if (!std::isfinite(v))
        throw NumericError(std::string("non-finite value produced by op ") + op);
  }
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->seq = next_node_seq();
  n->op = op;
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  n->requires_grad = needs;
  if (needs) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

// GEMM kernels with += accumulation; callers pass pre-zeroed or gradient
// buffers. Loop orders keep the inner loop contiguous.
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = arow[l];
      const double* brow = b + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[i][l] += sum_j a[i][j] * b[l][j]   (a: m x n, b: k x n, c: m x k)
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    for (std::size_t l = 0; l < k; ++l) {
      const double* brow = b + l * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[l] += acc;
    }
  }
}

// c[l][j] += sum_i a[i][l] * b[i][j]   (a: m x k, b: m x n, c: k x n)
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = arow[l];
      double* crow = c + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

/// Reverse sweep bookkeeping. Built from the loss node; `nodes()` is the
/// tape in reverse execution order, each visited exactly once.
class GradTape {
 public:
  static GradTape build(const Tensor& root) {
    GradTape t;
    t.root_ = root.node();
    std::unordered_set<TensorNode*> seen;
    std::vector<TensorNode*> stack;
    if (root.requires_grad()) {
      stack.push_back(root.node().get());
      seen.insert(root.node().get());
    }
    while (!stack.empty()) {
      TensorNode* n = stack.back();
      stack.pop_back();
      t.nodes_.push_back(n);
      for (const auto& p : n->parents) {
        if (p->requires_grad && seen.insert(p.get()).second)
          stack.push_back(p.get());
      }
    }
    std::sort(t.nodes_.begin(), t.nodes_.end(),
              [](const TensorNode* a, const TensorNode* b) {
                return a->seq > b->seq;
              });
    return t;
  }

  const std::vector<TensorNode*>& nodes() const { return nodes_; }

  /// Seeds d(root)/d(root) = 1 and replays backward closures.
  void backward() {
    if (!root_ || !root_->requires_grad) return;
    if (root_->size() != 1)
      throw ShapeError("backward() requires a scalar loss");
    root_->ensure_grad();
    root_->grad[0] += 1.0;
    for (TensorNode* n : nodes_) {
      if (n->backward_fn) {
        n->backward_fn(*n);
        if (debug_validation()) {
          for (const auto& p : n->parents)
            for (double g : p->grad)
              if (!std::isfinite(g))
                throw NumericError(std::string("non-finite gradient from op ") +
                                   n->op);
        }
      }
    }
  }

 private:
  NodePtr root_;
  std::vector<TensorNode*> nodes_;
};

inline void backward(const Tensor& loss) { GradTape::build(loss).backward(); }

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

namespace detail {

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename Fwd, typename Bwd>
Tensor binary_ew(const char* op, const Tensor& a, const Tensor& b, Fwd fwd,
                 Bwd bwd) {
  check_same_shape(a, b, op);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);
  return make_op(op, a.shape(), std::move(out), {a, b},
                 [bwd](TensorNode& self) {
                   auto& pa = *self.parents[0];
                   auto& pb = *self.parents[1];
                   if (pa.requires_grad) pa.ensure_grad();
                   if (pb.requires_grad) pb.ensure_grad();
                   for (std::size_t i = 0; i < self.size(); ++i) {
                     double da, db;
                     bwd(pa.value[i], pb.value[i], self.grad[i], da, db);
                     if (pa.requires_grad) pa.grad[i] += da;
                     if (pb.requires_grad) pb.grad[i] += db;
                   }
                 });
}

template <typename Fwd, typename Dfn>
Tensor unary_ew(const char* op, const Tensor& x, Fwd fwd, Dfn dfn) {
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return make_op(op, x.shape(), std::move(out), {x}, [dfn](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i)
      p.grad[i] += self.grad[i] * dfn(p.value[i], self.value[i]);
  });
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_ew(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = g;
      });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_ew(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = -g;
      });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_ew(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

inline Tensor add_scalar(const Tensor& x, double s) {
  return detail::unary_ew(
      "add_scalar", x, [s](double v) { return v + s; },
      [](double, double) { return 1.0; });
}

inline Tensor mul_scalar(const Tensor& x, double s) {
  return detail::unary_ew(
      "mul_scalar", x, [s](double v) { return v * s; },
      [s](double, double) { return s; });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary_ew(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double xin, double) { return xin > 0.0 ? 1.0 : 0.0; });
}

namespace detail {
// tanh-approximation GELU; the same formula is assumed by the
// finite-difference tests.
inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;
}  // namespace detail

inline Tensor gelu(const Tensor& x) {
  return detail::unary_ew(
      "gelu", x,
      [](double v) {
        const double u = detail::kGeluC * (v + detail::kGeluA * v * v * v);
        return 0.5 * v * (1.0 + std::tanh(u));
      },
      [](double v, double) {
        const double u = detail::kGeluC * (v + detail::kGeluA * v * v * v);
        const double t = std::tanh(u);
        const double du = detail::kGeluC * (1.0 + 3.0 * detail::kGeluA * v * v);
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
      });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary_ew(
      "exp", x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

inline Tensor log(const Tensor& x) {
  for (double v : x.values())
    if (v <= 0.0) throw DomainError("log: nonpositive input");
  return detail::unary_ew(
      "log", x, [](double v) { return std::log(v); },
      [](double xin, double) { return 1.0 / xin; });
}

inline Tensor sqrt(const Tensor& x) {
  for (double v : x.values())
    if (v < 0.0) throw DomainError("sqrt: negative input");
  return detail::unary_ew(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }

// ---------------------------------------------------------------------------
// matmul and 2-D structure ops
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw ShapeError("matmul expects 2-D operands");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw ShapeError("matmul: inner dimensions disagree, " +
                     shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  detail::gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  return detail::make_op(
      "matmul", {m, n}, std::move(out), {a, b}, [m, k, n](TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
          pa.ensure_grad();  // dA = G * B^T
          detail::gemm_nt(self.grad.data(), pb.value.data(), pa.grad.data(), m,
                          n, k);
        }
        if (pb.requires_grad) {
          pb.ensure_grad();  // dB = A^T * G
          detail::gemm_tn(pa.value.data(), self.grad.data(), pb.grad.data(), m,
                          k, n);
        }
      });
}

inline Tensor transpose(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  const auto& v = x.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = v[i * n + j];
  return detail::make_op("transpose", {n, m}, std::move(out), {x},
                         [m, n](TensorNode& self) {
                           auto& p = *self.parents[0];
                           if (!p.requires_grad) return;
                           p.ensure_grad();
                           for (std::size_t j = 0; j < n; ++j)
                             for (std::size_t i = 0; i < m; ++i)
                               p.grad[i * n + j] += self.grad[j * m + i];
                         });
}

/// Contiguous submatrix copy.
inline Tensor slice_block(const Tensor& x, std::size_t r0, std::size_t nr,
                          std::size_t c0, std::size_t nc) {
  const std::size_t m = x.rows(), n = x.cols();
  if (r0 + nr > m || c0 + nc > n) throw ShapeError("slice_block out of range");
  std::vector<double> out(nr * nc);
  const auto& v = x.values();
  for (std::size_t i = 0; i < nr; ++i)
    for (std::size_t j = 0; j < nc; ++j)
      out[i * nc + j] = v[(r0 + i) * n + (c0 + j)];
  return detail::make_op("slice_block", {nr, nc}, std::move(out), {x},
                         [r0, nr, c0, nc, n](TensorNode& self) {
                           auto& p = *self.parents[0];
                           if (!p.requires_grad) return;
                           p.ensure_grad();
                           for (std::size_t i = 0; i < nr; ++i)
                             for (std::size_t j = 0; j < nc; ++j)
                               p.grad[(r0 + i) * n + (c0 + j)] +=
                                   self.grad[i * nc + j];
                         });
}

/// Assemble a 2-D tensor from non-overlapping pieces pasted at (row, col)
/// offsets. Unfilled cells are zero.
inline Tensor concat_blocks(std::size_t rows, std::size_t cols,
                            const std::vector<Tensor>& pieces,
                            const std::vector<std::pair<std::size_t, std::size_t>>& at) {
  if (pieces.size() != at.size())
    throw ShapeError("concat_blocks: pieces/offsets mismatch");
  std::vector<double> out(rows * cols, 0.0);
  for (std::size_t p = 0; p < pieces.size(); ++p) {
    const auto& t = pieces[p];
    const auto [r0, c0] = at[p];
    if (r0 + t.rows() > rows || c0 + t.cols() > cols)
      throw ShapeError("concat_blocks: piece out of range");
    const auto& v = t.values();
    const std::size_t pr = t.rows(), pc = t.cols();
    for (std::size_t i = 0; i < pr; ++i)
      for (std::size_t j = 0; j < pc; ++j)
        out[(r0 + i) * cols + (c0 + j)] = v[i * pc + j];
  }
  std::vector<std::pair<std::size_t, std::size_t>> offs = at;
  std::vector<std::pair<std::size_t, std::size_t>> dims;
  dims.reserve(pieces.size());
  for (const auto& t : pieces) dims.emplace_back(t.rows(), t.cols());
  return detail::make_op(
      "concat_blocks", {rows, cols}, std::move(out), pieces,
      [offs, dims, cols](TensorNode& self) {
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
          auto& par = *self.parents[p];
          if (!par.requires_grad) continue;
          par.ensure_grad();
          const auto [r0, c0] = offs[p];
          const auto [pr, pc] = dims[p];
          for (std::size_t i = 0; i < pr; ++i)
            for (std::size_t j = 0; j < pc; ++j)
              par.grad[i * pc + j] += self.grad[(r0 + i) * cols + (c0 + j)];
        }
      });
}

/// y[i][:] = x[idx[i]][:]
inline Tensor gather_rows(const Tensor& x, std::vector<std::size_t> idx) {
  const std::size_t n = x.cols(), m = x.rows();
  for (std::size_t r : idx)
    if (r >= m) throw ShapeError("gather_rows index out of range");
  const std::size_t nr = idx.size();
  std::vector<double> out(nr * n);
  const auto& v = x.values();
  for (std::size_t i = 0; i < nr; ++i)
    std::copy_n(v.data() + idx[i] * n, n, out.data() + i * n);
  return detail::make_op("gather_rows", {nr, n}, std::move(out), {x},
                         [idx = std::move(idx), n](TensorNode& self) {
                           auto& p = *self.parents[0];
                           if (!p.requires_grad) return;
                           p.ensure_grad();
                           for (std::size_t i = 0; i < idx.size(); ++i)
                             for (std::size_t j = 0; j < n; ++j)
                               p.grad[idx[i] * n + j] += self.grad[i * n + j];
                         });
}

/// Repeat a (t x n) tensor `reps` times along rows -> (reps*t x n).
inline Tensor tile_rows(const Tensor& x, std::size_t reps) {
  const std::size_t t = x.rows(), n = x.cols();
  std::vector<double> out(reps * t * n);
  for (std::size_t r = 0; r < reps; ++r)
    std::copy_n(x.values().data(), t * n, out.data() + r * t * n);
  return detail::make_op("tile_rows", {reps * t, n}, std::move(out), {x},
                         [reps, t, n](TensorNode& self) {
                           auto& p = *self.parents[0];
                           if (!p.requires_grad) return;
                           p.ensure_grad();
                           for (std::size_t r = 0; r < reps; ++r)
                             for (std::size_t i = 0; i < t * n; ++i)
                               p.grad[i] += self.grad[r * t * n + i];
                         });
}

/// x (m x n) + v (n), row-broadcast bias add.
inline Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  const std::size_t m = x.rows(), n = x.cols();
  if (v.size() != n) throw ShapeError("add_rowvec: vector length mismatch");
  std::vector<double> out(m * n);
  const auto& xv = x.values();
  const auto& vv = v.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] + vv[j];
  return detail::make_op("add_rowvec", {m, n}, std::move(out), {x, v},
                         [m, n](TensorNode& self) {
                           auto& px = *self.parents[0];
                           auto& pv = *self.parents[1];
                           if (px.requires_grad) {
                             px.ensure_grad();
                             for (std::size_t i = 0; i < m * n; ++i)
                               px.grad[i] += self.grad[i];
                           }
                           if (pv.requires_grad) {
                             pv.ensure_grad();
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j)
                                 pv.grad[j] += self.grad[i * n + j];
                           }
                         });
}

// ---------------------------------------------------------------------------
// reductions and normalizations
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return detail::make_op("sum", {1}, {acc}, {x}, [](TensorNode& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (double& g : p.grad) g += self.grad[0];
  });
}

inline Tensor mean(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.size());
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return detail::make_op("mean", {1}, {acc * inv}, {x},
                         [inv](TensorNode& self) {
                           auto& p = *self.parents[0];
                           if (!p.requires_grad) return;
                           p.ensure_grad();
                           for (double& g : p.grad) g += self.grad[0] * inv;
                         });
}

/// Mean of squared differences over all elements.
inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  detail::check_same_shape(pred, target, "mse_loss");
  const std::size_t n = pred.size();
  const double inv = 1.0 / static_cast<double>(n);
  double acc = 0.0;
  const auto& pv = pred.values();
  const auto& tv = target.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pv[i] - tv[i];
    acc += d * d;
  }
  return detail::make_op(
      "mse_loss", {1}, {acc * inv}, {pred, target}, [inv](TensorNode& self) {
        auto& pp = *self.parents[0];
        auto& pt = *self.parents[1];
        const double g = self.grad[0];
        if (pp.requires_grad) pp.ensure_grad();
        if (pt.requires_grad) pt.ensure_grad();
        for (std::size_t i = 0; i < pp.value.size(); ++i) {
          const double d = 2.0 * inv * (pp.value[i] - pt.value[i]) * g;
          if (pp.requires_grad) pp.grad[i] += d;
          if (pt.requires_grad) pt.grad[i] -= d;
        }
      });
}

/// Max-subtracted softmax along `axis`. Works for any rank; the tensor is
/// viewed as [outer, len, inner] with `len` the extent of `axis`.
inline Tensor softmax(const Tensor& x, int axis) {
  const auto& shp = x.shape();
  const int nd = static_cast<int>(shp.size());
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd) throw ShapeError("softmax: axis out of range");
  const std::size_t len = shp[static_cast<std::size_t>(axis)];
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shp[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < nd; ++i) inner *= shp[static_cast<std::size_t>(i)];

  const auto& v = x.values();
  std::vector<double> out(v.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = v[base];
      for (std::size_t l = 1; l < len; ++l)
        mx = std::max(mx, v[base + l * inner]);
      double denom = 0.0;
      for (std::size_t l = 0; l < len; ++l) {
        const double e = std::exp(v[base + l * inner] - mx);
        out[base + l * inner] = e;
        denom += e;
      }
      const double inv = 1.0 / denom;
      for (std::size_t l = 0; l < len; ++l) out[base + l * inner] *= inv;
    }
  return detail::make_op(
      "softmax", shp, std::move(out), {x},
      [outer, len, inner](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double dot = 0.0;
            for (std::size_t l = 0; l < len; ++l) {
              const std::size_t i = base + l * inner;
              dot += self.grad[i] * self.value[i];
            }
            for (std::size_t l = 0; l < len; ++l) {
              const std::size_t i = base + l * inner;
              p.grad[i] += self.value[i] * (self.grad[i] - dot);
            }
          }
      });
}

/// Per-row LayerNorm over the last dimension with affine gain/bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain,
                         const Tensor& bias, double eps = 1e-5) {
  if (x.ndim() != 2) throw ShapeError("layer_norm expects a 2-D tensor");
  const std::size_t m = x.rows(), d = x.cols();
  if (gain.size() != d || bias.size() != d)
    throw ShapeError("layer_norm: gain/bias length must equal last dim");
  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  std::vector<double> out(m * d);
  std::vector<double> xhat(m * d);
  std::vector<double> rstd(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xv.data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = row[j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double r = 1.0 / std::sqrt(var + eps);
    rstd[i] = r;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * r;
      xhat[i * d + j] = h;
      out[i * d + j] = h * gv[j] + bv[j];
    }
  }
  return detail::make_op(
      "layer_norm", {m, d}, std::move(out), {x, gain, bias},
      [m, d, xhat = std::move(xhat), rstd = std::move(rstd)](TensorNode& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        const auto& gv = pg.value;
        if (px.requires_grad) px.ensure_grad();
        if (pg.requires_grad) pg.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        const double invd = 1.0 / static_cast<double>(d);
        for (std::size_t i = 0; i < m; ++i) {
          const double* g = self.grad.data() + i * d;
          const double* h = xhat.data() + i * d;
          if (pg.requires_grad || pb.requires_grad) {
            for (std::size_t j = 0; j < d; ++j) {
              if (pg.requires_grad) pg.grad[j] += g[j] * h[j];
              if (pb.requires_grad) pb.grad[j] += g[j];
            }
          }
          if (px.requires_grad) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double gg = g[j] * gv[j];
              s1 += gg;
              s2 += gg * h[j];
            }
            s1 *= invd;
            s2 *= invd;
            for (std::size_t j = 0; j < d; ++j) {
              const double gg = g[j] * gv[j];
              px.grad[i * d + j] += rstd[i] * (gg - s1 - h[j] * s2);
            }
          }
        }
      });
}

/// Rescale every row to unit L2 norm. Rejects zero rows.
inline Tensor row_normalize(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  const auto& v = x.values();
  std::vector<double> out(m * n);
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += v[i * n + j] * v[i * n + j];
    const double nm = std::sqrt(s);
    if (nm == 0.0) throw DomainError("row_normalize: zero-norm row");
    norms[i] = nm;
    const double inv = 1.0 / nm;
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = v[i * n + j] * inv;
  }
  return detail::make_op(
      "row_normalize", {m, n}, std::move(out), {x},
      [m, n, norms = std::move(norms)](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          const double* y = self.value.data() + i * n;
          const double* g = self.grad.data() + i * n;
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += y[j] * g[j];
          const double inv = 1.0 / norms[i];
          for (std::size_t j = 0; j < n; ++j)
            p.grad[i * n + j] += (g[j] - y[j] * dot) * inv;
        }
      });
}

/// (G*g) x n -> G x n by averaging consecutive row groups of size g.
inline Tensor mean_pool_rows(const Tensor& x, std::size_t group) {
  const std::size_t m = x.rows(), n = x.cols();
  if (group == 0 || m % group != 0)
    throw ShapeError("mean_pool_rows: rows not divisible by group");
  const std::size_t groups = m / group;
  const double inv = 1.0 / static_cast<double>(group);
  const auto& v = x.values();
  std::vector<double> out(groups * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t gi = i / group;
    for (std::size_t j = 0; j < n; ++j) out[gi * n + j] += v[i * n + j] * inv;
  }
  return detail::make_op("mean_pool_rows", {groups, n}, std::move(out), {x},
                         [m, n, group, inv](TensorNode& self) {
                           auto& p = *self.parents[0];
                           if (!p.requires_grad) return;
                           p.ensure_grad();
                           for (std::size_t i = 0; i < m; ++i) {
                             const std::size_t gi = i / group;
                             for (std::size_t j = 0; j < n; ++j)
                               p.grad[i * n + j] += self.grad[gi * n + j] * inv;
                           }
                         });
}

/// Mean cross-entropy of a square logit matrix whose correct class is the
/// diagonal (InfoNCE building block). Stable log-sum-exp per row.
inline Tensor cross_entropy_diag(const Tensor& logits) {
  const std::size_t b = logits.rows();
  if (logits.cols() != b)
    throw ShapeError("cross_entropy_diag expects a square matrix");
  const auto& v = logits.values();
  std::vector<double> probs(b * b);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = v.data() + i * b;
    double mx = row[0];
    for (std::size_t j = 1; j < b; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      const double e = std::exp(row[j] - mx);
      probs[i * b + j] = e;
      denom += e;
    }
    const double inv = 1.0 / denom;
    for (std::size_t j = 0; j < b; ++j) probs[i * b + j] *= inv;
    loss += mx + std::log(denom) - row[i];
  }
  loss /= static_cast<double>(b);
  return detail::make_op(
      "cross_entropy_diag", {1}, {loss}, {logits},
      [b, probs = std::move(probs)](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const double g = self.grad[0] / static_cast<double>(b);
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < b; ++j)
            p.grad[i * b + j] +=
                g * (probs[i * b + j] - (i == j ? 1.0 : 0.0));
      });
}

// ---------------------------------------------------------------------------
// spatial ops for the conv/upsampling path. Grid tensors are laid out as
// (B*H*W) x C rows: batch-major, then row y, then column x.
// ---------------------------------------------------------------------------

/// 3x3 same-padding patch gather: (B*H*W) x C -> (B*H*W) x 9C. Column block
/// k in [0,9) holds the neighbor at dy=k/3-1, dx=k%3-1; zeros off the edge.
inline Tensor im2col3(const Tensor& x, std::size_t b, std::size_t h,
                      std::size_t w, std::size_t c) {
  if (x.rows() != b * h * w || x.cols() != c)
    throw ShapeError("im2col3: input is not a (B*H*W) x C grid");
  const auto& v = x.values();
  std::vector<double> out(b * h * w * 9 * c, 0.0);
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        const std::size_t orow = (bi * h + y) * w + xx;
        for (int k = 0; k < 9; ++k) {
          const int sy = static_cast<int>(y) + k / 3 - 1;
          const int sx = static_cast<int>(xx) + k % 3 - 1;
          if (sy < 0 || sy >= static_cast<int>(h) || sx < 0 ||
              sx >= static_cast<int>(w))
            continue;
          const std::size_t irow =
              (bi * h + static_cast<std::size_t>(sy)) * w +
              static_cast<std::size_t>(sx);
          std::copy_n(v.data() + irow * c, c,
                      out.data() + orow * 9 * c + static_cast<std::size_t>(k) * c);
        }
      }
  return detail::make_op(
      "im2col3", {b * h * w, 9 * c}, std::move(out), {x},
      [b, h, w, c](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t bi = 0; bi < b; ++bi)
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx) {
              const std::size_t orow = (bi * h + y) * w + xx;
              for (int k = 0; k < 9; ++k) {
                const int sy = static_cast<int>(y) + k / 3 - 1;
                const int sx = static_cast<int>(xx) + k % 3 - 1;
                if (sy < 0 || sy >= static_cast<int>(h) || sx < 0 ||
                    sx >= static_cast<int>(w))
                  continue;
                const std::size_t irow =
                    (bi * h + static_cast<std::size_t>(sy)) * w +
                    static_cast<std::size_t>(sx);
                const double* g =
                    self.grad.data() + orow * 9 * c + static_cast<std::size_t>(k) * c;
                double* dst = p.grad.data() + irow * c;
                for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += g[ch];
              }
            }
      });
}

/// Nearest-neighbor x2 upsampling on a (B*H*W) x C grid.
inline Tensor upsample2x(const Tensor& x, std::size_t b, std::size_t h,
                         std::size_t w, std::size_t c) {
  if (x.rows() != b * h * w || x.cols() != c)
    throw ShapeError("upsample2x: input is not a (B*H*W) x C grid");
  const std::size_t h2 = 2 * h, w2 = 2 * w;
  const auto& v = x.values();
  std::vector<double> out(b * h2 * w2 * c);
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t y = 0; y < h2; ++y)
      for (std::size_t xx = 0; xx < w2; ++xx) {
        const std::size_t irow = (bi * h + y / 2) * w + xx / 2;
        const std::size_t orow = (bi * h2 + y) * w2 + xx;
        std::copy_n(v.data() + irow * c, c, out.data() + orow * c);
      }
  return detail::make_op(
      "upsample2x", {b * h2 * w2, c}, std::move(out), {x},
      [b, h, w, c, h2, w2](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t bi = 0; bi < b; ++bi)
          for (std::size_t y = 0; y < h2; ++y)
            for (std::size_t xx = 0; xx < w2; ++xx) {
              const std::size_t irow = (bi * h + y / 2) * w + xx / 2;
              const std::size_t orow = (bi * h2 + y) * w2 + xx;
              const double* g = self.grad.data() + orow * c;
              double* dst = p.grad.data() + irow * c;
              for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += g[ch];
            }
      });
}

}  // namespace llab
