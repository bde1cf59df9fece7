#include "brati/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "brati/errors.hpp"

namespace brati {

std::size_t shape_product(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

using detail::Node;

namespace {

// Builds the output node of an op. `attach_back` is called only when some
// input wants gradients, with the freshly created node as `self`; it must
// install self->backprop.
template <typename AttachFn>
Tensor make_op(Shape shape, std::vector<double> value,
               std::initializer_list<Tensor> inputs, AttachFn attach_back) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  for (const auto& t : inputs)
    if (t.requires_grad()) {
      n->requires_grad = true;
      break;
    }
  if (n->requires_grad) {
    n->parents.reserve(inputs.size());
    for (const auto& t : inputs) n->parents.push_back(t.node_ptr());
    attach_back(n.get());
  }
  return detail::wrap_node(std::move(n));
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.shape().size() != 2)
    throw ShapeError(std::string(op) + " needs a rank-2 tensor, got " +
                     shape_str(t.shape()));
}

// Layout of a binary elementwise op. Shapes must be equal, or equal-rank
// differing only in the last axis where one side has extent 1.
struct BinaryLayout {
  std::size_t rows = 1;   // product of leading axes
  std::size_t cols = 1;   // output last axis
  bool a_bcast = false;   // a has last extent 1, replicated over cols
  bool b_bcast = false;
  Shape out;
};

BinaryLayout binary_layout(const Shape& a, const Shape& b, const char* op) {
  if (a.size() != b.size() || a.empty())
    throw ShapeError(std::string(op) + ": incompatible shapes " +
                     shape_str(a) + " and " + shape_str(b));
  BinaryLayout l;
  for (std::size_t i = 0; i + 1 < a.size(); ++i) {
    if (a[i] != b[i])
      throw ShapeError(std::string(op) + ": incompatible shapes " +
                       shape_str(a) + " and " + shape_str(b));
    l.rows *= a[i];
  }
  const std::size_t la = a.back(), lb = b.back();
  if (la == lb) {
    l.cols = la;
  } else if (la == 1) {
    l.a_bcast = true;
    l.cols = lb;
  } else if (lb == 1) {
    l.b_bcast = true;
    l.cols = la;
  } else {
    throw ShapeError(std::string(op) + ": incompatible shapes " +
                     shape_str(a) + " and " + shape_str(b));
  }
  l.out = a;
  l.out.back() = l.cols;
  return l;
}

template <typename Fwd, typename DA, typename DB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd,
                 DA da, DB db) {
  const BinaryLayout l = binary_layout(a.shape(), b.shape(), name);
  std::vector<double> out(l.rows * l.cols);
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t r = 0; r < l.rows; ++r)
    for (std::size_t c = 0; c < l.cols; ++c) {
      const double x = av[l.a_bcast ? r : r * l.cols + c];
      const double y = bv[l.b_bcast ? r : r * l.cols + c];
      out[r * l.cols + c] = fwd(x, y);
    }
  return make_op(l.out, std::move(out), {a, b}, [&](Node* self) {
    Node* an = a.node();
    Node* bn = b.node();
    self->backprop = [self, an, bn, l, da, db]() {
      const auto& g = self->grad;
      const bool wa = an->requires_grad, wb = bn->requires_grad;
      if (wa) an->ensure_grad();
      if (wb) bn->ensure_grad();
      for (std::size_t r = 0; r < l.rows; ++r)
        for (std::size_t c = 0; c < l.cols; ++c) {
          const std::size_t oi = r * l.cols + c;
          const std::size_t ai = l.a_bcast ? r : oi;
          const std::size_t bi = l.b_bcast ? r : oi;
          const double x = an->value[ai];
          const double y = bn->value[bi];
          if (wa) an->grad[ai] += g[oi] * da(x, y);
          if (wb) bn->grad[bi] += g[oi] * db(x, y);
        }
    };
  });
}

// Unary elementwise op whose derivative is a function of (input, output).
template <typename Fwd, typename Der>
Tensor unary_op(const Tensor& x, Fwd fwd, Der der) {
  std::vector<double> out(x.size());
  const auto& xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  return make_op(x.shape(), std::move(out), {x}, [&](Node* self) {
    Node* xn = x.node();
    self->backprop = [self, xn, der]() {
      xn->ensure_grad();
      const auto& g = self->grad;
      for (std::size_t i = 0; i < g.size(); ++i)
        xn->grad[i] += g[i] * der(xn->value[i], self->value[i]);
    };
  });
}

}  // namespace

// --- Tensor basics --------------------------------------------------------

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_product(shape) != data.size())
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return detail::wrap_node(std::move(n));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_product(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = shape_product(shape);
  return from(std::move(shape), std::vector<double>(n, value), false);
}

Tensor Tensor::scalar(double value) { return from({1}, {value}, false); }

std::size_t Tensor::rows() const {
  require_rank2(*this, "rows()");
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  require_rank2(*this, "cols()");
  return node_->shape[1];
}

std::vector<double>& Tensor::values_mut() { return node_->value; }

double Tensor::item() const {
  if (size() != 1)
    throw UsageError("item() on non-scalar tensor " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return node_->value[r * cols() + c];
}

const std::vector<double>* Tensor::grad() const {
  if (node_->grad.size() != node_->value.size()) return nullptr;
  return &node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

// --- matmul ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t n = b.shape()[1];
  if (k != b.shape()[0])
    throw ShapeError("matmul inner extents disagree: " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));

  std::vector<double> out(m * n, 0.0);
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = &out[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }

  return make_op({m, n}, std::move(out), {a, b}, [&](Node* self) {
    Node* an = a.node();
    Node* bn = b.node();
    self->backprop = [self, an, bn, m, k, n]() {
      const auto& g = self->grad;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* grow = &g[i * n];
            const double* brow = &bn->value[p * n];
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            an->grad[i * k + p] += acc;
          }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = an->value[i * k + p];
            if (aip == 0.0) continue;
            const double* grow = &g[i * n];
            double* brow = &bn->grad[p * n];
            for (std::size_t j = 0; j < n; ++j) brow[j] += aip * grow[j];
          }
      }
    };
  });
}

// --- binary elementwise -----------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary_op(
      a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double c) {
  return unary_op(
      a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  if (v.shape().size() != 1 || x.shape().empty() ||
      x.shape().back() != v.shape()[0])
    throw ShapeError("add_rowvec: " + shape_str(x.shape()) + " with vector " +
                     shape_str(v.shape()));
  const std::size_t n = v.shape()[0];
  const std::size_t rows = x.size() / n;
  std::vector<double> out(x.size());
  const auto& xv = x.data();
  const auto& vv = v.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = xv[r * n + j] + vv[j];
  return make_op(x.shape(), std::move(out), {x, v}, [&](Node* self) {
    Node* xn = x.node();
    Node* vn = v.node();
    self->backprop = [self, xn, vn, rows, n]() {
      const auto& g = self->grad;
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) xn->grad[i] += g[i];
      }
      if (vn->requires_grad) {
        vn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) vn->grad[j] += g[r * n + j];
      }
    };
  });
}

Tensor mul_rowvec(const Tensor& x, const Tensor& v) {
  if (v.shape().size() != 1 || x.shape().empty() ||
      x.shape().back() != v.shape()[0])
    throw ShapeError("mul_rowvec: " + shape_str(x.shape()) + " with vector " +
                     shape_str(v.shape()));
  const std::size_t n = v.shape()[0];
  const std::size_t rows = x.size() / n;
  std::vector<double> out(x.size());
  const auto& xv = x.data();
  const auto& vv = v.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = xv[r * n + j] * vv[j];
  return make_op(x.shape(), std::move(out), {x, v}, [&](Node* self) {
    Node* xn = x.node();
    Node* vn = v.node();
    self->backprop = [self, xn, vn, rows, n]() {
      const auto& g = self->grad;
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j)
            xn->grad[r * n + j] += g[r * n + j] * vn->value[j];
      }
      if (vn->requires_grad) {
        vn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j)
            vn->grad[j] += g[r * n + j] * xn->value[r * n + j];
      }
    };
  });
}

// --- unary ------------------------------------------------------------------

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x,
      [](double v) {
        // split by sign so exp never overflows
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double s) { return s * (1.0 - s); });
}

Tensor tanh_op(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::tanh(v); },
      [](double, double t) { return 1.0 - t * t; });
}

Tensor elu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v > 0.0 ? v : std::expm1(v); },
      [](double v, double y) { return v > 0.0 ? 1.0 : y + 1.0; });
}

Tensor exp_op(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor neg(const Tensor& x) {
  return unary_op(
      x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor abs_op(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor sqrt_op(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

// --- softmax ----------------------------------------------------------------

Tensor softmax_lastaxis(const Tensor& x) {
  if (x.shape().empty() || x.shape().back() == 0)
    throw ShapeError("softmax_lastaxis: empty last axis in " +
                     shape_str(x.shape()));
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  std::vector<double> out(x.size());
  const auto& xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = &xv[r * n];
    double mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp(row[j] - mx);
      out[r * n + j] = e;
      sum += e;
    }
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] /= sum;
  }
  return make_op(x.shape(), std::move(out), {x}, [&](Node* self) {
    Node* xn = x.node();
    self->backprop = [self, xn, rows, n]() {
      xn->ensure_grad();
      const auto& g = self->grad;
      const auto& s = self->value;
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * s[r * n + j];
        for (std::size_t j = 0; j < n; ++j)
          xn->grad[r * n + j] += s[r * n + j] * (g[r * n + j] - dot);
      }
    };
  });
}

// --- reductions ---------------------------------------------------------------

Tensor sum_all(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_op({1}, {acc}, {x}, [&](Node* self) {
    Node* xn = x.node();
    self->backprop = [self, xn]() {
      xn->ensure_grad();
      const double g = self->grad[0];
      for (auto& gv : xn->grad) gv += g;
    };
  });
}

Tensor mean_lastaxis(const Tensor& x) {
  if (x.shape().empty() || x.shape().back() == 0)
    throw ShapeError("mean_lastaxis: empty last axis in " +
                     shape_str(x.shape()));
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  std::vector<double> out(rows, 0.0);
  const auto& xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += xv[r * n + j];
    out[r] = acc / static_cast<double>(n);
  }
  Shape oshape = x.shape();
  oshape.back() = 1;
  return make_op(std::move(oshape), std::move(out), {x}, [&](Node* self) {
    Node* xn = x.node();
    self->backprop = [self, xn, rows, n]() {
      xn->ensure_grad();
      const double inv = 1.0 / static_cast<double>(n);
      for (std::size_t r = 0; r < rows; ++r) {
        const double g = self->grad[r] * inv;
        for (std::size_t j = 0; j < n; ++j) xn->grad[r * n + j] += g;
      }
    };
  });
}

// --- structural ----------------------------------------------------------------

Tensor concat_lastaxis(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw UsageError("concat_lastaxis: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_lastaxis");
    if (p.rows() != m)
      throw ShapeError("concat_lastaxis: row mismatch " +
                       shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t n = p.cols();
    for (std::size_t r = 0; r < m; ++r)
      std::copy_n(&p.data()[r * n], n, &out[r * total + off]);
    off += n;
  }

  auto node = std::make_shared<Node>();
  node->shape = {m, total};
  node->value = std::move(out);
  for (const auto& p : parts)
    if (p.requires_grad()) node->requires_grad = true;
  if (node->requires_grad) {
    for (const auto& p : parts) node->parents.push_back(p.node_ptr());
    Node* self = node.get();
    std::vector<Node*> raw;
    std::vector<std::size_t> widths;
    for (const auto& p : parts) {
      raw.push_back(p.node());
      widths.push_back(p.cols());
    }
    node->backprop = [self, raw, widths, m, total]() {
      std::size_t off = 0;
      for (std::size_t k = 0; k < raw.size(); ++k) {
        Node* p = raw[k];
        const std::size_t n = widths[k];
        if (p->requires_grad) {
          p->ensure_grad();
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < n; ++j)
              p->grad[r * n + j] += self->grad[r * total + off + j];
        }
        off += n;
      }
    };
  }
  return detail::wrap_node(std::move(node));
}

Tensor concat_timeaxis(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw UsageError("concat_timeaxis: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t total_rows = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_timeaxis");
    if (p.cols() != n)
      throw ShapeError("concat_timeaxis: column mismatch " +
                       shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    total_rows += p.rows();
  }
  std::vector<double> out;
  out.reserve(total_rows * n);
  for (const auto& p : parts)
    out.insert(out.end(), p.data().begin(), p.data().end());

  auto node = std::make_shared<Node>();
  node->shape = {total_rows, n};
  node->value = std::move(out);
  for (const auto& p : parts)
    if (p.requires_grad()) node->requires_grad = true;
  if (node->requires_grad) {
    for (const auto& p : parts) node->parents.push_back(p.node_ptr());
    Node* self = node.get();
    std::vector<Node*> raw;
    std::vector<std::size_t> sizes;
    for (const auto& p : parts) {
      raw.push_back(p.node());
      sizes.push_back(p.size());
    }
    node->backprop = [self, raw, sizes]() {
      std::size_t off = 0;
      for (std::size_t k = 0; k < raw.size(); ++k) {
        Node* p = raw[k];
        if (p->requires_grad) {
          p->ensure_grad();
          for (std::size_t i = 0; i < sizes[k]; ++i)
            p->grad[i] += self->grad[off + i];
        }
        off += sizes[k];
      }
    };
  }
  return detail::wrap_node(std::move(node));
}

namespace {

// Shared by forward and backward of the reversal ops.
void reverse_rows_into(const std::vector<double>& src, std::vector<double>& dst,
                       std::size_t rows, std::size_t cols, bool add) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* s = &src[r * cols];
    double* d = &dst[(rows - 1 - r) * cols];
    for (std::size_t j = 0; j < cols; ++j)
      if (add)
        d[j] += s[j];
      else
        d[j] = s[j];
  }
}

}  // namespace

Tensor reverse_timeaxis(const Tensor& x) {
  if (x.shape().empty())
    throw ShapeError("reverse_timeaxis: rank-0 tensor");
  const std::size_t rows = x.shape()[0];
  const std::size_t cols = x.size() / std::max<std::size_t>(rows, 1);
  std::vector<double> out(x.size());
  reverse_rows_into(x.data(), out, rows, cols, false);
  return make_op(x.shape(), std::move(out), {x}, [&](Node* self) {
    Node* xn = x.node();
    self->backprop = [self, xn, rows, cols]() {
      xn->ensure_grad();
      reverse_rows_into(self->grad, xn->grad, rows, cols, true);
    };
  });
}

Tensor reverse_lastaxis(const Tensor& x) {
  if (x.shape().empty())
    throw ShapeError("reverse_lastaxis: rank-0 tensor");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  std::vector<double> out(x.size());
  const auto& xv = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j)
      out[r * n + j] = xv[r * n + (n - 1 - j)];
  return make_op(x.shape(), std::move(out), {x}, [&](Node* self) {
    Node* xn = x.node();
    self->backprop = [self, xn, rows, n]() {
      xn->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j)
          xn->grad[r * n + (n - 1 - j)] += self->grad[r * n + j];
    };
  });
}

Tensor transpose_last2(const Tensor& x) {
  require_rank2(x, "transpose_last2");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(x.size());
  const auto& xv = x.data();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < n; ++j) out[j * m + r] = xv[r * n + j];
  return make_op({n, m}, std::move(out), {x}, [&](Node* self) {
    Node* xn = x.node();
    self->backprop = [self, xn, m, n]() {
      xn->ensure_grad();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < n; ++j)
          xn->grad[r * n + j] += self->grad[j * m + r];
    };
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_product(shape) != x.size())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(shape));
  std::vector<double> out = x.data();
  return make_op(std::move(shape), std::move(out), {x}, [&](Node* self) {
    Node* xn = x.node();
    self->backprop = [self, xn]() {
      xn->ensure_grad();
      for (std::size_t i = 0; i < self->grad.size(); ++i)
        xn->grad[i] += self->grad[i];
    };
  });
}

Tensor slice_timeaxis(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_timeaxis");
  const std::size_t m = x.rows(), n = x.cols();
  if (begin >= end || end > m)
    throw ShapeError("slice_timeaxis: range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") out of " + shape_str(x.shape()));
  const std::size_t rows = end - begin;
  std::vector<double> out(x.data().begin() + begin * n,
                          x.data().begin() + end * n);
  return make_op({rows, n}, std::move(out), {x}, [&](Node* self) {
    Node* xn = x.node();
    self->backprop = [self, xn, begin, n]() {
      xn->ensure_grad();
      for (std::size_t i = 0; i < self->grad.size(); ++i)
        xn->grad[begin * n + i] += self->grad[i];
    };
  });
}

Tensor masked_fill(const Tensor& x, const Tensor& keep, double fill) {
  if (x.shape() != keep.shape())
    throw ShapeError("masked_fill: mask shape " + shape_str(keep.shape()) +
                     " does not match " + shape_str(x.shape()));
  std::vector<double> out(x.size());
  const auto& xv = x.data();
  const auto& kv = keep.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = kv[i] == 1.0 ? xv[i] : fill;
  return make_op(x.shape(), std::move(out), {x, keep}, [&](Node* self) {
    Node* xn = x.node();
    Node* kn = keep.node();
    self->backprop = [self, xn, kn]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < self->grad.size(); ++i)
        if (kn->value[i] == 1.0) xn->grad[i] += self->grad[i];
    };
  });
}

// --- backward -------------------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw UsageError("backward() needs a scalar loss, got " +
                     (loss.defined() ? shape_str(loss.shape()) : "<empty>"));

  // Iterative post-order DFS: producers end up before consumers.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  struct Frame {
    Node* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  Node* root = loss.node();
  if (seen.insert(root).second) stack.push_back({root, 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node* p = f.node->parents[f.next_parent++].get();
      if (seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  // Interior gradients are scratch per pass; leaf gradients accumulate.
  for (Node* n : order) {
    if (!n->requires_grad) continue;
    if (n->parents.empty()) {
      n->ensure_grad();
    } else {
      n->grad.assign(n->value.size(), 0.0);
    }
  }
  root->ensure_grad();
  root->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->requires_grad && n->backprop) n->backprop();
  }
}

}  // namespace brati
