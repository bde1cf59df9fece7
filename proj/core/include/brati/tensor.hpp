#ifndef BRATI_TENSOR_HPP
#define BRATI_TENSOR_HPP

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace brati {

using Shape = std::vector<std::size_t>;

std::size_t shape_product(const Shape& s);
std::string shape_str(const Shape& s);

class Tensor;

namespace detail {

// One recorded node of the dynamic tape. Ops append nodes as they execute;
// `parents` keeps producers alive and fixes the topological order, and
// `backprop` holds the reverse rule with whatever activations it saved.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backprop;

  std::size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

Tensor wrap_node(std::shared_ptr<Node> n);

}  // namespace detail

// Dense 64-bit float tensor participating in a reverse-mode graph. A Tensor
// is a cheap handle; copies share the node. Values are immutable after
// creation except for the gradient buffer and the explicit `values_mut`
// escape hatch the optimizer uses between steps.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<double>& data() const { return node_->value; }
  // Mutable view of a leaf's payload. Only valid between graph evaluations;
  // mutating a tensor that a recorded graph still references is undefined.
  std::vector<double>& values_mut();

  double item() const;
  double at(std::size_t i) const { return node_->value[i]; }
  double at(std::size_t r, std::size_t c) const;

  // Gradient of the last backward() pass; nullptr when never populated.
  const std::vector<double>* grad() const;
  void zero_grad();

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor detail::wrap_node(std::shared_ptr<detail::Node> n);
};

namespace detail {
inline Tensor wrap_node(std::shared_ptr<Node> n) { return Tensor(std::move(n)); }
}  // namespace detail

// --- arithmetic ---------------------------------------------------------

// [m,k] x [k,n] -> [m,n]. Backward: a.grad += g b^T, b.grad += a^T g.
Tensor matmul(const Tensor& a, const Tensor& b);

// Binary elementwise ops accept equal shapes, or equal-rank shapes that
// differ only in the last axis where one operand has extent 1 (the
// broadcast operand's gradient is summed over that axis).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

// Row-vector forms for bias/gain application: x is [..., n], v is [n].
// Backward reduces the upstream gradient over all leading axes.
Tensor add_rowvec(const Tensor& x, const Tensor& v);
Tensor mul_rowvec(const Tensor& x, const Tensor& v);

// --- unary --------------------------------------------------------------

Tensor sigmoid(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor elu(const Tensor& x);  // alpha = 1
Tensor exp_op(const Tensor& x);
Tensor neg(const Tensor& x);
Tensor abs_op(const Tensor& x);
Tensor sqrt_op(const Tensor& x);

// Numerically stable (max-subtracted) softmax over the last axis.
Tensor softmax_lastaxis(const Tensor& x);

// --- reductions ---------------------------------------------------------

Tensor sum_all(const Tensor& x);       // -> shape {1}
Tensor mean_lastaxis(const Tensor& x); // keepdims: [..., n] -> [..., 1]

// --- structural ---------------------------------------------------------

Tensor concat_lastaxis(const std::vector<Tensor>& parts);
Tensor concat_timeaxis(const std::vector<Tensor>& parts);
Tensor reverse_timeaxis(const Tensor& x);
Tensor reverse_lastaxis(const Tensor& x);
Tensor transpose_last2(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor slice_timeaxis(const Tensor& x, std::size_t begin, std::size_t end);

// keep==1 passes x through, keep==0 substitutes `fill`. Gradient flows only
// through kept positions.
Tensor masked_fill(const Tensor& x, const Tensor& keep, double fill);

// --- backward -----------------------------------------------------------

// Reverse pass from a scalar loss. Leaf gradients accumulate across calls;
// interior gradients are reset per call. Throws UsageError on a non-scalar.
void backward(const Tensor& loss);

}  // namespace brati

#endif
