#pragma once

// Reverse-mode automatic differentiation over dense float64 tensors.
//
// A Graph is an append-only tape. Tensors created through Graph::variable are
// differentiable leaves; every primitive applied to a tensor that carries a
// node is recorded on that tensor's graph, so insertion order is a valid
// topological order. Backward rules are themselves written in terms of the
// primitives, which is what makes gradient-of-gradient work: with
// create_graph, the backward pass records its own nodes and the returned
// gradients can be differentiated again.
//
// Tensors without a node are plain immutable values and can be shared freely
// across threads. A graph must stay on the thread that built it.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace eqm::ad {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct GraphImpl;
}

enum class OpKind : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kScalarMul,
  kMatmul,
  kUnary,
  kSum,
  kMean,
  kSquare,
  kDot,
  kConcat,
  kSlice,
  kPad,
  kBroadcast,
  kSumTo,
  kSumLast,
  kExpandLast,
};

/// Elementwise functions with closed-form derivatives of every order we need.
enum class UnaryFn : std::uint8_t { kRelu, kSilu, kTanh, kSqrt };

const char* op_name(OpKind kind);

class Tensor {
 public:
  /// A scalar zero.
  Tensor();
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  /// 1-D tensor from values.
  static Tensor vector(std::vector<double> values);
  /// 2-D tensor from rows of equal length.
  static Tensor matrix(const std::vector<std::vector<double>>& rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const { return data_->size(); }
  std::span<const double> values() const { return *data_; }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  /// Element (row, col) of a rank-2 tensor.
  double at(std::size_t row, std::size_t col) const { return (*data_)[row * shape_.back() + col]; }
  /// The only element of a one-element tensor.
  double item() const;

  /// True when this tensor is a node of a live graph.
  bool has_node() const { return graph_ != nullptr; }
  /// Node index within its graph, absent for constants.
  std::optional<std::size_t> node_id() const;
  bool requires_grad() const;
  /// Same values, no graph link.
  Tensor detach() const;

  /// Bitwise equality of shape and values.
  bool identical(const Tensor& other) const;

 private:
  friend struct detail::GraphImpl;
  friend class Graph;
  friend class Access;

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  std::shared_ptr<detail::GraphImpl> graph_;
  std::size_t node_ = 0;
};

/// Owning handle to a computation tape. Build one per training step.
class Graph {
 public:
  Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) noexcept = default;
  Graph& operator=(Graph&&) noexcept = default;
  ~Graph();

  /// Registers value as a differentiable leaf.
  Tensor variable(const Tensor& value);

  std::size_t size() const;
  /// Process-unique identifier of this tape.
  std::uint64_t generation() const;

 private:
  std::shared_ptr<detail::GraphImpl> impl_;
};

/// Gradients of a scalar with respect to graph leaves, keyed by node id.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<std::pair<std::size_t, Tensor>> entries)
      : entries_(std::move(entries)) {}

  /// Gradient for a leaf variable. Throws if the tensor is not a leaf of the graph.
  const Tensor& operator[](const Tensor& variable) const;
  const Tensor& at(std::size_t node_id) const;
  bool contains(std::size_t node_id) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<std::pair<std::size_t, Tensor>> entries_;
};

/// d scalar / d v for every leaf variable v on the scalar's graph that precedes
/// it; leaves the scalar does not depend on get zero tensors.
Gradients backward(const Tensor& scalar);

/// Gradient of scalar with respect to wrt, returned as a live graph node so it
/// can itself be differentiated.
Tensor input_gradient(const Tensor& scalar, const Tensor& wrt);

/// General form: gradients of scalar with respect to each of wrt.
std::vector<Tensor> grad(const Tensor& scalar, std::span<const Tensor> wrt, bool create_graph);

// Primitives. Shape rules:
//   add/sub/mul/square: identical shapes
//   matmul: rank-2 operands with matching inner dimension after optional transposes
//   dot: two rank-1 tensors of equal length -> scalar
//   sum/mean: any shape -> scalar
//   concat/slice: along the last axis; leading dimensions must agree
//   broadcast: source shape must be a suffix of the target (leading-dimension expansion only)
//   sum_to: inverse of broadcast
//   sum_last: drops the last axis by summation; expand_last repeats along a new last axis
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double s);
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
Tensor unary(UnaryFn fn, const Tensor& a, int order = 0);
Tensor relu(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor square(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);
Tensor concat(const Tensor& a, const Tensor& b);
Tensor slice(const Tensor& a, std::size_t offset, std::size_t length);
Tensor pad(const Tensor& a, std::size_t offset, std::size_t total);
Tensor broadcast(const Tensor& a, const Shape& target);
Tensor sum_to(const Tensor& a, const Shape& target);
Tensor sum_last(const Tensor& a);
Tensor expand_last(const Tensor& a, std::size_t size);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scalar_mul(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scalar_mul(a, s); }
inline Tensor operator-(const Tensor& a) { return scalar_mul(a, -1.0); }

/// Scalar function value of fn's order-th derivative; exposed for tests.
double unary_value(UnaryFn fn, int order, double x);

}  // namespace eqm::ad
