#include "eqm/tensor.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>

#include "eqm/error.hpp"
#include "eqm/kernels.hpp"

namespace eqm::ad {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScalarMul: return "scalar_mul";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kUnary: return "unary";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kSquare: return "square";
    case OpKind::kDot: return "dot";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kPad: return "pad";
    case OpKind::kBroadcast: return "broadcast";
    case OpKind::kSumTo: return "sum_to";
    case OpKind::kSumLast: return "sum_last";
    case OpKind::kExpandLast: return "expand_last";
  }
  return "?";
}

namespace detail {

struct Value {
  Shape shape;
  std::shared_ptr<const std::vector<double>> data;
};

struct Node {
  OpKind kind = OpKind::kLeaf;
  std::array<std::ptrdiff_t, 2> inputs{-1, -1};
  std::array<Value, 2> saved;
  Shape shape;
  // Per-kind attributes.
  double scalar = 0.0;
  UnaryFn fn = UnaryFn::kRelu;
  int order = 0;
  bool trans_a = false;
  bool trans_b = false;
  std::size_t offset = 0;
  std::size_t extent = 0;
};

std::atomic<std::uint64_t> g_next_generation{1};

struct GraphImpl {
  std::vector<Node> nodes;
  std::uint64_t generation = g_next_generation.fetch_add(1);
};

}  // namespace detail

namespace {

thread_local bool t_recording = true;

class RecordGuard {
 public:
  explicit RecordGuard(bool enabled) : previous_(t_recording) { t_recording = enabled; }
  ~RecordGuard() { t_recording = previous_; }
  RecordGuard(const RecordGuard&) = delete;
  RecordGuard& operator=(const RecordGuard&) = delete;

 private:
  bool previous_;
};

struct Attrs {
  double scalar = 0.0;
  UnaryFn fn = UnaryFn::kRelu;
  int order = 0;
  bool trans_a = false;
  bool trans_b = false;
  std::size_t offset = 0;
  std::size_t extent = 0;
};

}  // namespace

// Grants the op implementations access to Tensor internals.
class Access {
 public:
  static Tensor make(OpKind kind, std::initializer_list<const Tensor*> inputs, Shape shape,
                     std::vector<double> values, const Attrs& attrs = {}) {
    for (double v : values) {
      if (!std::isfinite(v)) {
        throw NumericalError(std::string("non-finite value produced by op '") + op_name(kind) +
                             "' with output shape " + shape_to_string(shape));
      }
    }
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = std::make_shared<const std::vector<double>>(std::move(values));
    if (!t_recording) return out;

    std::shared_ptr<detail::GraphImpl> graph;
    for (const Tensor* t : inputs) {
      if (!t->graph_) continue;
      if (graph && graph != t->graph_) {
        throw ValidationError(std::string("op '") + op_name(kind) +
                              "' mixes tensors from different graphs");
      }
      graph = t->graph_;
    }
    if (!graph) return out;

    detail::Node node;
    node.kind = kind;
    node.shape = out.shape_;
    std::size_t slot = 0;
    for (const Tensor* t : inputs) {
      node.inputs[slot] = t->graph_ ? static_cast<std::ptrdiff_t>(t->node_) : -1;
      node.saved[slot] = detail::Value{t->shape_, t->data_};
      ++slot;
    }
    node.scalar = attrs.scalar;
    node.fn = attrs.fn;
    node.order = attrs.order;
    node.trans_a = attrs.trans_a;
    node.trans_b = attrs.trans_b;
    node.offset = attrs.offset;
    node.extent = attrs.extent;
    graph->nodes.push_back(std::move(node));
    out.graph_ = graph;
    out.node_ = graph->nodes.size() - 1;
    return out;
  }

  static Tensor saved_input(const std::shared_ptr<detail::GraphImpl>& graph,
                            const detail::Node& node, std::size_t slot) {
    Tensor t;
    t.shape_ = node.saved[slot].shape;
    t.data_ = node.saved[slot].data;
    if (node.inputs[slot] >= 0) {
      t.graph_ = graph;
      t.node_ = static_cast<std::size_t>(node.inputs[slot]);
    }
    return t;
  }

  // Handle to an existing node; carries the node's shape with zero values.
  static Tensor handle(const std::shared_ptr<detail::GraphImpl>& graph, std::size_t index) {
    Tensor t = Tensor::zeros(graph->nodes[index].shape);
    t.graph_ = graph;
    t.node_ = index;
    return t;
  }

  static const std::shared_ptr<detail::GraphImpl>& graph(const Tensor& t) { return t.graph_; }
  static std::size_t node(const Tensor& t) { return t.node_; }

  static Tensor leaf(const std::shared_ptr<detail::GraphImpl>& graph, const Tensor& value) {
    detail::Node node;
    node.kind = OpKind::kLeaf;
    node.shape = value.shape_;
    graph->nodes.push_back(std::move(node));
    Tensor out;
    out.shape_ = value.shape_;
    out.data_ = value.data_;
    out.graph_ = graph;
    out.node_ = graph->nodes.size() - 1;
    return out;
  }
};

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : data_(std::make_shared<const std::vector<double>>(1, 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  if (shape_numel(shape_) != values.size()) {
    throw ShapeError("tensor shape " + shape_to_string(shape_) + " needs " +
                     std::to_string(shape_numel(shape_)) + " values, got " +
                     std::to_string(values.size()));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericalError("non-finite value in tensor construction");
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(const std::vector<std::vector<double>>& rows) {
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  std::vector<double> flat;
  flat.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("ragged rows in Tensor::matrix");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(flat));
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_to_string(shape_));
  }
  return (*data_)[0];
}

std::optional<std::size_t> Tensor::node_id() const {
  if (!graph_) return std::nullopt;
  return node_;
}

bool Tensor::requires_grad() const { return graph_ != nullptr; }

Tensor Tensor::detach() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  return t;
}

bool Tensor::identical(const Tensor& other) const {
  if (shape_ != other.shape_) return false;
  return std::equal(data_->begin(), data_->end(), other.data_->begin(), other.data_->end(),
                    [](double x, double y) {
                      return std::memcmp(&x, &y, sizeof(double)) == 0;
                    });
}

// ---------------------------------------------------------------------------
// Graph

Graph::Graph() : impl_(std::make_shared<detail::GraphImpl>()) {}
Graph::~Graph() = default;

Tensor Graph::variable(const Tensor& value) { return Access::leaf(impl_, value); }

std::size_t Graph::size() const { return impl_->nodes.size(); }

std::uint64_t Graph::generation() const { return impl_->generation; }

// ---------------------------------------------------------------------------
// Gradients

bool Gradients::contains(std::size_t node_id) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == node_id; });
}

const Tensor& Gradients::at(std::size_t node_id) const {
  for (const auto& [id, g] : entries_) {
    if (id == node_id) return g;
  }
  throw ValidationError("no gradient recorded for node " + std::to_string(node_id));
}

const Tensor& Gradients::operator[](const Tensor& variable) const {
  const auto id = variable.node_id();
  if (!id) throw ValidationError("gradient requested for a tensor without a graph node");
  return at(*id);
}

// ---------------------------------------------------------------------------
// Primitives

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                     " vs " + shape_to_string(b.shape()));
  }
}

std::vector<double> buffer(std::size_t n) { return std::vector<double>(n); }

double sigmoid_derivative(int order, double s) {
  const double s1 = s * (1.0 - s);
  switch (order) {
    case 0: return s;
    case 1: return s1;
    case 2: return s1 * (1.0 - 2.0 * s);
    case 3: return s1 * (1.0 - 6.0 * s + 6.0 * s * s);
    case 4: return s1 * (1.0 - 14.0 * s + 36.0 * s * s - 24.0 * s * s * s);
    default: break;
  }
  throw ValidationError("sigmoid derivative of order " + std::to_string(order) +
                        " is not supported");
}

constexpr int kMaxUnaryOrder = 4;

}  // namespace

double unary_value(UnaryFn fn, int order, double x) {
  if (order < 0 || order > kMaxUnaryOrder) {
    throw ValidationError("unary derivative of order " + std::to_string(order) +
                          " is not supported");
  }
  switch (fn) {
    case UnaryFn::kRelu:
      if (order == 0) return x > 0.0 ? x : 0.0;
      if (order == 1) return x > 0.0 ? 1.0 : 0.0;
      return 0.0;
    case UnaryFn::kSilu: {
      const double s = 1.0 / (1.0 + std::exp(-x));
      if (order == 0) return x * s;
      return order * sigmoid_derivative(order - 1, s) + x * sigmoid_derivative(order, s);
    }
    case UnaryFn::kTanh: {
      const double t = std::tanh(x);
      const double u = 1.0 - t * t;
      switch (order) {
        case 0: return t;
        case 1: return u;
        case 2: return -2.0 * t * u;
        case 3: return -2.0 * u * (1.0 - 3.0 * t * t);
        default: return (16.0 * t - 24.0 * t * t * t) * u;
      }
    }
    case UnaryFn::kSqrt: {
      double coeff = 1.0;
      for (int i = 0; i < order; ++i) coeff *= 0.5 - i;
      return order == 0 ? std::sqrt(x) : coeff * std::pow(x, 0.5 - order);
    }
  }
  return 0.0;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  auto out = buffer(a.numel());
  kernels::add(a.values(), b.values(), out);
  return Access::make(OpKind::kAdd, {&a, &b}, a.shape(), std::move(out));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  auto out = buffer(a.numel());
  kernels::sub(a.values(), b.values(), out);
  return Access::make(OpKind::kSub, {&a, &b}, a.shape(), std::move(out));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  auto out = buffer(a.numel());
  kernels::mul(a.values(), b.values(), out);
  return Access::make(OpKind::kMul, {&a, &b}, a.shape(), std::move(out));
}

Tensor scalar_mul(const Tensor& a, double s) {
  if (!std::isfinite(s)) throw NumericalError("scalar_mul by non-finite factor");
  auto out = buffer(a.numel());
  kernels::scale(a.values(), s, out);
  Attrs attrs;
  attrs.scalar = s;
  return Access::make(OpKind::kScalarMul, {&a}, a.shape(), std::move(out), attrs);
}

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul: operands must be rank 2, got " + shape_to_string(a.shape()) +
                     " and " + shape_to_string(b.shape()));
  }
  const std::size_t m = trans_a ? a.dim(1) : a.dim(0);
  const std::size_t k = trans_a ? a.dim(0) : a.dim(1);
  const std::size_t kb = trans_b ? b.dim(1) : b.dim(0);
  const std::size_t n = trans_b ? b.dim(0) : b.dim(1);
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions differ for " + shape_to_string(a.shape()) +
                     (trans_a ? "^T" : "") + " x " + shape_to_string(b.shape()) +
                     (trans_b ? "^T" : ""));
  }
  auto out = buffer(m * n);
  kernels::matmul(a.values(), b.values(), out, m, k, n, trans_a, trans_b);
  Attrs attrs;
  attrs.trans_a = trans_a;
  attrs.trans_b = trans_b;
  return Access::make(OpKind::kMatmul, {&a, &b}, {m, n}, std::move(out), attrs);
}

Tensor unary(UnaryFn fn, const Tensor& a, int order) {
  auto out = buffer(a.numel());
  const auto in = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = unary_value(fn, order, in[i]);
  Attrs attrs;
  attrs.fn = fn;
  attrs.order = order;
  return Access::make(OpKind::kUnary, {&a}, a.shape(), std::move(out), attrs);
}

Tensor relu(const Tensor& a) { return unary(UnaryFn::kRelu, a); }
Tensor silu(const Tensor& a) { return unary(UnaryFn::kSilu, a); }
Tensor tanh(const Tensor& a) { return unary(UnaryFn::kTanh, a); }
Tensor sqrt(const Tensor& a) { return unary(UnaryFn::kSqrt, a); }

Tensor sum(const Tensor& a) {
  return Access::make(OpKind::kSum, {&a}, {}, {kernels::sum(a.values())});
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean of empty tensor");
  const double m = kernels::sum(a.values()) / static_cast<double>(a.numel());
  return Access::make(OpKind::kMean, {&a}, {}, {m});
}

Tensor square(const Tensor& a) {
  auto out = buffer(a.numel());
  kernels::mul(a.values(), a.values(), out);
  return Access::make(OpKind::kSquare, {&a}, a.shape(), std::move(out));
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1 || a.dim(0) != b.dim(0)) {
    throw ShapeError("dot: expects two rank-1 tensors of equal length, got " +
                     shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return Access::make(OpKind::kDot, {&a, &b}, {}, {s});
}

Tensor concat(const Tensor& a, const Tensor& b) {
  const bool leading_match =
      a.rank() >= 1 && a.rank() == b.rank() &&
      std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin());
  if (!leading_match) {
    throw ShapeError("concat: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()));
  }
  const std::size_t pa = a.shape().back();
  const std::size_t pb = b.shape().back();
  const std::size_t rows = a.numel() / std::max<std::size_t>(pa, 1);
  Shape shape = a.shape();
  shape.back() = pa + pb;
  auto out = buffer(rows * (pa + pb));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.values().data() + r * pa, pa, out.data() + r * (pa + pb));
    std::copy_n(b.values().data() + r * pb, pb, out.data() + r * (pa + pb) + pa);
  }
  return Access::make(OpKind::kConcat, {&a, &b}, std::move(shape), std::move(out));
}

Tensor slice(const Tensor& a, std::size_t offset, std::size_t length) {
  if (a.rank() < 1 || offset + length > a.shape().back()) {
    throw ShapeError("slice: range [" + std::to_string(offset) + ", " +
                     std::to_string(offset + length) + ") out of bounds for shape " +
                     shape_to_string(a.shape()));
  }
  const std::size_t cols = a.shape().back();
  const std::size_t rows = cols == 0 ? 0 : a.numel() / cols;
  Shape shape = a.shape();
  shape.back() = length;
  auto out = buffer(rows * length);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(a.values().data() + r * cols + offset, length, out.data() + r * length);
  Attrs attrs;
  attrs.offset = offset;
  attrs.extent = cols;
  return Access::make(OpKind::kSlice, {&a}, std::move(shape), std::move(out), attrs);
}

Tensor pad(const Tensor& a, std::size_t offset, std::size_t total) {
  if (a.rank() < 1 || offset + a.shape().back() > total) {
    throw ShapeError("pad: shape " + shape_to_string(a.shape()) + " at offset " +
                     std::to_string(offset) + " exceeds width " + std::to_string(total));
  }
  const std::size_t cols = a.shape().back();
  const std::size_t rows = cols == 0 ? 0 : a.numel() / cols;
  Shape shape = a.shape();
  shape.back() = total;
  auto out = std::vector<double>(rows * total, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(a.values().data() + r * cols, cols, out.data() + r * total + offset);
  Attrs attrs;
  attrs.offset = offset;
  attrs.extent = total;
  return Access::make(OpKind::kPad, {&a}, std::move(shape), std::move(out), attrs);
}

namespace {

bool is_suffix(const Shape& suffix, const Shape& full) {
  return suffix.size() <= full.size() &&
         std::equal(suffix.begin(), suffix.end(), full.end() - static_cast<long>(suffix.size()));
}

}  // namespace

Tensor broadcast(const Tensor& a, const Shape& target) {
  if (!is_suffix(a.shape(), target)) {
    throw ShapeError("broadcast: " + shape_to_string(a.shape()) +
                     " is not a trailing sub-shape of " + shape_to_string(target));
  }
  const std::size_t inner = a.numel();
  const std::size_t outer = shape_numel(target) / std::max<std::size_t>(inner, 1);
  auto out = buffer(shape_numel(target));
  for (std::size_t r = 0; r < outer; ++r)
    std::copy_n(a.values().data(), inner, out.data() + r * inner);
  return Access::make(OpKind::kBroadcast, {&a}, target, std::move(out));
}

Tensor sum_to(const Tensor& a, const Shape& target) {
  if (!is_suffix(target, a.shape())) {
    throw ShapeError("sum_to: " + shape_to_string(target) +
                     " is not a trailing sub-shape of " + shape_to_string(a.shape()));
  }
  const std::size_t inner = shape_numel(target);
  const std::size_t outer = inner == 0 ? 0 : a.numel() / inner;
  auto out = buffer(inner);
  if (inner == 1) {
    out[0] = kernels::sum(a.values());
  } else {
    kernels::sum_rows(a.values(), outer, inner, out);
  }
  return Access::make(OpKind::kSumTo, {&a}, target, std::move(out));
}

Tensor sum_last(const Tensor& a) {
  if (a.rank() < 1) throw ShapeError("sum_last: scalar input");
  const std::size_t cols = a.shape().back();
  const std::size_t rows = cols == 0 ? 0 : a.numel() / cols;
  Shape shape(a.shape().begin(), a.shape().end() - 1);
  auto out = buffer(rows);
  kernels::sum_cols(a.values(), rows, cols, out);
  return Access::make(OpKind::kSumLast, {&a}, std::move(shape), std::move(out));
}

Tensor expand_last(const Tensor& a, std::size_t size) {
  Shape shape = a.shape();
  shape.push_back(size);
  auto out = buffer(a.numel() * size);
  for (std::size_t i = 0; i < a.numel(); ++i)
    std::fill_n(out.data() + i * size, size, a[i]);
  Attrs attrs;
  attrs.extent = size;
  return Access::make(OpKind::kExpandLast, {&a}, std::move(shape), std::move(out), attrs);
}

// ---------------------------------------------------------------------------
// Backward

namespace {

// Gradients of a node's inputs given the gradient of its output. Written in
// terms of primitives so that, while recording, the result is differentiable.
std::array<std::optional<Tensor>, 2> backward_rule(const detail::Node& node, const Tensor& g,
                                                   const Tensor& a, const Tensor& b) {
  switch (node.kind) {
    case OpKind::kLeaf: return {};
    case OpKind::kAdd: return {g, g};
    case OpKind::kSub: return {g, -g};
    case OpKind::kMul: return {mul(g, b), mul(g, a)};
    case OpKind::kScalarMul: return {scalar_mul(g, node.scalar), std::nullopt};
    case OpKind::kMatmul:
      if (!node.trans_a && !node.trans_b) {
        return {matmul(g, b, false, true), matmul(a, g, true, false)};
      }
      if (node.trans_a && !node.trans_b) {
        return {matmul(b, g, false, true), matmul(a, g, false, false)};
      }
      if (!node.trans_a && node.trans_b) {
        return {matmul(g, b, false, false), matmul(g, a, true, false)};
      }
      return {matmul(b, g, true, true), matmul(g, a, true, true)};
    case OpKind::kUnary: return {mul(g, unary(node.fn, a, node.order + 1)), std::nullopt};
    case OpKind::kSum: return {broadcast(g, a.shape()), std::nullopt};
    case OpKind::kMean:
      return {scalar_mul(broadcast(g, a.shape()), 1.0 / static_cast<double>(a.numel())),
              std::nullopt};
    case OpKind::kSquare: return {mul(g, scalar_mul(a, 2.0)), std::nullopt};
    case OpKind::kDot:
      return {mul(broadcast(g, a.shape()), b), mul(broadcast(g, b.shape()), a)};
    case OpKind::kConcat: {
      const std::size_t pa = a.shape().back();
      const std::size_t pb = b.shape().back();
      return {slice(g, 0, pa), slice(g, pa, pb)};
    }
    case OpKind::kSlice: return {pad(g, node.offset, node.extent), std::nullopt};
    case OpKind::kPad: return {slice(g, node.offset, a.shape().back()), std::nullopt};
    case OpKind::kBroadcast: return {sum_to(g, a.shape()), std::nullopt};
    case OpKind::kSumTo: return {broadcast(g, a.shape()), std::nullopt};
    case OpKind::kSumLast: return {expand_last(g, a.shape().back()), std::nullopt};
    case OpKind::kExpandLast: return {sum_last(g), std::nullopt};
  }
  return {};
}

}  // namespace

std::vector<Tensor> grad_impl(const Tensor& scalar, std::span<const Tensor> wrt,
                              bool create_graph, bool require_ancestor) {
  if (scalar.numel() != 1) {
    throw ValidationError("backward requires a single-element tensor, got shape " +
                          shape_to_string(scalar.shape()));
  }
  if (!scalar.has_node()) {
    throw ValidationError("backward called on a tensor that is not part of a graph");
  }
  const auto& graph = Access::graph(scalar);
  const std::size_t root = Access::node(scalar);
  const std::size_t count = root + 1;

  // Nodes the root depends on.
  std::vector<char> needed(count, 0);
  needed[root] = 1;
  for (std::size_t i = count; i-- > 0;) {
    if (!needed[i]) continue;
    for (auto in : graph->nodes[i].inputs)
      if (in >= 0) needed[static_cast<std::size_t>(in)] = 1;
  }

  std::vector<char> relevant(count, 0);
  std::vector<char> target(count, 0);
  std::size_t first = count;
  for (const Tensor& w : wrt) {
    if (!w.has_node() || Access::graph(w) != graph) {
      throw ValidationError("gradient target is not a node of the scalar's graph");
    }
    const std::size_t id = Access::node(w);
    if (id >= count || (require_ancestor && !needed[id])) {
      throw ValidationError("gradient target (node " + std::to_string(id) +
                            ") is not an ancestor of the scalar");
    }
    relevant[id] = 1;
    target[id] = 1;
    first = std::min(first, id);
  }
  for (std::size_t i = first; i < count; ++i) {
    for (auto in : graph->nodes[i].inputs)
      if (in >= 0 && relevant[static_cast<std::size_t>(in)]) relevant[i] = 1;
  }

  std::vector<std::optional<Tensor>> grads(count);
  grads[root] = Tensor::full(scalar.shape(), 1.0);
  {
    RecordGuard guard(create_graph);
    for (std::size_t i = count; i-- > first;) {
      if (!needed[i] || !relevant[i] || !grads[i]) continue;
      const detail::Node node = graph->nodes[i];
      if (node.kind == OpKind::kLeaf) continue;
      const bool feeds_target = std::any_of(node.inputs.begin(), node.inputs.end(), [&](auto in) {
        return in >= 0 && relevant[static_cast<std::size_t>(in)];
      });
      if (!feeds_target) continue;
      const Tensor a = Access::saved_input(graph, node, 0);
      const Tensor b = node.saved[1].data ? Access::saved_input(graph, node, 1) : Tensor();
      auto input_grads = backward_rule(node, *grads[i], a, b);
      for (std::size_t slot = 0; slot < 2; ++slot) {
        const auto in = node.inputs[slot];
        if (in < 0 || !input_grads[slot]) continue;
        const auto idx = static_cast<std::size_t>(in);
        if (!relevant[idx]) continue;
        grads[idx] = grads[idx] ? add(*grads[idx], *input_grads[slot]) : *input_grads[slot];
      }
      if (i != root && !target[i]) grads[i].reset();
    }
  }

  std::vector<Tensor> result;
  result.reserve(wrt.size());
  for (const Tensor& w : wrt) {
    const auto& g = grads[Access::node(w)];
    result.push_back(g ? *g : Tensor::zeros(w.shape()));
  }
  return result;
}

std::vector<Tensor> grad(const Tensor& scalar, std::span<const Tensor> wrt, bool create_graph) {
  return grad_impl(scalar, wrt, create_graph, true);
}

Gradients backward(const Tensor& scalar) {
  if (scalar.numel() != 1) {
    throw ValidationError("backward requires a single-element tensor, got shape " +
                          shape_to_string(scalar.shape()));
  }
  if (!scalar.has_node()) {
    throw ValidationError("backward called on a tensor that is not part of a graph");
  }
  const auto& graph = Access::graph(scalar);
  const std::size_t root = Access::node(scalar);
  std::vector<Tensor> leaves;
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i <= root; ++i) {
    if (graph->nodes[i].kind != OpKind::kLeaf) continue;
    leaves.push_back(Access::handle(graph, i));
    ids.push_back(i);
  }
  auto gs = grad_impl(scalar, leaves, false, false);
  std::vector<std::pair<std::size_t, Tensor>> entries;
  entries.reserve(ids.size());
  for (std::size_t k = 0; k < ids.size(); ++k) entries.emplace_back(ids[k], std::move(gs[k]));
  return Gradients(std::move(entries));
}

Tensor input_gradient(const Tensor& scalar, const Tensor& wrt) {
  return grad(scalar, std::span<const Tensor>(&wrt, 1), true).front();
}

}  // namespace eqm::ad
