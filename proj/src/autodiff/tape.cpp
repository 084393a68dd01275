#include <algorithm>
#include <cmath>
#include <sstream>

#include "atbptt/autodiff.hpp"
#include "kernels.hpp"

namespace atbptt::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConstant: return "constant";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kScale: return "scale";
    case Op::kMulScalar: return "mul_scalar";
    case Op::kMatMul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kRelu: return "relu";
    case Op::kReluMask: return "relu_mask";
    case Op::kTanh: return "tanh";
    case Op::kSqrt: return "sqrt";
    case Op::kInvOrZero: return "inv_or_zero";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kBroadcastScalar: return "broadcast_scalar";
    case Op::kReduceRows: return "reduce_rows";
    case Op::kBroadcastRows: return "broadcast_rows";
    case Op::kReduceCols: return "reduce_cols";
    case Op::kBroadcastCols: return "broadcast_cols";
    case Op::kReshape: return "reshape";
    case Op::kSlice: return "slice";
    case Op::kPad: return "pad";
    case Op::kGather: return "gather";
    case Op::kScatterAdd: return "scatter_add";
    case Op::kSoftmax: return "softmax";
    case Op::kLogSoftmax: return "log_softmax";
    case Op::kSoftmaxCrossEntropy: return "softmax_cross_entropy";
    case Op::kL2Norm: return "l2_norm";
  }
  return "?";
}

// --- Tensor -----------------------------------------------------------------

Shape Tensor::shape() const { return tape_->node(id_).shape; }
std::size_t Tensor::size() const { return tape_->node(id_).value.size(); }
std::span<const double> Tensor::values() const { return tape_->node(id_).value; }
double Tensor::item() const {
  const auto& v = tape_->node(id_).value;
  if (v.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return v[0];
}
std::vector<double> Tensor::to_vector() const {
  auto v = values();
  return {v.begin(), v.end()};
}

// --- Tape -------------------------------------------------------------------

namespace {

Tensor push_input(Tape& tape, Op op, Shape shape, std::vector<double> values) {
  if (numel(shape) != values.size()) {
    throw ShapeError("tensor of shape " + to_string(shape) + " given " +
                     std::to_string(values.size()) + " values");
  }
  Node n;
  n.op = op;
  n.shape = std::move(shape);
  n.value = std::move(values);
  return tape.push(std::move(n));
}

}  // namespace

Tensor Tape::leaf(Shape shape, std::vector<double> values) {
  return push_input(*this, Op::kLeaf, std::move(shape), std::move(values));
}

Tensor Tape::constant(Shape shape, std::vector<double> values) {
  return push_input(*this, Op::kConstant, std::move(shape), std::move(values));
}

Tensor Tape::filled(Shape shape, double value) {
  auto n = numel(shape);
  return constant(std::move(shape), std::vector<double>(n, value));
}

Tensor Tape::push(Node node) {
  if (node.op != Op::kLeaf && node.op != Op::kConstant) {
    node.value = detail::evaluate(*this, node);
  }
  for (double x : node.value) {
    if (!std::isfinite(x)) {
      throw NonFiniteError(std::string("non-finite value produced by ") + op_name(node.op));
    }
  }
  nodes_.push_back(std::move(node));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

bool Tape::verify_replay() const {
  for (const auto& n : nodes_) {
    if (n.op == Op::kLeaf || n.op == Op::kConstant) continue;
    if (detail::evaluate(*this, n) != n.value) return false;
  }
  return true;
}

bool ParamVector::layout_consistent() const {
  std::size_t next = 0;
  for (const auto& e : layout) {
    if (e.offset != next) return false;
    next += numel(e.shape);
  }
  return next == flat.size();
}

}  // namespace atbptt::ad
