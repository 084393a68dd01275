#include <numeric>

#include "atbptt/autodiff.hpp"

namespace atbptt::ad {

namespace {

void require_same_tape(const Tensor& a, const Tensor& b, const char* op) {
  if (&a.tape() != &b.tape()) throw Error(std::string(op) + ": operands live on different tapes");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_same_tape(a, b, op);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(a.shape()));
  }
}

void require_scalar(const Tensor& s, const char* op) {
  if (s.size() != 1) throw ShapeError(std::string(op) + ": expected a scalar, got " + to_string(s.shape()));
}

Tensor make(Op op, const Tensor& a, Shape shape) {
  Node n;
  n.op = op;
  n.a = a.id();
  n.shape = std::move(shape);
  return a.tape().push(std::move(n));
}

Tensor make(Op op, const Tensor& a, const Tensor& b, Shape shape) {
  Node n;
  n.op = op;
  n.a = a.id();
  n.b = b.id();
  n.shape = std::move(shape);
  return a.tape().push(std::move(n));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return make(Op::kAdd, a, b, a.shape());
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return make(Op::kSub, a, b, a.shape());
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  return make(Op::kMul, a, b, a.shape());
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  return make(Op::kDiv, a, b, a.shape());
}

Tensor scale(const Tensor& a, double factor) {
  Node n;
  n.op = Op::kScale;
  n.a = a.id();
  n.shape = a.shape();
  n.scalar = factor;
  return a.tape().push(std::move(n));
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  require_same_tape(a, s, "mul_scalar");
  require_scalar(s, "mul_scalar");
  return make(Op::kMulScalar, a, s, a.shape());
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b, "matmul");
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: inner dimensions differ " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  return make(Op::kMatMul, a, b, {a.shape()[0], b.shape()[1]});
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  return make(Op::kTranspose, a, {a.shape()[1], a.shape()[0]});
}

Tensor relu(const Tensor& a) { return make(Op::kRelu, a, a.shape()); }
Tensor relu_mask(const Tensor& a) { return make(Op::kReluMask, a, a.shape()); }
Tensor tanh(const Tensor& a) { return make(Op::kTanh, a, a.shape()); }
Tensor sqrt(const Tensor& a) { return make(Op::kSqrt, a, a.shape()); }
Tensor inv_or_zero(const Tensor& a) { return make(Op::kInvOrZero, a, a.shape()); }
Tensor sum(const Tensor& a) { return make(Op::kSum, a, {}); }

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean of an empty tensor");
  return make(Op::kMean, a, {});
}

Tensor broadcast_scalar(const Tensor& s, const Shape& shape) {
  require_scalar(s, "broadcast_scalar");
  return make(Op::kBroadcastScalar, s, shape);
}

Tensor reduce_rows(const Tensor& a) {
  require_rank(a, 2, "reduce_rows");
  return make(Op::kReduceRows, a, {a.shape()[1]});
}

Tensor broadcast_rows(const Tensor& v, std::size_t rows) {
  require_rank(v, 1, "broadcast_rows");
  return make(Op::kBroadcastRows, v, {rows, v.shape()[0]});
}

Tensor reduce_cols(const Tensor& a) {
  require_rank(a, 2, "reduce_cols");
  return make(Op::kReduceCols, a, {a.shape()[0]});
}

Tensor broadcast_cols(const Tensor& v, std::size_t cols) {
  require_rank(v, 1, "broadcast_cols");
  return make(Op::kBroadcastCols, v, {v.shape()[0], cols});
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape: " + to_string(a.shape()) + " -> " + to_string(shape));
  }
  return make(Op::kReshape, a, shape);
}

Tensor slice(const Tensor& a, std::size_t offset, const Shape& shape) {
  if (offset + numel(shape) > a.size()) {
    throw ShapeError("slice: range [" + std::to_string(offset) + ", " +
                     std::to_string(offset + numel(shape)) + ") exceeds " + to_string(a.shape()));
  }
  Node n;
  n.op = Op::kSlice;
  n.a = a.id();
  n.shape = shape;
  n.offset = offset;
  return a.tape().push(std::move(n));
}

Tensor pad(const Tensor& a, std::size_t offset, const Shape& shape) {
  if (offset + a.size() > numel(shape)) {
    throw ShapeError("pad: " + to_string(a.shape()) + " at offset " + std::to_string(offset) +
                     " does not fit " + to_string(shape));
  }
  Node n;
  n.op = Op::kPad;
  n.a = a.id();
  n.shape = shape;
  n.offset = offset;
  return a.tape().push(std::move(n));
}

Tensor gather(const Tensor& a, std::shared_ptr<const std::vector<std::int64_t>> index,
              const Shape& shape) {
  if (index->size() != numel(shape)) throw ShapeError("gather: index length does not match shape");
  for (auto i : *index) {
    if (i >= static_cast<std::int64_t>(a.size())) throw ShapeError("gather: index out of range");
  }
  Node n;
  n.op = Op::kGather;
  n.a = a.id();
  n.shape = shape;
  n.index = std::move(index);
  return a.tape().push(std::move(n));
}

Tensor scatter_add(const Tensor& a, std::shared_ptr<const std::vector<std::int64_t>> index,
                   const Shape& shape) {
  if (index->size() != a.size()) throw ShapeError("scatter_add: index length does not match input");
  for (auto i : *index) {
    if (i >= static_cast<std::int64_t>(numel(shape))) throw ShapeError("scatter_add: index out of range");
  }
  Node n;
  n.op = Op::kScatterAdd;
  n.a = a.id();
  n.shape = shape;
  n.index = std::move(index);
  return a.tape().push(std::move(n));
}

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 2, "softmax");
  return make(Op::kSoftmax, logits, logits.shape());
}

Tensor log_softmax(const Tensor& logits) {
  require_rank(logits, 2, "log_softmax");
  return make(Op::kLogSoftmax, logits, logits.shape());
}

Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  require_same_shape(logits, labels, "softmax_cross_entropy");
  if (logits.shape()[0] == 0) throw ShapeError("softmax_cross_entropy: empty batch");
  return make(Op::kSoftmaxCrossEntropy, logits, labels, {});
}

Tensor l2_norm(const Tensor& a) { return make(Op::kL2Norm, a, {}); }

Tensor dot(const Tensor& a, const Tensor& b) { return sum(mul(a, b)); }

Tensor take_rows(const Tensor& a, std::span<const std::size_t> rows) {
  require_rank(a, 2, "take_rows");
  const std::size_t cols = a.shape()[1];
  auto index = std::make_shared<std::vector<std::int64_t>>();
  index->reserve(rows.size() * cols);
  for (auto r : rows) {
    if (r >= a.shape()[0]) throw ShapeError("take_rows: row out of range");
    for (std::size_t c = 0; c < cols; ++c) index->push_back(static_cast<std::int64_t>(r * cols + c));
  }
  return gather(a, std::move(index), {rows.size(), cols});
}

}  // namespace atbptt::ad
