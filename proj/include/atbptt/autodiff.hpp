#pragma once

// Reverse-mode automatic differentiation over dense float64 tensors.
//
// Every primitive appends a node to a Tape. Backward rules are themselves
// written in terms of primitives, so the result of grad() lives on the same
// tape and can be differentiated again (Hessian-vector products, mixed
// second derivatives of an unrolled inner loop).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "atbptt/error.hpp"

namespace atbptt::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

enum class Op : std::uint8_t {
  kLeaf,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kScale,
  kMulScalar,
  kMatMul,
  kTranspose,
  kRelu,
  kReluMask,
  kTanh,
  kSqrt,
  kInvOrZero,
  kSum,
  kMean,
  kBroadcastScalar,
  kReduceRows,
  kBroadcastRows,
  kReduceCols,
  kBroadcastCols,
  kReshape,
  kSlice,
  kPad,
  kGather,
  kScatterAdd,
  kSoftmax,
  kLogSoftmax,
  kSoftmaxCrossEntropy,
  kL2Norm,
};

const char* op_name(Op op);

struct Node {
  Op op = Op::kConstant;
  int a = -1;
  int b = -1;
  Shape shape;
  std::vector<double> value;
  double scalar = 0.0;      // kScale factor
  std::size_t offset = 0;   // kSlice / kPad flat offset
  std::shared_ptr<const std::vector<std::int64_t>> index;  // kGather / kScatterAdd
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr && id_ >= 0; }
  int id() const { return id_; }
  Tape& tape() const { return *tape_; }
  Shape shape() const;
  std::size_t size() const;
  std::span<const double> values() const;
  double item() const;
  std::vector<double> to_vector() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Append-only computation record. Nodes are in topological order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  // Tensors hold a pointer to their tape, so a tape never moves.
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  Tensor leaf(Shape shape, std::vector<double> values);
  Tensor constant(Shape shape, std::vector<double> values);
  Tensor filled(Shape shape, double value);
  Tensor scalar(double value) { return constant({}, {value}); }

  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return nodes_.size(); }

  // Position marks, used to attribute node counts to phases of a computation.
  std::size_t mark() {
    marks_.push_back(nodes_.size());
    return nodes_.size();
  }
  const std::vector<std::size_t>& marks() const { return marks_; }

  // Recomputes every non-input node from its recorded inputs and reports
  // whether all activations are reproduced bit-exactly.
  bool verify_replay() const;

  // Internal: evaluates `node` from its inputs, checks finiteness, appends it.
  Tensor push(Node node);

 private:
  std::vector<Node> nodes_;
  std::vector<std::size_t> marks_;
};

// --- primitives -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor neg(const Tensor& a);
// a * s where s is a scalar (rank-0) tensor.
Tensor mul_scalar(const Tensor& a, const Tensor& s);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor relu(const Tensor& a);
// Heaviside step of `a` (1 where a > 0). Carries no gradient.
Tensor relu_mask(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sqrt(const Tensor& a);
// 1/a, or 0 where a == 0.
Tensor inv_or_zero(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor broadcast_scalar(const Tensor& s, const Shape& shape);
// (m, n) -> (n): sum over rows.
Tensor reduce_rows(const Tensor& a);
// (n) -> (m, n)
Tensor broadcast_rows(const Tensor& v, std::size_t rows);
// (m, n) -> (m): sum over columns.
Tensor reduce_cols(const Tensor& a);
// (m) -> (m, n)
Tensor broadcast_cols(const Tensor& v, std::size_t cols);
Tensor reshape(const Tensor& a, const Shape& shape);
// Contiguous flat sub-range of `a` viewed with `shape`.
Tensor slice(const Tensor& a, std::size_t offset, const Shape& shape);
// Embeds `a` at a flat offset inside zeros of `shape`. Adjoint of slice.
Tensor pad(const Tensor& a, std::size_t offset, const Shape& shape);
// out[i] = index[i] >= 0 ? a.flat[index[i]] : 0
Tensor gather(const Tensor& a, std::shared_ptr<const std::vector<std::int64_t>> index,
              const Shape& shape);
// out.flat[index[i]] += a.flat[i]; adjoint of gather.
Tensor scatter_add(const Tensor& a, std::shared_ptr<const std::vector<std::int64_t>> index,
                   const Shape& shape);
Tensor softmax(const Tensor& logits);
Tensor log_softmax(const Tensor& logits);
// Mean over rows of -sum_c labels[r,c] * log_softmax(logits)[r,c].
// Labels are unnormalized non-negative weights.
Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& labels);
Tensor l2_norm(const Tensor& a);

// Convenience: sum(a * b).
Tensor dot(const Tensor& a, const Tensor& b);
// Row selection from a 2-D tensor, differentiable through gather.
Tensor take_rows(const Tensor& a, std::span<const std::size_t> rows);

// --- differentiation --------------------------------------------------------

// Gradients of a scalar `loss` with respect to each tensor in `wrt`, recorded
// on the loss's tape. A wrt entry that does not influence the loss yields a
// zero tensor and sets the matching flag in `disconnected` when provided.
std::vector<Tensor> grad(const Tensor& loss, std::span<const Tensor> wrt,
                         std::vector<bool>* disconnected = nullptr);
Tensor grad(const Tensor& loss, const Tensor& wrt, bool* disconnected = nullptr);

using LossBuilder = std::function<Tensor(Tape&, const Tensor& theta)>;

// H(theta) v for H the Hessian of the built loss, by double backprop.
std::vector<double> hvp(const LossBuilder& loss, std::span<const double> theta,
                        std::span<const double> v);

// Value and gradient of the built loss at theta.
double value_and_grad(const LossBuilder& loss, std::span<const double> theta,
                      std::vector<double>& gradient);

// --- parameter vectors ------------------------------------------------------

struct LayoutEntry {
  std::string name;
  Shape shape;
  std::size_t offset = 0;
};

// Flat model parameters with a named layout.
struct ParamVector {
  std::vector<double> flat;
  std::vector<LayoutEntry> layout;

  std::size_t size() const { return flat.size(); }
  // Offsets contiguous, non-overlapping, covering `flat` exactly.
  bool layout_consistent() const;
};

}  // namespace atbptt::ad
