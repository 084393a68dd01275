#include <optional>

#include "atbptt/autodiff.hpp"

namespace atbptt::ad {

namespace {

struct Contribution {
  std::optional<Tensor> a;
  std::optional<Tensor> b;
};

// Backward rule for one node. `g` is the adjoint of the node's output; the
// returned tensors are the adjoint contributions for its inputs. Only inputs
// flagged in need_a / need_b are computed.
Contribution backward(Tape& tape, int id, const Tensor& g, bool need_a, bool need_b) {
  // Copy what we need: pushing new nodes may reallocate the node store.
  const Node& ref = tape.node(id);
  const Op op = ref.op;
  const Tensor out(&tape, id);
  const Tensor a = ref.a >= 0 ? Tensor(&tape, ref.a) : Tensor();
  const Tensor b = ref.b >= 0 ? Tensor(&tape, ref.b) : Tensor();
  const double factor = ref.scalar;
  const std::size_t offset = ref.offset;
  const auto index = ref.index;

  Contribution c;
  switch (op) {
    case Op::kLeaf:
    case Op::kConstant:
    case Op::kReluMask:
      break;
    case Op::kAdd:
      if (need_a) c.a = g;
      if (need_b) c.b = g;
      break;
    case Op::kSub:
      if (need_a) c.a = g;
      if (need_b) c.b = neg(g);
      break;
    case Op::kMul:
      if (need_a) c.a = mul(g, b);
      if (need_b) c.b = mul(g, a);
      break;
    case Op::kDiv:
      if (need_a) c.a = div(g, b);
      if (need_b) c.b = neg(mul(g, div(out, b)));
      break;
    case Op::kScale:
      if (need_a) c.a = scale(g, factor);
      break;
    case Op::kMulScalar:
      if (need_a) c.a = mul_scalar(g, b);
      if (need_b) c.b = dot(g, a);
      break;
    case Op::kMatMul:
      if (need_a) c.a = matmul(g, transpose(b));
      if (need_b) c.b = matmul(transpose(a), g);
      break;
    case Op::kTranspose:
      if (need_a) c.a = transpose(g);
      break;
    case Op::kRelu:
      // Second derivative is identically zero: the mask carries no gradient.
      if (need_a) c.a = mul(g, relu_mask(a));
      break;
    case Op::kTanh:
      if (need_a) c.a = sub(g, mul(g, mul(out, out)));
      break;
    case Op::kSqrt:
      if (need_a) c.a = div(g, scale(out, 2.0));
      break;
    case Op::kInvOrZero:
      if (need_a) c.a = neg(mul(g, mul(out, out)));
      break;
    case Op::kSum:
      if (need_a) c.a = broadcast_scalar(g, a.shape());
      break;
    case Op::kMean:
      if (need_a) c.a = broadcast_scalar(scale(g, 1.0 / static_cast<double>(a.size())), a.shape());
      break;
    case Op::kBroadcastScalar:
      if (need_a) c.a = reshape(sum(g), a.shape());
      break;
    case Op::kReduceRows:
      if (need_a) c.a = broadcast_rows(g, a.shape()[0]);
      break;
    case Op::kBroadcastRows:
      if (need_a) c.a = reduce_rows(g);
      break;
    case Op::kReduceCols:
      if (need_a) c.a = broadcast_cols(g, a.shape()[1]);
      break;
    case Op::kBroadcastCols:
      if (need_a) c.a = reduce_cols(g);
      break;
    case Op::kReshape:
      if (need_a) c.a = reshape(g, a.shape());
      break;
    case Op::kSlice:
      if (need_a) c.a = pad(g, offset, a.shape());
      break;
    case Op::kPad:
      if (need_a) c.a = slice(g, offset, a.shape());
      break;
    case Op::kGather:
      if (need_a) c.a = scatter_add(g, index, a.shape());
      break;
    case Op::kScatterAdd:
      if (need_a) c.a = gather(g, index, a.shape());
      break;
    case Op::kSoftmax:
      if (need_a) {
        const std::size_t cols = a.shape()[1];
        c.a = mul(out, sub(g, broadcast_cols(reduce_cols(mul(g, out)), cols)));
      }
      break;
    case Op::kLogSoftmax:
      if (need_a) {
        const std::size_t cols = a.shape()[1];
        c.a = sub(g, mul(softmax(a), broadcast_cols(reduce_cols(g), cols)));
      }
      break;
    case Op::kSoftmaxCrossEntropy: {
      const std::size_t rows = a.shape()[0], cols = a.shape()[1];
      const double inv_rows = 1.0 / static_cast<double>(rows);
      if (need_a) {
        Tensor weight = broadcast_cols(reduce_cols(b), cols);
        c.a = mul_scalar(sub(mul(softmax(a), weight), b), scale(g, inv_rows));
      }
      if (need_b) c.b = mul_scalar(log_softmax(a), scale(g, -inv_rows));
      break;
    }
    case Op::kL2Norm:
      if (need_a) c.a = mul_scalar(a, mul(g, inv_or_zero(out)));
      break;
  }
  return c;
}

bool differentiable(Op op) { return op != Op::kReluMask; }

}  // namespace

std::vector<Tensor> grad(const Tensor& loss, std::span<const Tensor> wrt,
                         std::vector<bool>* disconnected) {
  if (!loss.valid()) throw Error("grad: invalid loss tensor");
  if (loss.size() != 1) throw ShapeError("grad: loss must be a scalar, got " + to_string(loss.shape()));
  Tape& tape = loss.tape();
  const int last = loss.id();
  const std::size_t count = static_cast<std::size_t>(last) + 1;

  std::vector<char> reach(count, 0);
  for (const auto& w : wrt) {
    if (&w.tape() != &tape) throw Error("grad: wrt tensor lives on a different tape");
    if (w.id() <= last) reach[static_cast<std::size_t>(w.id())] = 1;
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (reach[i]) continue;
    const Node& n = tape.node(static_cast<int>(i));
    if (!differentiable(n.op)) continue;
    if ((n.a >= 0 && reach[static_cast<std::size_t>(n.a)]) ||
        (n.b >= 0 && reach[static_cast<std::size_t>(n.b)])) {
      reach[i] = 1;
    }
  }

  std::vector<int> adjoint(count, -1);
  if (reach[count - 1]) adjoint[count - 1] = tape.filled(loss.shape(), 1.0).id();

  for (int id = last; id >= 0; --id) {
    const std::size_t i = static_cast<std::size_t>(id);
    if (!reach[i] || adjoint[i] < 0) continue;
    const int ia = tape.node(id).a;
    const int ib = tape.node(id).b;
    const bool need_a = ia >= 0 && reach[static_cast<std::size_t>(ia)];
    const bool need_b = ib >= 0 && reach[static_cast<std::size_t>(ib)];
    if (!need_a && !need_b) continue;
    auto c = backward(tape, id, Tensor(&tape, adjoint[i]), need_a, need_b);
    auto accumulate = [&](int input, const std::optional<Tensor>& contrib) {
      if (!contrib) return;
      auto& slot = adjoint[static_cast<std::size_t>(input)];
      slot = slot < 0 ? contrib->id() : add(Tensor(&tape, slot), *contrib).id();
    };
    if (need_a) accumulate(ia, c.a);
    if (need_b) accumulate(ib, c.b);
  }

  std::vector<Tensor> out;
  out.reserve(wrt.size());
  if (disconnected) disconnected->assign(wrt.size(), false);
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    const auto& w = wrt[k];
    int slot = w.id() <= last ? adjoint[static_cast<std::size_t>(w.id())] : -1;
    if (slot < 0) {
      out.push_back(tape.filled(w.shape(), 0.0));
      if (disconnected) (*disconnected)[k] = true;
    } else {
      out.emplace_back(&tape, slot);
    }
  }
  return out;
}

Tensor grad(const Tensor& loss, const Tensor& wrt, bool* disconnected) {
  std::vector<bool> flags;
  auto g = grad(loss, std::span<const Tensor>(&wrt, 1), &flags);
  if (disconnected) *disconnected = flags[0];
  return g[0];
}

std::vector<double> hvp(const LossBuilder& loss, std::span<const double> theta,
                        std::span<const double> v) {
  if (theta.size() != v.size()) {
    throw ShapeError("hvp: |v| = " + std::to_string(v.size()) + " but p = " +
                     std::to_string(theta.size()));
  }
  Tape tape;
  Tensor th = tape.leaf({theta.size()}, {theta.begin(), theta.end()});
  Tensor l = loss(tape, th);
  Tensor g = grad(l, th);
  Tensor gv = dot(g, tape.constant({v.size()}, {v.begin(), v.end()}));
  return grad(gv, th).to_vector();
}

double value_and_grad(const LossBuilder& loss, std::span<const double> theta,
                      std::vector<double>& gradient) {
  Tape tape;
  Tensor th = tape.leaf({theta.size()}, {theta.begin(), theta.end()});
  Tensor l = loss(tape, th);
  gradient = grad(l, th).to_vector();
  return l.item();
}

}  // namespace atbptt::ad
