#include "kernels.hpp"

#include <algorithm>
#include <cmath>

namespace atbptt::ad::detail {

namespace {

using Vec = std::vector<double>;

template <typename F>
Vec unary(const Vec& a, F f) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <typename F>
Vec binary(const Vec& a, const Vec& b, F f) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

Vec row_softmax(const Vec& z, std::size_t rows, std::size_t cols, bool log_space) {
  Vec out(z.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* zr = z.data() + r * cols;
    double* o = out.data() + r * cols;
    double mx = *std::max_element(zr, zr + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(zr[c] - mx);
    double log_total = std::log(total);
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = log_space ? zr[c] - mx - log_total : std::exp(zr[c] - mx) / total;
    }
  }
  return out;
}

}  // namespace

std::vector<double> evaluate(const Tape& tape, const Node& n) {
  static const Vec kEmpty;
  const Vec& a = n.a >= 0 ? tape.node(n.a).value : kEmpty;
  const Vec& b = n.b >= 0 ? tape.node(n.b).value : kEmpty;
  const Shape& ashape = n.a >= 0 ? tape.node(n.a).shape : n.shape;

  switch (n.op) {
    case Op::kLeaf:
    case Op::kConstant:
      return n.value;
    case Op::kAdd:
      return binary(a, b, [](double x, double y) { return x + y; });
    case Op::kSub:
      return binary(a, b, [](double x, double y) { return x - y; });
    case Op::kMul:
      return binary(a, b, [](double x, double y) { return x * y; });
    case Op::kDiv:
      return binary(a, b, [](double x, double y) { return x / y; });
    case Op::kScale: {
      double c = n.scalar;
      return unary(a, [c](double x) { return x * c; });
    }
    case Op::kMulScalar: {
      double s = b[0];
      return unary(a, [s](double x) { return x * s; });
    }
    case Op::kMatMul: {
      const std::size_t m = ashape[0], k = ashape[1], cols = n.shape[1];
      Vec out(m * cols, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        double* o = out.data() + i * cols;
        for (std::size_t t = 0; t < k; ++t) {
          const double av = a[i * k + t];
          if (av == 0.0) continue;
          const double* br = b.data() + t * cols;
          for (std::size_t j = 0; j < cols; ++j) o[j] += av * br[j];
        }
      }
      return out;
    }
    case Op::kTranspose: {
      const std::size_t m = ashape[0], cols = ashape[1];
      Vec out(a.size());
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[j * m + i] = a[i * cols + j];
      return out;
    }
    case Op::kRelu:
      return unary(a, [](double x) { return x > 0.0 ? x : 0.0; });
    case Op::kReluMask:
      return unary(a, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
    case Op::kTanh:
      return unary(a, [](double x) { return std::tanh(x); });
    case Op::kSqrt:
      return unary(a, [](double x) { return std::sqrt(x); });
    case Op::kInvOrZero:
      return unary(a, [](double x) { return x == 0.0 ? 0.0 : 1.0 / x; });
    case Op::kSum: {
      double s = 0.0;
      for (double x : a) s += x;
      return {s};
    }
    case Op::kMean: {
      double s = 0.0;
      for (double x : a) s += x;
      return {s / static_cast<double>(a.size())};
    }
    case Op::kBroadcastScalar:
      return Vec(numel(n.shape), a[0]);
    case Op::kReduceRows: {
      const std::size_t m = ashape[0], cols = ashape[1];
      Vec out(cols, 0.0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[j] += a[i * cols + j];
      return out;
    }
    case Op::kBroadcastRows: {
      const std::size_t m = n.shape[0], cols = n.shape[1];
      Vec out(m * cols);
      for (std::size_t i = 0; i < m; ++i) std::copy(a.begin(), a.end(), out.begin() + i * cols);
      return out;
    }
    case Op::kReduceCols: {
      const std::size_t m = ashape[0], cols = ashape[1];
      Vec out(m, 0.0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[i] += a[i * cols + j];
      return out;
    }
    case Op::kBroadcastCols: {
      const std::size_t m = n.shape[0], cols = n.shape[1];
      Vec out(m * cols);
      for (std::size_t i = 0; i < m; ++i)
        std::fill(out.begin() + i * cols, out.begin() + (i + 1) * cols, a[i]);
      return out;
    }
    case Op::kReshape:
      return a;
    case Op::kSlice: {
      const std::size_t len = numel(n.shape);
      return Vec(a.begin() + n.offset, a.begin() + n.offset + len);
    }
    case Op::kPad: {
      Vec out(numel(n.shape), 0.0);
      std::copy(a.begin(), a.end(), out.begin() + n.offset);
      return out;
    }
    case Op::kGather: {
      const auto& idx = *n.index;
      Vec out(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i)
        out[i] = idx[i] >= 0 ? a[static_cast<std::size_t>(idx[i])] : 0.0;
      return out;
    }
    case Op::kScatterAdd: {
      const auto& idx = *n.index;
      Vec out(numel(n.shape), 0.0);
      for (std::size_t i = 0; i < idx.size(); ++i)
        if (idx[i] >= 0) out[static_cast<std::size_t>(idx[i])] += a[i];
      return out;
    }
    case Op::kSoftmax:
      return row_softmax(a, ashape[0], ashape[1], false);
    case Op::kLogSoftmax:
      return row_softmax(a, ashape[0], ashape[1], true);
    case Op::kSoftmaxCrossEntropy: {
      const std::size_t rows = ashape[0], cols = ashape[1];
      Vec ls = row_softmax(a, rows, cols, true);
      double total = 0.0;
      for (std::size_t i = 0; i < ls.size(); ++i) total -= b[i] * ls[i];
      return {total / static_cast<double>(rows)};
    }
    case Op::kL2Norm: {
      double s = 0.0;
      for (double x : a) s += x * x;
      return {std::sqrt(s)};
    }
  }
  return {};
}

}  // namespace atbptt::ad::detail
