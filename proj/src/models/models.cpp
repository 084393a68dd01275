#include "atbptt/models.hpp"

#include <cmath>

#include "atbptt/rng.hpp"

namespace atbptt::models {

namespace {

bool is_weight(const ad::LayoutEntry& e) { return e.shape.size() == 2; }

ad::Tensor activate(const ModelSpec& spec, const ad::Tensor& t) {
  return spec.activation == Activation::kRelu ? ad::relu(t) : ad::tanh(t);
}

ad::Tensor param(const ad::Tensor& theta, const ad::LayoutEntry& e) {
  return ad::slice(theta, e.offset, e.shape);
}

ad::Tensor affine(const ad::Tensor& x, const ad::Tensor& w, const ad::Tensor& b) {
  return ad::add(ad::matmul(x, w), ad::broadcast_rows(b, x.shape()[0]));
}

// im2col gather index for a valid 3x3 convolution over (batch, H*W*C) rows.
std::shared_ptr<const std::vector<std::int64_t>> im2col_index(std::size_t batch, std::size_t h,
                                                              std::size_t w, std::size_t c) {
  const std::size_t oh = h - kConvKernel + 1, ow = w - kConvKernel + 1;
  auto index = std::make_shared<std::vector<std::int64_t>>();
  index->reserve(batch * oh * ow * kConvKernel * kConvKernel * c);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t q = 0; q < ow; ++q)
        for (std::size_t dr = 0; dr < kConvKernel; ++dr)
          for (std::size_t dq = 0; dq < kConvKernel; ++dq)
            for (std::size_t ch = 0; ch < c; ++ch)
              index->push_back(static_cast<std::int64_t>(b * h * w * c + ((r + dr) * w + (q + dq)) * c + ch));
  return index;
}

}  // namespace

void validate(const ModelSpec& spec) {
  if (spec.classes < 2) throw ConfigError("model: class count must be >= 2");
  if (spec.input.empty() || spec.input_size() == 0) throw ConfigError("model: empty input shape");
  for (auto w : spec.widths)
    if (w == 0) throw ConfigError("model: layer widths must be positive");
  if (spec.family == Family::kConvLite) {
    if (spec.input.size() != 3 || spec.input[0] != spec.input[1])
      throw ConfigError("model: conv-lite needs a square HxWxC input, got " + ad::to_string(spec.input));
    if (spec.input[0] < kConvKernel) throw ConfigError("model: conv-lite input smaller than the kernel");
    if (spec.widths.empty()) throw ConfigError("model: conv-lite needs a channel count in widths[0]");
  }
}

std::vector<ad::LayoutEntry> layout(const ModelSpec& spec) {
  validate(spec);
  std::vector<ad::LayoutEntry> out;
  std::size_t offset = 0;
  auto push = [&](std::string name, ad::Shape shape) {
    const std::size_t n = ad::numel(shape);
    out.push_back({std::move(name), std::move(shape), offset});
    offset += n;
  };
  std::size_t fan_in = spec.input_size();
  std::size_t first_dense = 0;
  if (spec.family == Family::kConvLite) {
    const std::size_t side = spec.input[0], ch = spec.input[2], out_ch = spec.widths[0];
    const std::size_t o = side - kConvKernel + 1;
    push("conv.w", {kConvKernel * kConvKernel * ch, out_ch});
    push("conv.b", {out_ch});
    fan_in = o * o * out_ch;
    first_dense = 1;
  }
  std::size_t layer = 0;
  for (std::size_t i = first_dense; i <= spec.widths.size(); ++i, ++layer) {
    const std::size_t fan_out = i < spec.widths.size() ? spec.widths[i] : spec.classes;
    push("fc" + std::to_string(layer) + ".w", {fan_in, fan_out});
    push("fc" + std::to_string(layer) + ".b", {fan_out});
    fan_in = fan_out;
  }
  return out;
}

std::size_t parameter_count(const ModelSpec& spec) {
  auto l = layout(spec);
  return l.back().offset + ad::numel(l.back().shape);
}

ad::ParamVector init(const ModelSpec& spec, std::uint64_t seed) {
  ad::ParamVector pv;
  pv.layout = layout(spec);
  pv.flat.assign(parameter_count(spec), 0.0);
  Rng rng(seed);
  for (const auto& e : pv.layout) {
    if (!is_weight(e)) continue;
    const double scale = 1.0 / std::sqrt(static_cast<double>(e.shape[0]));
    for (std::size_t i = 0; i < ad::numel(e.shape); ++i) pv.flat[e.offset + i] = rng.normal(0.0, scale);
  }
  return pv;
}

ad::Tensor forward(const ModelSpec& spec, const ad::Tensor& theta, const ad::Tensor& x) {
  const auto lay = layout(spec);
  const std::size_t p = lay.back().offset + ad::numel(lay.back().shape);
  if (theta.size() != p) {
    throw ShapeError("forward: theta has " + std::to_string(theta.size()) + " entries, model needs " +
                     std::to_string(p));
  }
  const auto xs = x.shape();
  if (xs.size() != 2 || xs[1] != spec.input_size()) {
    throw ShapeError("forward: input " + ad::to_string(xs) + " does not match (batch, " +
                     std::to_string(spec.input_size()) + ")");
  }
  const std::size_t batch = xs[0];
  ad::Tensor h = x;
  std::size_t k = 0;
  if (spec.family == Family::kConvLite) {
    const std::size_t side = spec.input[0], ch = spec.input[2];
    const std::size_t o = side - kConvKernel + 1, out_ch = spec.widths[0];
    auto cols = ad::gather(x, im2col_index(batch, side, side, ch),
                           {batch * o * o, kConvKernel * kConvKernel * ch});
    h = activate(spec, affine(cols, param(theta, lay[0]), param(theta, lay[1])));
    h = ad::reshape(h, {batch, o * o * out_ch});
    k = 2;
  }
  for (; k < lay.size(); k += 2) {
    h = affine(h, param(theta, lay[k]), param(theta, lay[k + 1]));
    if (k + 2 < lay.size()) h = activate(spec, h);
  }
  return h;
}

ad::Tensor loss(const ad::Tensor& logits, const ad::Tensor& labels) {
  const auto shape = labels.shape();
  if (shape.size() == 2) {
    auto y = labels.values();
    for (std::size_t r = 0; r < shape[0]; ++r) {
      bool any = false;
      for (std::size_t c = 0; c < shape[1]; ++c) any = any || y[r * shape[1] + c] != 0.0;
      if (!any) throw Error("loss: label row " + std::to_string(r) + " is all zero");
    }
  }
  return ad::softmax_cross_entropy(logits, labels);
}

std::vector<int> argmax_rows(std::span<const double> logits, std::size_t classes) {
  std::vector<int> out(logits.size() / classes);
  for (std::size_t r = 0; r < out.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c)
      if (logits[r * classes + c] > logits[r * classes + best]) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

double accuracy(std::span<const double> logits, std::size_t classes, std::span<const int> labels) {
  if (logits.size() != labels.size() * classes) throw ShapeError("accuracy: logits and labels disagree");
  if (labels.empty()) return 0.0;
  const auto pred = argmax_rows(logits, classes);
  std::size_t hit = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) hit += pred[r] == labels[r];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

std::vector<double> one_hot(std::span<const int> labels, std::size_t classes) {
  std::vector<double> out(labels.size() * classes, 0.0);
  for (std::size_t r = 0; r < labels.size(); ++r) out[r * classes + static_cast<std::size_t>(labels[r])] = 1.0;
  return out;
}

std::string to_string(Family f) { return f == Family::kDenseMlp ? "dense-mlp" : "conv-lite"; }
std::string to_string(Activation a) { return a == Activation::kRelu ? "relu" : "tanh"; }

Family parse_family(const std::string& s) {
  if (s == "dense-mlp") return Family::kDenseMlp;
  if (s == "conv-lite") return Family::kConvLite;
  throw ConfigError("unknown model family '" + s + "'");
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + s + "'");
}

}  // namespace atbptt::models
