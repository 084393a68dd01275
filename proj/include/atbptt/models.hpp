#pragma once

// Small differentiable classifiers used as the inner-loop learner.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "atbptt/autodiff.hpp"

namespace atbptt::models {

enum class Family { kDenseMlp, kConvLite };
enum class Activation { kRelu, kTanh };

// dense-mlp: `widths` are the hidden layer sizes (may be empty for a linear
// model). conv-lite: widths[0] is the channel count of one valid 3x3
// convolution over an HxWxC input, the remaining widths are dense hidden
// layers after it.
struct ModelSpec {
  Family family = Family::kDenseMlp;
  std::vector<std::size_t> widths;
  Activation activation = Activation::kRelu;
  ad::Shape input;  // {features} or {H, W, C}
  std::size_t classes = 2;

  std::size_t input_size() const { return ad::numel(input); }
};

inline constexpr std::size_t kConvKernel = 3;

// Throws ConfigError on an invalid spec.
void validate(const ModelSpec& spec);
std::vector<ad::LayoutEntry> layout(const ModelSpec& spec);
std::size_t parameter_count(const ModelSpec& spec);

// Weights ~ N(0, 1/fan_in), biases zero.
ad::ParamVector init(const ModelSpec& spec, std::uint64_t seed);

// x: (batch, input_size) rows; theta: flat parameter tensor of length p.
// Returns logits of shape (batch, C).
ad::Tensor forward(const ModelSpec& spec, const ad::Tensor& theta, const ad::Tensor& x);

// Mean over rows of the soft-label cross-entropy. Labels are used as given
// (not normalized); an all-zero label row is an error.
ad::Tensor loss(const ad::Tensor& logits, const ad::Tensor& labels);

// Fraction of rows whose argmax (lowest index on ties) equals the label.
double accuracy(std::span<const double> logits, std::size_t classes, std::span<const int> labels);

// Model input and argmax helpers on plain arrays.
std::vector<int> argmax_rows(std::span<const double> logits, std::size_t classes);
std::vector<double> one_hot(std::span<const int> labels, std::size_t classes);

std::string to_string(Family f);
std::string to_string(Activation a);
Family parse_family(const std::string& s);
Activation parse_activation(const std::string& s);

}  // namespace atbptt::models
