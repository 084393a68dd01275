#pragma once

#include <vector>

#include "atbptt/autodiff.hpp"

namespace atbptt::ad::detail {

// Forward kernel: computes the value of `node` from its inputs on `tape`.
// Shapes are validated by the builders before a node reaches here.
std::vector<double> evaluate(const Tape& tape, const Node& node);

}  // namespace atbptt::ad::detail
