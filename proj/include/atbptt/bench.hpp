#pragma once

// Cost comparison of the backward adjoint recursion over one truncation
// window: low-rank Hessian factors versus dense Hessian products.

#include <cstdint>
#include <string>
#include <vector>

#include "atbptt/config.hpp"
#include "atbptt/models.hpp"

namespace atbptt::bench {

struct BenchRow {
  std::size_t p = 0;
  std::string method;  // lrha, dense, lrha-full-rank, hvp-exact
  std::size_t k = 0;
  std::size_t window = 0;
  std::size_t hvp_count = 0;
  std::size_t apply_madds = 0;       // Hessian-product application only
  double madd_ratio = 0.0;           // against dense
  std::size_t peak_aux_floats = 0;
  double memory_ratio = 0.0;         // peak_aux_floats / p^2
  double seconds = 0.0;
  double adjoint_rel_err = 0.0;      // final adjoint against the dense one
};

// Dense MLP with 4 classes, one tanh hidden layer and exactly p parameters.
models::ModelSpec model_with_parameters(std::size_t p);

std::vector<BenchRow> run(const cli::BenchConfig& cfg, std::uint64_t seed);

// Header plus one line per row. Wall time is the last column.
std::string to_csv(const std::vector<BenchRow>& rows);

}  // namespace atbptt::bench
