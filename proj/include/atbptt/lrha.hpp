#pragma once

// Adaptive-rank randomized low-rank Hessian approximation, driven purely by
// Hessian-vector products. H~ = (Q U) diag(sigma) (Q V)^T.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "atbptt/error.hpp"
#include "atbptt/rng.hpp"

namespace atbptt::lrha {

// out = H v. Must be linear and (numerically) self-adjoint.
using HvpOperator = std::function<void(std::span<const double> v, std::span<double> out)>;

class FactorizationError : public Error {
 public:
  using Error::Error;
};

// HVP evaluations, auxiliary floats held by the factorization (current and
// peak) and multiply-adds spent applying factors.
struct HvpCounter {
  std::size_t count = 0;
  std::size_t live_floats = 0;
  std::size_t peak_extra_floats = 0;
  std::size_t madds = 0;

  void allocate(std::size_t n) {
    live_floats += n;
    if (live_floats > peak_extra_floats) peak_extra_floats = live_floats;
  }
  void release(std::size_t n) { live_floats -= n; }
};

struct LrhaConfig {
  bool enabled = false;
  std::size_t k_min = 4;
  double k_max_fraction = 0.1;
  bool redraw_on_qr_failure = true;
};

struct LowRankHessian {
  Eigen::MatrixXd q;      // p x k, orthonormal columns
  Eigen::MatrixXd u;      // k x k
  Eigen::VectorXd sigma;  // k, descending, >= 0
  Eigen::MatrixXd v;      // k x k

  std::size_t p() const { return static_cast<std::size_t>(q.rows()); }
  std::size_t rank() const { return static_cast<std::size_t>(q.cols()); }
  // H~ x through the factor chain; 2pk + 2k^2 + k multiply-adds.
  std::vector<double> apply(std::span<const double> x, HvpCounter* counter = nullptr) const;
};

// floor(fraction * p), at least k_min and at most p.
std::size_t k_max_for(std::size_t p, const LrhaConfig& cfg);

// max(k_min, floor(k_max * current / max(running_max, 1e-12))), capped at k_max.
std::size_t adaptive_rank(double current, double running_max, std::size_t k_min, std::size_t k_max);

// Randomized range finder with two power iterations: 6k HVPs in total.
LowRankHessian factorize(const HvpOperator& hvp, std::size_t p, std::size_t k, Rng& rng, HvpCounter& counter,
                         bool redraw_on_failure = true);

// x - alpha H~ x. Adds 2pk + 2k^2 + k + p multiply-adds to the counter.
std::vector<double> apply_damped(const LowRankHessian& h, double alpha, std::span<const double> x,
                                 HvpCounter* counter = nullptr);

// Multiply-add cost models used by the bench.
inline std::size_t damped_apply_madds(std::size_t p, std::size_t k) { return 2 * p * k + 2 * k * k + k + p; }
inline std::size_t dense_damped_apply_madds(std::size_t p) { return p * p + p; }

}  // namespace atbptt::lrha
