#pragma once

// Ground-truth engines for meta-gradients: finite-difference hypergradients,
// dense Hessians and closed-form toy problems, plus the equivalence suite.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "atbptt/innerloop.hpp"

namespace atbptt::oracle {

enum class ToyKind { kQuadratic, kLogistic, kTwoLayerTanh };

struct ToyOptions {
  std::size_t dim = 6;      // quadratic: p; classifiers: input features
  std::size_t classes = 3;  // classifiers
  std::size_t hidden = 4;   // two-layer-tanh
  std::size_t ipc = 2;      // classifiers
  std::size_t T = 4;
  double alpha = 0.1;
  std::uint64_t seed = 0;
};

// Quadratic: inner loss 1/2 (theta - s)^T A (theta - s) with s the single
// synthetic row, outer loss 1/2 ||theta - target||^2. Classifiers use the
// models module and a blob validation batch.
struct ToyProblem {
  ToyKind kind = ToyKind::kQuadratic;
  innerloop::Problem problem;
  std::vector<double> theta0;
  SyntheticDataset S;
  Eigen::MatrixXd A;  // quadratic only
  std::vector<double> target;
  bool closed_form = false;
};

ToyProblem make_toy(ToyKind kind, const ToyOptions& opt);

// d L_val(theta_N) / d s for the quadratic toy when only the last
// window.steps() steps see s as a variable: (I - (I - alpha A)^w)^T (theta_N - target).
std::vector<double> closed_form_hypergradient(const ToyProblem& toy, const innerloop::TruncationWindow& window);

// Central differences of the truncated outer objective per synthetic
// coordinate (images then labels), step rel_eps * max(1, |x|).
innerloop::MetaGradient fd_hypergradient(const innerloop::Problem& pb, std::span<const double> theta0,
                                         const SyntheticDataset& S, const innerloop::TruncationWindow& window,
                                         double rel_eps = 1e-4);

inline constexpr std::size_t kDenseHessianMaxParams = 512;

// Column i = hvp(theta, e_i).
Eigen::MatrixXd dense_hessian(const ad::LossBuilder& loss, std::span<const double> theta);

enum class Level { kFast, kFull };

struct CellResult {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool asserted = true;  // false: value is reported only
  bool pass = true;
};

struct VerifyReport {
  std::string level;
  std::uint64_t seed = 0;
  std::vector<CellResult> cells;
  double seconds = 0.0;

  bool all_pass() const;
  std::size_t failures() const;
};

// tolerance_override replaces every asserted tolerance (negative control).
VerifyReport verify_suite(Level level, std::uint64_t seed = 0, std::optional<double> tolerance_override = {});

std::string to_string(ToyKind k);
ToyKind parse_toy_kind(const std::string& s);
std::string to_string(Level l);
Level parse_level(const std::string& s);

}  // namespace atbptt::oracle
