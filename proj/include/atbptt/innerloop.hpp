#pragma once

// Inner-loop unrolling on the synthetic set and meta-gradient assembly under
// the bptt / t-bptt / rat-bptt / at-bptt truncation strategies.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "atbptt/data.hpp"
#include "atbptt/lrha.hpp"
#include "atbptt/models.hpp"
#include "atbptt/rng.hpp"
#include "atbptt/schedule.hpp"
#include "atbptt/synthetic_dataset.hpp"

namespace atbptt::innerloop {

enum class InnerOptimizer { kSgd, kAdam };
enum class Strategy { kBptt, kTBptt, kRatBptt, kAtBptt };
// exact: one tape over the window. low-rank: step-wise adjoint with H~_j.
// adjoint-exact: the same step-wise adjoint with exact HVPs.
enum class HessianMode { kExact, kLowRank, kAdjointExact };

struct UnrollConfig {
  std::size_t T = 10;
  double alpha = 0.01;
  InnerOptimizer optimizer = InnerOptimizer::kSgd;
  std::size_t batch_size = 0;  // 0 or >= rows: full synthetic set every step
  std::uint64_t batch_seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void validate(const UnrollConfig& cfg);

// Rows of the synthetic set used at 1-based step t; empty means all rows.
std::vector<std::size_t> batch_rows(const UnrollConfig& cfg, std::size_t rows, std::size_t step);

// Replacement losses for toy problems that are not classifiers. The inner
// loss receives the (batched) image and label blocks of S.
using InnerLossFn = std::function<ad::Tensor(const ad::Tensor& theta, const ad::Tensor& images,
                                             const ad::Tensor& labels)>;
using OuterLossFn = std::function<ad::Tensor(const ad::Tensor& theta)>;

// Everything an unroll needs besides theta0 and S. `val` supplies A_t and
// the outer loss (hard labels, one-hot targets) unless the hooks are set.
struct Problem {
  models::ModelSpec spec;
  UnrollConfig cfg;
  data::LabeledDataset val;
  InnerLossFn inner_loss;  // empty: soft-label cross-entropy of the model
  OuterLossFn outer_loss;  // empty: cross-entropy on `val`; accuracies are then 0
};

struct TruncationWindow {
  std::size_t end = 1;   // N
  std::size_t size = 1;  // steps differentiated, ending at N

  std::size_t start() const { return end >= size ? end - size + 1 : 1; }
  std::size_t steps() const { return end - start() + 1; }
};

void validate(const TruncationWindow& w, std::size_t T);

struct Checkpoint {
  std::vector<double> theta;
  std::vector<double> m, v;  // Adam moments, empty for sgd
};

struct UnrollTrace {
  std::vector<double> grad_norms;   // ||grad L_t||, t = 1..n
  std::vector<double> variations;   // |norm_t - norm_{t-1}|, first entry 0
  std::vector<double> losses;       // inner loss at step t
  std::vector<double> accuracies;   // A_t of theta_t on val, fraction
  // checkpoints[i] holds theta_{first_checkpoint + i}.
  std::vector<Checkpoint> checkpoints;
  std::size_t first_checkpoint = 0;

  std::size_t steps() const { return grad_norms.size(); }
  const Checkpoint& at(std::size_t t) const { return checkpoints.at(t - first_checkpoint); }
};

// Untaped run of steps 1..n recording the full trace and every checkpoint.
UnrollTrace trace(const Problem& pb, std::span<const double> theta0, const SyntheticDataset& S, std::size_t n);

struct UnrollResult {
  std::vector<double> theta;
  UnrollTrace trace;
  std::size_t tape_nodes = 0;
};

// Steps 1..start-1 untaped, start..N on one tape with S as leaves. The trace
// covers 1..N; checkpoints cover start-1..N.
UnrollResult unroll(const Problem& pb, std::span<const double> theta0, const SyntheticDataset& S,
                    const TruncationWindow& window);

struct MetaGradient {
  std::vector<double> images;
  std::vector<double> labels;
  Strategy strategy = Strategy::kBptt;
  HessianMode mode = HessianMode::kExact;
  TruncationWindow window;
  double probability = 1.0;  // probability of the sampled end position
  std::size_t hvp_count = 0;
  std::size_t lrha_fallbacks = 0;
  std::size_t tape_nodes = 0;
  double outer_loss = 0.0;
  double accuracy_at_end = 0.0;
  double grad_norm_mean = 0.0;
  double grad_norm_max = 0.0;
  std::vector<std::size_t> ranks;  // k_j per factorized step (low-rank mode)
};

struct StrategyInputs {
  Strategy strategy = Strategy::kBptt;
  std::size_t window = 0;  // M for t-bptt / rat-bptt; at-bptt uses schedule.window and window_range
  std::optional<std::size_t> forced_end;
  Rng* rng = nullptr;  // position sampling (rat-bptt, at-bptt)
  schedule::ScheduleConfig schedule;
  schedule::Stage stage = schedule::Stage::kEarly;
  bool first_iteration = false;  // no trace history: uniform probs, eta = 1/T
  HessianMode mode = HessianMode::kExact;
  lrha::LrhaConfig lrha;
  std::uint64_t lrha_seed = 0;
};

// Runs the trace, picks the window according to the strategy and returns
// d L_val(theta_N) / d S through the window.
MetaGradient meta_gradient(const Problem& pb, std::span<const double> theta0, const SyntheticDataset& S,
                           const StrategyInputs& in);

// Meta-gradient for an already chosen window, reusing `tr` (a trace that
// covers steps 1..N with checkpoints from start-1).
MetaGradient window_meta_gradient(const Problem& pb, const SyntheticDataset& S, const UnrollTrace& tr,
                                  const TruncationWindow& window, const StrategyInputs& in);

// Dense-matrix product formula over the window. `step_weights`, when given,
// holds a weight per step 1..T multiplying that step's mixed term.
MetaGradient analytic_meta_gradient(const Problem& pb, std::span<const double> theta0, const SyntheticDataset& S,
                                    const TruncationWindow& window,
                                    std::span<const double> step_weights = {});

inline constexpr std::size_t kAnalyticMaxParams = 512;

// Outer loss L_val(theta) and its value/gradient without S dependence.
double outer_loss(const Problem& pb, std::span<const double> theta, std::vector<double>* grad = nullptr);
double val_accuracy(const Problem& pb, std::span<const double> theta);

// One untaped inner step from a checkpoint; used by oracles.
Checkpoint step_untaped(const Problem& pb, const Checkpoint& from, const SyntheticDataset& S, std::size_t step,
                        double* grad_norm = nullptr, double* loss = nullptr);
Checkpoint initial_checkpoint(const Problem& pb, std::span<const double> theta0);

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& s);
std::string to_string(HessianMode m);
HessianMode parse_hessian_mode(const std::string& s);
std::string to_string(InnerOptimizer o);
InnerOptimizer parse_optimizer(const std::string& s);

}  // namespace atbptt::innerloop
