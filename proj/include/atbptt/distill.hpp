#pragma once

// Outer distillation loop: synthetic-set initialization, one outer step
// (meta-gradient, clipping, Adam, EMA, stage update), ZCA whitening,
// augmentation and evaluation of distilled sets.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "atbptt/data.hpp"
#include "atbptt/innerloop.hpp"
#include "atbptt/psp.hpp"
#include "atbptt/schedule.hpp"
#include "atbptt/synthetic_dataset.hpp"

namespace atbptt::distill {

enum class InitMode { kGaussian, kRealSample };

// Labels start one-hot. Gaussian images are standardized per image.
SyntheticDataset init_synthetic(const data::LabeledDataset& real, std::size_t ipc, std::uint64_t seed, InitMode mode);

// Real rows as a synthetic set with one-hot labels (rows grouped by class).
SyntheticDataset from_labeled(const data::LabeledDataset& d);

struct EvalConfig {
  std::size_t seeds = 5;
  std::size_t steps = 300;
  double lr = 0.1;
  innerloop::InnerOptimizer optimizer = innerloop::InnerOptimizer::kSgd;
  std::size_t threads = 1;
};

struct OuterConfig {
  models::ModelSpec spec;
  innerloop::UnrollConfig inner;
  innerloop::Strategy strategy = innerloop::Strategy::kAtBptt;
  innerloop::HessianMode mode = innerloop::HessianMode::kExact;
  std::size_t window = 40;  // M for t-bptt / rat-bptt
  schedule::ScheduleConfig schedule;
  double count_early_pct = 0.05;
  double count_mid_pct = 0.04;
  std::optional<schedule::Stage> fixed_stage;  // pins the stage (no transitions)
  lrha::LrhaConfig lrha;
  psp::PspConfig psp;

  double outer_lr = 0.001;
  std::size_t epochs = 200;
  double clip_norm = 1.0;
  double ema_decay = 0.99;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t ipc = 1;
  InitMode init = InitMode::kGaussian;
  std::size_t val_batch = 256;  // real rows per outer step for the outer loss and A_t
  bool augment = false;
  EvalConfig eval;
  std::uint64_t seed = 0;
};

void validate(const OuterConfig& cfg);

struct RunRecord {
  std::size_t epoch = 0;
  double outer_loss = 0.0;
  std::size_t position = 0;  // sampled N
  std::size_t window_size = 0;
  std::size_t window_start = 0;
  double probability = 1.0;
  schedule::Stage stage = schedule::Stage::kEarly;  // stage used for this step
  std::size_t hvp_count = 0;
  std::size_t lrha_fallbacks = 0;
  double grad_norm_mean = 0.0;
  double grad_norm_max = 0.0;
  double meta_norm = 0.0;  // before clipping
  bool clipped = false;
  bool skipped = false;    // non-finite meta-gradient
  double accuracy = 0.0;   // held-out accuracy at the window end, percent
  double delta_a = 0.0;
  double align_loss = 0.0;
};

struct AdamState {
  std::vector<double> m, v;
  std::size_t t = 0;
};

struct RunState {
  SyntheticDataset S;
  SyntheticDataset shadow;  // EMA of S
  AdamState adam;
  schedule::StageState stage;
  std::optional<double> previous_accuracy;
  std::size_t epoch = 0;
  Rng truncation{0};  // end-position sampling stream
};

RunState start(const OuterConfig& cfg, const data::LabeledDataset& train);

// One iteration of the outer loop; `real` supplies the per-step batch.
RunRecord outer_step(RunState& state, const data::LabeledDataset& real, const OuterConfig& cfg);

// Scales g to norm max_norm when its global norm exceeds it. Returns the
// norm before clipping.
double clip_global_norm(std::span<double> g, double max_norm);

void adam_update(std::span<double> x, std::span<const double> g, AdamState& st, double lr, double beta1, double beta2,
                 double eps);

// shadow <- decay * shadow + (1 - decay) * x, exact for decay 0 or x == shadow.
void ema_update(std::span<double> shadow, std::span<const double> x, double decay);

// Negative labels to 0; rows that would become all zero keep `previous`.
void clamp_labels(std::span<double> labels, std::span<const double> previous, std::size_t classes);

struct EvalResult {
  std::vector<double> accuracies;  // percent, one per seed
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
};

EvalResult evaluate(const SyntheticDataset& S, const data::LabeledDataset& test, const models::ModelSpec& spec,
                    const EvalConfig& cfg, std::uint64_t seed);

struct RunReport {
  std::vector<RunRecord> records;
  SyntheticDataset final_set;  // EMA shadow
  EvalResult eval;
  std::size_t total_hvp = 0;
  std::size_t total_fallbacks = 0;
  std::size_t skipped_updates = 0;
  double seconds = 0.0;
};

RunReport run(const OuterConfig& cfg, const data::LabeledDataset& train, const data::LabeledDataset& test);

// --- preprocessing ----------------------------------------------------------

struct ZcaTransform {
  Eigen::VectorXd mean;
  Eigen::MatrixXd whiten;    // (Sigma + lambda I)^{-1/2}
  Eigen::MatrixXd unwhiten;  // its inverse
  double lambda = 0.0;
};

ZcaTransform fit_zca(const data::LabeledDataset& d, double lambda);
void apply_zca(const ZcaTransform& z, std::span<double> rows_data, std::size_t features);
void invert_zca(const ZcaTransform& z, std::span<double> rows_data, std::size_t features);
std::pair<data::LabeledDataset, ZcaTransform> zca_whiten(const data::LabeledDataset& d, double lambda);

struct AugmentDraw {
  bool flip = false;
  std::size_t quarter_turns = 0;  // counter-clockwise, 0..3
};

// Index map of one image: out[i] = in[perm[i]] for an H x W x C image with H == W.
std::vector<std::size_t> augment_permutation(const ad::Shape& shape, const AugmentDraw& draw);
AugmentDraw draw_augment(Rng& rng);
// In place, independent draw per image.
void augment(std::span<double> images, const ad::Shape& shape, Rng& rng);
void augment(std::span<double> image, const ad::Shape& shape, const AugmentDraw& draw);

std::string to_string(InitMode m);
InitMode parse_init_mode(const std::string& s);

}  // namespace atbptt::distill
