#pragma once

// Truncation-position probabilities, adaptive window sizing and the
// accuracy-variation driven stage machine.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "atbptt/error.hpp"
#include "atbptt/rng.hpp"

namespace atbptt::schedule {

enum class Stage { kEarly, kMiddle, kLate };

struct ScheduleConfig {
  double tau = 1.0;
  std::size_t window = 40;       // W
  std::size_t window_range = 10; // d
  double thresh_early = 1.5;     // M, accuracy points
  double thresh_mid = 1.0;       // N, accuracy points
  std::size_t count_early = 1;   // X
  std::size_t count_mid = 1;     // Y
  bool standardize = true;       // divide norms/variations by their mean before the softmax
};

// X and Y as fractions of the outer epoch count, at least 1.
std::size_t count_from_fraction(double fraction, std::size_t epochs);

struct StageState {
  Stage stage = Stage::kEarly;
  std::size_t c1 = 0;
  std::size_t c2 = 0;
};

// Row softmax of values/tau (max-shifted).
std::vector<double> softmax(std::span<const double> values, double tau);

// Probability over steps 1..T of ending the window there.
std::vector<double> trunc_probs(std::span<const double> grad_norms, Stage stage, double tau,
                                bool standardize = true);

// Inverse-CDF draw; returns a 1-based step index.
std::size_t sample_position(std::span<const double> probs, Rng& rng);
// Deterministic inverse CDF at u in [0,1).
std::size_t position_at(std::span<const double> probs, double u);

std::vector<double> window_weight(std::span<const double> variations, double tau, bool standardize = true);

// round(W - d + 2 d eta) clamped to [max(1, W-d), min(N, W+d)].
std::size_t window_size(std::size_t W, std::size_t d, double eta, std::size_t N);

StageState update_stage(const StageState& state, double delta_a, const ScheduleConfig& cfg);

std::string to_string(Stage s);
Stage parse_stage(const std::string& s);

}  // namespace atbptt::schedule
