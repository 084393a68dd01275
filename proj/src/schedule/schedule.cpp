#include "atbptt/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "atbptt/error.hpp"

namespace atbptt::schedule {

namespace {

void require_tau(double tau) {
  if (!(tau > 0.0)) throw ConfigError("schedule: tau must be > 0");
}

std::vector<double> standardized(std::span<const double> v, bool enable) {
  std::vector<double> out(v.begin(), v.end());
  if (!enable || out.empty()) return out;
  const double mean = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(out.size());
  if (mean > 0.0)
    for (auto& x : out) x /= mean;
  return out;
}

void require_finite_nonneg(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x) || x < 0.0) throw Error(std::string(what) + ": entries must be finite and >= 0");
}

}  // namespace

std::size_t count_from_fraction(double fraction, std::size_t epochs) {
  const auto n = static_cast<long long>(std::llround(fraction * static_cast<double>(epochs)));
  return static_cast<std::size_t>(std::max(1LL, n));
}

std::vector<double> softmax(std::span<const double> values, double tau) {
  require_tau(tau);
  std::vector<double> out(values.size());
  if (values.empty()) return out;
  const double mx = *std::max_element(values.begin(), values.end());
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = std::exp((values[i] - mx) / tau);
    total += out[i];
  }
  for (auto& x : out) x /= total;
  return out;
}

std::vector<double> trunc_probs(std::span<const double> grad_norms, Stage stage, double tau, bool standardize) {
  require_tau(tau);
  require_finite_nonneg(grad_norms, "trunc_probs");
  const std::size_t T = grad_norms.size();
  if (T == 0) throw Error("trunc_probs: empty trace");
  if (T == 1) return {1.0};
  if (stage == Stage::kMiddle) return std::vector<double>(T, 1.0 / static_cast<double>(T));
  auto p = softmax(standardized(grad_norms, standardize), tau);
  if (stage == Stage::kLate) {
    for (auto& x : p) x = (1.0 - x) / static_cast<double>(T - 1);
  }
  return p;
}

std::size_t position_at(std::span<const double> probs, double u) {
  if (probs.empty()) throw Error("sample_position: empty distribution");
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) last_positive = i;
    cum += probs[i];
    if (u < cum && probs[i] > 0.0) return i + 1;
  }
  // Rounding left the total just below u.
  return last_positive + 1;
}

std::size_t sample_position(std::span<const double> probs, Rng& rng) { return position_at(probs, rng.uniform()); }

std::vector<double> window_weight(std::span<const double> variations, double tau, bool standardize) {
  require_tau(tau);
  require_finite_nonneg(variations, "window_weight");
  return softmax(standardized(variations, standardize), tau);
}

std::size_t window_size(std::size_t W, std::size_t d, double eta, std::size_t N) {
  if (W == 0) throw ConfigError("window_size: W must be >= 1");
  const double raw = static_cast<double>(W) - static_cast<double>(d) + 2.0 * static_cast<double>(d) * eta;
  const long long r = std::llround(raw);
  const long long lo = std::max(1LL, static_cast<long long>(W) - static_cast<long long>(d));
  const long long hi = std::min(static_cast<long long>(N), static_cast<long long>(W + d));
  // When N < W - d the upper end wins: a window never covers more steps than exist.
  return static_cast<std::size_t>(std::max(1LL, std::min(std::max(r, lo), hi)));
}

StageState update_stage(const StageState& state, double delta_a, const ScheduleConfig& cfg) {
  StageState s = state;
  switch (s.stage) {
    case Stage::kEarly:
      if (delta_a < cfg.thresh_early) ++s.c1;
      if (s.c1 >= cfg.count_early) s.stage = Stage::kMiddle;
      break;
    case Stage::kMiddle:
      if (delta_a < cfg.thresh_mid) ++s.c2;
      if (s.c2 >= cfg.count_mid) s.stage = Stage::kLate;
      break;
    case Stage::kLate:
      break;
  }
  return s;
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::kEarly: return "early";
    case Stage::kMiddle: return "middle";
    case Stage::kLate: return "late";
  }
  return "?";
}

Stage parse_stage(const std::string& s) {
  if (s == "early") return Stage::kEarly;
  if (s == "middle") return Stage::kMiddle;
  if (s == "late") return Stage::kLate;
  throw ConfigError("unknown stage '" + s + "'");
}

}  // namespace atbptt::schedule
