#include "atbptt/lrha.hpp"

#include <algorithm>
#include <cmath>

namespace atbptt::lrha {

namespace {

// Columns whose remainder after projection falls below this fraction of
// their original norm are treated as linearly dependent.
constexpr double kDependentTol = 1e-10;

class BreakdownError : public std::exception {};

void project_out(Eigen::MatrixXd& y, Eigen::Index j, Eigen::VectorXd& col) {
  for (int pass = 0; pass < 2; ++pass)
    for (Eigen::Index i = 0; i < j; ++i) col -= y.col(i).dot(col) * y.col(i);
}

// In-place modified Gram-Schmidt with reorthogonalization. Dependent
// columns are replaced by random directions orthogonal to the rest.
void orthonormalize(Eigen::MatrixXd& y, Rng& rng) {
  const Eigen::Index p = y.rows();
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    Eigen::VectorXd col = y.col(j);
    const double before = col.norm();
    if (!std::isfinite(before)) throw BreakdownError();
    project_out(y, j, col);
    double after = col.norm();
    int attempts = 0;
    while (!(after > kDependentTol * before) || after == 0.0) {
      if (++attempts > 8) throw BreakdownError();
      for (Eigen::Index i = 0; i < p; ++i) col[i] = rng.normal();
      const double fresh = col.norm();
      project_out(y, j, col);
      after = col.norm();
      if (after > kDependentTol * fresh) break;
    }
    y.col(j) = col / after;
  }
}

void apply_block(const HvpOperator& hvp, Eigen::MatrixXd& y, Eigen::VectorXd& temp, HvpCounter& counter) {
  const auto p = static_cast<std::size_t>(y.rows());
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    hvp({y.col(j).data(), p}, {temp.data(), p});
    ++counter.count;
    if (!temp.allFinite()) throw BreakdownError();
    y.col(j) = temp;
  }
}

LowRankHessian attempt(const HvpOperator& hvp, std::size_t p, std::size_t k, Rng& rng, HvpCounter& counter) {
  const auto P = static_cast<Eigen::Index>(p), K = static_cast<Eigen::Index>(k);
  Eigen::MatrixXd y(P, K);
  counter.allocate(p * k);
  Eigen::VectorXd temp(P);
  counter.allocate(p);
  struct Release {
    HvpCounter& c;
    std::size_t n;
    bool done = false;
    void now() {
      if (!done) c.release(n), done = true;
    }
    ~Release() { now(); }
  } release_temp{counter, p};

  for (Eigen::Index j = 0; j < K; ++j)
    for (Eigen::Index i = 0; i < P; ++i) y(i, j) = rng.normal();

  apply_block(hvp, y, temp, counter);  // Y0 = H Omega
  for (int q = 0; q < 2; ++q) {        // Y^q = H (H Y^{q-1})
    orthonormalize(y, rng);
    apply_block(hvp, y, temp, counter);
    orthonormalize(y, rng);
    apply_block(hvp, y, temp, counter);
  }
  orthonormalize(y, rng);  // Q

  Eigen::MatrixXd b(K, K);
  counter.allocate(k * k);
  for (Eigen::Index j = 0; j < K; ++j) {
    hvp({y.col(j).data(), p}, {temp.data(), p});
    ++counter.count;
    if (!temp.allFinite()) throw BreakdownError();
    b.col(j) = y.transpose() * temp;
  }
  release_temp.now();

  counter.allocate(2 * k * k + k);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeFullU | Eigen::ComputeFullV);
  counter.release(k * k);  // B

  LowRankHessian h;
  h.q = std::move(y);
  h.u = svd.matrixU();
  h.sigma = svd.singularValues();
  h.v = svd.matrixV();
  counter.release(p * k + 2 * k * k + k);
  return h;
}

}  // namespace

std::vector<double> LowRankHessian::apply(std::span<const double> x, HvpCounter* counter) const {
  if (x.size() != p()) {
    throw ShapeError("lrha apply: |v| = " + std::to_string(x.size()) + " but p = " + std::to_string(p()));
  }
  Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  Eigen::VectorXd a = q.transpose() * xv;
  a = v.transpose() * a;
  a = sigma.cwiseProduct(a);
  a = u * a;
  Eigen::VectorXd out = q * a;
  if (counter) counter->madds += 2 * p() * rank() + 2 * rank() * rank() + rank();
  return {out.data(), out.data() + out.size()};
}

std::size_t k_max_for(std::size_t p, const LrhaConfig& cfg) {
  const auto k = static_cast<std::size_t>(std::floor(cfg.k_max_fraction * static_cast<double>(p)));
  return std::min(p, std::max(cfg.k_min, k));
}

std::size_t adaptive_rank(double current, double running_max, std::size_t k_min, std::size_t k_max) {
  if (k_min > k_max) throw ConfigError("adaptive_rank: k_min > k_max");
  if (k_min < 1) throw ConfigError("adaptive_rank: k_min must be >= 1");
  const double ratio = current / std::max(running_max, 1e-12);
  const double raw = std::floor(static_cast<double>(k_max) * ratio);
  const std::size_t k = raw >= static_cast<double>(k_max) ? k_max : static_cast<std::size_t>(std::max(0.0, raw));
  return std::min(k_max, std::max(k_min, k));
}

LowRankHessian factorize(const HvpOperator& hvp, std::size_t p, std::size_t k, Rng& rng, HvpCounter& counter,
                         bool redraw_on_failure) {
  if (k == 0 || k > p) {
    throw ConfigError("factorize: rank " + std::to_string(k) + " outside [1, " + std::to_string(p) + "]");
  }
  const std::size_t live = counter.live_floats;
  try {
    return attempt(hvp, p, k, rng, counter);
  } catch (const BreakdownError&) {
    counter.live_floats = live;
    if (!redraw_on_failure) throw FactorizationError("factorize: range finder broke down");
  }
  try {
    return attempt(hvp, p, k, rng, counter);
  } catch (const BreakdownError&) {
    counter.live_floats = live;
    throw FactorizationError("factorize: range finder broke down twice");
  }
}

std::vector<double> apply_damped(const LowRankHessian& h, double alpha, std::span<const double> x,
                                 HvpCounter* counter) {
  auto hx = h.apply(x, counter);
  for (std::size_t i = 0; i < hx.size(); ++i) hx[i] = x[i] - alpha * hx[i];
  if (counter) counter->madds += x.size();
  return hx;
}

}  // namespace atbptt::lrha
