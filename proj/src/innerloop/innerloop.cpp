#include "atbptt/innerloop.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

namespace atbptt::innerloop {

namespace {

struct TapedState {
  ad::Tensor theta, m, v;
};

bool is_adam(const Problem& pb) { return pb.cfg.optimizer == InnerOptimizer::kAdam; }

ad::Tensor step_loss(const Problem& pb, const ad::Tensor& theta, const ad::Tensor& sx, const ad::Tensor& sy,
                     std::span<const std::size_t> rows) {
  const auto x = rows.empty() ? sx : ad::take_rows(sx, rows);
  const auto y = rows.empty() ? sy : ad::take_rows(sy, rows);
  if (pb.inner_loss) return pb.inner_loss(theta, x, y);
  return models::loss(models::forward(pb.spec, theta, x), y);
}

double l2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// One inner update recorded on the tape of `st.theta`.
TapedState taped_step_impl(const Problem& pb, const TapedState& st, const ad::Tensor& sx, const ad::Tensor& sy,
                      std::size_t rows, std::size_t step, double* grad_norm, double* loss_value) {
  const auto batch = batch_rows(pb.cfg, rows, step);
  const auto loss = step_loss(pb, st.theta, sx, sy, batch);
  const auto g = ad::grad(loss, st.theta);
  if (loss_value) *loss_value = loss.item();
  if (grad_norm) *grad_norm = l2(g.values());

  const double alpha = pb.cfg.alpha;
  TapedState next;
  if (!is_adam(pb)) {
    next.theta = ad::sub(st.theta, ad::scale(g, alpha));
    return next;
  }
  const auto& c = pb.cfg;
  const double t = static_cast<double>(step);
  next.m = ad::add(ad::scale(st.m, c.beta1), ad::scale(g, 1.0 - c.beta1));
  next.v = ad::add(ad::scale(st.v, c.beta2), ad::scale(ad::mul(g, g), 1.0 - c.beta2));
  const auto mhat = ad::scale(next.m, 1.0 / (1.0 - std::pow(c.beta1, t)));
  const auto vhat = ad::scale(next.v, 1.0 / (1.0 - std::pow(c.beta2, t)));
  const auto denom = ad::sqrt(ad::add(vhat, st.theta.tape().filled(st.theta.shape(), c.eps * c.eps)));
  next.theta = ad::sub(st.theta, ad::scale(ad::div(mhat, denom), alpha));
  return next;
}

TapedState taped_step(const Problem& pb, const TapedState& st, const ad::Tensor& sx, const ad::Tensor& sy,
                      std::size_t rows, std::size_t step, double* grad_norm, double* loss_value) {
  try {
    return taped_step_impl(pb, st, sx, sy, rows, step, grad_norm, loss_value);
  } catch (const NonFiniteError& e) {
    throw NonFiniteError("unroll: non-finite value at inner step " + std::to_string(step) + ": " + e.what());
  }
}

TapedState load_state(ad::Tape& tape, const Problem& pb, const Checkpoint& ck, bool theta_leaf) {
  const ad::Shape shape{ck.theta.size()};
  TapedState st;
  st.theta = theta_leaf ? tape.leaf(shape, ck.theta) : tape.constant(shape, ck.theta);
  if (is_adam(pb)) {
    st.m = tape.constant(shape, ck.m);
    st.v = tape.constant(shape, ck.v);
  }
  return st;
}

Checkpoint save_state(const TapedState& st) {
  Checkpoint ck;
  ck.theta = st.theta.to_vector();
  if (st.m.valid()) {
    ck.m = st.m.to_vector();
    ck.v = st.v.to_vector();
  }
  return ck;
}

ad::Shape image_block(const SyntheticDataset& S) { return {S.rows(), S.features()}; }
ad::Shape label_block(const SyntheticDataset& S) { return {S.rows(), S.classes}; }

void check_synthetic(const Problem& pb, const SyntheticDataset& S) {
  if (S.rows() == 0) throw ConfigError("synthetic set is empty");
  if (S.images.size() != S.rows() * S.features() || S.labels.size() != S.rows() * S.classes) {
    throw ShapeError("synthetic set: storage does not match " + std::to_string(S.rows()) + " rows");
  }
  if (!pb.inner_loss && (S.features() != pb.spec.input_size() || S.classes != pb.spec.classes)) {
    throw ShapeError("synthetic set: shape does not match the model");
  }
}

void check_val(const Problem& pb) {
  if (pb.outer_loss) return;
  if (pb.val.rows() == 0) throw ConfigError("validation batch is empty");
  if (pb.val.features() != pb.spec.input_size()) throw ShapeError("validation batch: feature count mismatch");
}

ad::Tensor val_loss_on(const Problem& pb, const ad::Tensor& theta) {
  if (pb.outer_loss) return pb.outer_loss(theta);
  auto& tape = theta.tape();
  const auto x = tape.constant({pb.val.rows(), pb.val.features()}, pb.val.x);
  const auto y = tape.constant({pb.val.rows(), pb.spec.classes}, models::one_hot(pb.val.y, pb.spec.classes));
  return models::loss(models::forward(pb.spec, theta, x), y);
}

void fill_summary(MetaGradient& mg, const UnrollTrace& tr) {
  const std::size_t n = mg.window.end;
  mg.accuracy_at_end = tr.accuracies.at(n - 1);
  double sum = 0.0, mx = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    sum += tr.grad_norms[t];
    mx = std::max(mx, tr.grad_norms[t]);
  }
  mg.grad_norm_mean = sum / static_cast<double>(n);
  mg.grad_norm_max = mx;
}

void split_meta(MetaGradient& mg, const SyntheticDataset& S, std::span<const double> flat) {
  mg.images.assign(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(S.images.size()));
  mg.labels.assign(flat.begin() + static_cast<std::ptrdiff_t>(S.images.size()), flat.end());
}

MetaGradient exact_window(const Problem& pb, const SyntheticDataset& S, const UnrollTrace& tr,
                          const TruncationWindow& w) {
  ad::Tape tape;
  const auto sx = tape.leaf(image_block(S), S.images);
  const auto sy = tape.leaf(label_block(S), S.labels);
  auto st = load_state(tape, pb, tr.at(w.start() - 1), false);
  for (std::size_t t = w.start(); t <= w.end; ++t) st = taped_step(pb, st, sx, sy, S.rows(), t, nullptr, nullptr);
  tape.mark();
  const auto lval = val_loss_on(pb, st.theta);
  const std::vector<ad::Tensor> wrt{sx, sy};
  const auto grads = ad::grad(lval, wrt);

  MetaGradient mg;
  mg.mode = HessianMode::kExact;
  mg.window = w;
  mg.images = grads[0].to_vector();
  mg.labels = grads[1].to_vector();
  mg.outer_loss = lval.item();
  mg.hvp_count = w.steps() - 1;
  mg.tape_nodes = tape.size();
  return mg;
}

ad::LossBuilder inner_loss_builder(const Problem& pb, const SyntheticDataset& S, std::size_t step) {
  return [&pb, &S, step](ad::Tape& tape, const ad::Tensor& theta) {
    const auto sx = tape.constant(image_block(S), S.images);
    const auto sy = tape.constant(label_block(S), S.labels);
    return step_loss(pb, theta, sx, sy, batch_rows(pb.cfg, S.rows(), step));
  };
}

MetaGradient adjoint_window(const Problem& pb, const SyntheticDataset& S, const UnrollTrace& tr,
                            const TruncationWindow& w, const StrategyInputs& in) {
  if (is_adam(pb)) throw ConfigError("step-wise adjoint (low-rank / adjoint-exact) requires the sgd inner optimizer");
  const double alpha = pb.cfg.alpha;
  MetaGradient mg;
  mg.mode = in.mode;
  mg.window = w;

  std::vector<double> lambda;
  mg.outer_loss = outer_loss(pb, tr.at(w.end).theta, &lambda);
  const std::size_t p = lambda.size();
  const std::size_t k_max = lrha::k_max_for(p, in.lrha);
  const std::size_t k_min = std::min(in.lrha.k_min, k_max);
  std::vector<double> meta(S.size(), 0.0);

  for (std::size_t j = w.end; j >= w.start(); --j) {
    const bool propagate = j > w.start();
    ad::Tape tape;
    const auto sx = tape.leaf(image_block(S), S.images);
    const auto sy = tape.leaf(label_block(S), S.labels);
    const auto theta = tape.leaf({p}, tr.at(j - 1).theta);
    const auto loss = step_loss(pb, theta, sx, sy, batch_rows(pb.cfg, S.rows(), j));
    const auto g = ad::grad(loss, theta);
    const auto s = ad::dot(g, tape.constant({p}, lambda));
    std::vector<ad::Tensor> wrt{sx, sy};
    const bool exact_h = propagate && in.mode == HessianMode::kAdjointExact;
    if (exact_h) wrt.push_back(theta);
    const auto grads = ad::grad(s, wrt);
    const auto gx = grads[0].values();
    for (std::size_t i = 0; i < gx.size(); ++i) meta[i] -= alpha * gx[i];
    const auto gy = grads[1].values();
    for (std::size_t i = 0; i < gy.size(); ++i) meta[gx.size() + i] -= alpha * gy[i];

    if (exact_h) {
      const auto hl = grads[2].values();
      for (std::size_t i = 0; i < p; ++i) lambda[i] -= alpha * hl[i];
      ++mg.hvp_count;
    } else if (propagate) {
      const auto builder = inner_loss_builder(pb, S, j);
      const lrha::HvpOperator op = [&](std::span<const double> v, std::span<double> out) {
        const auto hv = ad::hvp(builder, tr.at(j - 1).theta, v);
        std::copy(hv.begin(), hv.end(), out.begin());
      };
      const double running_max = *std::max_element(tr.grad_norms.begin(), tr.grad_norms.begin() + j);
      const std::size_t k = lrha::adaptive_rank(tr.grad_norms[j - 1], running_max, k_min, k_max);
      Rng rng(substream(in.lrha_seed, "lrha", j));
      lrha::HvpCounter counter;
      try {
        const auto h = lrha::factorize(op, p, k, rng, counter, in.lrha.redraw_on_qr_failure);
        lambda = lrha::apply_damped(h, alpha, lambda, &counter);
        mg.ranks.push_back(k);
      } catch (const lrha::FactorizationError&) {
        const auto hl = ad::hvp(builder, tr.at(j - 1).theta, lambda);
        for (std::size_t i = 0; i < p; ++i) lambda[i] -= alpha * hl[i];
        ++counter.count;
        ++mg.lrha_fallbacks;
      }
      mg.hvp_count += counter.count;
    }
    mg.tape_nodes += tape.size();
    if (j == 1) break;
  }
  split_meta(mg, S, meta);
  return mg;
}

}  // namespace

void validate(const UnrollConfig& cfg) {
  if (cfg.T < 1) throw ConfigError("inner: T must be >= 1");
  if (!(cfg.alpha >= 0.0) || !std::isfinite(cfg.alpha)) throw ConfigError("inner: alpha must be finite and >= 0");
  if (cfg.optimizer == InnerOptimizer::kAdam) {
    if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) {
      throw ConfigError("inner: Adam betas must lie in [0, 1)");
    }
    if (!(cfg.eps > 0.0)) throw ConfigError("inner: Adam eps must be > 0");
  }
}

void validate(const TruncationWindow& w, std::size_t T) {
  if (w.size < 1) throw ConfigError("window: empty window");
  if (w.end < 1 || w.end > T) {
    throw ConfigError("window: end " + std::to_string(w.end) + " outside [1, " + std::to_string(T) + "]");
  }
}

std::vector<std::size_t> batch_rows(const UnrollConfig& cfg, std::size_t rows, std::size_t step) {
  if (cfg.batch_size == 0 || cfg.batch_size >= rows) return {};
  std::vector<std::size_t> idx(rows);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(substream(cfg.batch_seed, "inner-batch", step));
  for (std::size_t i = 0; i < cfg.batch_size; ++i) std::swap(idx[i], idx[i + rng.below(rows - i)]);
  idx.resize(cfg.batch_size);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Checkpoint initial_checkpoint(const Problem& pb, std::span<const double> theta0) {
  if (!pb.inner_loss && theta0.size() != models::parameter_count(pb.spec)) {
    throw ShapeError("theta0 has " + std::to_string(theta0.size()) + " entries, model needs " +
                     std::to_string(models::parameter_count(pb.spec)));
  }
  Checkpoint ck;
  ck.theta.assign(theta0.begin(), theta0.end());
  if (is_adam(pb)) {
    ck.m.assign(theta0.size(), 0.0);
    ck.v.assign(theta0.size(), 0.0);
  }
  return ck;
}

Checkpoint step_untaped(const Problem& pb, const Checkpoint& from, const SyntheticDataset& S, std::size_t step,
                        double* grad_norm, double* loss) {
  ad::Tape tape;
  const auto sx = tape.constant(image_block(S), S.images);
  const auto sy = tape.constant(label_block(S), S.labels);
  const auto st = load_state(tape, pb, from, true);
  return save_state(taped_step(pb, st, sx, sy, S.rows(), step, grad_norm, loss));
}

double outer_loss(const Problem& pb, std::span<const double> theta, std::vector<double>* grad) {
  check_val(pb);
  ad::Tape tape;
  const auto th = tape.leaf({theta.size()}, {theta.begin(), theta.end()});
  const auto l = val_loss_on(pb, th);
  if (grad) *grad = ad::grad(l, th).to_vector();
  return l.item();
}

double val_accuracy(const Problem& pb, std::span<const double> theta) {
  if (pb.outer_loss) return 0.0;
  check_val(pb);
  ad::Tape tape;
  const auto th = tape.constant({theta.size()}, {theta.begin(), theta.end()});
  const auto x = tape.constant({pb.val.rows(), pb.val.features()}, pb.val.x);
  const auto logits = models::forward(pb.spec, th, x);
  return models::accuracy(logits.values(), pb.spec.classes, pb.val.y);
}

static double step_accuracy(const Problem& pb, std::span<const double> theta, std::size_t step) {
  try {
    return val_accuracy(pb, theta);
  } catch (const NonFiniteError& e) {
    throw NonFiniteError("unroll: non-finite value after inner step " + std::to_string(step) + ": " + e.what());
  }
}

UnrollTrace trace(const Problem& pb, std::span<const double> theta0, const SyntheticDataset& S, std::size_t n) {
  validate(pb.cfg);
  check_synthetic(pb, S);
  check_val(pb);
  if (n < 1 || n > pb.cfg.T) throw ConfigError("trace: step count outside [1, T]");
  UnrollTrace tr;
  tr.checkpoints.reserve(n + 1);
  tr.checkpoints.push_back(initial_checkpoint(pb, theta0));
  for (std::size_t t = 1; t <= n; ++t) {
    double norm = 0.0, loss = 0.0;
    tr.checkpoints.push_back(step_untaped(pb, tr.checkpoints.back(), S, t, &norm, &loss));
    tr.grad_norms.push_back(norm);
    tr.losses.push_back(loss);
    tr.variations.push_back(t == 1 ? 0.0 : std::abs(norm - tr.grad_norms[t - 2]));
    tr.accuracies.push_back(step_accuracy(pb, tr.checkpoints.back().theta, t));
  }
  return tr;
}

UnrollResult unroll(const Problem& pb, std::span<const double> theta0, const SyntheticDataset& S,
                    const TruncationWindow& window) {
  validate(pb.cfg);
  validate(window, pb.cfg.T);
  check_synthetic(pb, S);
  check_val(pb);
  const std::size_t start = window.start();
  UnrollResult res;
  auto& tr = res.trace;
  Checkpoint ck = initial_checkpoint(pb, theta0);
  auto record = [&](std::size_t t, double norm, double loss, const std::vector<double>& theta) {
    tr.grad_norms.push_back(norm);
    tr.losses.push_back(loss);
    tr.variations.push_back(t == 1 ? 0.0 : std::abs(norm - tr.grad_norms[t - 2]));
    tr.accuracies.push_back(step_accuracy(pb, theta, t));
  };
  for (std::size_t t = 1; t < start; ++t) {
    double norm = 0.0, loss = 0.0;
    ck = step_untaped(pb, ck, S, t, &norm, &loss);
    record(t, norm, loss, ck.theta);
  }
  tr.first_checkpoint = start - 1;
  tr.checkpoints.push_back(ck);

  ad::Tape tape;
  const auto sx = tape.leaf(image_block(S), S.images);
  const auto sy = tape.leaf(label_block(S), S.labels);
  auto st = load_state(tape, pb, ck, false);
  for (std::size_t t = start; t <= window.end; ++t) {
    double norm = 0.0, loss = 0.0;
    st = taped_step(pb, st, sx, sy, S.rows(), t, &norm, &loss);
    tr.checkpoints.push_back(save_state(st));
    record(t, norm, loss, tr.checkpoints.back().theta);
  }
  res.theta = tr.checkpoints.back().theta;
  res.tape_nodes = tape.size();
  return res;
}

MetaGradient window_meta_gradient(const Problem& pb, const SyntheticDataset& S, const UnrollTrace& tr,
                                  const TruncationWindow& window, const StrategyInputs& in) {
  validate(window, pb.cfg.T);
  if (tr.steps() < window.end || tr.first_checkpoint + 1 > window.start()) {
    throw ConfigError("window_meta_gradient: trace does not cover the window");
  }
  MetaGradient mg = in.mode == HessianMode::kExact ? exact_window(pb, S, tr, window) : adjoint_window(pb, S, tr, window, in);
  mg.strategy = in.strategy;
  fill_summary(mg, tr);
  return mg;
}

MetaGradient meta_gradient(const Problem& pb, std::span<const double> theta0, const SyntheticDataset& S,
                           const StrategyInputs& in) {
  validate(pb.cfg);
  const std::size_t T = pb.cfg.T;
  const auto tr = trace(pb, theta0, S, T);

  auto draw = [&](std::span<const double> probs) -> std::size_t {
    if (in.forced_end) return *in.forced_end;
    if (!in.rng) throw ConfigError("meta_gradient: strategy " + to_string(in.strategy) + " needs an RNG");
    return schedule::sample_position(probs, *in.rng);
  };

  TruncationWindow w;
  double probability = 1.0;
  switch (in.strategy) {
    case Strategy::kBptt:
      w = {T, T};
      break;
    case Strategy::kTBptt:
      if (in.window < 1) throw ConfigError("meta_gradient: t-bptt needs a window size >= 1");
      w = {T, in.window};
      break;
    case Strategy::kRatBptt: {
      if (in.window < 1) throw ConfigError("meta_gradient: rat-bptt needs a window size >= 1");
      const std::vector<double> uniform(T, 1.0 / static_cast<double>(T));
      w = {draw(uniform), in.window};
      probability = 1.0 / static_cast<double>(T);
      break;
    }
    case Strategy::kAtBptt: {
      const auto& sc = in.schedule;
      std::vector<double> probs(T, 1.0 / static_cast<double>(T));
      if (!in.first_iteration && T >= 2) probs = schedule::trunc_probs(tr.grad_norms, in.stage, sc.tau, sc.standardize);
      const std::size_t n = draw(probs);
      validate(TruncationWindow{n, 1}, T);
      double eta = 1.0 / static_cast<double>(T);
      if (!in.first_iteration) eta = schedule::window_weight(tr.variations, sc.tau, sc.standardize)[n - 1];
      w = {n, schedule::window_size(sc.window, sc.window_range, eta, n)};
      probability = probs[n - 1];
      break;
    }
  }
  auto mg = window_meta_gradient(pb, S, tr, w, in);
  mg.probability = probability;
  return mg;
}

MetaGradient analytic_meta_gradient(const Problem& pb, std::span<const double> theta0, const SyntheticDataset& S,
                                    const TruncationWindow& window, std::span<const double> step_weights) {
  validate(pb.cfg);
  validate(window, pb.cfg.T);
  if (is_adam(pb)) throw ConfigError("analytic_meta_gradient: requires the sgd inner optimizer");
  const std::size_t p = theta0.size();
  if (p > kAnalyticMaxParams) {
    throw ConfigError("analytic_meta_gradient: p = " + std::to_string(p) + " exceeds " +
                      std::to_string(kAnalyticMaxParams));
  }
  if (!step_weights.empty() && step_weights.size() != pb.cfg.T) {
    throw ShapeError("analytic_meta_gradient: step weights must have length T");
  }
  const auto tr = trace(pb, theta0, S, window.end);
  const double alpha = pb.cfg.alpha;
  const auto P = static_cast<Eigen::Index>(p);
  const auto Q = static_cast<Eigen::Index>(S.size());

  MetaGradient mg;
  mg.strategy = Strategy::kBptt;
  mg.mode = HessianMode::kExact;
  mg.window = window;
  std::vector<double> lam;
  mg.outer_loss = outer_loss(pb, tr.at(window.end).theta, &lam);
  Eigen::VectorXd mu = Eigen::Map<Eigen::VectorXd>(lam.data(), P);
  Eigen::VectorXd meta = Eigen::VectorXd::Zero(Q);
  Eigen::MatrixXd h(P, P), g(P, Q);

  for (std::size_t i = window.end; i >= window.start(); --i) {
    ad::Tape tape;
    const auto sx = tape.leaf(image_block(S), S.images);
    const auto sy = tape.leaf(label_block(S), S.labels);
    const auto theta = tape.leaf({p}, tr.at(i - 1).theta);
    const auto grad_theta = ad::grad(step_loss(pb, theta, sx, sy, batch_rows(pb.cfg, S.rows(), i)), theta);
    const std::vector<ad::Tensor> wrt{theta, sx, sy};
    for (std::size_t a = 0; a < p; ++a) {
      const auto rows = ad::grad(ad::slice(grad_theta, a, {}), wrt);
      const auto ha = rows[0].values();
      for (Eigen::Index c = 0; c < P; ++c) h(static_cast<Eigen::Index>(a), c) = ha[static_cast<std::size_t>(c)];
      const auto gx = rows[1].values();
      const auto gy = rows[2].values();
      for (std::size_t c = 0; c < gx.size(); ++c) g(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c)) = gx[c];
      for (std::size_t c = 0; c < gy.size(); ++c) {
        g(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(gx.size() + c)) = gy[c];
      }
    }
    const double weight = step_weights.empty() ? 1.0 : step_weights[i - 1];
    meta.noalias() -= alpha * weight * (g.transpose() * mu);
    if (i > window.start()) {
      mu -= alpha * (h * mu);
      ++mg.hvp_count;
    }
    mg.tape_nodes += tape.size();
    if (i == 1) break;
  }
  split_meta(mg, S, {meta.data(), static_cast<std::size_t>(meta.size())});
  fill_summary(mg, tr);
  return mg;
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kBptt: return "bptt";
    case Strategy::kTBptt: return "t-bptt";
    case Strategy::kRatBptt: return "rat-bptt";
    case Strategy::kAtBptt: return "at-bptt";
  }
  return "?";
}

Strategy parse_strategy(const std::string& s) {
  if (s == "bptt") return Strategy::kBptt;
  if (s == "t-bptt") return Strategy::kTBptt;
  if (s == "rat-bptt") return Strategy::kRatBptt;
  if (s == "at-bptt") return Strategy::kAtBptt;
  throw ConfigError("unknown strategy '" + s + "' (bptt, t-bptt, rat-bptt, at-bptt)");
}

std::string to_string(HessianMode m) {
  switch (m) {
    case HessianMode::kExact: return "exact";
    case HessianMode::kLowRank: return "low-rank";
    case HessianMode::kAdjointExact: return "adjoint-exact";
  }
  return "?";
}

HessianMode parse_hessian_mode(const std::string& s) {
  if (s == "exact") return HessianMode::kExact;
  if (s == "low-rank" || s == "approximate") return HessianMode::kLowRank;
  if (s == "adjoint-exact") return HessianMode::kAdjointExact;
  throw ConfigError("unknown hessian mode '" + s + "' (exact, low-rank, adjoint-exact)");
}

std::string to_string(InnerOptimizer o) { return o == InnerOptimizer::kSgd ? "sgd" : "adam"; }

InnerOptimizer parse_optimizer(const std::string& s) {
  if (s == "sgd") return InnerOptimizer::kSgd;
  if (s == "adam") return InnerOptimizer::kAdam;
  throw ConfigError("unknown inner optimizer '" + s + "' (sgd, adam)");
}

}  // namespace atbptt::innerloop
