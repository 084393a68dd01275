#include "atbptt/distill.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

namespace atbptt::distill {

namespace il = innerloop;

namespace {

std::vector<double> concat(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

data::LabeledDataset draw_batch(const data::LabeledDataset& real, std::size_t n, std::uint64_t seed) {
  if (n == 0 || n >= real.rows()) return real;
  std::vector<std::size_t> idx(real.rows());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.below(real.rows() - i)]);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return real.subset(idx);
}

bool image_shaped(const ad::Shape& s) { return s.size() == 3 && s[0] == s[1]; }

struct StepGradient {
  std::vector<double> images, labels;
  il::MetaGradient diag;  // window, counters and accuracy (means over PSP cells)
  double align = 0.0;
};

il::StrategyInputs strategy_inputs(const RunState& st, const OuterConfig& cfg, Rng* rng, std::uint64_t lrha_seed) {
  il::StrategyInputs in;
  in.strategy = cfg.strategy;
  in.window = cfg.window;
  in.rng = rng;
  in.schedule = cfg.schedule;
  in.stage = st.stage.stage;
  in.first_iteration = !st.previous_accuracy.has_value();
  in.mode = cfg.mode;
  in.lrha = cfg.lrha;
  in.lrha_seed = lrha_seed;
  return in;
}

StepGradient whole_image_gradient(RunState& st, const SyntheticDataset& S, const data::LabeledDataset& batch,
                                  const OuterConfig& cfg, std::size_t epoch) {
  il::Problem pb;
  pb.spec = cfg.spec;
  pb.cfg = cfg.inner;
  pb.cfg.batch_seed = substream(cfg.seed, "inner-batch", epoch);
  pb.val = batch;
  const auto theta0 = models::init(cfg.spec, substream(cfg.seed, "init", epoch)).flat;
  const auto in = strategy_inputs(st, cfg, &st.truncation, substream(cfg.seed, "lrha", epoch));
  StepGradient out;
  out.diag = il::meta_gradient(pb, theta0, S, in);
  out.images = out.diag.images;
  out.labels = out.diag.labels;
  return out;
}

// Each cell distills its own patch of every synthetic image with its own
// theta_local; labels are shared across cells.
StepGradient patch_gradient(RunState& st, const SyntheticDataset& S, const data::LabeledDataset& batch,
                            const OuterConfig& cfg, std::size_t epoch) {
  const std::size_t n = cfg.psp.n;
  const std::size_t rows = S.rows(), feat = S.features();
  std::vector<psp::PatchGrid> grids;
  grids.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) grids.push_back(psp::split({S.images.data() + r * feat, feat}, S.sample_shape, n));
  std::vector<psp::PatchGrid> real_grids;
  real_grids.reserve(batch.rows());
  for (std::size_t r = 0; r < batch.rows(); ++r) real_grids.push_back(psp::split(batch.row(r), batch.sample_shape, n));
  const std::size_t s = grids[0].side, C = grids[0].channels, psize = grids[0].patch_size();
  const std::size_t W = S.sample_shape[1];

  models::ModelSpec local = cfg.spec;
  local.input = {s, s, C};
  models::validate(local);

  StepGradient out;
  out.images.assign(S.images.size(), 0.0);
  out.labels.assign(S.labels.size(), 0.0);
  auto scatter = [&](std::size_t cell, std::span<const double> g, double weight) {
    const std::size_t i = cell / n, j = cell % n;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t pr = 0; pr < s; ++pr)
        for (std::size_t pc = 0; pc < s; ++pc)
          for (std::size_t ch = 0; ch < C; ++ch)
            out.images[r * feat + ((i * s + pr) * W + (j * s + pc)) * C + ch] +=
                weight * g[r * psize + (pr * s + pc) * C + ch];
  };

  double acc = 0.0;
  for (std::size_t cell = 0; cell < n * n; ++cell) {
    SyntheticDataset cs;
    cs.sample_shape = {s, s, C};
    cs.ipc = S.ipc;
    cs.classes = S.classes;
    cs.labels = S.labels;
    cs.images.reserve(rows * psize);
    for (const auto& g : grids) cs.images.insert(cs.images.end(), g.patches[cell].begin(), g.patches[cell].end());
    il::Problem pb;
    pb.spec = local;
    pb.cfg = cfg.inner;
    pb.cfg.batch_seed = substream(cfg.seed, "inner-batch", epoch);
    pb.val.sample_shape = cs.sample_shape;
    pb.val.classes = batch.classes;
    pb.val.y = batch.y;
    for (const auto& g : real_grids) pb.val.x.insert(pb.val.x.end(), g.patches[cell].begin(), g.patches[cell].end());
    const auto theta0 = models::init(local, substream(cfg.seed, "init-cell", epoch * n * n + cell)).flat;
    const auto in = strategy_inputs(st, cfg, &st.truncation, substream(cfg.seed, "lrha", epoch * n * n + cell));
    const auto mg = il::meta_gradient(pb, theta0, cs, in);
    scatter(cell, mg.images, 1.0);
    for (std::size_t k = 0; k < out.labels.size(); ++k) out.labels[k] += mg.labels[k];
    if (cell == 0) out.diag = mg;
    out.diag.hvp_count += cell == 0 ? 0 : mg.hvp_count;
    out.diag.lrha_fallbacks += cell == 0 ? 0 : mg.lrha_fallbacks;
    if (cell > 0) {
      out.diag.outer_loss += mg.outer_loss;
      out.diag.grad_norm_mean += mg.grad_norm_mean;
      out.diag.grad_norm_max = std::max(out.diag.grad_norm_max, mg.grad_norm_max);
    }
    acc += mg.accuracy_at_end;
  }
  const double cells = static_cast<double>(n * n);
  out.diag.accuracy_at_end = acc / cells;
  out.diag.outer_loss /= cells;
  out.diag.grad_norm_mean /= cells;

  // Alignment between cell centroids and the global centroid.
  ad::Tape tape;
  std::vector<ad::Tensor> leaves;
  for (std::size_t cell = 0; cell < n * n; ++cell) {
    std::vector<double> block;
    block.reserve(rows * psize);
    for (const auto& g : grids) block.insert(block.end(), g.patches[cell].begin(), g.patches[cell].end());
    leaves.push_back(tape.leaf({rows, psize}, std::move(block)));
  }
  const auto align = psp::align_loss(leaves);
  out.align = align.item();
  if (cfg.psp.lambda > 0.0) {
    const auto grads = ad::grad(align, leaves);
    for (std::size_t cell = 0; cell < n * n; ++cell) scatter(cell, grads[cell].values(), cfg.psp.lambda);
  }
  return out;
}

}  // namespace

SyntheticDataset from_labeled(const data::LabeledDataset& d) {
  SyntheticDataset S;
  S.sample_shape = d.sample_shape;
  S.classes = d.classes;
  const auto counts = d.class_counts();
  S.ipc = counts.empty() ? 0 : counts[0];
  for (auto c : counts)
    if (c != S.ipc) throw ConfigError("from_labeled: classes must have equal counts");
  for (std::size_t c = 0; c < d.classes; ++c)
    for (std::size_t r = 0; r < d.rows(); ++r) {
      if (d.y[r] != static_cast<int>(c)) continue;
      const auto row = d.row(r);
      S.images.insert(S.images.end(), row.begin(), row.end());
      for (std::size_t k = 0; k < d.classes; ++k) S.labels.push_back(k == c ? 1.0 : 0.0);
    }
  return S;
}

SyntheticDataset init_synthetic(const data::LabeledDataset& real, std::size_t ipc, std::uint64_t seed, InitMode mode) {
  if (ipc < 1) throw ConfigError("init_synthetic: ipc must be >= 1");
  if (real.classes < 1) throw ConfigError("init_synthetic: dataset has no classes");
  SyntheticDataset S;
  S.sample_shape = real.sample_shape;
  S.classes = real.classes;
  S.ipc = ipc;
  const std::size_t f = real.features();
  S.images.resize(S.rows() * f);
  S.labels.assign(S.rows() * S.classes, 0.0);
  for (std::size_t r = 0; r < S.rows(); ++r) S.labels[r * S.classes + r / ipc] = 1.0;

  if (mode == InitMode::kGaussian) {
    Rng rng(substream(seed, "synthetic"));
    for (std::size_t r = 0; r < S.rows(); ++r) {
      double* img = S.images.data() + r * f;
      for (std::size_t k = 0; k < f; ++k) img[k] = rng.normal();
      double mean = 0.0;
      for (std::size_t k = 0; k < f; ++k) mean += img[k];
      mean /= static_cast<double>(f);
      double var = 0.0;
      for (std::size_t k = 0; k < f; ++k) var += (img[k] - mean) * (img[k] - mean);
      const double sd = std::sqrt(var / static_cast<double>(f));
      for (std::size_t k = 0; k < f; ++k) img[k] = sd > 0.0 ? (img[k] - mean) / sd : 0.0;
    }
    return S;
  }

  for (std::size_t c = 0; c < S.classes; ++c) {
    std::vector<std::size_t> pool;
    for (std::size_t r = 0; r < real.rows(); ++r)
      if (real.y[r] == static_cast<int>(c)) pool.push_back(r);
    if (pool.size() < ipc) {
      throw ConfigError("init_synthetic: class " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                        " examples, ipc = " + std::to_string(ipc));
    }
    Rng rng(substream(seed, "synthetic-real", c));
    for (std::size_t i = 0; i < ipc; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    for (std::size_t i = 0; i < ipc; ++i) {
      const auto row = real.row(pool[i]);
      std::copy(row.begin(), row.end(), S.images.begin() + static_cast<std::ptrdiff_t>((c * ipc + i) * f));
    }
  }
  return S;
}

void validate(const OuterConfig& cfg) {
  models::validate(cfg.spec);
  il::validate(cfg.inner);
  psp::validate(cfg.psp);
  if (cfg.epochs < 1) throw ConfigError("outer: epochs must be >= 1");
  if (!(cfg.clip_norm > 0.0)) throw ConfigError("outer: clip-norm must be > 0");
  if (!(cfg.ema_decay >= 0.0 && cfg.ema_decay < 1.0)) throw ConfigError("outer: ema-decay must lie in [0, 1)");
  if (!(cfg.outer_lr >= 0.0) || !std::isfinite(cfg.outer_lr)) throw ConfigError("outer: lr must be >= 0");
  if (cfg.ipc < 1) throw ConfigError("outer: ipc must be >= 1");
  if (!(cfg.schedule.tau > 0.0)) throw ConfigError("schedule: tau must be > 0");
  if (cfg.schedule.window < 1) throw ConfigError("schedule: window must be >= 1");
  if ((cfg.strategy == il::Strategy::kTBptt || cfg.strategy == il::Strategy::kRatBptt) && cfg.window < 1) {
    throw ConfigError("inner: window-size must be >= 1");
  }
  if (cfg.mode != il::HessianMode::kExact && cfg.inner.optimizer != il::InnerOptimizer::kSgd) {
    throw ConfigError("lrha: low-rank / adjoint-exact modes require the sgd inner optimizer");
  }
  if (cfg.eval.seeds < 1) throw ConfigError("eval: seeds must be >= 1");
}

RunState start(const OuterConfig& cfg, const data::LabeledDataset& train) {
  validate(cfg);
  RunState st;
  st.S = init_synthetic(train, cfg.ipc, cfg.seed, cfg.init);
  st.shadow = st.S;
  st.adam.m.assign(st.S.size(), 0.0);
  st.adam.v.assign(st.S.size(), 0.0);
  st.truncation = Rng(substream(cfg.seed, "truncation"));
  if (cfg.fixed_stage) st.stage.stage = *cfg.fixed_stage;
  return st;
}

double clip_global_norm(std::span<double> g, double max_norm) {
  double s = 0.0;
  for (double x : g) s += x * x;
  const double norm = std::sqrt(s);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& x : g) x *= f;
  }
  return norm;
}

void adam_update(std::span<double> x, std::span<const double> g, AdamState& st, double lr, double beta1, double beta2,
                 double eps) {
  if (st.m.size() != x.size()) st.m.assign(x.size(), 0.0);
  if (st.v.size() != x.size()) st.v.assign(x.size(), 0.0);
  ++st.t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < x.size(); ++i) {
    st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * g[i];
    st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * g[i] * g[i];
    x[i] -= lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + eps);
  }
}

void ema_update(std::span<double> shadow, std::span<const double> x, double decay) {
  if (decay == 0.0) {
    std::copy(x.begin(), x.end(), shadow.begin());
    return;
  }
  for (std::size_t i = 0; i < shadow.size(); ++i) shadow[i] += (1.0 - decay) * (x[i] - shadow[i]);
}

void clamp_labels(std::span<double> labels, std::span<const double> previous, std::size_t classes) {
  for (std::size_t r = 0; r * classes < labels.size(); ++r) {
    bool positive = false;
    for (std::size_t c = 0; c < classes; ++c) {
      auto& v = labels[r * classes + c];
      if (v < 0.0) v = 0.0;
      positive = positive || v > 0.0;
    }
    if (!positive)
      for (std::size_t c = 0; c < classes; ++c) labels[r * classes + c] = previous[r * classes + c];
  }
}

RunRecord outer_step(RunState& st, const data::LabeledDataset& real, const OuterConfig& cfg) {
  const std::size_t epoch = ++st.epoch;
  RunRecord rec;
  rec.epoch = epoch;
  rec.stage = st.stage.stage;

  const auto batch = draw_batch(real, cfg.val_batch, substream(cfg.seed, "outer-batch", epoch));

  // Flips and right-angle rotations are pixel permutations; gradients map back.
  SyntheticDataset S = st.S;
  std::vector<std::vector<std::size_t>> perms;
  if (cfg.augment && image_shaped(S.sample_shape)) {
    Rng rng(substream(cfg.seed, "augment", epoch));
    const std::size_t f = S.features();
    for (std::size_t r = 0; r < S.rows(); ++r) {
      perms.push_back(augment_permutation(S.sample_shape, draw_augment(rng)));
      const auto& p = perms.back();
      for (std::size_t i = 0; i < f; ++i) S.images[r * f + i] = st.S.images[r * f + p[i]];
    }
  }

  StepGradient sg = psp::active(cfg.psp, S.sample_shape) ? patch_gradient(st, S, batch, cfg, epoch)
                                                          : whole_image_gradient(st, S, batch, cfg, epoch);
  if (!perms.empty()) {
    const std::size_t f = S.features();
    std::vector<double> back(sg.images.size(), 0.0);
    for (std::size_t r = 0; r < S.rows(); ++r)
      for (std::size_t i = 0; i < f; ++i) back[r * f + perms[r][i]] += sg.images[r * f + i];
    sg.images = std::move(back);
  }

  const auto& d = sg.diag;
  rec.outer_loss = d.outer_loss;
  rec.position = d.window.end;
  rec.window_size = d.window.steps();
  rec.window_start = d.window.start();
  rec.probability = d.probability;
  rec.hvp_count = d.hvp_count;
  rec.lrha_fallbacks = d.lrha_fallbacks;
  rec.grad_norm_mean = d.grad_norm_mean;
  rec.grad_norm_max = d.grad_norm_max;
  rec.accuracy = 100.0 * d.accuracy_at_end;
  rec.align_loss = sg.align;

  auto g = concat(sg.images, sg.labels);
  if (!all_finite(g)) {
    rec.skipped = true;
    double s = 0.0;
    for (double x : g) s += x * x;
    rec.meta_norm = std::sqrt(s);
  } else {
    rec.meta_norm = clip_global_norm(g, cfg.clip_norm);
    rec.clipped = rec.meta_norm > cfg.clip_norm;
    auto x = concat(st.S.images, st.S.labels);
    adam_update(x, g, st.adam, cfg.outer_lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    const std::size_t ni = st.S.images.size();
    std::copy(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(ni), st.S.images.begin());
    std::vector<double> labels(x.begin() + static_cast<std::ptrdiff_t>(ni), x.end());
    clamp_labels(labels, st.S.labels, st.S.classes);
    st.S.labels = std::move(labels);
  }
  ema_update(st.shadow.images, st.S.images, cfg.ema_decay);
  ema_update(st.shadow.labels, st.S.labels, cfg.ema_decay);

  if (st.previous_accuracy) {
    rec.delta_a = rec.accuracy - *st.previous_accuracy;
    if (!cfg.fixed_stage) {
      auto sc = cfg.schedule;
      sc.count_early = schedule::count_from_fraction(cfg.count_early_pct, cfg.epochs);
      sc.count_mid = schedule::count_from_fraction(cfg.count_mid_pct, cfg.epochs);
      st.stage = schedule::update_stage(st.stage, rec.delta_a, sc);
    }
  }
  st.previous_accuracy = rec.accuracy;
  return rec;
}

EvalResult evaluate(const SyntheticDataset& S, const data::LabeledDataset& test, const models::ModelSpec& spec,
                    const EvalConfig& cfg, std::uint64_t seed) {
  if (cfg.seeds < 1) throw ConfigError("evaluate: seeds must be >= 1");
  if (test.rows() == 0) throw ConfigError("evaluate: empty test set");
  il::Problem pb;
  pb.spec = spec;
  pb.cfg.T = std::max<std::size_t>(1, cfg.steps);
  pb.cfg.alpha = cfg.lr;
  pb.cfg.optimizer = cfg.optimizer;
  il::validate(pb.cfg);

  EvalResult res;
  res.accuracies.assign(cfg.seeds, 0.0);
  auto one = [&](std::size_t i) {
    auto ck = il::initial_checkpoint(pb, models::init(spec, substream(seed, "eval", i)).flat);
    try {
      for (std::size_t t = 1; t <= cfg.steps; ++t) ck = il::step_untaped(pb, ck, S, t);
      ad::Tape tape;
      const auto logits = models::forward(spec, tape.constant({ck.theta.size()}, ck.theta),
                                          tape.constant({test.rows(), test.features()}, test.x));
      res.accuracies[i] = 100.0 * models::accuracy(logits.values(), spec.classes, test.y);
    } catch (const NonFiniteError&) {
      res.accuracies[i] = 0.0;  // diverged training counts as a miss on every example
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(cfg.threads, cfg.seeds));
  if (threads == 1) {
    for (std::size_t i = 0; i < cfg.seeds; ++i) one(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < cfg.seeds; i += threads) one(i);
      });
    for (auto& t : pool) t.join();
  }
  const double n = static_cast<double>(cfg.seeds);
  res.mean = std::accumulate(res.accuracies.begin(), res.accuracies.end(), 0.0) / n;
  double ss = 0.0;
  for (double a : res.accuracies) ss += (a - res.mean) * (a - res.mean);
  res.stddev = cfg.seeds > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return res;
}

RunReport run(const OuterConfig& cfg, const data::LabeledDataset& train, const data::LabeledDataset& test) {
  const auto started = std::chrono::steady_clock::now();
  RunReport rep;
  auto st = start(cfg, train);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    rep.records.push_back(outer_step(st, train, cfg));
    const auto& r = rep.records.back();
    rep.total_hvp += r.hvp_count;
    rep.total_fallbacks += r.lrha_fallbacks;
    rep.skipped_updates += r.skipped ? 1 : 0;
  }
  rep.final_set = st.shadow;
  rep.eval = evaluate(rep.final_set, test, cfg.spec, cfg.eval, substream(cfg.seed, "eval"));
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return rep;
}

// --- preprocessing ----------------------------------------------------------

ZcaTransform fit_zca(const data::LabeledDataset& d, double lambda) {
  if (d.rows() == 0) throw ConfigError("zca: empty dataset");
  if (!(lambda >= 0.0)) throw ConfigError("zca: lambda must be >= 0");
  const auto n = static_cast<Eigen::Index>(d.rows()), f = static_cast<Eigen::Index>(d.features());
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(d.x.data(), n, f);
  ZcaTransform z;
  z.lambda = lambda;
  z.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - z.mean.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd e = (eig.eigenvalues().array().max(0.0) + lambda).matrix();
  if ((e.array() <= 0.0).any()) throw ConfigError("zca: covariance is singular and lambda is 0");
  const Eigen::MatrixXd& v = eig.eigenvectors();
  z.whiten = v * e.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();
  z.unwhiten = v * e.cwiseSqrt().asDiagonal() * v.transpose();
  return z;
}

void apply_zca(const ZcaTransform& z, std::span<double> rows_data, std::size_t features) {
  const auto f = static_cast<Eigen::Index>(features);
  if (z.mean.size() != f) throw ShapeError("zca: feature count mismatch");
  const auto n = static_cast<Eigen::Index>(rows_data.size() / features);
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(rows_data.data(), n, f);
  const Eigen::MatrixXd out = (x.rowwise() - z.mean.transpose()) * z.whiten;  // whiten is symmetric
  x = out;
}

void invert_zca(const ZcaTransform& z, std::span<double> rows_data, std::size_t features) {
  const auto f = static_cast<Eigen::Index>(features);
  if (z.mean.size() != f) throw ShapeError("zca: feature count mismatch");
  const auto n = static_cast<Eigen::Index>(rows_data.size() / features);
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(rows_data.data(), n, f);
  const Eigen::MatrixXd out = (x * z.unwhiten).rowwise() + z.mean.transpose();
  x = out;
}

std::pair<data::LabeledDataset, ZcaTransform> zca_whiten(const data::LabeledDataset& d, double lambda) {
  auto z = fit_zca(d, lambda);
  auto out = d;
  apply_zca(z, out.x, out.features());
  return {std::move(out), std::move(z)};
}

std::vector<std::size_t> augment_permutation(const ad::Shape& shape, const AugmentDraw& draw) {
  if (!image_shaped(shape)) throw ShapeError("augment: expected a square H x W x C image, got " + ad::to_string(shape));
  const std::size_t n = shape[0], C = shape[2];
  std::vector<std::size_t> perm(n * n * C);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      // Output pixel (r, c) reads the source pixel obtained by undoing the
      // rotation, then the flip.
      std::size_t sr = r, sc = c;
      for (std::size_t q = 0; q < draw.quarter_turns % 4; ++q) {
        const std::size_t nr = sc, nc = n - 1 - sr;
        sr = nr;
        sc = nc;
      }
      if (draw.flip) sc = n - 1 - sc;
      for (std::size_t ch = 0; ch < C; ++ch) perm[(r * n + c) * C + ch] = (sr * n + sc) * C + ch;
    }
  return perm;
}

AugmentDraw draw_augment(Rng& rng) {
  AugmentDraw d;
  d.flip = rng.uniform() < 0.5;
  d.quarter_turns = rng.below(4);
  return d;
}

void augment(std::span<double> image, const ad::Shape& shape, const AugmentDraw& draw) {
  const auto perm = augment_permutation(shape, draw);
  if (image.size() != perm.size()) throw ShapeError("augment: image storage does not match its shape");
  const std::vector<double> src(image.begin(), image.end());
  for (std::size_t i = 0; i < perm.size(); ++i) image[i] = src[perm[i]];
}

void augment(std::span<double> images, const ad::Shape& shape, Rng& rng) {
  const std::size_t f = ad::numel(shape);
  if (f == 0 || images.size() % f != 0) throw ShapeError("augment: batch storage is not a whole number of images");
  for (std::size_t r = 0; r < images.size() / f; ++r) augment(images.subspan(r * f, f), shape, draw_augment(rng));
}

std::string to_string(InitMode m) { return m == InitMode::kGaussian ? "gaussian" : "real-sample"; }

InitMode parse_init_mode(const std::string& s) {
  if (s == "gaussian") return InitMode::kGaussian;
  if (s == "real-sample") return InitMode::kRealSample;
  throw ConfigError("unknown init mode '" + s + "' (gaussian, real-sample)");
}

}  // namespace atbptt::distill
