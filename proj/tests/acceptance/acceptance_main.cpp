// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Tolerances are fixed below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "atbptt/commands.hpp"
#include "atbptt/lrha.hpp"
#include "atbptt/oracle.hpp"
#include "atbptt/psp.hpp"
#include "atbptt/schedule.hpp"

namespace ad = atbptt::ad;
namespace il = atbptt::innerloop;
namespace sch = atbptt::schedule;
namespace fs = std::filesystem;
using atbptt::Rng;
using atbptt::SyntheticDataset;
using atbptt::substream;

namespace {

struct Result {
  bool pass = false;
  std::string detail;
};

char buf[1024];

template <class... A>
std::string fmt(const char* f, A... a) {
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double rel_err(std::span<const double> a, std::span<const double> b) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double den = std::sqrt(std::max(na, nb));
  return den == 0.0 ? std::sqrt(d) : std::sqrt(d) / den;
}

std::vector<double> flat(const il::MetaGradient& mg) {
  auto v = mg.images;
  v.insert(v.end(), mg.labels.begin(), mg.labels.end());
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("atbptt-acceptance-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// --- 1 ----------------------------------------------------------------------

Result hypergradient_triangle() {
  constexpr std::size_t kInstances = 24;
  constexpr double kTolAnalytic = 1e-8, kTolFd = 1e-4, kMaxSeconds = 120.0;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(substream(2024, "acceptance-triangle"));
  double worst_analytic = 0.0, worst_fd = 0.0;
  std::size_t max_p = 0, max_rows = 0, done = 0;
  while (done < kInstances) {
    atbptt::oracle::ToyOptions o;
    o.dim = 2 + rng.below(5);
    o.classes = 2 + rng.below(2);
    o.hidden = 2 + rng.below(3);
    o.ipc = 1 + rng.below(3);
    o.T = 2 + rng.below(7);
    o.alpha = 0.05 + 0.15 * rng.uniform();
    o.seed = rng.engine()();
    const auto kind = done % 2 ? atbptt::oracle::ToyKind::kTwoLayerTanh : atbptt::oracle::ToyKind::kLogistic;
    const auto toy = atbptt::oracle::make_toy(kind, o);
    const std::size_t p = toy.theta0.size();
    if (p > 50 || toy.S.rows() > 60) continue;
    max_p = std::max(max_p, p);
    max_rows = std::max(max_rows, toy.S.rows());

    il::StrategyInputs in;
    in.strategy = static_cast<il::Strategy>(done % 4);
    in.window = 1 + rng.below(o.T);
    in.schedule.window = 1 + rng.below(o.T);
    in.schedule.window_range = rng.below(2);
    in.first_iteration = rng.below(2) == 0;
    in.stage = static_cast<sch::Stage>(rng.below(3));
    Rng draws(rng.engine()());
    in.rng = &draws;
    const auto mg = il::meta_gradient(toy.problem, toy.theta0, toy.S, in);
    const auto an = il::analytic_meta_gradient(toy.problem, toy.theta0, toy.S, mg.window);
    const auto fd = atbptt::oracle::fd_hypergradient(toy.problem, toy.theta0, toy.S, mg.window);
    const auto b = flat(mg), a = flat(an), f = flat(fd);
    worst_analytic = std::max(worst_analytic, rel_err(b, a));
    worst_fd = std::max({worst_fd, rel_err(b, f), rel_err(a, f)});
    ++done;
  }
  const double secs = seconds_since(t0);
  return {worst_analytic <= kTolAnalytic && worst_fd <= kTolFd && secs <= kMaxSeconds,
          fmt("%zu instances (p <= %zu, |S| <= %zu, T <= 8); backprop-analytic %.2e (tol %.0e), fd pairs %.2e (tol "
              "%.0e), %.1f s (limit %.0f s)",
              done, max_p, max_rows, worst_analytic, kTolAnalytic, worst_fd, kTolFd, secs, kMaxSeconds)};
}

// --- 2 ----------------------------------------------------------------------

Result strategy_degeneracies() {
  constexpr double kTol = 1e-12;
  double worst = 0.0;
  std::size_t identical = 0, cases = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    atbptt::oracle::ToyOptions o;
    o.T = 5 + seed;
    o.seed = 100 + seed;
    const auto toy = atbptt::oracle::make_toy(atbptt::oracle::ToyKind::kTwoLayerTanh, o);
    const auto& pb = toy.problem;
    const std::size_t T = o.T, M = 3;
    auto run = [&](il::StrategyInputs in) { return flat(il::meta_gradient(pb, toy.theta0, toy.S, in)); };
    il::StrategyInputs bptt;
    il::StrategyInputs t_full{.strategy = il::Strategy::kTBptt, .window = T};
    il::StrategyInputs t_m{.strategy = il::Strategy::kTBptt, .window = M};
    il::StrategyInputs rat{.strategy = il::Strategy::kRatBptt, .window = M, .forced_end = T};
    il::StrategyInputs at{.strategy = il::Strategy::kAtBptt, .forced_end = T};
    at.schedule.window = T;
    at.schedule.window_range = 0;
    at.stage = sch::Stage::kMiddle;
    at.first_iteration = false;
    at.mode = il::HessianMode::kExact;
    const std::pair<std::vector<double>, std::vector<double>> pairs[] = {
        {run(t_full), run(bptt)}, {run(rat), run(t_m)}, {run(at), run(bptt)}};
    for (const auto& [x, y] : pairs) {
      ++cases;
      identical += x == y ? 1 : 0;
      worst = std::max(worst, rel_err(x, y));
    }
  }
  return {worst <= kTol, fmt("%zu cases (t-bptt M=T vs bptt, rat forced N=T vs t-bptt, at middle d=0 N=T vs bptt), "
                             "%zu bit-identical, max rel err %.2e (tol %.0e)",
                             cases, identical, worst, kTol)};
}

// --- 3 ----------------------------------------------------------------------

Result schedule_correctness() {
  constexpr double kTol = 1e-12;
  Rng rng(substream(2024, "acceptance-schedule"));
  double worst_sum = 0.0;
  std::size_t argmax_fail = 0, vectors = 0;
  for (std::size_t trial = 0; trial < 1000; ++trial) {
    const std::size_t T = 2 + rng.below(60);
    std::vector<double> norms(T);
    for (auto& x : norms) x = std::abs(rng.normal(1.0, 0.5)) + 1e-3;
    const bool standardize = trial % 2 == 0;
    for (auto stage : {sch::Stage::kEarly, sch::Stage::kMiddle, sch::Stage::kLate}) {
      const auto p = sch::trunc_probs(norms, stage, 1.0, standardize);
      worst_sum = std::max(worst_sum, std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0));
      const auto pa = std::max_element(p.begin(), p.end()) - p.begin();
      if (stage == sch::Stage::kEarly && pa != std::max_element(norms.begin(), norms.end()) - norms.begin()) {
        ++argmax_fail;
      }
      if (stage == sch::Stage::kLate && pa != std::min_element(norms.begin(), norms.end()) - norms.begin()) {
        ++argmax_fail;
      }
    }
    ++vectors;
  }
  std::size_t range_fail = 0, range_checks = 0;
  for (std::size_t W = 1; W <= 60; ++W)
    for (std::size_t d = 0; d <= 12; ++d)
      for (std::size_t N = 1; N <= 80; N += 3)
        for (double eta : {0.0, 1e-9, 0.1, 0.25, 0.5, 0.75, 0.999, 1.0}) {
          const auto w = sch::window_size(W, d, eta, N);
          const std::size_t lo = W > d ? W - d : 1, hi = std::min(N, W + d);
          // N below W - d leaves only the upper end: the window covers every existing step.
          const bool ok = lo <= hi ? (w >= lo && w <= hi) : w == hi;
          if (!ok) ++range_fail;
          ++range_checks;
        }
  std::size_t mn = 1000, mx = 0;
  for (int i = 0; i <= 1000; ++i) {
    const auto w = sch::window_size(40, 10, i / 1000.0, 200);
    mn = std::min(mn, w);
    mx = std::max(mx, w);
  }
  const bool pass = worst_sum <= kTol && argmax_fail == 0 && range_fail == 0 && mn == 30 && mx == 50;
  return {pass, fmt("%zu norm vectors x 3 stages: max |sum-1| %.1e (tol %.0e), %zu argmax mismatches; %zu W* range "
                    "violations in %zu checks; W=40 d=10 spans [%zu, %zu]",
                    vectors, worst_sum, kTol, argmax_fail, range_fail, range_checks, mn, mx)};
}

// --- 4 ----------------------------------------------------------------------

// Independent replay: the early stage ends after the X-th epoch with
// delta < M, the middle stage after the Y-th later epoch with delta < N.
std::pair<long, long> replay(const std::vector<double>& deltas, double m, double n, std::size_t X, std::size_t Y) {
  long t1 = -1, t2 = -1;
  std::size_t c = 0;
  for (std::size_t i = 0; i < deltas.size() && t1 < 0; ++i)
    if (deltas[i] < m && ++c >= X) t1 = static_cast<long>(i);
  if (t1 < 0) return {t1, t2};
  c = 0;
  for (std::size_t i = static_cast<std::size_t>(t1) + 1; i < deltas.size() && t2 < 0; ++i)
    if (deltas[i] < n && ++c >= Y) t2 = static_cast<long>(i);
  return {t1, t2};
}

Result stage_transitions() {
  Rng rng(substream(2024, "acceptance-stages"));
  std::size_t agree = 0, both_transitions = 0;
  constexpr std::size_t kSequences = 100;
  for (std::size_t s = 0; s < kSequences; ++s) {
    const std::size_t epochs = 40 + rng.below(400);
    sch::ScheduleConfig cfg;
    cfg.thresh_early = 1.5;
    cfg.thresh_mid = 1.0;
    cfg.count_early = sch::count_from_fraction(0.05, epochs);
    cfg.count_mid = sch::count_from_fraction(0.04, epochs);
    std::vector<double> deltas(epochs);
    const double drift = 3.0 * rng.uniform();
    for (std::size_t i = 0; i < epochs; ++i) {
      deltas[i] = drift * (1.0 - static_cast<double>(i) / epochs) + rng.normal(0.0, 1.5);
    }
    sch::StageState st;
    long t1 = -1, t2 = -1;
    for (std::size_t i = 0; i < epochs; ++i) {
      const auto before = st.stage;
      st = sch::update_stage(st, deltas[i], cfg);
      if (before == sch::Stage::kEarly && st.stage == sch::Stage::kMiddle) t1 = static_cast<long>(i);
      if (before == sch::Stage::kMiddle && st.stage == sch::Stage::kLate) t2 = static_cast<long>(i);
    }
    const auto ref = replay(deltas, cfg.thresh_early, cfg.thresh_mid, cfg.count_early, cfg.count_mid);
    if (ref == std::make_pair(t1, t2)) ++agree;
    if (t1 >= 0 && t2 >= 0) ++both_transitions;
  }
  return {agree == kSequences, fmt("%zu/%zu sequences match the replay (M=1.5, N=1.0, X=5%%, Y=4%% of epochs); %zu "
                                   "reach the late stage",
                                   agree, kSequences, both_transitions)};
}

// --- 5 ----------------------------------------------------------------------

Result lrha_fidelity() {
  constexpr double kTol = 1e-8;
  constexpr std::size_t kTrials = 50;
  Rng rng(substream(2024, "acceptance-lrha"));
  std::size_t ok = 0, hvp_ok = 0, mem_ok = 0;
  double worst = 0.0;
  for (std::size_t t = 0; t < kTrials; ++t) {
    const std::size_t p = 40 + rng.below(161);
    const std::size_t k = 4 + rng.below(p / 4 - 3);
    const std::size_t r = 1 + rng.below(k);
    Eigen::MatrixXd g(p, r);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ() * Eigen::MatrixXd::Identity(p, r);
    Eigen::VectorXd lam(r);
    for (std::size_t i = 0; i < r; ++i) lam[i] = (rng.below(2) ? 1.0 : -1.0) * (0.1 + 5.0 * rng.uniform());
    const Eigen::MatrixXd H = q * lam.asDiagonal() * q.transpose();
    const atbptt::lrha::HvpOperator op = [&](std::span<const double> v, std::span<double> out) {
      Eigen::Map<Eigen::VectorXd>(out.data(), p) = H * Eigen::Map<const Eigen::VectorXd>(v.data(), p);
    };
    atbptt::lrha::HvpCounter counter;
    Rng frng(rng.engine()());
    const auto h = atbptt::lrha::factorize(op, p, k, frng, counter);
    const Eigen::MatrixXd approx = (h.q * h.u) * h.sigma.asDiagonal() * (h.q * h.v).transpose();
    const double err = (approx - H).norm() / H.norm();
    worst = std::max(worst, err);
    ok += err <= kTol ? 1 : 0;
    hvp_ok += counter.count == 6 * k ? 1 : 0;
    mem_ok += counter.peak_extra_floats <= 2 * p * k + k * k ? 1 : 0;
  }
  return {ok == kTrials && hvp_ok == kTrials && mem_ok == kTrials,
          fmt("%zu/%zu recovered (max rel Frobenius %.2e, tol %.0e), %zu/%zu used exactly 6k HVPs, %zu/%zu within "
              "2pk + k^2 auxiliary floats (p <= 200)",
              ok, kTrials, worst, kTol, hvp_ok, kTrials, mem_ok, kTrials)};
}

// --- 6 ----------------------------------------------------------------------

Result efficiency_direction() {
  constexpr double kMaddLimit = 0.25, kMemLimit = 0.10;
  atbptt::cli::BenchConfig cfg;
  cfg.sizes = {1000};
  cfg.window = 20;
  cfg.k = 32;
  const auto rows = atbptt::bench::run(cfg, 0);
  const auto it = std::find_if(rows.begin(), rows.end(), [](const auto& r) { return r.method == "lrha"; });
  const auto dense = std::find_if(rows.begin(), rows.end(), [](const auto& r) { return r.method == "dense"; });
  if (it == rows.end() || dense == rows.end()) return {false, "bench produced no lrha/dense rows"};
  return {it->madd_ratio <= kMaddLimit && it->memory_ratio <= kMemLimit,
          fmt("p=1000 window 20 k=32: multiply-add ratio %.4f (limit %.2f), auxiliary-memory ratio %.4f (limit %.2f); "
              "wall %.2f s vs dense %.2f s (not asserted)",
              it->madd_ratio, kMaddLimit, it->memory_ratio, kMemLimit, it->seconds, dense->seconds)};
}

// --- 7 and 10 ---------------------------------------------------------------

atbptt::cli::ExperimentConfig blob_config() {
  return atbptt::cli::load_config(std::string(ATBPTT_SOURCE_DIR) + "/tools/configs/blobs.ini");
}

Result end_to_end(fs::path& at_run_dir) {
  constexpr double kMargin = 5.0, kRatSlack = 1.0, kMaxSeconds = 600.0;
  const auto t0 = std::chrono::steady_clock::now();
  auto at = blob_config();
  at.outer.strategy = il::Strategy::kAtBptt;
  at.run_id = "at-bptt";
  auto rat = at;
  rat.outer.strategy = il::Strategy::kRatBptt;
  rat.run_id = "rat-bptt";
  const auto root = scratch("end-to-end");
  const auto ra = atbptt::cli::cmd_distill(at, root);
  const auto rr = atbptt::cli::cmd_distill(rat, root);
  at_run_dir = ra.dir;

  const auto splits = atbptt::cli::load_data(at);
  const auto resolved = atbptt::cli::resolve(at, splits.train);
  const std::uint64_t seed = resolved.outer.seed;
  double baseline = 0.0;
  constexpr std::size_t kSubsets = 5;
  for (std::size_t i = 0; i < kSubsets; ++i) {
    const auto S = atbptt::distill::init_synthetic(splits.train, resolved.outer.ipc, substream(seed, "baseline", i),
                                                   atbptt::distill::InitMode::kRealSample);
    baseline += atbptt::distill::evaluate(S, splits.test, resolved.outer.spec, resolved.outer.eval,
                                          substream(seed, "eval"))
                    .mean;
  }
  baseline /= kSubsets;
  const double secs = seconds_since(t0);
  const double a = ra.report.eval.mean, r = rr.report.eval.mean;
  const bool pass = a >= baseline + kMargin && a >= r - kRatSlack && secs <= kMaxSeconds;
  return {pass, fmt("blobs dim 16, 500/class train, IPC 1, %zu epochs, seed %llu: at-bptt %.2f%% (+-%.2f), rat-bptt "
                    "%.2f%% (+-%.2f), random-real baseline %.2f%%; need at >= baseline + %.0f and at >= rat - %.0f; "
                    "%.1f s (limit %.0f s)",
                    at.outer.epochs, static_cast<unsigned long long>(seed), a, ra.report.eval.stddev, r,
                    rr.report.eval.stddev, baseline, kMargin, kRatSlack, secs, kMaxSeconds)};
}

Result reproducibility(const fs::path& first_at_run) {
  std::size_t same = 0, total = 0;
  // The end-to-end at-bptt run, repeated.
  {
    auto at = blob_config();
    at.outer.strategy = il::Strategy::kAtBptt;
    at.run_id = "at-bptt";
    const auto again = atbptt::cli::cmd_distill(at, scratch("repro-blobs"));
    ++total;
    same += !first_at_run.empty() && slurp(first_at_run / "epochs.csv") == slurp(again.dir / "epochs.csv") ? 1 : 0;
  }
  // Image data through PSP, augmentation and the low-rank adjoint, twice.
  auto img = blob_config();
  img.run_id = "psp-lowrank";
  img.data.per_class = 60;
  img.data.image_side = 8;
  img.outer.spec.widths = {16};
  img.outer.inner.T = 8;
  img.outer.schedule.window = 4;
  img.outer.schedule.window_range = 1;
  img.outer.mode = il::HessianMode::kLowRank;
  img.outer.psp.enabled = true;
  img.outer.psp.n = 2;
  img.outer.psp.min_side = 8;
  img.outer.augment = true;
  img.outer.epochs = 6;
  img.outer.eval.steps = 50;
  const auto a = atbptt::cli::cmd_distill(img, scratch("repro-psp-a"));
  const auto b = atbptt::cli::cmd_distill(img, scratch("repro-psp-b"));
  ++total;
  same += slurp(a.dir / "epochs.csv") == slurp(b.dir / "epochs.csv") ? 1 : 0;
  return {same == total, fmt("%zu/%zu repeated cmd_distill runs produced byte-identical epochs.csv (blob at-bptt; "
                             "8x8 images with psp + augment + low-rank)",
                             same, total)};
}

// --- 8 ----------------------------------------------------------------------

Result psp_checks() {
  constexpr double kFdTol = 1e-5;
  Rng rng(substream(2024, "acceptance-psp"));
  std::size_t roundtrip_ok = 0, trials = 0;
  for (std::size_t H : {8u, 12u, 16u, 32u}) {
    std::vector<double> img(H * H * 3);
    for (auto& x : img) x = rng.normal();
    const auto g = atbptt::psp::split(img, {H, H, 3}, 4);
    roundtrip_ok += g.patches.size() == 16 && atbptt::psp::reassemble(g) == img ? 1 : 0;
    ++trials;
  }
  // Zero iff centroids coincide.
  atbptt::psp::PatchPrototypes same;
  same.dim = 3;
  std::vector<double> base(4 * 3);
  for (auto& x : base) x = rng.normal();
  for (int c = 0; c < 16; ++c) {
    auto cell = base;
    std::rotate(cell.begin(), cell.begin() + 3 * (c % 4), cell.end());  // same rows, reordered
    same.cells.push_back(cell);
  }
  const double zero = atbptt::psp::align_loss(same);
  auto moved = same;
  moved.cells[5][1] += 1e-3;
  const double positive = atbptt::psp::align_loss(moved);

  // Taped gradient vs central differences.
  double worst = 0.0;
  for (int t = 0; t < 5; ++t) {
    atbptt::psp::PatchPrototypes pp;
    pp.dim = 4;
    for (int c = 0; c < 16; ++c) {
      std::vector<double> cell(3 * 4);
      for (auto& x : cell) x = rng.normal();
      pp.cells.push_back(cell);
    }
    ad::Tape tape;
    std::vector<ad::Tensor> leaves;
    for (const auto& c : pp.cells) leaves.push_back(tape.leaf({3, 4}, c));
    const auto grads = ad::grad(atbptt::psp::align_loss(leaves), leaves);
    std::vector<double> g, fd;
    for (std::size_t c = 0; c < pp.cells.size(); ++c) {
      const auto v = grads[c].to_vector();
      g.insert(g.end(), v.begin(), v.end());
      for (std::size_t i = 0; i < pp.cells[c].size(); ++i) {
        auto plus = pp, minus = pp;
        plus.cells[c][i] += 1e-6;
        minus.cells[c][i] -= 1e-6;
        fd.push_back((atbptt::psp::align_loss(plus) - atbptt::psp::align_loss(minus)) / 2e-6);
      }
    }
    worst = std::max(worst, rel_err(g, fd));
  }
  const bool pass = roundtrip_ok == trials && zero <= 1e-14 && positive > 0.0 && worst <= kFdTol;
  return {pass, fmt("n=4 split/reassemble exact with 16 patches %zu/%zu; L_align %.1e on coincident centroids, %.2e "
                    "after a 1e-3 shift; gradient vs fd %.2e (tol %.0e)",
                    roundtrip_ok, trials, zero, positive, worst, kFdTol)};
}

// --- 9 ----------------------------------------------------------------------

Result zca_checks() {
  constexpr double kOffDiag = 1e-6, kMatch = 1e-10;
  Rng rng(substream(2024, "acceptance-zca"));
  const std::size_t n = 400, f = 8;
  Eigen::MatrixXd mix(f, f);
  for (Eigen::Index i = 0; i < mix.size(); ++i) mix.data()[i] = rng.normal();
  atbptt::data::LabeledDataset d;
  d.sample_shape = {f};
  d.classes = 1;
  d.y.assign(n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    Eigen::VectorXd z(f);
    for (std::size_t k = 0; k < f; ++k) z[k] = rng.normal();
    const Eigen::VectorXd x = mix * z;
    d.x.insert(d.x.end(), x.data(), x.data() + f);
  }
  const auto [w, z0] = atbptt::distill::zca_whiten(d, 1e-14);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> xw(w.x.data(), n, f);
  const Eigen::MatrixXd c = xw.rowwise() - xw.colwise().mean();
  Eigen::MatrixXd cov = c.transpose() * c / static_cast<double>(n);
  const double diag_dev = (cov.diagonal().array() - 1.0).abs().maxCoeff();
  cov.diagonal().setZero();
  const double off = cov.cwiseAbs().maxCoeff();

  // Independent construction from the singular values of the centered data.
  const auto z = atbptt::distill::fit_zca(d, 0.1);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(d.x.data(), n, f);
  const Eigen::MatrixXd xc = (x.rowwise() - x.colwise().mean()) / std::sqrt(static_cast<double>(n));
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(xc, Eigen::ComputeThinV);
  const Eigen::VectorXd s2 = svd.singularValues().array().square();
  const Eigen::MatrixXd ref = svd.matrixV() * (s2.array() + 0.1).rsqrt().matrix().asDiagonal() * svd.matrixV().transpose();
  const double match = (z.whiten - ref).cwiseAbs().maxCoeff();
  return {off <= kOffDiag && match <= kMatch,
          fmt("lambda 1e-14: whitened covariance max off-diagonal %.2e (tol %.0e), diagonal deviation %.2e; lambda 0.1 "
              "vs SVD construction %.2e (tol %.0e)",
              off, kOffDiag, diag_dev, match, kMatch)};
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  fs::path at_dir;
  const std::vector<std::pair<std::string, std::function<Result()>>> criteria = {
      {"hypergradient oracle triangle", hypergradient_triangle},
      {"strategy degeneracies", strategy_degeneracies},
      {"schedule correctness", schedule_correctness},
      {"stage transitions", stage_transitions},
      {"lrha fidelity", lrha_fidelity},
      {"efficiency direction", efficiency_direction},
      {"end-to-end distillation", [&] { return end_to_end(at_dir); }},
      {"psp", psp_checks},
      {"zca whitening", zca_checks},
      {"reproducibility", [&] { return reproducibility(at_dir); }},
  };
  std::size_t failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Result r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    failures += r.pass ? 0 : 1;
    std::printf("%s criterion %zu (%s): %s\n", r.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                r.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed in %.1f s\n", criteria.size() - failures, criteria.size(), seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
