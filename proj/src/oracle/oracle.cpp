#include "atbptt/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>

namespace atbptt::oracle {

namespace il = innerloop;

namespace {

double rel_err(std::span<const double> a, std::span<const double> b) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0.0 ? std::sqrt(d) : std::sqrt(d) / denom;
}

std::vector<double> flat(const il::MetaGradient& mg) {
  auto out = mg.images;
  out.insert(out.end(), mg.labels.begin(), mg.labels.end());
  return out;
}

Eigen::MatrixXd random_spd(std::size_t p, Rng& rng, double lo, double hi) {
  const auto P = static_cast<Eigen::Index>(p);
  Eigen::MatrixXd g(P, P);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd d(P);
  for (Eigen::Index i = 0; i < P; ++i) d[i] = lo + (hi - lo) * rng.uniform();
  return q * d.asDiagonal() * q.transpose();
}

double truncated_objective(const il::Problem& pb, std::span<const double> theta0, const SyntheticDataset& base,
                           const SyntheticDataset& window_set, const il::TruncationWindow& w) {
  auto ck = il::initial_checkpoint(pb, theta0);
  for (std::size_t t = 1; t <= w.end; ++t) ck = il::step_untaped(pb, ck, t < w.start() ? base : window_set, t);
  return il::outer_loss(pb, ck.theta);
}

}  // namespace

ToyProblem make_toy(ToyKind kind, const ToyOptions& opt) {
  ToyProblem toy;
  toy.kind = kind;
  auto& pb = toy.problem;
  pb.cfg.T = opt.T;
  pb.cfg.alpha = opt.alpha;
  Rng rng(substream(opt.seed, "toy", static_cast<std::uint64_t>(kind)));

  if (kind == ToyKind::kQuadratic) {
    const std::size_t p = opt.dim;
    toy.A = random_spd(p, rng, 0.5, 2.0);
    toy.closed_form = true;
    toy.theta0.resize(p);
    toy.target.resize(p);
    for (auto& x : toy.theta0) x = rng.normal();
    for (auto& x : toy.target) x = rng.normal();
    toy.S.sample_shape = {p};
    toy.S.classes = 1;
    toy.S.ipc = 1;
    toy.S.images.resize(p);
    for (auto& x : toy.S.images) x = rng.normal();
    toy.S.labels = {1.0};
    std::vector<double> a(toy.A.data(), toy.A.data() + toy.A.size());  // symmetric, so layout is irrelevant
    auto a_ptr = std::make_shared<const std::vector<double>>(std::move(a));
    pb.inner_loss = [a_ptr, p](const ad::Tensor& theta, const ad::Tensor& images, const ad::Tensor&) {
      const auto d = ad::sub(theta, ad::reshape(images, {p}));
      const auto am = theta.tape().constant({p, p}, *a_ptr);
      const auto ad_ = ad::reshape(ad::matmul(am, ad::reshape(d, {p, 1})), {p});
      return ad::scale(ad::dot(d, ad_), 0.5);
    };
    auto target = toy.target;
    pb.outer_loss = [target, p](const ad::Tensor& theta) {
      const auto d = ad::sub(theta, theta.tape().constant({p}, target));
      return ad::scale(ad::dot(d, d), 0.5);
    };
    pb.spec.input = {p};
    pb.spec.classes = 1;
    return toy;
  }

  pb.spec.input = {opt.dim};
  pb.spec.classes = opt.classes;
  if (kind == ToyKind::kTwoLayerTanh) {
    pb.spec.widths = {opt.hidden};
    pb.spec.activation = models::Activation::kTanh;
  }
  toy.theta0 = models::init(pb.spec, substream(opt.seed, "toy-init")).flat;
  data::BlobOptions blobs;
  blobs.classes = opt.classes;
  blobs.per_class = 8;
  blobs.dim = opt.dim;
  blobs.separation = 2.0;
  blobs.seed = substream(opt.seed, "toy-val");
  pb.val = data::make_blobs(blobs);

  auto& S = toy.S;
  S.sample_shape = {opt.dim};
  S.classes = opt.classes;
  S.ipc = opt.ipc;
  S.images.resize(S.rows() * opt.dim);
  for (auto& x : S.images) x = rng.normal();
  S.labels.assign(S.rows() * opt.classes, 0.0);
  for (std::size_t r = 0; r < S.rows(); ++r) {
    for (std::size_t c = 0; c < opt.classes; ++c) S.labels[r * opt.classes + c] = 0.05 + 0.1 * rng.uniform();
    S.labels[r * opt.classes + r / opt.ipc] += 1.0;
  }
  return toy;
}

std::vector<double> closed_form_hypergradient(const ToyProblem& toy, const il::TruncationWindow& window) {
  if (toy.kind != ToyKind::kQuadratic) throw ConfigError("closed form exists for the quadratic toy only");
  const auto P = toy.A.rows();
  const double alpha = toy.problem.cfg.alpha;
  const Eigen::MatrixXd step = Eigen::MatrixXd::Identity(P, P) - alpha * toy.A;
  const Eigen::Map<const Eigen::VectorXd> theta0(toy.theta0.data(), P);
  const Eigen::Map<const Eigen::VectorXd> s(toy.S.images.data(), P);
  const Eigen::Map<const Eigen::VectorXd> target(toy.target.data(), P);
  Eigen::MatrixXd power_n = Eigen::MatrixXd::Identity(P, P);
  for (std::size_t t = 0; t < window.end; ++t) power_n = step * power_n;
  Eigen::MatrixXd power_w = Eigen::MatrixXd::Identity(P, P);
  for (std::size_t t = 0; t < window.steps(); ++t) power_w = step * power_w;
  const Eigen::VectorXd theta_n = power_n * theta0 + (Eigen::MatrixXd::Identity(P, P) - power_n) * s;
  const Eigen::VectorXd g =
      (Eigen::MatrixXd::Identity(P, P) - power_w).transpose() * (theta_n - target);
  std::vector<double> out(g.data(), g.data() + g.size());
  out.push_back(0.0);  // the label block does not enter the quadratic
  return out;
}

il::MetaGradient fd_hypergradient(const il::Problem& pb, std::span<const double> theta0, const SyntheticDataset& S,
                                  const il::TruncationWindow& window, double rel_eps) {
  if (!(rel_eps >= 1e-6 && rel_eps <= 1e-3)) throw ConfigError("fd_hypergradient: epsilon outside [1e-6, 1e-3]");
  il::validate(window, pb.cfg.T);
  std::vector<double> x = S.images;
  x.insert(x.end(), S.labels.begin(), S.labels.end());
  SyntheticDataset work = S;
  auto set = [&](std::size_t i, double v) {
    if (i < S.images.size())
      work.images[i] = v;
    else
      work.labels[i - S.images.size()] = v;
  };
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = rel_eps * std::max(1.0, std::abs(x[i]));
    set(i, x[i] + h);
    const double fp = truncated_objective(pb, theta0, S, work, window);
    set(i, x[i] - h);
    const double fm = truncated_objective(pb, theta0, S, work, window);
    set(i, x[i]);
    if (!std::isfinite(fp) || !std::isfinite(fm)) throw NonFiniteError("fd_hypergradient: non-finite outer loss");
    g[i] = (fp - fm) / (2.0 * h);
  }
  il::MetaGradient mg;
  mg.window = window;
  mg.images.assign(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(S.images.size()));
  mg.labels.assign(g.begin() + static_cast<std::ptrdiff_t>(S.images.size()), g.end());
  mg.outer_loss = truncated_objective(pb, theta0, S, S, window);
  return mg;
}

Eigen::MatrixXd dense_hessian(const ad::LossBuilder& loss, std::span<const double> theta) {
  const std::size_t p = theta.size();
  if (p > kDenseHessianMaxParams) {
    throw ConfigError("dense_hessian: p = " + std::to_string(p) + " exceeds " + std::to_string(kDenseHessianMaxParams));
  }
  const auto P = static_cast<Eigen::Index>(p);
  Eigen::MatrixXd h(P, P);
  std::vector<double> e(p, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    e[i] = 1.0;
    const auto col = ad::hvp(loss, theta, e);
    for (std::size_t r = 0; r < p; ++r) h(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = col[r];
    e[i] = 0.0;
  }
  return h;
}

bool VerifyReport::all_pass() const { return failures() == 0; }

std::size_t VerifyReport::failures() const {
  return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const CellResult& c) { return !c.pass; }));
}

VerifyReport verify_suite(Level level, std::uint64_t seed, std::optional<double> tolerance_override) {
  const auto started = std::chrono::steady_clock::now();
  VerifyReport report;
  report.level = to_string(level);
  report.seed = seed;
  auto add = [&](std::string name, double error, double tol, bool asserted = true) {
    CellResult c;
    c.name = std::move(name);
    c.error = error;
    c.tolerance = asserted && tolerance_override ? *tolerance_override : tol;
    c.asserted = asserted;
    c.pass = !asserted || (std::isfinite(error) && error <= c.tolerance);
    report.cells.push_back(std::move(c));
  };

  const std::vector<std::uint64_t> seeds =
      level == Level::kFast ? std::vector<std::uint64_t>{seed} : std::vector<std::uint64_t>{seed, seed + 1, seed + 2};
  const std::size_t T = level == Level::kFast ? 4 : 8;
  const il::Strategy strategies[] = {il::Strategy::kBptt, il::Strategy::kTBptt, il::Strategy::kRatBptt,
                                     il::Strategy::kAtBptt};

  for (const auto s : seeds) {
    for (const auto kind : {ToyKind::kQuadratic, ToyKind::kLogistic, ToyKind::kTwoLayerTanh}) {
      ToyOptions opt;
      opt.T = T;
      opt.seed = s;
      opt.dim = kind == ToyKind::kQuadratic ? 6 : 4;
      opt.alpha = kind == ToyKind::kQuadratic ? 0.1 : 0.3;
      const auto toy = make_toy(kind, opt);
      const auto& pb = toy.problem;
      const std::string prefix = to_string(kind) + "/seed" + std::to_string(s) + "/";
      const std::size_t p = toy.theta0.size();

      const ad::LossBuilder inner = [&](ad::Tape& tape, const ad::Tensor& theta) {
        const auto sx = tape.constant({toy.S.rows(), toy.S.features()}, toy.S.images);
        const auto sy = tape.constant({toy.S.rows(), toy.S.classes}, toy.S.labels);
        if (pb.inner_loss) return pb.inner_loss(theta, sx, sy);
        return models::loss(models::forward(pb.spec, theta, sx), sy);
      };
      const auto h = dense_hessian(inner, toy.theta0);
      add(prefix + "dense-hessian/symmetry", (h - h.transpose()).norm() / std::max(h.norm(), 1e-300), 1e-8);
      if (kind != ToyKind::kTwoLayerTanh) {
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (h + h.transpose()));
        add(prefix + "dense-hessian/min-eigenvalue-deficit", std::max(0.0, -eig.eigenvalues().minCoeff()), 1e-10);
      }
      if (kind == ToyKind::kQuadratic) add(prefix + "dense-hessian/equals-A", (h - toy.A).norm() / toy.A.norm(), 1e-12);

      Rng rng(substream(s, "verify", static_cast<std::uint64_t>(kind)));
      for (const auto strategy : strategies) {
        il::StrategyInputs in;
        in.strategy = strategy;
        in.window = std::max<std::size_t>(1, T / 2);
        in.rng = &rng;
        in.schedule.window = std::max<std::size_t>(1, T / 2);
        in.schedule.window_range = 1;
        in.stage = schedule::Stage::kEarly;
        const auto backprop = il::meta_gradient(pb, toy.theta0, toy.S, in);
        const auto& w = backprop.window;
        const std::string cell = prefix + il::to_string(strategy) + "/N" + std::to_string(w.end) + "w" +
                                 std::to_string(w.steps()) + "/";
        const auto analytic = il::analytic_meta_gradient(pb, toy.theta0, toy.S, w);
        const auto fd = fd_hypergradient(pb, toy.theta0, toy.S, w);
        add(cell + "analytic-vs-backprop", rel_err(flat(analytic), flat(backprop)), 1e-8);
        add(cell + "fd-vs-analytic", rel_err(flat(fd), flat(analytic)), 1e-4);
        add(cell + "fd-vs-backprop", rel_err(flat(fd), flat(backprop)), 1e-4);
        if (toy.closed_form) {
          const auto exact = closed_form_hypergradient(toy, w);
          add(cell + "closed-form-vs-analytic", rel_err(exact, flat(analytic)), 1e-10);
          add(cell + "closed-form-vs-fd", rel_err(exact, flat(fd)), 1e-6);
        }

        // Step-wise adjoint variants on the same window.
        auto adj = in;
        const auto tr = il::trace(pb, toy.theta0, toy.S, w.end);
        adj.mode = il::HessianMode::kAdjointExact;
        const auto adjoint = il::window_meta_gradient(pb, toy.S, tr, w, adj);
        add(cell + "adjoint-exact-vs-backprop", rel_err(flat(adjoint), flat(backprop)), 1e-8);

        adj.mode = il::HessianMode::kLowRank;
        adj.lrha.k_min = p;
        adj.lrha.k_max_fraction = 1.0;
        adj.lrha_seed = substream(s, "verify-lrha");
        const auto full_rank = il::window_meta_gradient(pb, toy.S, tr, w, adj);
        add(cell + "lrha-k=p-vs-exact", rel_err(flat(full_rank), flat(backprop)), 1e-7);

        adj.lrha.k_min = std::max<std::size_t>(1, p / 4);
        adj.lrha.k_max_fraction = 0.5;
        const auto low_rank = il::window_meta_gradient(pb, toy.S, tr, w, adj);
        add(cell + "lrha-k<p-vs-exact", rel_err(flat(low_rank), flat(backprop)), 0.0, false);
      }
    }
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

std::string to_string(ToyKind k) {
  switch (k) {
    case ToyKind::kQuadratic: return "quadratic";
    case ToyKind::kLogistic: return "logistic";
    case ToyKind::kTwoLayerTanh: return "two-layer-tanh";
  }
  return "?";
}

ToyKind parse_toy_kind(const std::string& s) {
  if (s == "quadratic") return ToyKind::kQuadratic;
  if (s == "logistic") return ToyKind::kLogistic;
  if (s == "two-layer-tanh") return ToyKind::kTwoLayerTanh;
  throw ConfigError("unknown toy problem '" + s + "'");
}

std::string to_string(Level l) { return l == Level::kFast ? "fast" : "full"; }

Level parse_level(const std::string& s) {
  if (s == "fast") return Level::kFast;
  if (s == "full") return Level::kFull;
  throw ConfigError("unknown verify level '" + s + "' (fast, full)");
}

}  // namespace atbptt::oracle
