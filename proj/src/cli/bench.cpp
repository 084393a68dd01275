#include "atbptt/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "atbptt/data.hpp"
#include "atbptt/innerloop.hpp"
#include "atbptt/lrha.hpp"

namespace atbptt::bench {

namespace {

constexpr std::size_t kClasses = 4;

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double den = std::sqrt(std::max(na, nb));
  return den == 0.0 ? std::sqrt(d) : std::sqrt(d) / den;
}

struct Setup {
  models::ModelSpec spec;
  innerloop::Problem pb;
  SyntheticDataset S;
  innerloop::UnrollTrace trace;
  std::vector<double> lambda_end;
};

Setup make_setup(std::size_t p, const cli::BenchConfig& cfg, std::uint64_t seed) {
  Setup s;
  s.spec = model_with_parameters(p);
  s.pb.spec = s.spec;
  s.pb.cfg.T = cfg.window;
  s.pb.cfg.alpha = cfg.alpha;
  data::BlobOptions o;
  o.classes = kClasses;
  o.per_class = 16;
  o.dim = s.spec.input_size();
  o.seed = substream(seed, "bench-val", p);
  s.pb.val = data::make_blobs(o);

  s.S.sample_shape = s.spec.input;
  s.S.classes = kClasses;
  s.S.ipc = (cfg.rows + kClasses - 1) / kClasses;
  Rng rng(substream(seed, "bench-synthetic", p));
  s.S.images.resize(s.S.rows() * s.spec.input_size());
  for (auto& x : s.S.images) x = rng.normal();
  s.S.labels.assign(s.S.rows() * kClasses, 0.0);
  for (std::size_t r = 0; r < s.S.rows(); ++r) s.S.labels[r * kClasses + r / s.S.ipc] = 1.0;

  const auto theta0 = models::init(s.spec, substream(seed, "bench-init", p)).flat;
  s.trace = innerloop::trace(s.pb, theta0, s.S, cfg.window);
  innerloop::outer_loss(s.pb, s.trace.at(cfg.window).theta, &s.lambda_end);
  return s;
}

ad::LossBuilder step_builder(const Setup& s) {
  return [&s](ad::Tape& tape, const ad::Tensor& theta) {
    const auto x = tape.constant({s.S.rows(), s.S.features()}, s.S.images);
    const auto y = tape.constant({s.S.rows(), s.S.classes}, s.S.labels);
    return models::loss(models::forward(s.spec, theta, x), y);
  };
}

template <class Fn>
double timed(Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Adjoint for steps window..2: lambda <- (I - alpha H_j) lambda.
BenchRow dense_row(const Setup& s, const cli::BenchConfig& cfg, std::vector<double>& lambda) {
  const std::size_t p = lambda.size();
  BenchRow row;
  row.method = "dense";
  row.k = p;
  const auto builder = step_builder(s);
  row.seconds = timed([&] {
    Eigen::MatrixXd H(p, p);
    std::vector<double> e(p, 0.0);
    for (std::size_t j = cfg.window; j >= 2; --j) {
      const auto& theta = s.trace.at(j - 1).theta;
      for (std::size_t c = 0; c < p; ++c) {
        e[c] = 1.0;
        const auto col = ad::hvp(builder, theta, e);
        e[c] = 0.0;
        for (std::size_t r = 0; r < p; ++r) H(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = col[r];
        ++row.hvp_count;
      }
      const Eigen::Map<const Eigen::VectorXd> l(lambda.data(), static_cast<Eigen::Index>(p));
      const Eigen::VectorXd next = l - cfg.alpha * (H * l);
      std::copy(next.data(), next.data() + p, lambda.begin());
      row.apply_madds += lrha::dense_damped_apply_madds(p);
    }
  });
  row.peak_aux_floats = p * p + p;
  return row;
}

BenchRow lrha_row(const Setup& s, const cli::BenchConfig& cfg, std::size_t k, std::uint64_t seed,
                  std::vector<double>& lambda) {
  const std::size_t p = lambda.size();
  BenchRow row;
  row.method = k == p ? "lrha-full-rank" : "lrha";
  row.k = k;
  const auto builder = step_builder(s);
  row.seconds = timed([&] {
    for (std::size_t j = cfg.window; j >= 2; --j) {
      const auto& theta = s.trace.at(j - 1).theta;
      const lrha::HvpOperator op = [&](std::span<const double> v, std::span<double> out) {
        const auto hv = ad::hvp(builder, theta, v);
        std::copy(hv.begin(), hv.end(), out.begin());
      };
      Rng rng(substream(seed, "bench-lrha", p * 100000 + j));
      lrha::HvpCounter counter;
      const auto h = lrha::factorize(op, p, k, rng, counter);
      lrha::HvpCounter apply;
      lambda = lrha::apply_damped(h, cfg.alpha, lambda, &apply);
      row.hvp_count += counter.count;
      row.apply_madds += apply.madds;
      row.peak_aux_floats = std::max(row.peak_aux_floats, counter.peak_extra_floats);
    }
  });
  return row;
}

BenchRow hvp_row(const Setup& s, const cli::BenchConfig& cfg, std::vector<double>& lambda) {
  const std::size_t p = lambda.size();
  BenchRow row;
  row.method = "hvp-exact";
  row.k = 0;
  const auto builder = step_builder(s);
  row.seconds = timed([&] {
    for (std::size_t j = cfg.window; j >= 2; --j) {
      const auto hv = ad::hvp(builder, s.trace.at(j - 1).theta, lambda);
      for (std::size_t i = 0; i < p; ++i) lambda[i] -= cfg.alpha * hv[i];
      ++row.hvp_count;
      row.apply_madds += p;
    }
  });
  row.peak_aux_floats = p;
  return row;
}

}  // namespace

models::ModelSpec model_with_parameters(std::size_t p) {
  // p = in * h + h + h * C + C  =>  h * (in + 1 + C) = p - C.
  if (p <= kClasses + 6) throw ConfigError("bench: p = " + std::to_string(p) + " is too small");
  const std::size_t rest = p - kClasses;
  for (std::size_t h = 16; h >= 2; --h) {
    if (rest % h != 0 || rest / h < kClasses + 2) continue;
    models::ModelSpec spec;
    spec.widths = {h};
    spec.activation = models::Activation::kTanh;
    spec.input = {rest / h - 1 - kClasses};
    spec.classes = kClasses;
    return spec;
  }
  throw ConfigError("bench: no one-hidden-layer model with exactly p = " + std::to_string(p) + " parameters");
}

std::vector<BenchRow> run(const cli::BenchConfig& cfg, std::uint64_t seed) {
  if (cfg.window < 2) throw ConfigError("bench: window must be >= 2");
  std::vector<BenchRow> rows;
  for (const std::size_t p : cfg.sizes) {
    const auto s = make_setup(p, cfg, seed);
    std::vector<BenchRow> group;
    auto dense_lambda = s.lambda_end;
    group.push_back(dense_row(s, cfg, dense_lambda));
    auto low_lambda = s.lambda_end;
    group.push_back(lrha_row(s, cfg, std::min(cfg.k, p), seed, low_lambda));
    group.back().adjoint_rel_err = rel_err(low_lambda, dense_lambda);
    if (cfg.k < p && p <= 200) {
      auto full = s.lambda_end;
      group.push_back(lrha_row(s, cfg, p, seed, full));
      group.back().adjoint_rel_err = rel_err(full, dense_lambda);
    }
    auto hv = s.lambda_end;
    group.push_back(hvp_row(s, cfg, hv));
    group.back().adjoint_rel_err = rel_err(hv, dense_lambda);
    const double dense_madds = static_cast<double>(group[0].apply_madds);
    for (auto& r : group) {
      r.p = p;
      r.window = cfg.window;
      r.madd_ratio = static_cast<double>(r.apply_madds) / dense_madds;
      r.memory_ratio = static_cast<double>(r.peak_aux_floats) / static_cast<double>(p * p);
      rows.push_back(r);
    }
  }
  return rows;
}

std::string to_csv(const std::vector<BenchRow>& rows) {
  std::string out =
      "p,method,k,window,hvp_count,apply_madds,madd_ratio,peak_aux_floats,memory_ratio,adjoint_rel_err,seconds\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%s,%zu,%zu,%zu,%zu,%.6f,%zu,%.6f,%.3e,%.4f\n", r.p, r.method.c_str(), r.k,
                  r.window, r.hvp_count, r.apply_madds, r.madd_ratio, r.peak_aux_floats, r.memory_ratio,
                  r.adjoint_rel_err, r.seconds);
    out += buf;
  }
  return out;
}

}  // namespace atbptt::bench
