#include "atbptt/commands.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include "json.hpp"

namespace atbptt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'A', 'T', 'B', 'S'};
constexpr std::uint32_t kSidecarVersion = 1;
constexpr const char* kVersion = "0.1.0";

template <class T>
void put(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& buf) : buf_(buf) {}
  template <class T>
  T get(const char* what) {
    if (pos_ + sizeof(T) > buf_.size()) {
      throw FormatError("sidecar: truncated while reading " + std::string(what) + " at byte " + std::to_string(pos_));
    }
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  const std::string& buf_;
  std::size_t pos_ = 0;
};

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write '" + path.string() + "'");
  f << content;
  if (!f) throw Error("write failed for '" + path.string() + "'");
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json eval_json(const distill::EvalResult& e) {
  return {{"accuracies", e.accuracies}, {"mean", e.mean}, {"std", e.stddev}, {"seeds", e.accuracies.size()}};
}

json versions() {
  return {{"atbptt", kVersion},
          {"compiler", std::string("gcc ") + __VERSION__},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)}};
}

}  // namespace

Splits load_data(const ExperimentConfig& cfg) {
  validate(cfg);
  const auto& d = cfg.data;
  data::LabeledDataset all;
  switch (d.source) {
    case DataSource::kBlobs: {
      data::BlobOptions o;
      o.classes = d.classes;
      o.per_class = d.per_class;
      o.dim = d.dim;
      o.image_side = d.image_side;
      o.separation = d.separation;
      o.stddev = d.stddev;
      o.seed = substream(cfg.outer.seed, "data-gen");
      all = data::make_blobs(o);
      break;
    }
    case DataSource::kIdx: all = data::load_idx(d.images, d.labels); break;
    case DataSource::kCsv: all = data::load_csv(d.images); break;
  }
  const std::vector<double> fractions{d.train_fraction, d.val_fraction, d.test_fraction};
  auto parts = data::split(all, fractions, substream(cfg.outer.seed, "data"));
  Splits s{std::move(parts[0]), std::move(parts[1]), std::move(parts[2]), std::nullopt};
  if (d.zca) {
    s.zca = distill::fit_zca(s.train, d.zca_lambda);
    for (auto* part : {&s.train, &s.val, &s.test}) distill::apply_zca(*s.zca, part->x, part->features());
  }
  return s;
}

ExperimentConfig resolve(ExperimentConfig cfg, const data::LabeledDataset& train) {
  cfg.outer.spec.input = train.sample_shape;
  cfg.outer.spec.classes = train.classes;
  cfg.outer.lrha.enabled = cfg.outer.mode == innerloop::HessianMode::kLowRank;
  distill::validate(cfg.outer);
  return cfg;
}

fs::path output_root(const ExperimentConfig& cfg, const std::optional<std::string>& out_flag) {
  if (out_flag && !out_flag->empty()) return *out_flag;
  if (const char* env = std::getenv("ATBPTT_OUT_ROOT"); env && *env) return env;
  return cfg.out_dir;
}

void write_sidecar(const fs::path& path, const SyntheticDataset& S) {
  if (S.images.size() != S.rows() * S.features() || S.labels.size() != S.rows() * S.classes) {
    throw ShapeError("sidecar: synthetic set storage does not match its shape");
  }
  std::string buf(kMagic, 4);
  put<std::uint32_t>(buf, kSidecarVersion);
  put<std::uint64_t>(buf, S.classes);
  put<std::uint64_t>(buf, S.ipc);
  put<std::uint64_t>(buf, S.sample_shape.size());
  for (auto dim : S.sample_shape) put<std::uint64_t>(buf, dim);
  for (double v : S.images) put(buf, v);
  for (double v : S.labels) put(buf, v);
  put<std::uint64_t>(buf, fnv1a(buf));
  write_file(path, buf);
}

SyntheticDataset read_sidecar(const fs::path& path) {
  if (!fs::exists(path)) throw FormatError("sidecar: missing file '" + path.string() + "'");
  const auto buf = read_file(path);
  if (buf.size() < 12 || std::memcmp(buf.data(), kMagic, 4) != 0) throw FormatError("sidecar: bad magic at byte 0");
  std::uint64_t stored = 0;
  std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
  if (fnv1a(std::string_view(buf.data(), buf.size() - 8)) != stored) {
    throw FormatError("sidecar: checksum mismatch in '" + path.string() + "'");
  }
  Reader r(buf);
  for (int i = 0; i < 4; ++i) r.get<char>("magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kSidecarVersion) throw FormatError("sidecar: unsupported version " + std::to_string(version));
  SyntheticDataset S;
  S.classes = r.get<std::uint64_t>("classes");
  S.ipc = r.get<std::uint64_t>("ipc");
  const auto rank = r.get<std::uint64_t>("rank");
  if (rank < 1 || rank > 3) throw FormatError("sidecar: bad sample rank " + std::to_string(rank));
  for (std::uint64_t i = 0; i < rank; ++i) S.sample_shape.push_back(r.get<std::uint64_t>("dims"));
  const std::size_t n_images = S.rows() * S.features(), n_labels = S.rows() * S.classes;
  if (r.remaining() != (n_images + n_labels) * sizeof(double) + 8) {
    throw FormatError("sidecar: payload size does not match the header at byte " + std::to_string(r.pos()));
  }
  S.images.resize(n_images);
  S.labels.resize(n_labels);
  for (auto& v : S.images) v = r.get<double>("images");
  for (auto& v : S.labels) v = r.get<double>("labels");
  return S;
}

void write_pgm(const fs::path& path, const SyntheticDataset& S) {
  const bool image = S.sample_shape.size() == 3;
  const std::size_t f = S.features();
  const std::size_t C = image ? S.sample_shape[2] : 1;
  const std::size_t h = image ? S.sample_shape[0] : static_cast<std::size_t>(std::ceil(std::sqrt(double(f))));
  const std::size_t w = image ? S.sample_shape[1] : (f + h - 1) / h;
  const std::size_t pad = 1, W = S.ipc * (w + pad) + pad, H = S.classes * (h + pad) + pad;
  std::string pixels(W * H, '\0');
  for (std::size_t r = 0; r < S.rows(); ++r) {
    std::vector<double> gray(h * w, 0.0);
    for (std::size_t i = 0; i < h * w && i * C < f; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < C; ++c) s += S.images[r * f + i * C + c];
      gray[i] = s / static_cast<double>(C);
    }
    const auto [lo, hi] = std::minmax_element(gray.begin(), gray.end());
    const double span = *hi - *lo;
    const std::size_t oy = (r / S.ipc) * (h + pad) + pad, ox = (r % S.ipc) * (w + pad) + pad;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double v = span > 0.0 ? (gray[y * w + x] - *lo) / span : 0.5;
        pixels[(oy + y) * W + ox + x] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
      }
  }
  write_file(path, "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n" + pixels);
}

std::string epochs_csv(const std::vector<distill::RunRecord>& records) {
  std::string out =
      "epoch,stage,position,window_start,window_size,probability,outer_loss,accuracy,delta_a,meta_norm,clipped,"
      "skipped,hvp_count,lrha_fallbacks,grad_norm_mean,grad_norm_max,align_loss\n";
  for (const auto& r : records) {
    out += std::to_string(r.epoch) + "," + schedule::to_string(r.stage) + "," + std::to_string(r.position) + "," +
           std::to_string(r.window_start) + "," + std::to_string(r.window_size) + "," + fmt(r.probability) + "," +
           fmt(r.outer_loss) + "," + fmt(r.accuracy) + "," + fmt(r.delta_a) + "," + fmt(r.meta_norm) + "," +
           (r.clipped ? "1" : "0") + "," + (r.skipped ? "1" : "0") + "," + std::to_string(r.hvp_count) + "," +
           std::to_string(r.lrha_fallbacks) + "," + fmt(r.grad_norm_mean) + "," + fmt(r.grad_norm_max) + "," +
           fmt(r.align_loss) + "\n";
  }
  return out;
}

DistillOutcome cmd_distill(const ExperimentConfig& raw, const fs::path& root) {
  const auto splits = load_data(raw);
  const auto cfg = resolve(raw, splits.train);
  DistillOutcome out;
  out.dir = root / cfg.run_id;
  fs::create_directories(out.dir);
  write_file(out.dir / "config.ini", to_ini(cfg));
  out.report = distill::run(cfg.outer, splits.train, splits.test);
  const auto& rep = out.report;
  write_file(out.dir / "epochs.csv", epochs_csv(rep.records));
  write_sidecar(out.dir / "distilled.bin", rep.final_set);
  write_pgm(out.dir / "distilled.pgm", rep.final_set);

  json j;
  j["run_id"] = cfg.run_id;
  j["seed"] = cfg.outer.seed;
  j["seeds"] = {{"init", "substream(seed, init, epoch)"},
                {"truncation", "substream(seed, truncation)"},
                {"lrha", "substream(seed, lrha, epoch)"},
                {"eval", "substream(seed, eval)"}};
  j["versions"] = versions();
  j["strategy"] = innerloop::to_string(cfg.outer.strategy);
  j["mode"] = innerloop::to_string(cfg.outer.mode);
  j["epochs"] = rep.records.size();
  j["parameters"] = models::parameter_count(cfg.outer.spec);
  j["splits"] = {{"train", splits.train.rows()}, {"val", splits.val.rows()}, {"test", splits.test.rows()}};
  j["eval"] = eval_json(rep.eval);
  j["total_hvp"] = rep.total_hvp;
  j["lrha_fallbacks"] = rep.total_fallbacks;
  j["skipped_updates"] = rep.skipped_updates;
  j["final_stage"] = rep.records.empty() ? "early" : schedule::to_string(rep.records.back().stage);
  j["wall_seconds"] = rep.seconds;
  write_file(out.dir / "report.json", j.dump(2) + "\n");
  return out;
}

distill::EvalResult cmd_eval(const fs::path& sidecar, const ExperimentConfig& raw) {
  const auto S = read_sidecar(sidecar);
  const auto splits = load_data(raw);
  const auto cfg = resolve(raw, splits.train);
  if (S.features() != splits.test.features() || S.classes != splits.test.classes) {
    throw ConfigError("eval: sidecar shape " + ad::to_string(S.sample_shape) + " does not match the configured data");
  }
  const auto res = distill::evaluate(S, splits.test, cfg.outer.spec, cfg.outer.eval, substream(cfg.outer.seed, "eval"));
  json j = eval_json(res);
  j["sidecar"] = sidecar.string();
  write_file(sidecar.parent_path() / "eval.json", j.dump(2) + "\n");
  return res;
}

oracle::VerifyReport cmd_verify(oracle::Level level, std::uint64_t seed, std::optional<double> tolerance,
                                const fs::path& dir) {
  const auto rep = oracle::verify_suite(level, seed, tolerance);
  json cells = json::array();
  for (const auto& c : rep.cells) {
    cells.push_back(
        {{"name", c.name}, {"error", c.error}, {"tolerance", c.tolerance}, {"asserted", c.asserted}, {"pass", c.pass}});
  }
  json j{{"level", rep.level}, {"seed", rep.seed},       {"pass", rep.all_pass()},
         {"failures", rep.failures()}, {"cells", cells}};
  if (tolerance) j["tolerance_override"] = *tolerance;
  fs::create_directories(dir);
  write_file(dir / "verify.json", j.dump(2) + "\n");
  return rep;
}

std::vector<bench::BenchRow> cmd_bench(const ExperimentConfig& cfg, const fs::path& dir) {
  validate(cfg);
  const auto rows = bench::run(cfg.bench, cfg.outer.seed);
  fs::create_directories(dir);
  write_file(dir / "bench.csv", bench::to_csv(rows));
  return rows;
}

}  // namespace atbptt::cli
