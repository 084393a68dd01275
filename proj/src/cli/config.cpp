#include "atbptt/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace atbptt::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError("expected a finite number, got '" + s + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ConfigError("expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_u64(trim(item)));
  return out;
}

std::string fmt_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct Field {
  std::string section, key;
  std::function<std::string(ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <class Ref>
Field size_field(std::string sec, std::string key, Ref ref) {
  return {std::move(sec), std::move(key), [ref](ExperimentConfig& c) { return std::to_string(ref(c)); },
          [ref](ExperimentConfig& c, const std::string& v) { ref(c) = static_cast<std::size_t>(parse_u64(v)); }};
}

template <class Ref>
Field double_field(std::string sec, std::string key, Ref ref) {
  return {std::move(sec), std::move(key), [ref](ExperimentConfig& c) { return fmt_double(ref(c)); },
          [ref](ExperimentConfig& c, const std::string& v) { ref(c) = parse_double(v); }};
}

template <class Ref>
Field bool_field(std::string sec, std::string key, Ref ref) {
  return {std::move(sec), std::move(key), [ref](ExperimentConfig& c) { return std::string(ref(c) ? "true" : "false"); },
          [ref](ExperimentConfig& c, const std::string& v) { ref(c) = parse_bool(v); }};
}

template <class Ref>
Field string_field(std::string sec, std::string key, Ref ref) {
  return {std::move(sec), std::move(key), [ref](ExperimentConfig& c) { return ref(c); },
          [ref](ExperimentConfig& c, const std::string& v) { ref(c) = v; }};
}

template <class Ref, class Show, class Read>
Field enum_field(std::string sec, std::string key, Ref ref, Show show, Read read) {
  return {std::move(sec), std::move(key), [ref, show](ExperimentConfig& c) { return show(ref(c)); },
          [ref, read](ExperimentConfig& c, const std::string& v) { ref(c) = read(v); }};
}

const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  namespace il = innerloop;
  static const std::vector<Field> table = {
      string_field("run", "id", [](C& c) -> std::string& { return c.run_id; }),
      string_field("run", "out", [](C& c) -> std::string& { return c.out_dir; }),
      {"run", "seed", [](C& c) { return std::to_string(c.outer.seed); },
       [](C& c, const std::string& v) { c.outer.seed = parse_u64(v); }},

      enum_field(
          "data", "source", [](C& c) -> DataSource& { return c.data.source; },
          [](DataSource s) { return to_string(s); }, parse_data_source),
      size_field("data", "classes", [](C& c) -> std::size_t& { return c.data.classes; }),
      size_field("data", "per_class", [](C& c) -> std::size_t& { return c.data.per_class; }),
      size_field("data", "dim", [](C& c) -> std::size_t& { return c.data.dim; }),
      size_field("data", "image_side", [](C& c) -> std::size_t& { return c.data.image_side; }),
      double_field("data", "separation", [](C& c) -> double& { return c.data.separation; }),
      double_field("data", "stddev", [](C& c) -> double& { return c.data.stddev; }),
      string_field("data", "images", [](C& c) -> std::string& { return c.data.images; }),
      string_field("data", "labels", [](C& c) -> std::string& { return c.data.labels; }),
      double_field("data", "train_fraction", [](C& c) -> double& { return c.data.train_fraction; }),
      double_field("data", "val_fraction", [](C& c) -> double& { return c.data.val_fraction; }),
      double_field("data", "test_fraction", [](C& c) -> double& { return c.data.test_fraction; }),
      bool_field("data", "zca", [](C& c) -> bool& { return c.data.zca; }),
      double_field("data", "zca_lambda", [](C& c) -> double& { return c.data.zca_lambda; }),

      enum_field(
          "model", "family", [](C& c) -> models::Family& { return c.outer.spec.family; },
          [](models::Family f) { return models::to_string(f); }, models::parse_family),
      {"model", "widths", [](C& c) { return fmt_sizes(c.outer.spec.widths); },
       [](C& c, const std::string& v) { c.outer.spec.widths = parse_sizes(v); }},
      enum_field(
          "model", "activation", [](C& c) -> models::Activation& { return c.outer.spec.activation; },
          [](models::Activation a) { return models::to_string(a); }, models::parse_activation),

      size_field("inner", "steps", [](C& c) -> std::size_t& { return c.outer.inner.T; }),
      double_field("inner", "lr", [](C& c) -> double& { return c.outer.inner.alpha; }),
      enum_field(
          "inner", "optimizer", [](C& c) -> il::InnerOptimizer& { return c.outer.inner.optimizer; },
          [](il::InnerOptimizer o) { return il::to_string(o); }, il::parse_optimizer),
      size_field("inner", "batch_size", [](C& c) -> std::size_t& { return c.outer.inner.batch_size; }),
      double_field("inner", "beta1", [](C& c) -> double& { return c.outer.inner.beta1; }),
      double_field("inner", "beta2", [](C& c) -> double& { return c.outer.inner.beta2; }),
      double_field("inner", "eps", [](C& c) -> double& { return c.outer.inner.eps; }),

      enum_field(
          "schedule", "strategy", [](C& c) -> il::Strategy& { return c.outer.strategy; },
          [](il::Strategy s) { return il::to_string(s); }, il::parse_strategy),
      size_field("schedule", "truncation_window", [](C& c) -> std::size_t& { return c.outer.window; }),
      size_field("schedule", "window", [](C& c) -> std::size_t& { return c.outer.schedule.window; }),
      size_field("schedule", "window_range", [](C& c) -> std::size_t& { return c.outer.schedule.window_range; }),
      double_field("schedule", "tau", [](C& c) -> double& { return c.outer.schedule.tau; }),
      double_field("schedule", "thresh_early", [](C& c) -> double& { return c.outer.schedule.thresh_early; }),
      double_field("schedule", "thresh_mid", [](C& c) -> double& { return c.outer.schedule.thresh_mid; }),
      double_field("schedule", "count_early_pct", [](C& c) -> double& { return c.outer.count_early_pct; }),
      double_field("schedule", "count_mid_pct", [](C& c) -> double& { return c.outer.count_mid_pct; }),
      bool_field("schedule", "standardize", [](C& c) -> bool& { return c.outer.schedule.standardize; }),
      {"schedule", "fixed_stage",
       [](C& c) { return c.outer.fixed_stage ? schedule::to_string(*c.outer.fixed_stage) : std::string("none"); },
       [](C& c, const std::string& v) {
         if (v == "none") {
           c.outer.fixed_stage.reset();
         } else {
           c.outer.fixed_stage = schedule::parse_stage(v);
         }
       }},

      enum_field(
          "lrha", "mode", [](C& c) -> il::HessianMode& { return c.outer.mode; },
          [](il::HessianMode m) { return il::to_string(m); }, il::parse_hessian_mode),
      size_field("lrha", "k_min", [](C& c) -> std::size_t& { return c.outer.lrha.k_min; }),
      double_field("lrha", "k_max_fraction", [](C& c) -> double& { return c.outer.lrha.k_max_fraction; }),
      bool_field("lrha", "redraw_on_qr_failure", [](C& c) -> bool& { return c.outer.lrha.redraw_on_qr_failure; }),

      bool_field("psp", "enabled", [](C& c) -> bool& { return c.outer.psp.enabled; }),
      size_field("psp", "n", [](C& c) -> std::size_t& { return c.outer.psp.n; }),
      double_field("psp", "lambda", [](C& c) -> double& { return c.outer.psp.lambda; }),
      size_field("psp", "min_side", [](C& c) -> std::size_t& { return c.outer.psp.min_side; }),

      size_field("outer", "epochs", [](C& c) -> std::size_t& { return c.outer.epochs; }),
      double_field("outer", "lr", [](C& c) -> double& { return c.outer.outer_lr; }),
      double_field("outer", "clip_norm", [](C& c) -> double& { return c.outer.clip_norm; }),
      double_field("outer", "ema_decay", [](C& c) -> double& { return c.outer.ema_decay; }),
      double_field("outer", "beta1", [](C& c) -> double& { return c.outer.beta1; }),
      double_field("outer", "beta2", [](C& c) -> double& { return c.outer.beta2; }),
      double_field("outer", "eps", [](C& c) -> double& { return c.outer.adam_eps; }),
      size_field("outer", "ipc", [](C& c) -> std::size_t& { return c.outer.ipc; }),
      enum_field(
          "outer", "init", [](C& c) -> distill::InitMode& { return c.outer.init; },
          [](distill::InitMode m) { return distill::to_string(m); }, distill::parse_init_mode),
      size_field("outer", "val_batch", [](C& c) -> std::size_t& { return c.outer.val_batch; }),
      bool_field("outer", "augment", [](C& c) -> bool& { return c.outer.augment; }),

      size_field("eval", "seeds", [](C& c) -> std::size_t& { return c.outer.eval.seeds; }),
      size_field("eval", "steps", [](C& c) -> std::size_t& { return c.outer.eval.steps; }),
      double_field("eval", "lr", [](C& c) -> double& { return c.outer.eval.lr; }),
      enum_field(
          "eval", "optimizer", [](C& c) -> il::InnerOptimizer& { return c.outer.eval.optimizer; },
          [](il::InnerOptimizer o) { return il::to_string(o); }, il::parse_optimizer),
      size_field("eval", "threads", [](C& c) -> std::size_t& { return c.outer.eval.threads; }),

      {"bench", "sizes", [](C& c) { return fmt_sizes(c.bench.sizes); },
       [](C& c, const std::string& v) { c.bench.sizes = parse_sizes(v); }},
      size_field("bench", "window", [](C& c) -> std::size_t& { return c.bench.window; }),
      size_field("bench", "k", [](C& c) -> std::size_t& { return c.bench.k; }),
      size_field("bench", "rows", [](C& c) -> std::size_t& { return c.bench.rows; }),
      double_field("bench", "alpha", [](C& c) -> double& { return c.bench.alpha; }),
  };
  return table;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  outer.spec.widths = {32};
  outer.spec.activation = models::Activation::kRelu;
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  std::map<std::pair<std::string, std::string>, const Field*> index;
  std::set<std::string> sections;
  for (const auto& f : fields()) {
    index[{f.section, f.key}] = &f;
    sections.insert(f.section);
  }
  ExperimentConfig cfg;
  std::set<std::pair<std::string, std::string>> seen;
  std::istringstream in(text);
  std::string raw, section;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) { throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + msg); };
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (!sections.count(section)) fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value, got '" + line + "'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (section.empty()) fail("key '" + key + "' outside any section");
    const auto it = index.find({section, key});
    if (it == index.end()) fail("unknown key '" + key + "' in [" + section + "]");
    if (!seen.insert({section, key}).second) fail("duplicate key '" + key + "' in [" + section + "]");
    try {
      it->second->set(cfg, value);
    } catch (const ConfigError& e) {
      fail(section + "." + key + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path);
}

std::string to_ini(const ExperimentConfig& cfg) {
  auto& c = const_cast<ExperimentConfig&>(cfg);  // getters only read
  std::string out, section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + f.section + "]\n";
      section = f.section;
    }
    out += f.key + " = " + f.get(c) + "\n";
  }
  return out;
}

void validate(const ExperimentConfig& cfg) {
  const auto& d = cfg.data;
  const double total = d.train_fraction + d.val_fraction + d.test_fraction;
  if (std::abs(total - 1.0) > 1e-3) throw ConfigError("data: train/val/test fractions must sum to 1");
  if (d.train_fraction <= 0.0 || d.test_fraction <= 0.0 || d.val_fraction < 0.0) {
    throw ConfigError("data: train and test fractions must be > 0");
  }
  if (d.source == DataSource::kBlobs && d.classes < 2) throw ConfigError("data: classes must be >= 2");
  if (d.source != DataSource::kBlobs && d.images.empty()) throw ConfigError("data: images path is required");
  if (d.zca && !(d.zca_lambda >= 0.0)) throw ConfigError("data: zca_lambda must be >= 0");
  if (cfg.run_id.empty() || cfg.run_id.find('/') != std::string::npos) {
    throw ConfigError("run: id must be a non-empty name without '/'");
  }
  if (cfg.bench.window < 1 || cfg.bench.k < 1 || cfg.bench.rows < 1) {
    throw ConfigError("bench: window, k and rows must be >= 1");
  }
}

std::string to_string(DataSource s) {
  switch (s) {
    case DataSource::kBlobs: return "blobs";
    case DataSource::kIdx: return "idx";
    case DataSource::kCsv: return "csv";
  }
  return "?";
}

DataSource parse_data_source(const std::string& s) {
  if (s == "blobs") return DataSource::kBlobs;
  if (s == "idx") return DataSource::kIdx;
  if (s == "csv") return DataSource::kCsv;
  throw ConfigError("unknown data source '" + s + "' (blobs, idx, csv)");
}

}  // namespace atbptt::cli
