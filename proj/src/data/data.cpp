#include "atbptt/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "atbptt/rng.hpp"

namespace atbptt::data {

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;
constexpr int kMaxCenterRetries = 1000;

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset, const std::string& path) {
  if (offset + 4 > buf.size()) {
    throw FormatError(path + ": truncated header at byte offset " + std::to_string(offset));
  }
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void put_be32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  os.write(b, 4);
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> rows) const {
  LabeledDataset out;
  out.sample_shape = sample_shape;
  out.classes = classes;
  out.tag = tag;
  const std::size_t f = features();
  out.x.reserve(rows.size() * f);
  out.y.reserve(rows.size());
  for (auto r : rows) {
    if (r >= this->rows()) throw ShapeError("subset: row " + std::to_string(r) + " out of range");
    auto src = row(r);
    out.x.insert(out.x.end(), src.begin(), src.end());
    out.y.push_back(y[r]);
  }
  return out;
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(classes, 0);
  for (int label : y) ++counts.at(static_cast<std::size_t>(label));
  return counts;
}

LabeledDataset make_blobs(const BlobOptions& opt) {
  if (opt.classes < 2) throw ConfigError("make_blobs: need at least 2 classes");
  const std::size_t dim = opt.image_side > 0 ? opt.image_side * opt.image_side : opt.dim;
  if (dim == 0) throw ConfigError("make_blobs: zero dimension");
  Rng rng(opt.seed);

  // Centers on a sphere-ish cloud wide enough that the separation is usually
  // met on the first draw; rejected draws are retried a bounded number of times.
  const double spread = opt.separation * std::max(1.0, std::sqrt(static_cast<double>(opt.classes)) / 2.0);
  std::vector<std::vector<double>> centers;
  for (std::size_t c = 0; c < opt.classes; ++c) {
    int tries = 0;
    for (;;) {
      std::vector<double> cand(dim);
      for (auto& v : cand) v = rng.normal(0.0, spread / std::sqrt(static_cast<double>(dim)) * 1.5);
      bool ok = true;
      for (const auto& other : centers) {
        double d2 = 0.0;
        for (std::size_t i = 0; i < dim; ++i) d2 += (cand[i] - other[i]) * (cand[i] - other[i]);
        if (std::sqrt(d2) < opt.separation) {
          ok = false;
          break;
        }
      }
      if (ok) {
        centers.push_back(std::move(cand));
        break;
      }
      if (++tries >= kMaxCenterRetries) {
        throw ConfigError("make_blobs: separation " + std::to_string(opt.separation) +
                          " infeasible after bounded retries");
      }
    }
  }

  LabeledDataset d;
  d.classes = opt.classes;
  d.sample_shape = opt.image_side > 0 ? ad::Shape{opt.image_side, opt.image_side, 1} : ad::Shape{dim};
  d.x.reserve(opt.classes * opt.per_class * dim);
  for (std::size_t c = 0; c < opt.classes; ++c) {
    for (std::size_t k = 0; k < opt.per_class; ++k) {
      for (std::size_t i = 0; i < dim; ++i) d.x.push_back(centers[c][i] + rng.normal(0.0, opt.stddev));
      d.y.push_back(static_cast<int>(c));
    }
  }
  return d;
}

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto buf = read_file(images_path);
  const std::uint32_t magic = read_be32(buf, 0, images_path);
  if (magic != kIdxImages) {
    std::ostringstream os;
    os << images_path << ": bad magic 0x" << std::hex << magic << " at byte offset 0 (expected 0x803)";
    throw FormatError(os.str());
  }
  const std::uint32_t n = read_be32(buf, 4, images_path);
  const std::uint32_t h = read_be32(buf, 8, images_path);
  const std::uint32_t w = read_be32(buf, 12, images_path);
  const std::uint64_t payload = std::uint64_t{n} * h * w;
  if (h == 0 || w == 0) throw FormatError(images_path + ": zero image dimension at byte offset 8");
  if (buf.size() < 16 + payload) {
    throw FormatError(images_path + ": truncated payload, expected " + std::to_string(16 + payload) +
                      " bytes, file ends at byte offset " + std::to_string(buf.size()));
  }
  LabeledDataset d;
  d.sample_shape = {h, w, 1};
  d.x.resize(payload);
  for (std::uint64_t i = 0; i < payload; ++i) d.x[i] = buf[16 + i] / 255.0;
  d.y.assign(n, 0);

  if (!labels_path.empty()) {
    const auto lb = read_file(labels_path);
    const std::uint32_t lm = read_be32(lb, 0, labels_path);
    if (lm != kIdxLabels) {
      std::ostringstream os;
      os << labels_path << ": bad magic 0x" << std::hex << lm << " at byte offset 0 (expected 0x801)";
      throw FormatError(os.str());
    }
    const std::uint32_t ln = read_be32(lb, 4, labels_path);
    if (ln != n) {
      throw FormatError(labels_path + ": label count " + std::to_string(ln) + " at byte offset 4 differs from " +
                        std::to_string(n) + " images");
    }
    if (lb.size() < 8 + std::uint64_t{n}) {
      throw FormatError(labels_path + ": truncated payload, file ends at byte offset " + std::to_string(lb.size()));
    }
    for (std::uint32_t i = 0; i < n; ++i) d.y[i] = lb[8 + i];
  }
  int max_label = 0;
  for (int v : d.y) max_label = std::max(max_label, v);
  d.classes = static_cast<std::size_t>(max_label) + 1;
  return d;
}

void write_idx(const LabeledDataset& d, const std::string& images_path, const std::string& labels_path) {
  if (d.sample_shape.size() != 3 || d.sample_shape[2] != 1) {
    throw ShapeError("write_idx: needs single-channel HxWx1 samples, got " + ad::to_string(d.sample_shape));
  }
  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw FormatError("cannot write " + images_path);
  put_be32(img, kIdxImages);
  put_be32(img, static_cast<std::uint32_t>(d.rows()));
  put_be32(img, static_cast<std::uint32_t>(d.sample_shape[0]));
  put_be32(img, static_cast<std::uint32_t>(d.sample_shape[1]));
  for (double v : d.x) {
    const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
    img.put(static_cast<char>(static_cast<unsigned char>(q)));
  }
  if (labels_path.empty()) return;
  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw FormatError("cannot write " + labels_path);
  put_be32(lab, kIdxLabels);
  put_be32(lab, static_cast<std::uint32_t>(d.rows()));
  for (int v : d.y) lab.put(static_cast<char>(static_cast<unsigned char>(v)));
}

LabeledDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": empty file");
  std::size_t columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (line.rfind("label", 0) != 0 || columns < 2) throw FormatError(path + ":1: header must be label,f0,f1,...");
  LabeledDataset d;
  d.sample_shape = {columns - 1};
  int max_label = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        if (col == 0) {
          const int label = std::stoi(cell, &used);
          if (label < 0) throw FormatError(path + ":" + std::to_string(lineno) + ": negative label");
          d.y.push_back(label);
          max_label = std::max(max_label, label);
        } else {
          d.x.push_back(std::stod(cell, &used));
        }
      } catch (const std::logic_error&) {
        throw FormatError(path + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
      ++col;
    }
    if (col != columns) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(columns) +
                        " columns, got " + std::to_string(col));
    }
  }
  d.classes = static_cast<std::size_t>(max_label) + 1;
  return d;
}

void write_csv(const LabeledDataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << "label";
  for (std::size_t i = 0; i < d.features(); ++i) out << ",f" << i;
  out << '\n';
  out.precision(17);
  for (std::size_t r = 0; r < d.rows(); ++r) {
    out << d.y[r];
    for (double v : d.row(r)) out << ',' << v;
    out << '\n';
  }
}

std::vector<LabeledDataset> split(const LabeledDataset& d, std::span<const double> fractions,
                                  std::uint64_t seed) {
  if (fractions.empty()) throw ConfigError("split: no fractions");
  double total = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw ConfigError("split: negative fraction");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split: fractions must sum to 1");

  std::vector<std::vector<std::size_t>> by_class(d.classes);
  for (std::size_t r = 0; r < d.rows(); ++r) by_class[static_cast<std::size_t>(d.y[r])].push_back(r);

  const std::size_t k = fractions.size();
  const std::size_t needed = static_cast<std::size_t>(std::count_if(fractions.begin(), fractions.end(),
                                                                    [](double f) { return f > 0.0; }));
  std::vector<std::vector<std::size_t>> parts(k);
  for (std::size_t c = 0; c < d.classes; ++c) {
    auto& rows = by_class[c];
    if (!rows.empty() && rows.size() < needed) {
      throw ConfigError("split: class " + std::to_string(c) + " has " + std::to_string(rows.size()) +
                        " examples, too few for " + std::to_string(needed) + " splits");
    }
    Rng rng(substream(seed, "split", c));
    std::shuffle(rows.begin(), rows.end(), rng.engine());
    double cum = 0.0;
    std::size_t begin = 0;
    for (std::size_t s = 0; s < k; ++s) {
      cum += fractions[s];
      const std::size_t end = s + 1 == k ? rows.size()
                                         : static_cast<std::size_t>(std::floor(cum * static_cast<double>(rows.size()) + 1e-9));
      for (std::size_t i = begin; i < end; ++i) parts[s].push_back(rows[i]);
      begin = end;
    }
  }
  static const SplitTag three[] = {SplitTag::kTrain, SplitTag::kVal, SplitTag::kTest};
  std::vector<LabeledDataset> out;
  for (std::size_t s = 0; s < k; ++s) {
    std::sort(parts[s].begin(), parts[s].end());
    out.push_back(d.subset(parts[s]));
    if (k == 1) out.back().tag = SplitTag::kAll;
    else if (k == 2) out.back().tag = s == 0 ? SplitTag::kTrain : SplitTag::kTest;
    else out.back().tag = s < 3 ? three[s] : SplitTag::kAll;
  }
  return out;
}

std::string to_string(SplitTag t) {
  switch (t) {
    case SplitTag::kTrain: return "train";
    case SplitTag::kVal: return "val";
    case SplitTag::kTest: return "test";
    case SplitTag::kAll: return "all";
  }
  return "?";
}

}  // namespace atbptt::data
