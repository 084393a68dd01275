#pragma once

// Labeled datasets: synthetic blobs, IDX image files and CSV tables.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "atbptt/autodiff.hpp"

namespace atbptt::data {

enum class SplitTag { kTrain, kVal, kTest, kAll };

struct LabeledDataset {
  std::vector<double> x;  // rows x features, row-major
  std::vector<int> y;
  ad::Shape sample_shape;  // {features} or {H, W, C}
  std::size_t classes = 0;
  SplitTag tag = SplitTag::kAll;

  std::size_t rows() const { return y.size(); }
  std::size_t features() const { return ad::numel(sample_shape); }
  std::span<const double> row(std::size_t r) const { return {x.data() + r * features(), features()}; }
  // Rows in the given order, as a new dataset with the same tag.
  LabeledDataset subset(std::span<const std::size_t> rows) const;
  std::vector<std::size_t> class_counts() const;
};

struct BlobOptions {
  std::size_t classes = 3;
  std::size_t per_class = 100;
  std::size_t dim = 16;         // feature count, ignored when image_side > 0
  std::size_t image_side = 0;   // > 0: samples are side x side x 1 images
  double separation = 4.0;      // minimum pairwise center distance
  double stddev = 1.0;          // per-coordinate cluster spread
  std::uint64_t seed = 0;
};

// Rows are grouped by class (class 0 first).
LabeledDataset make_blobs(const BlobOptions& opt);

// IDX containers: images (magic 0x00000803, u8 pixels scaled to [0,1]) and
// an optional label file (magic 0x00000801). Without labels every y is 0.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path = "");
// Pixels are clamped to [0,1] and quantized to u8.
void write_idx(const LabeledDataset& d, const std::string& images_path, const std::string& labels_path);

// Header `label,f0,f1,...`. Samples are flat vectors.
LabeledDataset load_csv(const std::string& path);
void write_csv(const LabeledDataset& d, const std::string& path);

// Class-stratified disjoint partition. Each class is shuffled with its own
// seeded stream and cut at floor(cumulative fraction * count).
std::vector<LabeledDataset> split(const LabeledDataset& d, std::span<const double> fractions,
                                  std::uint64_t seed);

std::string to_string(SplitTag t);

}  // namespace atbptt::data
