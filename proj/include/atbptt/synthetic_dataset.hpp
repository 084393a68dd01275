#pragma once

#include <cstddef>
#include <vector>

#include "atbptt/autodiff.hpp"

namespace atbptt {

// The learnable distilled set: C * ipc rows of images plus raw non-negative
// soft labels. Rows are grouped by class.
struct SyntheticDataset {
  std::vector<double> images;  // rows x features
  std::vector<double> labels;  // rows x classes
  ad::Shape sample_shape;
  std::size_t ipc = 0;
  std::size_t classes = 0;

  std::size_t rows() const { return classes * ipc; }
  std::size_t features() const { return ad::numel(sample_shape); }
  std::size_t size() const { return images.size() + labels.size(); }
};

}  // namespace atbptt
