#pragma once

// Patch-wise semantic preservation: n x n non-overlapping patch grids and
// the centroid alignment loss between per-cell prototype sets.

#include <cstddef>
#include <span>
#include <vector>

#include "atbptt/autodiff.hpp"

namespace atbptt::psp {

struct PspConfig {
  bool enabled = false;
  std::size_t n = 4;
  double lambda = 0.1;
  std::size_t min_side = 32;
};

void validate(const PspConfig& cfg);

// Enabled and the image side reaches min_side.
bool active(const PspConfig& cfg, const ad::Shape& sample_shape);

// Images are H x W x C, row-major with channels innermost.
struct PatchGrid {
  std::size_t n = 0;
  std::size_t side = 0;      // s = floor(H / n)
  std::size_t channels = 0;
  std::size_t source_side = 0;
  std::size_t margin = 0;    // H - n * s, dropped on each trailing edge
  std::size_t dropped_pixels = 0;
  std::vector<std::vector<double>> patches;  // cell (i, j) at i * n + j, each s x s x C

  const std::vector<double>& at(std::size_t i, std::size_t j) const { return patches.at(i * n + j); }
  std::size_t patch_size() const { return side * side * channels; }
};

PatchGrid split(std::span<const double> image, const ad::Shape& shape, std::size_t n);

// Top-left (n s) x (n s) x C crop rebuilt from the patches.
std::vector<double> reassemble(const PatchGrid& grid);

// Cell prototype sets S_ij, each `rows` x `dim` row-major.
struct PatchPrototypes {
  std::size_t dim = 0;
  std::vector<std::vector<double>> cells;

  std::size_t rows(std::size_t cell) const { return dim == 0 ? 0 : cells.at(cell).size() / dim; }
  // Union of all cells, in cell order.
  std::vector<double> global() const;
};

// Element-wise mean of `rows` flattened prototypes of length dim.
std::vector<double> centroid(std::span<const double> prototypes, std::size_t dim);

// sum_ij || mu(S_ij) - mu(S_global) ||_2
double align_loss(const PatchPrototypes& prototypes);

// Same quantity on the tape; each cell tensor has shape (rows, dim).
ad::Tensor align_loss(std::span<const ad::Tensor> cells);

// distill + lambda * align.
ad::Tensor total_loss(const ad::Tensor& distill, const ad::Tensor& align, double lambda);

}  // namespace atbptt::psp
