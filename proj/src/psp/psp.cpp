#include "atbptt/psp.hpp"

#include <cmath>

namespace atbptt::psp {

void validate(const PspConfig& cfg) {
  if (cfg.n < 1) throw ConfigError("psp: n must be >= 1");
  if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda)) throw ConfigError("psp: lambda must be >= 0");
}

bool active(const PspConfig& cfg, const ad::Shape& sample_shape) {
  return cfg.enabled && sample_shape.size() == 3 && sample_shape[0] >= cfg.min_side && sample_shape[0] >= cfg.n;
}

PatchGrid split(std::span<const double> image, const ad::Shape& shape, std::size_t n) {
  if (shape.size() != 3) throw ShapeError("psp split: expected an H x W x C image, got " + ad::to_string(shape));
  const std::size_t H = shape[0], W = shape[1], C = shape[2];
  if (H != W) throw ShapeError("psp split: image must be square, got " + ad::to_string(shape));
  if (image.size() != H * W * C) throw ShapeError("psp split: image storage does not match its shape");
  if (n < 1 || n > H) throw ConfigError("psp split: n = " + std::to_string(n) + " outside [1, " + std::to_string(H) + "]");

  PatchGrid g;
  g.n = n;
  g.side = H / n;
  g.channels = C;
  g.source_side = H;
  g.margin = H - n * g.side;
  g.dropped_pixels = H * W - (n * g.side) * (n * g.side);
  const std::size_t s = g.side;
  g.patches.assign(n * n, std::vector<double>(s * s * C));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      auto& p = g.patches[i * n + j];
      for (std::size_t r = 0; r < s; ++r)
        for (std::size_t c = 0; c < s; ++c)
          for (std::size_t ch = 0; ch < C; ++ch)
            p[(r * s + c) * C + ch] = image[((i * s + r) * W + (j * s + c)) * C + ch];
    }
  return g;
}

std::vector<double> reassemble(const PatchGrid& g) {
  const std::size_t s = g.side, C = g.channels, side = g.n * s;
  if (g.patches.size() != g.n * g.n) throw ShapeError("psp reassemble: grid has the wrong number of patches");
  std::vector<double> out(side * side * C);
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t j = 0; j < g.n; ++j) {
      const auto& p = g.patches[i * g.n + j];
      if (p.size() != s * s * C) throw ShapeError("psp reassemble: patch size mismatch");
      for (std::size_t r = 0; r < s; ++r)
        for (std::size_t c = 0; c < s; ++c)
          for (std::size_t ch = 0; ch < C; ++ch)
            out[((i * s + r) * side + (j * s + c)) * C + ch] = p[(r * s + c) * C + ch];
    }
  return out;
}

std::vector<double> PatchPrototypes::global() const {
  std::vector<double> out;
  for (const auto& c : cells) out.insert(out.end(), c.begin(), c.end());
  return out;
}

std::vector<double> centroid(std::span<const double> prototypes, std::size_t dim) {
  if (dim == 0 || prototypes.empty()) throw ConfigError("centroid: empty prototype set");
  if (prototypes.size() % dim != 0) throw ShapeError("centroid: storage is not a whole number of prototypes");
  const std::size_t rows = prototypes.size() / dim;
  std::vector<double> mu(dim, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < dim; ++k) mu[k] += prototypes[r * dim + k];
  for (auto& x : mu) x /= static_cast<double>(rows);
  return mu;
}

double align_loss(const PatchPrototypes& prototypes) {
  if (prototypes.cells.empty()) throw ConfigError("align_loss: no cells");
  for (const auto& c : prototypes.cells)
    if (c.empty()) throw ConfigError("align_loss: empty cell");
  const auto global = prototypes.global();
  const auto mu_g = centroid(global, prototypes.dim);
  double total = 0.0;
  for (const auto& c : prototypes.cells) {
    const auto mu = centroid(c, prototypes.dim);
    double d = 0.0;
    for (std::size_t k = 0; k < mu.size(); ++k) d += (mu[k] - mu_g[k]) * (mu[k] - mu_g[k]);
    total += std::sqrt(d);
  }
  return total;
}

ad::Tensor align_loss(std::span<const ad::Tensor> cells) {
  if (cells.empty()) throw ConfigError("align_loss: no cells");
  const auto shape0 = cells[0].shape();
  if (shape0.size() != 2) throw ShapeError("align_loss: cells must be (rows, dim)");
  std::size_t total_rows = 0;
  ad::Tensor sum;
  std::vector<ad::Tensor> mus;
  for (const auto& c : cells) {
    const auto sh = c.shape();
    if (sh.size() != 2 || sh[1] != shape0[1]) throw ShapeError("align_loss: cell dims differ");
    if (sh[0] == 0) throw ConfigError("align_loss: empty cell");
    const auto rows = ad::reduce_rows(c);
    mus.push_back(ad::scale(rows, 1.0 / static_cast<double>(sh[0])));
    sum = sum.valid() ? ad::add(sum, rows) : rows;
    total_rows += sh[0];
  }
  const auto mu_g = ad::scale(sum, 1.0 / static_cast<double>(total_rows));
  ad::Tensor loss;
  for (const auto& mu : mus) {
    const auto d = ad::l2_norm(ad::sub(mu, mu_g));
    loss = loss.valid() ? ad::add(loss, d) : d;
  }
  return loss;
}

ad::Tensor total_loss(const ad::Tensor& distill, const ad::Tensor& align, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("total_loss: lambda must be >= 0");
  if (lambda == 0.0) return distill;
  return ad::add(distill, ad::scale(align, lambda));
}

}  // namespace atbptt::psp
