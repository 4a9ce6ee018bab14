#pragma once

// Feature grids over the unit cube and the point<->grid conversions.
//
// Lattice convention: a grid with n nodes per axis places node i at
// i * spacing; the base grid uses spacing 1/(n-1) so nodes span [0, 1].
// Coarser U-Net levels keep the subsampled node positions of their parent
// (spacing doubles per downsampling), so integer-cell translations of the
// base lattice stay integer on every level.
//
// Gathering interpolates with standard bilinear/trilinear weights, clamped at
// the lattice border. Scattering assigns each point to its nearest node;
// exact half-cell ties round toward the lower index. Triplanes project onto
// the xy, xz and yz planes; plane tensors index [first axis][second axis].

#include <array>
#include <cmath>
#include <vector>

#include "alto/geometry.hpp"
#include "alto/ops.hpp"
#include "alto/tensor.hpp"

namespace alto {

enum class GridKind { Triplane, Volume };

struct GridLayout {
  GridKind kind = GridKind::Triplane;
  std::size_t res = 64;       // nodes per axis
  double spacing = 1.0 / 63;  // node spacing in normalized units

  static GridLayout base(GridKind kind, std::size_t res) {
    require(res >= 2, ErrorKind::Config, "grid resolution must be at least 2");
    return {kind, res, 1.0 / static_cast<double>(res - 1)};
  }
  std::size_t planes() const { return kind == GridKind::Triplane ? 3 : 1; }
  std::size_t nodes() const { return kind == GridKind::Triplane ? res * res : res * res * res; }
};

template <class T>
struct FeatureGrid {
  GridLayout layout;
  std::vector<Tensor<T>> grids;  // 3 planes [R,R,d] or 1 volume [R,R,R,d]

  std::size_t feature_dim() const { return grids.at(0).shape().back(); }
};

template <class T>
FeatureGrid<T> make_feature_grid(const GridLayout& layout, std::size_t d) {
  FeatureGrid<T> g;
  g.layout = layout;
  for (std::size_t p = 0; p < layout.planes(); ++p) {
    if (layout.kind == GridKind::Triplane)
      g.grids.push_back(Tensor<T>::zeros({layout.res, layout.res, d}));
    else
      g.grids.push_back(Tensor<T>::zeros({layout.res, layout.res, layout.res, d}));
  }
  return g;
}

// Axes of the unit cube spanned by each triplane: xy, xz, yz.
inline std::array<std::size_t, 2> plane_axes(std::size_t plane) {
  constexpr std::array<std::array<std::size_t, 2>, 3> axes = {{{0, 1}, {0, 2}, {1, 2}}};
  return axes.at(plane);
}

namespace lattice {

// Continuous node coordinate of u (u / spacing).
inline double to_cells(double u, double spacing) { return u / spacing; }

// Lower interpolation node and fractional offset, clamped to the lattice.
inline void interp_cell(double u, double spacing, std::size_t n, std::size_t& i0, double& frac) {
  double t = to_cells(u, spacing);
  double f = std::floor(t);
  long i = static_cast<long>(f);
  if (i < 0) i = 0;
  if (i > static_cast<long>(n) - 2) i = static_cast<long>(n) - 2;
  i0 = static_cast<std::size_t>(i);
  frac = t - static_cast<double>(i0);
  if (frac < 0) frac = 0;
  if (frac > 1) frac = 1;
}

// Nearest node; exact half-cell ties round toward the lower index.
inline std::size_t nearest_node(double u, double spacing, std::size_t n) {
  double t = to_cells(u, spacing);
  double s = t + 0.5;
  double f = std::floor(s);
  long i = static_cast<long>(f);
  if (s == f) i -= 1;
  if (i < 0) i = 0;
  if (i > static_cast<long>(n) - 1) i = static_cast<long>(n) - 1;
  return static_cast<std::size_t>(i);
}

}  // namespace lattice

// Flat node index tables. Plane node (i, j) flattens to i * res + j; volume
// node (i, j, k) flattens to (i * res + j) * res + k.

inline std::vector<std::size_t> nearest_plane_nodes(const std::vector<Vec3>& pts, const GridLayout& layout,
                                                    std::size_t plane) {
  auto ax = plane_axes(plane);
  std::vector<std::size_t> idx(pts.size());
  for (std::size_t p = 0; p < pts.size(); ++p) {
    std::size_t i = lattice::nearest_node(pts[p][ax[0]], layout.spacing, layout.res);
    std::size_t j = lattice::nearest_node(pts[p][ax[1]], layout.spacing, layout.res);
    idx[p] = i * layout.res + j;
  }
  return idx;
}

inline std::vector<std::size_t> nearest_volume_nodes(const std::vector<Vec3>& pts, const GridLayout& layout) {
  std::vector<std::size_t> idx(pts.size());
  for (std::size_t p = 0; p < pts.size(); ++p) {
    std::size_t i = lattice::nearest_node(pts[p][0], layout.spacing, layout.res);
    std::size_t j = lattice::nearest_node(pts[p][1], layout.spacing, layout.res);
    std::size_t k = lattice::nearest_node(pts[p][2], layout.spacing, layout.res);
    idx[p] = (i * layout.res + j) * layout.res + k;
  }
  return idx;
}

namespace detail {

inline void bilinear_table(const std::vector<Vec3>& pts, const GridLayout& layout, std::size_t plane,
                           std::vector<std::size_t>& idx, std::vector<double>& wts) {
  auto ax = plane_axes(plane);
  std::size_t n = layout.res;
  idx.resize(pts.size() * 4);
  wts.resize(pts.size() * 4);
  for (std::size_t p = 0; p < pts.size(); ++p) {
    std::size_t i0, j0;
    double fi, fj;
    lattice::interp_cell(pts[p][ax[0]], layout.spacing, n, i0, fi);
    lattice::interp_cell(pts[p][ax[1]], layout.spacing, n, j0, fj);
    std::size_t base = p * 4;
    idx[base + 0] = i0 * n + j0;
    idx[base + 1] = i0 * n + j0 + 1;
    idx[base + 2] = (i0 + 1) * n + j0;
    idx[base + 3] = (i0 + 1) * n + j0 + 1;
    wts[base + 0] = (1 - fi) * (1 - fj);
    wts[base + 1] = (1 - fi) * fj;
    wts[base + 2] = fi * (1 - fj);
    wts[base + 3] = fi * fj;
  }
}

inline void trilinear_table(const std::vector<Vec3>& pts, const GridLayout& layout, std::vector<std::size_t>& idx,
                            std::vector<double>& wts) {
  std::size_t n = layout.res;
  idx.resize(pts.size() * 8);
  wts.resize(pts.size() * 8);
  for (std::size_t p = 0; p < pts.size(); ++p) {
    std::size_t i0, j0, k0;
    double fi, fj, fk;
    lattice::interp_cell(pts[p][0], layout.spacing, n, i0, fi);
    lattice::interp_cell(pts[p][1], layout.spacing, n, j0, fj);
    lattice::interp_cell(pts[p][2], layout.spacing, n, k0, fk);
    std::size_t base = p * 8;
    for (int c = 0; c < 8; ++c) {
      std::size_t di = (c >> 2) & 1, dj = (c >> 1) & 1, dk = c & 1;
      idx[base + c] = ((i0 + di) * n + j0 + dj) * n + k0 + dk;
      wts[base + c] = (di ? fi : 1 - fi) * (dj ? fj : 1 - fj) * (dk ? fk : 1 - fk);
    }
  }
}

}  // namespace detail

// Bilinear interpolation of one plane tensor [R, R, d] at projected points.
template <class T>
Tensor<T> bilinear_interpolate(const Tensor<T>& plane, const std::vector<Vec3>& pts, const GridLayout& layout,
                               std::size_t plane_id) {
  require(plane.rank() == 3, ErrorKind::Dimension, "bilinear_interpolate: plane must be [R, R, d]");
  std::vector<std::size_t> idx;
  std::vector<double> wts;
  detail::bilinear_table(pts, layout, plane_id, idx, wts);
  return gather_weighted(plane, std::move(idx), std::move(wts), 4);
}

// Trilinear interpolation of a volume tensor [R, R, R, d].
template <class T>
Tensor<T> trilinear_interpolate(const Tensor<T>& volume, const std::vector<Vec3>& pts, const GridLayout& layout) {
  require(volume.rank() == 4, ErrorKind::Dimension, "trilinear_interpolate: volume must be [R, R, R, d]");
  std::vector<std::size_t> idx;
  std::vector<double> wts;
  detail::trilinear_table(pts, layout, idx, wts);
  return gather_weighted(volume, std::move(idx), std::move(wts), 8);
}

// Interpolated grid features per point; triplane contributions are summed.
template <class T>
Tensor<T> grid_to_point(const FeatureGrid<T>& grid, const std::vector<Vec3>& pts) {
  if (grid.layout.kind == GridKind::Volume) return trilinear_interpolate(grid.grids[0], pts, grid.layout);
  Tensor<T> acc = bilinear_interpolate(grid.grids[0], pts, grid.layout, 0);
  for (std::size_t p = 1; p < 3; ++p) acc = add(acc, bilinear_interpolate(grid.grids[p], pts, grid.layout, p));
  return acc;
}

// Nearest-node average of point features into a fresh grid; every plane of a
// triplane is produced from the same features.
template <class T>
FeatureGrid<T> scatter_point_features(const Tensor<T>& features, const std::vector<Vec3>& pts,
                                      const GridLayout& layout) {
  require(features.rank() == 2 && features.shape()[0] == pts.size(), ErrorKind::Dimension,
          "scatter_point_features: features must be [N, d] matching the point count");
  std::size_t d = features.shape()[1];
  FeatureGrid<T> out;
  out.layout = layout;
  if (layout.kind == GridKind::Volume) {
    auto flat = scatter_mean(features, nearest_volume_nodes(pts, layout), layout.nodes());
    out.grids.push_back(reshape(flat, {layout.res, layout.res, layout.res, d}));
  } else {
    for (std::size_t p = 0; p < 3; ++p) {
      auto flat = scatter_mean(features, nearest_plane_nodes(pts, layout, p), layout.nodes());
      out.grids.push_back(reshape(flat, {layout.res, layout.res, d}));
    }
  }
  return out;
}

// Local max-pool: scatter-max point features onto the grid, read the pooled
// value back at each point's node, summing plane contributions.
template <class T>
Tensor<T> pool_local(const Tensor<T>& features, const std::vector<Vec3>& pts, const GridLayout& layout) {
  require(features.rank() == 2 && features.shape()[0] == pts.size(), ErrorKind::Dimension,
          "pool_local: features must be [N, d] matching the point count");
  Tensor<T> acc;
  for (std::size_t p = 0; p < layout.planes(); ++p) {
    auto idx = layout.kind == GridKind::Volume ? nearest_volume_nodes(pts, layout)
                                               : nearest_plane_nodes(pts, layout, p);
    auto pooled = scatter_max(features, idx, layout.nodes());
    auto at_points = take_rows(pooled, idx);
    acc = acc.defined() ? add(acc, at_points) : at_points;
  }
  return acc;
}

// Two-layer per-point feature map (linear -> ReLU -> linear).
template <class T>
struct Mlp2 {
  Tensor<T> w1, b1, w2, b2;

  Tensor<T> apply(const Tensor<T>& x) const { return linear(relu(linear(x, w1, b1)), w2, b2); }
};

// Projects point features through the conversion MLP and scatters the result
// into a fresh grid (the initial latent grid and the ALTO write-back path).
template <class T>
FeatureGrid<T> point_to_grid(const Tensor<T>& features, const std::vector<Vec3>& pts, const GridLayout& layout,
                             const Mlp2<T>& mlp) {
  return scatter_point_features(mlp.apply(features), pts, layout);
}

}  // namespace alto
