#pragma once

// Point cloud encoder: a local-pooling PointNet lifts the cloud to per-point
// features, a conversion MLP scatters them into a latent grid (triplane or
// volume), and a U-Net refines the grid while alternating between grid and
// point topologies.
//
// U-Net layout for `depth` levels: the top `no_resample_levels` levels keep
// the base resolution; deeper levels downsample on entry with a stride-2
// conv and upsample on exit (nearest x2 + conv). Skip connections concatenate
// the matching down-level output and are merged back to d channels by a
// per-cell linear layer. Triplane grids share conv weights across planes.
//
// Each block runs two conv+ReLU layers; blocks selected for alternation then
// gather grid features at the input points, add the running point features,
// apply a two-layer conversion MLP, scatter the result back onto the grid and
// add it to the conv output. Alternation slots fill from the coarsest level
// upward (per level: down block, then up block); the final block stays
// convolution-only.

#include <functional>
#include <string>
#include <vector>

#include "alto/grid.hpp"

namespace alto {

struct EncoderConfig {
  GridKind mode = GridKind::Triplane;
  std::size_t resolution = 64;
  std::size_t feature_dim = 32;
  std::size_t depth = 4;
  std::size_t no_resample_levels = 2;
  int alternation = -1;  // -1 = all 2*depth-2 slots
  Padding padding = Padding::Zero;
  std::size_t pointnet_blocks = 5;

  std::size_t downsamples() const { return depth > no_resample_levels ? depth - no_resample_levels : 0; }
  std::size_t max_alternation() const { return 2 * depth - 2; }
  std::size_t alternation_count() const {
    return alternation < 0 ? max_alternation() : static_cast<std::size_t>(alternation);
  }
  bool level_resamples(std::size_t level) const { return level >= no_resample_levels; }

  void validate() const {
    require(depth >= 1, ErrorKind::Config, "encoder depth must be at least 1");
    require(feature_dim >= 1, ErrorKind::Config, "feature dim must be at least 1");
    std::size_t factor = std::size_t{1} << downsamples();
    require(resolution % factor == 0 && resolution / factor >= 4, ErrorKind::Config,
            "resolution " + std::to_string(resolution) + " too small for " + std::to_string(downsamples()) +
                " downsamplings");
    require(alternation <= static_cast<int>(max_alternation()), ErrorKind::Config,
            "alternation count exceeds available blocks (" + std::to_string(max_alternation()) + ")");
    require(pointnet_blocks >= 1, ErrorKind::Config, "pointnet needs at least one block");
  }
};

// Alternation flags per level; slots ordered coarsest level upward, down
// block before up block within a level. The level-0 up block (final block)
// is never a slot.
inline void alternation_flags(const EncoderConfig& cfg, std::vector<bool>& down, std::vector<bool>& up) {
  down.assign(cfg.depth, false);
  up.assign(cfg.depth, false);
  std::size_t remaining = cfg.alternation_count();
  for (std::size_t l = cfg.depth; l-- > 0 && remaining > 0;) {
    if (remaining > 0) {
      down[l] = true;
      remaining--;
    }
    if (remaining > 0 && l >= 1 && l + 1 < cfg.depth) {
      up[l] = true;
      remaining--;
    }
  }
}

template <class T>
struct LinearLayer {
  Tensor<T> w, b;
  Tensor<T> apply(const Tensor<T>& x) const { return linear(x, w, b); }
};

template <class T>
struct ConvLayer {
  Tensor<T> w, b;
};

// x + fc1(relu(fc0(relu(x)))) at constant width.
template <class T>
struct ResnetBlockFc {
  LinearLayer<T> fc0, fc1;
  Tensor<T> apply(const Tensor<T>& x) const { return add(x, fc1.apply(relu(fc0.apply(relu(x))))); }
};

template <class T>
struct PointNetParams {
  LinearLayer<T> lift;
  std::vector<ResnetBlockFc<T>> blocks;
  std::vector<LinearLayer<T>> merges;
};

template <class T>
struct UnetLevelParams {
  ConvLayer<T> down;  // entry stride-2 conv (resampling levels only)
  ConvLayer<T> dc1, dc2;
  Mlp2<T> alt_down;
  bool has_alt_down = false;
  ConvLayer<T> up;  // post-upsample conv (resampling levels only)
  LinearLayer<T> merge;
  ConvLayer<T> uc1, uc2;  // up-path block convs (all levels except deepest)
  Mlp2<T> alt_up;
  bool has_alt_up = false;
};

template <class T>
struct EncoderParams {
  PointNetParams<T> pointnet;
  Mlp2<T> to_grid;  // initial conversion MLP
  std::vector<UnetLevelParams<T>> levels;
};

// ---- parameter construction ----

namespace detail {

template <class T>
LinearLayer<T> init_linear(std::size_t in, std::size_t out, Rng& rng) {
  return {kaiming_uniform<T>({in, out}, in, rng), Tensor<T>::zeros({out})};
}

// Conversion MLPs start grid-silent: the second layer is zero-initialized.
template <class T>
Mlp2<T> init_conversion_mlp(std::size_t in, std::size_t d, Rng& rng) {
  Mlp2<T> mlp;
  mlp.w1 = kaiming_uniform<T>({in, d}, in, rng);
  mlp.b1 = Tensor<T>::zeros({d});
  mlp.w2 = Tensor<T>::zeros({d, d});
  mlp.b2 = Tensor<T>::zeros({d});
  return mlp;
}

template <class T>
ConvLayer<T> init_conv(const EncoderConfig& cfg, Rng& rng) {
  std::size_t d = cfg.feature_dim;
  if (cfg.mode == GridKind::Volume)
    return {kaiming_uniform<T>({3, 3, 3, d, d}, 27 * d, rng), Tensor<T>::zeros({d})};
  return {kaiming_uniform<T>({3, 3, d, d}, 9 * d, rng), Tensor<T>::zeros({d})};
}

}  // namespace detail

template <class T>
EncoderParams<T> init_encoder(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  std::size_t d = cfg.feature_dim;
  EncoderParams<T> P;
  P.pointnet.lift = detail::init_linear<T>(3, d, rng);
  for (std::size_t k = 0; k < cfg.pointnet_blocks; ++k) {
    ResnetBlockFc<T> block;
    block.fc0 = detail::init_linear<T>(d, d, rng);
    block.fc1 = detail::init_linear<T>(d, d, rng);
    P.pointnet.blocks.push_back(block);
    P.pointnet.merges.push_back(detail::init_linear<T>(2 * d, d, rng));
  }
  P.to_grid = detail::init_conversion_mlp<T>(d, d, rng);
  std::vector<bool> alt_down, alt_up;
  alternation_flags(cfg, alt_down, alt_up);
  P.levels.resize(cfg.depth);
  // down path in execution order
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    auto& L = P.levels[l];
    if (cfg.level_resamples(l)) L.down = detail::init_conv<T>(cfg, rng);
    L.dc1 = detail::init_conv<T>(cfg, rng);
    L.dc2 = detail::init_conv<T>(cfg, rng);
    L.has_alt_down = alt_down[l];
    // Conversion MLPs are allocated for every slot the maximum alternation
    // count could use, whatever the configured count: models that differ only
    // in alternation count then have identical parameter lists, and unused
    // MLPs stay at their zero-output initialization.
    if (cfg.depth >= 2) L.alt_down = detail::init_conversion_mlp<T>(d, d, rng);
  }
  // up path in execution order
  for (std::size_t l = cfg.depth - 1; l-- > 0;) {
    auto& L = P.levels[l];
    if (cfg.level_resamples(l + 1)) P.levels[l + 1].up = detail::init_conv<T>(cfg, rng);
    L.merge = detail::init_linear<T>(2 * d, d, rng);
    L.uc1 = detail::init_conv<T>(cfg, rng);
    L.uc2 = detail::init_conv<T>(cfg, rng);
    L.has_alt_up = l > 0 && alt_up[l];
    if (l > 0) L.alt_up = detail::init_conversion_mlp<T>(d, d, rng);
  }
  return P;
}

// Visits every defined parameter in a fixed order (mirrors init order).
template <class T>
void for_each_encoder_param(EncoderParams<T>& P, const std::function<void(const std::string&, Tensor<T>&)>& fn) {
  auto visit = [&fn](const std::string& name, Tensor<T>& t) {
    if (t.defined()) fn(name, t);
  };
  auto visit_mlp = [&](const std::string& base, Mlp2<T>& m) {
    visit(base + ".w1", m.w1);
    visit(base + ".b1", m.b1);
    visit(base + ".w2", m.w2);
    visit(base + ".b2", m.b2);
  };
  visit("pointnet.lift.w", P.pointnet.lift.w);
  visit("pointnet.lift.b", P.pointnet.lift.b);
  for (std::size_t k = 0; k < P.pointnet.blocks.size(); ++k) {
    auto base = "pointnet.block" + std::to_string(k);
    visit(base + ".fc0.w", P.pointnet.blocks[k].fc0.w);
    visit(base + ".fc0.b", P.pointnet.blocks[k].fc0.b);
    visit(base + ".fc1.w", P.pointnet.blocks[k].fc1.w);
    visit(base + ".fc1.b", P.pointnet.blocks[k].fc1.b);
    visit("pointnet.merge" + std::to_string(k) + ".w", P.pointnet.merges[k].w);
    visit("pointnet.merge" + std::to_string(k) + ".b", P.pointnet.merges[k].b);
  }
  visit_mlp("to_grid", P.to_grid);
  for (std::size_t l = 0; l < P.levels.size(); ++l) {
    auto base = "level" + std::to_string(l);
    auto& L = P.levels[l];
    visit(base + ".down.w", L.down.w);
    visit(base + ".down.b", L.down.b);
    visit(base + ".dc1.w", L.dc1.w);
    visit(base + ".dc1.b", L.dc1.b);
    visit(base + ".dc2.w", L.dc2.w);
    visit(base + ".dc2.b", L.dc2.b);
    visit_mlp(base + ".alt_down", L.alt_down);
    visit(base + ".up.w", L.up.w);
    visit(base + ".up.b", L.up.b);
    visit(base + ".merge.w", L.merge.w);
    visit(base + ".merge.b", L.merge.b);
    visit(base + ".uc1.w", L.uc1.w);
    visit(base + ".uc1.b", L.uc1.b);
    visit(base + ".uc2.w", L.uc2.w);
    visit(base + ".uc2.b", L.uc2.b);
    visit_mlp(base + ".alt_up", L.alt_up);
  }
}

// ---- forward pieces ----

// Per-axis offset of each point inside its lattice cell, in cell units
// ([0,1] per axis). Feeding the lift cell-relative rather than absolute
// coordinates keeps the whole encoder translation-equivariant for exact
// integer-cell shifts: absolute position enters only through where features
// are scattered, never through their values.
template <class T>
Tensor<T> cell_offsets_tensor(const std::vector<Vec3>& pts, const GridLayout& layout) {
  std::vector<T> data(pts.size() * 3);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int a = 0; a < 3; ++a) {
      std::size_t i0;
      double frac;
      lattice::interp_cell(pts[i][a], layout.spacing, layout.res, i0, frac);
      data[i * 3 + a] = static_cast<T>(frac);
    }
  return Tensor<T>::from({pts.size(), 3}, std::move(data));
}

// PointNet: linear lift of cell-relative offsets, then per block
// ResNet-FC -> local max pool -> concat(feature, pooled) -> linear merge.
template <class T>
Tensor<T> pointnet_encode(const std::vector<Vec3>& pts, const PointNetParams<T>& P, const GridLayout& layout) {
  require(!pts.empty(), ErrorKind::Contract, "pointnet_encode: empty point cloud");
  Tensor<T> f = P.lift.apply(cell_offsets_tensor<T>(pts, layout));
  for (std::size_t k = 0; k < P.blocks.size(); ++k) {
    f = P.blocks[k].apply(f);
    Tensor<T> pooled = pool_local(f, pts, layout);
    f = P.merges[k].apply(concat<T>({f, pooled}, 1));
  }
  return f;
}

template <class T>
FeatureGrid<T> grid_conv(const FeatureGrid<T>& g, const ConvLayer<T>& layer, int stride, Padding pad,
                         bool relu_after) {
  FeatureGrid<T> out;
  out.layout = g.layout;
  if (stride == 2) {
    out.layout.res = (g.layout.res + 1) / 2;
    out.layout.spacing = g.layout.spacing * 2;  // keep the subsampled node positions
  }
  for (const auto& t : g.grids) {
    Tensor<T> c = g.layout.kind == GridKind::Volume ? conv3d(t, layer.w, layer.b, stride, pad)
                                                    : conv2d(t, layer.w, layer.b, stride, pad);
    out.grids.push_back(relu_after ? relu(c) : c);
  }
  return out;
}

template <class T>
FeatureGrid<T> grid_upsample(const FeatureGrid<T>& g) {
  FeatureGrid<T> out;
  out.layout = g.layout;
  out.layout.res = g.layout.res * 2;
  out.layout.spacing = g.layout.spacing / 2;
  std::size_t spatial = g.layout.kind == GridKind::Volume ? 3 : 2;
  for (const auto& t : g.grids) out.grids.push_back(upsample_nearest2x(t, spatial));
  return out;
}

template <class T>
FeatureGrid<T> grid_merge_skip(const FeatureGrid<T>& g, const FeatureGrid<T>& skip, const LinearLayer<T>& merge) {
  require(g.layout.res == skip.layout.res, ErrorKind::Dimension, "skip merge: resolution mismatch");
  FeatureGrid<T> out;
  out.layout = g.layout;
  for (std::size_t p = 0; p < g.grids.size(); ++p) {
    auto cat = concat<T>({g.grids[p], skip.grids[p]}, g.grids[p].rank() - 1);
    out.grids.push_back(merge.apply(cat));
  }
  return out;
}

template <class T>
FeatureGrid<T> grid_add(const FeatureGrid<T>& a, const FeatureGrid<T>& b) {
  FeatureGrid<T> out;
  out.layout = a.layout;
  for (std::size_t p = 0; p < a.grids.size(); ++p) out.grids.push_back(add(a.grids[p], b.grids[p]));
  return out;
}

// One grid block: two conv+ReLU layers, then (when `mlp` is given) the
// point alternation: gather + point skip -> conversion MLP -> scatter,
// added residually onto the conv output. `point_state` carries the running
// point features between alternating blocks.
template <class T>
FeatureGrid<T> alto_block(const FeatureGrid<T>& g, const ConvLayer<T>& c1, const ConvLayer<T>& c2, Padding pad,
                          const std::vector<Vec3>& pts, Tensor<T>* point_state, const Mlp2<T>* mlp) {
  FeatureGrid<T> h = grid_conv(g, c1, 1, pad, true);
  h = grid_conv(h, c2, 1, pad, true);
  if (mlp == nullptr) return h;
  Tensor<T> f = grid_to_point(h, pts);
  if (point_state != nullptr && point_state->defined()) f = add(f, *point_state);
  Tensor<T> f2 = mlp->apply(f);
  FeatureGrid<T> scattered = scatter_point_features(f2, pts, h.layout);
  if (point_state != nullptr) *point_state = f2;
  return grid_add(h, scattered);
}

// U-Net over the latent grid with point alternation.
template <class T>
FeatureGrid<T> alto_unet(FeatureGrid<T> grid, const std::vector<Vec3>& pts, Tensor<T> point_state,
                         const EncoderParams<T>& P, const EncoderConfig& cfg) {
  std::vector<FeatureGrid<T>> skips;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const auto& L = P.levels[l];
    if (cfg.level_resamples(l)) grid = grid_conv(grid, L.down, 2, cfg.padding, true);
    grid = alto_block(grid, L.dc1, L.dc2, cfg.padding, pts, &point_state, L.has_alt_down ? &L.alt_down : nullptr);
    if (l + 1 < cfg.depth) skips.push_back(grid);
  }
  for (std::size_t l = cfg.depth - 1; l-- > 0;) {
    const auto& L = P.levels[l];
    if (cfg.level_resamples(l + 1)) grid = grid_conv(grid_upsample(grid), P.levels[l + 1].up, 1, cfg.padding, true);
    grid = grid_merge_skip(grid, skips[l], L.merge);
    const Mlp2<T>* mlp = (l > 0 && L.has_alt_up) ? &L.alt_up : nullptr;  // final block is conv-only
    grid = alto_block(grid, L.uc1, L.uc2, cfg.padding, pts, &point_state, mlp);
  }
  return grid;
}

// Full encoder: PointNet features -> conversion MLP -> scatter -> U-Net.
template <class T>
FeatureGrid<T> encode(const std::vector<Vec3>& cloud, const EncoderParams<T>& P, const EncoderConfig& cfg) {
  cfg.validate();
  for (const auto& p : cloud)
    for (int a = 0; a < 3; ++a)
      require(p[a] >= 0.0 && p[a] <= 1.0, ErrorKind::Contract, "encode: cloud points must lie in the unit cube");
  GridLayout layout = GridLayout::base(cfg.mode, cfg.resolution);
  Tensor<T> pn = pointnet_encode(cloud, P.pointnet, layout);
  Tensor<T> f0 = P.to_grid.apply(pn);
  FeatureGrid<T> grid = scatter_point_features(f0, cloud, layout);
  return alto_unet(std::move(grid), cloud, f0, P, cfg);
}

template <class T>
std::size_t encoder_param_count(EncoderParams<T>& P) {
  std::size_t n = 0;
  for_each_encoder_param<T>(P, [&n](const std::string&, Tensor<T>& t) { n += t.size(); });
  return n;
}

}  // namespace alto
