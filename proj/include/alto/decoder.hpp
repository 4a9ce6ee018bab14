#pragma once

// Occupancy decoder: per-query features are read from the latent grid either
// by plain bi/trilinear interpolation or by vector attention over the 3x3
// (per plane) / 3x3x3 lattice-node patch around the query, then mapped to an
// occupancy probability by a small ResNet-FC network ending in a sigmoid.
//
// Attention per head, all widths d:
//   Q      = Wq psi(q)            psi = interpolated grid feature at q
//   K_i    = Wk C_i, V_i = Wv C_i  over the patch nodes C_i
//   gamma_i = pos-MLP(delta_i)     delta = query - node offset, cell units
//   A      = softmax_i(score-MLP((Q - K_i) + gamma_i))   per channel
//   F      = sum_i A_i * (V_i + gamma_i)                 elementwise
//
// Triplane: one head per plane, per-plane features concatenated (3d wide).
// Volume: h independent heads concatenated (h*d wide). The occupancy network
// runs at the concatenated width and never sees raw coordinates.

#include <functional>
#include <string>
#include <vector>

#include "alto/encoder.hpp"
#include "alto/grid.hpp"

namespace alto {

enum class DecodeMode { Attention, LinearInterp };

struct DecoderConfig {
  GridKind mode = GridKind::Triplane;
  std::size_t feature_dim = 32;
  std::size_t heads = 4;  // volume only; triplane always uses one head per plane
  DecodeMode decode = DecodeMode::Attention;
  std::size_t head_blocks = 5;

  std::size_t head_count() const { return mode == GridKind::Triplane ? 3 : heads; }
  std::size_t feature_width() const {
    if (mode == GridKind::Triplane) return 3 * feature_dim;
    return decode == DecodeMode::Attention ? heads * feature_dim : feature_dim;
  }
  void validate() const {
    require(feature_dim >= 1, ErrorKind::Config, "decoder feature dim must be at least 1");
    require(heads >= 1, ErrorKind::Config, "decoder needs at least one attention head");
    require(head_blocks >= 1, ErrorKind::Config, "occupancy network needs at least one block");
  }
};

template <class T>
struct AttentionHeadParams {
  LinearLayer<T> q, k, v;
  Mlp2<T> score;  // logits from (Q - K) + gamma
  Mlp2<T> pos;    // learned positional encoding gamma(displacement)
};

template <class T>
struct DecoderParams {
  std::vector<AttentionHeadParams<T>> heads;
  std::vector<ResnetBlockFc<T>> blocks;
  LinearLayer<T> out;
};

// ---- neighbor patches ----

// Flat node indices and cell-unit displacements of the 3x..x3 patch around
// each query's nearest node. Boundary nodes clamp (duplicates allowed); the
// displacement always refers to the clamped node actually used.
struct PatchIndex {
  std::vector<std::size_t> idx;  // [Q * count]
  std::vector<double> disp;      // [Q * count * dim]
  std::size_t count = 0;         // 9 or 27
  std::size_t dim = 0;           // 2 or 3
};

inline PatchIndex neighbor_patch_plane(const std::vector<Vec3>& qs, const GridLayout& layout, std::size_t plane) {
  auto ax = plane_axes(plane);
  PatchIndex patch;
  patch.count = 9;
  patch.dim = 2;
  patch.idx.reserve(qs.size() * 9);
  patch.disp.reserve(qs.size() * 18);
  long n = static_cast<long>(layout.res);
  for (const auto& q : qs) {
    double ta = lattice::to_cells(q[ax[0]], layout.spacing);
    double tb = lattice::to_cells(q[ax[1]], layout.spacing);
    long ca = static_cast<long>(lattice::nearest_node(q[ax[0]], layout.spacing, layout.res));
    long cb = static_cast<long>(lattice::nearest_node(q[ax[1]], layout.spacing, layout.res));
    for (long da = -1; da <= 1; ++da)
      for (long db = -1; db <= 1; ++db) {
        long ia = std::clamp(ca + da, 0L, n - 1);
        long ib = std::clamp(cb + db, 0L, n - 1);
        patch.idx.push_back(static_cast<std::size_t>(ia * n + ib));
        patch.disp.push_back(ta - static_cast<double>(ia));
        patch.disp.push_back(tb - static_cast<double>(ib));
      }
  }
  return patch;
}

inline PatchIndex neighbor_patch_volume(const std::vector<Vec3>& qs, const GridLayout& layout) {
  PatchIndex patch;
  patch.count = 27;
  patch.dim = 3;
  patch.idx.reserve(qs.size() * 27);
  patch.disp.reserve(qs.size() * 81);
  long n = static_cast<long>(layout.res);
  for (const auto& q : qs) {
    double t[3];
    long c[3];
    for (int a = 0; a < 3; ++a) {
      t[a] = lattice::to_cells(q[a], layout.spacing);
      c[a] = static_cast<long>(lattice::nearest_node(q[a], layout.spacing, layout.res));
    }
    for (long di = -1; di <= 1; ++di)
      for (long dj = -1; dj <= 1; ++dj)
        for (long dk = -1; dk <= 1; ++dk) {
          long i = std::clamp(c[0] + di, 0L, n - 1);
          long j = std::clamp(c[1] + dj, 0L, n - 1);
          long k = std::clamp(c[2] + dk, 0L, n - 1);
          patch.idx.push_back(static_cast<std::size_t>((i * n + j) * n + k));
          patch.disp.push_back(t[0] - static_cast<double>(i));
          patch.disp.push_back(t[1] - static_cast<double>(j));
          patch.disp.push_back(t[2] - static_cast<double>(k));
        }
  }
  return patch;
}

template <class T>
Tensor<T> patch_disp_tensor(const PatchIndex& patch, std::size_t n_queries) {
  std::vector<T> data(patch.disp.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(patch.disp[i]);
  return Tensor<T>::from({n_queries, patch.count, patch.dim}, std::move(data));
}

// ---- attention ----

// One head over pre-gathered patches. patch [Q, K, d], disp [Q, K, dim],
// psi [Q, d]; returns F [Q, d]. Optionally exposes the attention weights.
template <class T>
Tensor<T> attention_from_patch(const Tensor<T>& patch, const Tensor<T>& disp, const Tensor<T>& psi,
                               const AttentionHeadParams<T>& head, Tensor<T>* weights_out = nullptr) {
  require(patch.rank() == 3 && disp.rank() == 3 && psi.rank() == 2, ErrorKind::Dimension,
          "attention_from_patch: patch/disp must be rank 3 and psi rank 2");
  std::size_t n = patch.shape()[0], k = patch.shape()[1], d = patch.shape()[2];
  require(psi.shape()[0] == n && psi.shape()[1] == d, ErrorKind::Dimension,
          "attention_from_patch: psi shape mismatch");
  Tensor<T> q = expand_axis(reshape(head.q.apply(psi), {n, 1, d}), 1, k);
  Tensor<T> key = head.k.apply(patch);
  Tensor<T> value = head.v.apply(patch);
  Tensor<T> gamma = head.pos.apply(disp);
  Tensor<T> logits = head.score.apply(add(sub(q, key), gamma));
  Tensor<T> weights = softmax(logits, 1);
  if (weights_out != nullptr) *weights_out = weights;
  return sum_axis(mul(weights, add(value, gamma)), 1);
}

// Attention readout across the grid. Triplane: per-plane heads concatenated
// (3d). Volume: cfg.heads independent heads concatenated (heads*d).
template <class T>
Tensor<T> attention_interpolate(const FeatureGrid<T>& grid, const std::vector<Vec3>& queries,
                                const DecoderParams<T>& params, const DecoderConfig& cfg) {
  cfg.validate();
  require(params.heads.size() == cfg.head_count(), ErrorKind::Config,
          "attention_interpolate: expected " + std::to_string(cfg.head_count()) + " heads, have " +
              std::to_string(params.heads.size()));
  std::size_t n = queries.size();
  if (grid.layout.kind == GridKind::Triplane) {
    std::vector<Tensor<T>> feats;
    for (std::size_t p = 0; p < 3; ++p) {
      PatchIndex patch = neighbor_patch_plane(queries, grid.layout, p);
      Tensor<T> c = reshape(take_rows(grid.grids[p], patch.idx), {n, patch.count, cfg.feature_dim});
      Tensor<T> disp = patch_disp_tensor<T>(patch, n);
      Tensor<T> psi = bilinear_interpolate(grid.grids[p], queries, grid.layout, p);
      feats.push_back(attention_from_patch(c, disp, psi, params.heads[p]));
    }
    return concat(feats, 1);
  }
  PatchIndex patch = neighbor_patch_volume(queries, grid.layout);
  Tensor<T> c = reshape(take_rows(grid.grids[0], patch.idx), {n, patch.count, cfg.feature_dim});
  Tensor<T> disp = patch_disp_tensor<T>(patch, n);
  Tensor<T> psi = trilinear_interpolate(grid.grids[0], queries, grid.layout);
  std::vector<Tensor<T>> feats;
  for (const auto& head : params.heads) feats.push_back(attention_from_patch(c, disp, psi, head));
  return feats.size() == 1 ? feats[0] : concat(feats, 1);
}

// Plain interpolation readout (ablation baseline): volume trilinear (d),
// triplane per-plane bilinear concatenated (3d, keeping head width matched).
template <class T>
Tensor<T> linear_interpolate_feature(const FeatureGrid<T>& grid, const std::vector<Vec3>& queries) {
  if (grid.layout.kind == GridKind::Volume) return trilinear_interpolate(grid.grids[0], queries, grid.layout);
  std::vector<Tensor<T>> feats;
  for (std::size_t p = 0; p < 3; ++p)
    feats.push_back(bilinear_interpolate(grid.grids[p], queries, grid.layout, p));
  return concat(feats, 1);
}

// ResNet-FC stack -> linear -> sigmoid. Consumes interpolated features only;
// queries' absolute coordinates never enter.
template <class T>
Tensor<T> occupancy_head(const Tensor<T>& features, const DecoderParams<T>& params) {
  require(features.rank() == 2, ErrorKind::Dimension, "occupancy_head: features must be [Q, W]");
  require(params.out.w.shape()[0] == features.shape()[1], ErrorKind::Config,
          "occupancy_head: feature width " + std::to_string(features.shape()[1]) + " does not match parameters");
  Tensor<T> x = features;
  for (const auto& block : params.blocks) x = block.apply(x);
  return reshape(sigmoid(linear(x, params.out.w, params.out.b)), {features.shape()[0]});
}

template <class T>
Tensor<T> predict_occupancy(const FeatureGrid<T>& grid, const std::vector<Vec3>& queries,
                            const DecoderParams<T>& params, const DecoderConfig& cfg) {
  for (const auto& q : queries)
    for (int a = 0; a < 3; ++a)
      require(q[a] >= 0.0 && q[a] <= 1.0, ErrorKind::Contract, "predict_occupancy: queries must lie in [0,1]^3");
  Tensor<T> features = cfg.decode == DecodeMode::Attention ? attention_interpolate(grid, queries, params, cfg)
                                                           : linear_interpolate_feature(grid, queries);
  require(features.shape()[1] == cfg.feature_width(), ErrorKind::Config,
          "predict_occupancy: readout width mismatch");
  return occupancy_head(features, params);
}

// ---- parameters ----

template <class T>
DecoderParams<T> init_decoder(const DecoderConfig& cfg, Rng& rng) {
  cfg.validate();
  std::size_t d = cfg.feature_dim;
  std::size_t disp_dim = cfg.mode == GridKind::Triplane ? 2 : 3;
  DecoderParams<T> P;
  if (cfg.decode == DecodeMode::Attention) {
    for (std::size_t h = 0; h < cfg.head_count(); ++h) {
      AttentionHeadParams<T> head;
      head.q = detail::init_linear<T>(d, d, rng);
      head.k = detail::init_linear<T>(d, d, rng);
      head.v = detail::init_linear<T>(d, d, rng);
      head.score.w1 = kaiming_uniform<T>({d, d}, d, rng);
      head.score.b1 = Tensor<T>::zeros({d});
      head.score.w2 = kaiming_uniform<T>({d, d}, d, rng);
      // no output bias: softmax is invariant to constant logit shifts, so a
      // scoring output bias would be a permanently dead parameter
      head.pos.w1 = kaiming_uniform<T>({disp_dim, d}, disp_dim, rng);
      head.pos.b1 = Tensor<T>::zeros({d});
      head.pos.w2 = kaiming_uniform<T>({d, d}, d, rng);
      head.pos.b2 = Tensor<T>::zeros({d});
      P.heads.push_back(head);
    }
  }
  std::size_t width = cfg.feature_width();
  for (std::size_t b = 0; b < cfg.head_blocks; ++b) {
    ResnetBlockFc<T> block;
    block.fc0 = detail::init_linear<T>(width, width, rng);
    block.fc1 = detail::init_linear<T>(width, width, rng);
    P.blocks.push_back(block);
  }
  P.out = detail::init_linear<T>(width, 1, rng);
  return P;
}

template <class T>
void for_each_decoder_param(DecoderParams<T>& P, const std::function<void(const std::string&, Tensor<T>&)>& fn) {
  auto visit = [&fn](const std::string& name, Tensor<T>& t) {
    if (t.defined()) fn(name, t);
  };
  auto visit_mlp = [&visit](const std::string& base, Mlp2<T>& m) {
    visit(base + ".w1", m.w1);
    visit(base + ".b1", m.b1);
    visit(base + ".w2", m.w2);
    visit(base + ".b2", m.b2);
  };
  for (std::size_t h = 0; h < P.heads.size(); ++h) {
    auto base = "head" + std::to_string(h);
    visit(base + ".q.w", P.heads[h].q.w);
    visit(base + ".q.b", P.heads[h].q.b);
    visit(base + ".k.w", P.heads[h].k.w);
    visit(base + ".k.b", P.heads[h].k.b);
    visit(base + ".v.w", P.heads[h].v.w);
    visit(base + ".v.b", P.heads[h].v.b);
    visit_mlp(base + ".score", P.heads[h].score);
    visit_mlp(base + ".pos", P.heads[h].pos);
  }
  for (std::size_t b = 0; b < P.blocks.size(); ++b) {
    auto base = "block" + std::to_string(b);
    visit(base + ".fc0.w", P.blocks[b].fc0.w);
    visit(base + ".fc0.b", P.blocks[b].fc0.b);
    visit(base + ".fc1.w", P.blocks[b].fc1.w);
    visit(base + ".fc1.b", P.blocks[b].fc1.b);
  }
  visit("out.w", P.out.w);
  visit("out.b", P.out.b);
}

}  // namespace alto
