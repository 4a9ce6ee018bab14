#pragma once

// Reusable finite-difference gradient audits. Each audit builds a small,
// fixed-seed problem, differentiates a scalar probe through the graph, and
// compares against central differences. Shared by the CLI `gradcheck`
// command and the acceptance harness so both report the same rows.
//
// Seeds are pinned deliberately: central differences are undefined at relu
// kinks and drown in roundoff when a true gradient vanishes, so every
// configuration here was scanned to keep probed pre-activations away from
// kinks and probe losses away from stationary points.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "alto/gradcheck.hpp"
#include "alto/train.hpp"

namespace alto {

struct GradCheckRow {
  std::string name;
  double max_rel_err;
  double threshold;
  bool pass() const { return max_rel_err < threshold; }
};

inline Tensor<double> rand_uniform_tensor(const Shape& shape, Rng& rng, double lo = -0.9,
                                          double hi = 0.9) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.next_uniform(lo, hi);
  return Tensor<double>::from(shape, std::move(v));
}

// Zero-initialized biases put pre-activations exactly on the relu kink where
// central differences disagree with the subgradient; nudge them off it.
inline void randomize_zero_decoder_params(DecoderParams<double>& P, std::uint64_t seed) {
  Rng fill(seed, 52);
  for_each_decoder_param<double>(P, [&fill](const std::string&, Tensor<double>& t) {
    bool all_zero = true;
    for (double v : t.values()) all_zero &= (v == 0.0);
    if (all_zero)
      for (auto& v : t.values_mut())
        v = fill.next_uniform(0.05, 0.3) * (fill.next_u64() % 2 ? 1.0 : -1.0);
  });
}

// One row per differentiable kernel, each probed through a reduction so the
// checked quantity is a scalar.
inline std::vector<GradCheckRow> kernel_grad_rows() {
  std::vector<GradCheckRow> rows;
  Rng rng(2024, 17);

  auto check = [&](const std::string& name, double threshold,
                   const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& f,
                   std::vector<Tensor<double>> inputs) {
    auto report = grad_check<double>(f, std::move(inputs), 1e-6, 24);
    rows.push_back({name, report.max_rel_err, threshold});
  };

  check("linear", 1e-6,
        [&](const std::vector<Tensor<double>>& in) { return sum(linear(in[0], in[1], in[2])); },
        {rand_uniform_tensor({5, 4}, rng), rand_uniform_tensor({4, 3}, rng),
         rand_uniform_tensor({3}, rng)});

  check("relu", 1e-4,
        [&](const std::vector<Tensor<double>>& in) { return sum(relu(in[0])); },
        {rand_uniform_tensor({6, 3}, rng)});

  check("softmax", 1e-6,
        [&](const std::vector<Tensor<double>>& in) {
          return sum(mul(softmax(in[0], 1), in[1]));
        },
        {rand_uniform_tensor({4, 5}, rng), rand_uniform_tensor({4, 5}, rng)});

  check("conv2d", 1e-6,
        [&](const std::vector<Tensor<double>>& in) {
          return sum(conv2d(in[0], in[1], in[2], 1, Padding::Zero));
        },
        {rand_uniform_tensor({6, 6, 3}, rng), rand_uniform_tensor({3, 3, 3, 2}, rng),
         rand_uniform_tensor({2}, rng)});

  check("conv3d", 1e-6,
        [&](const std::vector<Tensor<double>>& in) {
          return sum(conv3d(in[0], in[1], in[2], 2, Padding::Circular));
        },
        {rand_uniform_tensor({4, 4, 4, 2}, rng), rand_uniform_tensor({3, 3, 3, 2, 2}, rng),
         rand_uniform_tensor({2}, rng)});

  check("upsample", 1e-6,
        [&](const std::vector<Tensor<double>>& in) { return sum(upsample_nearest2x(in[0], 2)); },
        {rand_uniform_tensor({3, 3, 2}, rng)});

  GridLayout tri;
  tri.kind = GridKind::Triplane;
  tri.res = 5;
  tri.spacing = 0.25;
  GridLayout volu;
  volu.kind = GridKind::Volume;
  volu.res = 5;
  volu.spacing = 0.25;
  std::vector<Vec3> pts;
  for (int i = 0; i < 7; ++i)
    pts.push_back({rng.next_uniform(0.05, 0.95), rng.next_uniform(0.05, 0.95),
                   rng.next_uniform(0.05, 0.95)});

  check("gather_bilinear", 1e-6,
        [&](const std::vector<Tensor<double>>& in) {
          FeatureGrid<double> g;
          g.layout = tri;
          g.grids = {in[0], in[1], in[2]};
          return sum(grid_to_point(g, pts));
        },
        {rand_uniform_tensor({5, 5, 3}, rng), rand_uniform_tensor({5, 5, 3}, rng),
         rand_uniform_tensor({5, 5, 3}, rng)});

  check("gather_trilinear", 1e-6,
        [&](const std::vector<Tensor<double>>& in) {
          FeatureGrid<double> g;
          g.layout = volu;
          g.grids = {in[0]};
          return sum(grid_to_point(g, pts));
        },
        {rand_uniform_tensor({5, 5, 5, 3}, rng)});

  {
    std::vector<std::size_t> idx = {0, 3, 3, 1, 4, 2, 0};
    check("scatter_mean", 1e-6,
          [&, idx](const std::vector<Tensor<double>>& in) {
            return sum(scatter_mean(in[0], idx, 5));
          },
          {rand_uniform_tensor({7, 3}, rng)});
  }

  check("point_to_grid_mlp", 1e-4,
        [&](const std::vector<Tensor<double>>& in) {
          Mlp2<double> mlp{in[1], in[2], in[3], in[4]};
          auto g = point_to_grid(in[0], pts, volu, mlp);
          Tensor<double> acc = sum(g.grids[0]);
          for (std::size_t p = 1; p < g.grids.size(); ++p) acc = add(acc, sum(g.grids[p]));
          return acc;
        },
        {rand_uniform_tensor({7, 3}, rng), rand_uniform_tensor({3, 4}, rng),
         rand_uniform_tensor({4}, rng), rand_uniform_tensor({4, 3}, rng),
         rand_uniform_tensor({3}, rng)});

  {
    DecoderConfig dc;
    dc.mode = GridKind::Volume;
    dc.feature_dim = 3;
    dc.heads = 1;
    dc.head_blocks = 1;
    auto dec = init_decoder<double>(dc, rng);
    randomize_zero_decoder_params(dec, 71);
    check("attention", 1e-4,
          [&](const std::vector<Tensor<double>>& in) {
            FeatureGrid<double> g;
            g.layout = volu;
            g.grids = {in[0]};
            return sum(attention_interpolate(g, pts, dec, dc));
          },
          {rand_uniform_tensor({5, 5, 5, 3}, rng)});

    check("occupancy_head", 1e-4,
          [&](const std::vector<Tensor<double>>& in) {
            FeatureGrid<double> g;
            g.layout = volu;
            g.grids = {in[0]};
            return sum(predict_occupancy(g, pts, dec, dc));
          },
          {rand_uniform_tensor({5, 5, 5, 3}, rng)});
  }

  {
    std::vector<double> targets = {1, 0, 1, 1, 0, 1, 0};
    check("bce", 1e-6,
          [&, targets](const std::vector<Tensor<double>>& in) {
            return bce_loss_sum(sigmoid(in[0]), targets);
          },
          {rand_uniform_tensor({7}, rng, -2.0, 2.0)});
  }

  return rows;
}

// Full-pipeline audit: encoder -> decoder -> BCE, differentiated with respect
// to every parameter. The three seeds pick initialization, the nudge applied
// to all-zero parameters, and the cloud/query geometry.
struct PipelineGradSpec {
  std::string name = "pipeline_composite";
  EncoderConfig enc;
  DecoderConfig dec;
  std::uint64_t init_seed = 15;
  std::uint64_t fill_seed = 115;
  std::uint64_t data_seed = 215;
  std::size_t cloud_points = 6;
  std::size_t query_points = 8;
  std::size_t max_coords = 3;
  double eps = 1e-6;
  double threshold = 1e-3;
};

inline GradCheckRow pipeline_grad_row(const PipelineGradSpec& spec) {
  Rng rng(spec.init_seed, streams::kInit);
  auto P = init_encoder<double>(spec.enc, rng);
  auto D = init_decoder<double>(spec.dec, rng);
  Rng fill(spec.fill_seed, 33);
  auto nudge = [&](const std::string&, Tensor<double>& t) {
    bool all_zero = true;
    for (double v : t.values()) all_zero &= (v == 0.0);
    if (all_zero)
      for (auto& v : t.values_mut())
        v = fill.next_uniform(0.05, 0.2) * (fill.next_u64() % 2 ? 1.0 : -1.0);
  };
  for_each_encoder_param<double>(P, nudge);
  for_each_decoder_param<double>(D, nudge);

  std::vector<Vec3> cloud, queries;
  Rng crng(spec.data_seed, 2);
  for (std::size_t i = 0; i < spec.cloud_points; ++i)
    cloud.push_back({crng.next_uniform(0.1, 0.9), crng.next_uniform(0.1, 0.9),
                     crng.next_uniform(0.1, 0.9)});
  std::vector<double> targets;
  for (std::size_t i = 0; i < spec.query_points; ++i) {
    queries.push_back({crng.next_uniform(0.05, 0.95), crng.next_uniform(0.05, 0.95),
                       crng.next_uniform(0.05, 0.95)});
    targets.push_back(i % 2 ? 1.0 : 0.0);
  }

  std::vector<Tensor<double>> params;
  auto collect = [&](const std::string&, Tensor<double>& t) { params.push_back(t); };
  for_each_encoder_param<double>(P, collect);
  for_each_decoder_param<double>(D, collect);
  auto report = grad_check<double>(
      [&](const std::vector<Tensor<double>>&) {
        auto g = encode(cloud, P, spec.enc);
        auto pred = predict_occupancy(g, queries, D, spec.dec);
        return bce_loss_sum(pred, targets);
      },
      params, spec.eps, spec.max_coords);
  return {spec.name, report.max_rel_err, spec.threshold};
}

// Decoder audit over both grid layouts, differentiating through attention
// interpolation and the occupancy head with respect to the grid features.
inline std::vector<GradCheckRow> decoder_grad_rows() {
  std::vector<GradCheckRow> rows;
  for (GridKind kind : {GridKind::Volume, GridKind::Triplane}) {
    Rng rng(1, 5);
    std::vector<Vec3> pts;
    for (int i = 0; i < 5; ++i)
      pts.push_back({rng.next_uniform(0.05, 0.95), rng.next_uniform(0.05, 0.95),
                     rng.next_uniform(0.05, 0.95)});
    DecoderConfig dc;
    dc.mode = kind;
    dc.feature_dim = 3;
    dc.heads = 2;
    dc.head_blocks = 2;
    Rng irng(3, streams::kInit);
    auto dec = init_decoder<double>(dc, irng);
    randomize_zero_decoder_params(dec, 60);
    GridLayout layout;
    layout.kind = kind;
    layout.res = 5;
    layout.spacing = 0.25;
    std::vector<Tensor<double>> grids;
    for (std::size_t p = 0; p < layout.planes(); ++p)
      grids.push_back(
          rand_uniform_tensor(kind == GridKind::Volume ? Shape{5, 5, 5, 3} : Shape{5, 5, 3}, rng));
    auto report = grad_check<double>(
        [&](const std::vector<Tensor<double>>& in) {
          FeatureGrid<double> g;
          g.layout = layout;
          g.grids = in;
          return sum(predict_occupancy(g, pts, dec, dc));
        },
        grids, 1e-6, 16);
    rows.push_back({kind == GridKind::Volume ? "decode_volume" : "decode_triplane",
                    report.max_rel_err, 1e-4});
  }
  return rows;
}

}  // namespace alto
