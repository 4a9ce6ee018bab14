#include <algorithm>
#include <cmath>
#include <vector>

#include "alto/decoder.hpp"
#include "alto/gradcheck.hpp"
#include "doctest.h"

using namespace alto;

namespace {

FeatureGrid<double> random_volume_grid(std::size_t res, std::size_t d, std::uint64_t seed) {
  FeatureGrid<double> g = make_feature_grid<double>(GridLayout::base(GridKind::Volume, res), d);
  Rng rng(seed, 50);
  for (auto& v : g.grids[0].values_mut()) v = rng.next_uniform(-1.0, 1.0);
  return g;
}

FeatureGrid<double> random_triplane_grid(std::size_t res, std::size_t d, std::uint64_t seed) {
  FeatureGrid<double> g = make_feature_grid<double>(GridLayout::base(GridKind::Triplane, res), d);
  Rng rng(seed, 51);
  for (auto& plane : g.grids)
    for (auto& v : plane.values_mut()) v = rng.next_uniform(-1.0, 1.0);
  return g;
}

void randomize_zero_params(DecoderParams<double>& P, std::uint64_t seed) {
  Rng fill(seed, 52);
  for_each_decoder_param<double>(P, [&fill](const std::string&, Tensor<double>& t) {
    bool all_zero = true;
    for (double v : t.values()) all_zero &= (v == 0.0);
    if (all_zero)
      for (auto& v : t.values_mut()) v = fill.next_uniform(0.05, 0.3) * (fill.next_u64() % 2 ? 1.0 : -1.0);
  });
}

}  // namespace

TEST_CASE("neighbor patches: counts, displacements, boundary clamping") {
  GridLayout vol = GridLayout::base(GridKind::Volume, 5);  // spacing 0.25

  SUBCASE("volume patch at mid-cell query matches hand displacement") {
    std::vector<Vec3> q = {{0.3, 0.35, 0.4}};  // t = (1.2, 1.4, 1.6), nearest (1,1,2)
    auto patch = neighbor_patch_volume(q, vol);
    CHECK(patch.count == 27);
    CHECK(patch.dim == 3);
    REQUIRE(patch.idx.size() == 27);
    // entry 0 is offset (-1,-1,-1) -> node (0,0,1)
    CHECK(patch.idx[0] == (0 * 5 + 0) * 5 + 1);
    CHECK(patch.disp[0] == doctest::Approx(1.2));
    CHECK(patch.disp[1] == doctest::Approx(1.4));
    CHECK(patch.disp[2] == doctest::Approx(0.6));
    // entry 13 is the center (1,1,2)
    CHECK(patch.idx[13] == (1 * 5 + 1) * 5 + 2);
    CHECK(patch.disp[13 * 3 + 0] == doctest::Approx(0.2));
    CHECK(patch.disp[13 * 3 + 1] == doctest::Approx(0.4));
    CHECK(patch.disp[13 * 3 + 2] == doctest::Approx(-0.4));
  }

  SUBCASE("interior node query: zero displacement present, all within 1.5 cells") {
    std::vector<Vec3> q = {{0.5, 0.5, 0.5}};  // exactly node (2,2,2)
    auto patch = neighbor_patch_volume(q, vol);
    bool has_zero = false;
    for (std::size_t i = 0; i < 27; ++i) {
      double a = patch.disp[i * 3], b = patch.disp[i * 3 + 1], c = patch.disp[i * 3 + 2];
      if (a == 0.0 && b == 0.0 && c == 0.0) has_zero = true;
      CHECK(std::abs(a) <= 1.5);
      CHECK(std::abs(b) <= 1.5);
      CHECK(std::abs(c) <= 1.5);
    }
    CHECK(has_zero);
  }

  SUBCASE("corner query clamps to valid indices") {
    std::vector<Vec3> q = {{0.0, 0.0, 0.0}};
    auto patch = neighbor_patch_volume(q, vol);
    for (std::size_t i : patch.idx) CHECK(i < 125);
    // clamped entries duplicate the corner node
    CHECK(std::count(patch.idx.begin(), patch.idx.end(), std::size_t{0}) == 8);
  }

  SUBCASE("plane patch count and axis selection") {
    GridLayout tri = GridLayout::base(GridKind::Triplane, 5);
    std::vector<Vec3> q = {{0.3, 0.55, 0.8}};
    auto xy = neighbor_patch_plane(q, tri, 0);
    CHECK(xy.count == 9);
    CHECK(xy.dim == 2);
    // plane 2 (yz) center: t = (2.2, 3.2) -> nearest (2,3)
    auto yz = neighbor_patch_plane(q, tri, 2);
    CHECK(yz.idx[4] == 2 * 5 + 3);
    CHECK(yz.disp[4 * 2 + 0] == doctest::Approx(0.2));
    CHECK(yz.disp[4 * 2 + 1] == doctest::Approx(0.2));
  }
}

TEST_CASE("attention: weights sum to one and match the equation oracle at d=4") {
  const std::size_t K = 5, d = 4, n = 3;
  Rng rng(9, 1);
  AttentionHeadParams<double> head;
  head.q = detail::init_linear<double>(d, d, rng);
  head.k = detail::init_linear<double>(d, d, rng);
  head.v = detail::init_linear<double>(d, d, rng);
  head.score.w1 = kaiming_uniform<double>({d, d}, d, rng);
  head.score.b1 = Tensor<double>::zeros({d});
  head.score.w2 = kaiming_uniform<double>({d, d}, d, rng);
  head.score.b2 = Tensor<double>::zeros({d});
  head.pos.w1 = kaiming_uniform<double>({3, d}, 3, rng);
  head.pos.b1 = Tensor<double>::zeros({d});
  head.pos.w2 = kaiming_uniform<double>({d, d}, d, rng);
  head.pos.b2 = Tensor<double>::zeros({d});
  // nonzero biases everywhere
  Rng fill(4, 2);
  for (auto* t : {&head.q.b, &head.k.b, &head.v.b, &head.score.b1, &head.score.b2, &head.pos.b1, &head.pos.b2})
    for (auto& v : t->values_mut()) v = fill.next_uniform(-0.4, 0.4);

  std::vector<double> pv(n * K * d), dv(n * K * 3), sv(n * d);
  for (auto& v : pv) v = fill.next_uniform(-1, 1);
  for (auto& v : dv) v = fill.next_uniform(-1.5, 1.5);
  for (auto& v : sv) v = fill.next_uniform(-1, 1);
  auto patch = Tensor<double>::from({n, K, d}, std::vector<double>(pv));
  auto disp = Tensor<double>::from({n, K, 3}, std::vector<double>(dv));
  auto psi = Tensor<double>::from({n, d}, std::vector<double>(sv));

  NoGradGuard ng;
  Tensor<double> weights;
  auto F = attention_from_patch(patch, disp, psi, head, &weights);
  REQUIRE(F.shape() == Shape{n, d});
  REQUIRE(weights.shape() == Shape{n, K, d});

  SUBCASE("per-channel weights positive, summing to 1") {
    for (std::size_t m = 0; m < n; ++m)
      for (std::size_t c = 0; c < d; ++c) {
        double s = 0;
        for (std::size_t i = 0; i < K; ++i) {
          double a = weights.values()[(m * K + i) * d + c];
          CHECK(a > 0.0);
          s += a;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
      }
  }

  SUBCASE("loop-written oracle for the full attention equations") {
    auto lin = [&](const Tensor<double>& w, const Tensor<double>& b, const double* x, std::size_t in,
                   double* out) {
      for (std::size_t o = 0; o < d; ++o) {
        double acc = b.values()[o];
        for (std::size_t i = 0; i < in; ++i) acc += x[i] * w.values()[i * d + o];
        out[o] = acc;
      }
    };
    auto mlp2 = [&](const Mlp2<double>& m, const double* x, std::size_t in, double* out) {
      std::vector<double> hmid(d);
      lin(m.w1, m.b1, x, in, hmid.data());
      for (auto& v : hmid) v = std::max(0.0, v);
      lin(m.w2, m.b2, hmid.data(), d, out);
    };
    for (std::size_t m = 0; m < n; ++m) {
      std::vector<double> Q(d);
      lin(head.q.w, head.q.b, sv.data() + m * d, d, Q.data());
      std::vector<std::vector<double>> Ki(K, std::vector<double>(d)), Vi = Ki, Gi = Ki, logits = Ki;
      for (std::size_t i = 0; i < K; ++i) {
        lin(head.k.w, head.k.b, pv.data() + (m * K + i) * d, d, Ki[i].data());
        lin(head.v.w, head.v.b, pv.data() + (m * K + i) * d, d, Vi[i].data());
        mlp2(head.pos, dv.data() + (m * K + i) * 3, 3, Gi[i].data());
        std::vector<double> s_in(d);
        for (std::size_t c = 0; c < d; ++c) s_in[c] = Q[c] - Ki[i][c] + Gi[i][c];
        mlp2(head.score, s_in.data(), d, logits[i].data());
      }
      for (std::size_t c = 0; c < d; ++c) {
        double mx = logits[0][c];
        for (std::size_t i = 1; i < K; ++i) mx = std::max(mx, logits[i][c]);
        double z = 0;
        for (std::size_t i = 0; i < K; ++i) z += std::exp(logits[i][c] - mx);
        double Fc = 0;
        for (std::size_t i = 0; i < K; ++i) {
          double a = std::exp(logits[i][c] - mx) / z;
          Fc += a * (Vi[i][c] + Gi[i][c]);
        }
        CHECK(F.values()[m * d + c] == doctest::Approx(Fc).epsilon(1e-12));
      }
    }
  }

  SUBCASE("invariant under shuffling the neighbor enumeration") {
    std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    std::vector<double> pv2(n * K * d), dv2(n * K * 3);
    for (std::size_t m = 0; m < n; ++m)
      for (std::size_t i = 0; i < K; ++i) {
        for (std::size_t c = 0; c < d; ++c) pv2[(m * K + i) * d + c] = pv[(m * K + perm[i]) * d + c];
        for (std::size_t a = 0; a < 3; ++a) dv2[(m * K + i) * 3 + a] = dv[(m * K + perm[i]) * 3 + a];
      }
    auto F2 = attention_from_patch(Tensor<double>::from({n, K, d}, std::move(pv2)),
                                   Tensor<double>::from({n, K, 3}, std::move(dv2)), psi, head);
    for (std::size_t i = 0; i < n * d; ++i)
      CHECK(F2.values()[i] == doctest::Approx(F.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("attention: constant grid with constant positional bias gives F = v + b") {
  const std::size_t d = 3;
  DecoderConfig cfg;
  cfg.mode = GridKind::Volume;
  cfg.feature_dim = d;
  cfg.heads = 1;
  cfg.head_blocks = 1;
  Rng rng(12, 1);
  auto P = init_decoder<double>(cfg, rng);
  // constant-value grid
  FeatureGrid<double> g = make_feature_grid<double>(GridLayout::base(GridKind::Volume, 6), d);
  std::vector<double> c = {0.7, -0.4, 1.1};
  {
    auto& v = g.grids[0].values_mut();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = c[i % d];
  }
  // gamma == constant bias b
  std::vector<double> b = {0.25, -0.5, 0.1};
  for (auto& v : P.heads[0].pos.w1.values_mut()) v = 0.0;
  for (auto& v : P.heads[0].pos.w2.values_mut()) v = 0.0;
  P.heads[0].pos.b2 = Tensor<double>::from({d}, std::vector<double>(b));

  NoGradGuard ng;
  std::vector<Vec3> qs = {{0.31, 0.52, 0.44}, {0.5, 0.5, 0.5}, {0.77, 0.21, 0.6}};
  auto F = attention_interpolate(g, qs, P, cfg);
  // v = Wv c + bv
  std::vector<double> v_expect(d);
  for (std::size_t o = 0; o < d; ++o) {
    double acc = P.heads[0].v.b.values()[o];
    for (std::size_t i = 0; i < d; ++i) acc += c[i] * P.heads[0].v.w.values()[i * d + o];
    v_expect[o] = acc + b[o];
  }
  for (std::size_t m = 0; m < qs.size(); ++m)
    for (std::size_t o = 0; o < d; ++o)
      CHECK(F.values()[m * d + o] == doctest::Approx(v_expect[o]).epsilon(1e-12));
}

TEST_CASE("linear interpolation readout matches the interpolation kernels") {
  NoGradGuard ng;
  SUBCASE("volume: equals trilinear, constant grid stays constant") {
    auto g = random_volume_grid(6, 4, 3);
    std::vector<Vec3> qs = {{0.1, 0.9, 0.4}, {0.35, 0.35, 0.35}};
    auto f = linear_interpolate_feature(g, qs);
    auto t = trilinear_interpolate(g.grids[0], qs, g.layout);
    CHECK(f.values() == t.values());
  }
  SUBCASE("triplane: per-plane concatenation, node query returns stored values") {
    auto g = random_triplane_grid(5, 3, 4);
    std::vector<Vec3> qs = {{0.5, 0.25, 0.75}};  // node (2,1,3)
    auto f = linear_interpolate_feature(g, qs);
    REQUIRE(f.shape() == Shape{1, 9});
    // plane 0 (xy) node (2,1); plane 1 (xz) node (2,3); plane 2 (yz) node (1,3)
    const std::size_t d = 3, R = 5;
    for (std::size_t c = 0; c < d; ++c) {
      CHECK(f.values()[c] == doctest::Approx(g.grids[0].values()[(2 * R + 1) * d + c]).epsilon(1e-12));
      CHECK(f.values()[d + c] == doctest::Approx(g.grids[1].values()[(2 * R + 3) * d + c]).epsilon(1e-12));
      CHECK(f.values()[2 * d + c] == doctest::Approx(g.grids[2].values()[(1 * R + 3) * d + c]).epsilon(1e-12));
    }
  }
}

TEST_CASE("occupancy head: range, zero params, batching") {
  DecoderConfig cfg;
  cfg.mode = GridKind::Volume;
  cfg.feature_dim = 4;
  cfg.heads = 2;
  cfg.head_blocks = 3;
  Rng rng(7, 1);
  auto P = init_decoder<double>(cfg, rng);
  randomize_zero_params(P, 88);
  NoGradGuard ng;

  SUBCASE("strictly inside (0,1)") {
    Rng fr(2, 3);
    std::vector<double> fv(6 * 8);
    for (auto& v : fv) v = fr.next_uniform(-2, 2);
    auto probs = occupancy_head(Tensor<double>::from({6, 8}, std::move(fv)), P);
    for (double p : probs.values()) {
      CHECK(p > 0.0);
      CHECK(p < 1.0);
    }
  }

  SUBCASE("all-zero parameters produce exactly 0.5") {
    DecoderParams<double> Z;
    for (std::size_t b = 0; b < 3; ++b) {
      ResnetBlockFc<double> blk;
      blk.fc0 = {Tensor<double>::zeros({8, 8}), Tensor<double>::zeros({8})};
      blk.fc1 = {Tensor<double>::zeros({8, 8}), Tensor<double>::zeros({8})};
      Z.blocks.push_back(blk);
    }
    Z.out = {Tensor<double>::zeros({8, 1}), Tensor<double>::zeros({1})};
    Rng fr(2, 3);
    std::vector<double> fv(5 * 8);
    for (auto& v : fv) v = fr.next_uniform(-2, 2);
    auto probs = occupancy_head(Tensor<double>::from({5, 8}, std::move(fv)), Z);
    for (double p : probs.values()) CHECK(p == 0.5);
  }

  SUBCASE("feature width mismatch rejected") {
    CHECK_THROWS_AS(occupancy_head(Tensor<double>::zeros({2, 5}), P), Error);
  }

  SUBCASE("batch-of-1 equals the row of a larger batch bitwise") {
    auto g = random_volume_grid(6, 4, 11);
    std::vector<Vec3> batch = {{0.2, 0.4, 0.6}, {0.5, 0.5, 0.5}, {0.9, 0.1, 0.3}};
    auto full = predict_occupancy(g, batch, P, cfg);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      auto one = predict_occupancy(g, {batch[i]}, P, cfg);
      CHECK(one.values()[0] == full.values()[i]);
    }
  }
}

TEST_CASE("predict_occupancy: determinism, mode switch, query validation, head independence") {
  auto g = random_volume_grid(8, 4, 21);
  std::vector<Vec3> qs;
  Rng qr(5, 9);
  for (int i = 0; i < 10; ++i) qs.push_back({qr.next_uniform(0, 1), qr.next_uniform(0, 1), qr.next_uniform(0, 1)});

  DecoderConfig att;
  att.mode = GridKind::Volume;
  att.feature_dim = 4;
  att.heads = 2;
  att.head_blocks = 2;
  Rng r1(3, 1);
  auto Pa = init_decoder<double>(att, r1);
  randomize_zero_params(Pa, 7);

  DecoderConfig lin = att;
  lin.decode = DecodeMode::LinearInterp;
  Rng r2(3, 1);
  auto Pl = init_decoder<double>(lin, r2);
  randomize_zero_params(Pl, 8);

  NoGradGuard ng;
  auto pa = predict_occupancy(g, qs, Pa, att);
  auto pa2 = predict_occupancy(g, qs, Pa, att);
  auto pl = predict_occupancy(g, qs, Pl, lin);

  CHECK(pa.values() == pa2.values());  // bitwise deterministic
  CHECK(pa.shape() == Shape{10});
  CHECK(pl.shape() == Shape{10});
  double diff = 0;
  for (std::size_t i = 0; i < 10; ++i) diff = std::max(diff, std::abs(pa.values()[i] - pl.values()[i]));
  CHECK(diff > 0.0);

  CHECK_THROWS_AS(predict_occupancy(g, {{0.5, -0.1, 0.5}}, Pa, att), Error);

  // multi-head: heads produce genuinely different subspace features
  auto feats = attention_interpolate(g, qs, Pa, att);
  REQUIRE(feats.shape() == Shape{10, 8});
  double head_diff = 0;
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t c = 0; c < 4; ++c)
      head_diff = std::max(head_diff, std::abs(feats.values()[i * 8 + c] - feats.values()[i * 8 + 4 + c]));
  CHECK(head_diff > 1e-6);
}

TEST_CASE("translating grid content and queries together leaves predictions unchanged") {
  const std::size_t R = 12, d = 4;
  auto g = random_volume_grid(R, d, 31);
  DecoderConfig cfg;
  cfg.mode = GridKind::Volume;
  cfg.feature_dim = d;
  cfg.heads = 2;
  cfg.head_blocks = 2;
  Rng rng(13, 1);
  auto P = init_decoder<double>(cfg, rng);
  randomize_zero_params(P, 17);

  // cyclically shift the grid content by +2 nodes per axis
  FeatureGrid<double> shifted = make_feature_grid<double>(g.layout, d);
  {
    const auto& src = g.grids[0].values();
    auto& dst = shifted.grids[0].values_mut();
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < R; ++j)
        for (std::size_t k = 0; k < R; ++k)
          for (std::size_t c = 0; c < d; ++c)
            dst[(((((i + 2) % R) * R + (j + 2) % R) * R + (k + 2) % R)) * d + c] =
                src[((i * R + j) * R + k) * d + c];
  }
  const double h = 1.0 / (R - 1);
  std::vector<Vec3> qs, qs_shifted;
  Rng qr(3, 4);
  for (int i = 0; i < 12; ++i) {
    Vec3 q = {qr.next_uniform(3 * h, 1 - 6 * h), qr.next_uniform(3 * h, 1 - 6 * h), qr.next_uniform(3 * h, 1 - 6 * h)};
    qs.push_back(q);
    qs_shifted.push_back({q[0] + 2 * h, q[1] + 2 * h, q[2] + 2 * h});
  }
  NoGradGuard ng;
  auto base = predict_occupancy(g, qs, P, cfg);
  auto moved = predict_occupancy(shifted, qs_shifted, P, cfg);
  for (std::size_t i = 0; i < qs.size(); ++i)
    CHECK(std::abs(base.values()[i] - moved.values()[i]) < 1e-9);
}

TEST_CASE("decoder gradients pass finite differences (d=4)") {
  const std::size_t d = 4;
  for (GridKind kind : {GridKind::Volume, GridKind::Triplane}) {
    DecoderConfig cfg;
    cfg.mode = kind;
    cfg.feature_dim = d;
    cfg.heads = 2;
    cfg.head_blocks = 2;
    Rng rng(23, 1);
    auto P = init_decoder<double>(cfg, rng);
    randomize_zero_params(P, 29);
    FeatureGrid<double> g = kind == GridKind::Volume ? random_volume_grid(6, d, 41) : random_triplane_grid(6, d, 42);

    std::vector<Vec3> qs = {{0.21, 0.63, 0.44}, {0.5, 0.5, 0.52}, {0.83, 0.17, 0.39}, {0.05, 0.95, 0.5}};
    std::vector<Tensor<double>> inputs;
    for (auto& t : g.grids) {
      t.set_requires_grad(true);
      inputs.push_back(t);
    }
    for_each_decoder_param<double>(P, [&inputs](const std::string&, Tensor<double>& t) {
      t.set_requires_grad(true);
      inputs.push_back(t);
    });
    auto f = [&](const std::vector<Tensor<double>>&) { return sum(predict_occupancy(g, qs, P, cfg)); };
    auto report = grad_check<double>(f, inputs, 1e-6, 6);
    CHECK(report.max_rel_err < 1e-4);
  }
}
