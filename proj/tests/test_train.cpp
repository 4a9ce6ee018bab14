#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "alto/gradcheck.hpp"
#include "alto/train.hpp"
#include "doctest.h"

using namespace alto;

namespace {

EncoderConfig tiny_encoder() {
  EncoderConfig e;
  e.mode = GridKind::Volume;
  e.resolution = 8;
  e.feature_dim = 2;
  e.depth = 2;
  e.no_resample_levels = 1;
  e.pointnet_blocks = 2;
  return e;
}

DecoderConfig tiny_decoder() {
  DecoderConfig d;
  d.mode = GridKind::Volume;
  d.feature_dim = 2;
  d.heads = 1;
  d.head_blocks = 2;
  return d;
}

ShapeSpec sphere_spec() {
  ShapeSpec spec;
  Primitive s;
  s.type = Primitive::Type::Sphere;
  s.center = {0.5, 0.5, 0.5};
  s.radius = 0.3;
  spec.primitives.push_back(s);
  return spec;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("bce loss: analytic values, oracle, bounds, validation") {
  SUBCASE("p=0.5, o=1 gives ln 2") {
    auto pred = Tensor<double>::from({1}, {0.5});
    auto loss = bce_loss_sum(pred, {1.0});
    CHECK(loss.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }

  SUBCASE("perfect predictions bounded by the clamp") {
    const std::size_t q = 10;
    std::vector<double> targets(q, 1.0);
    auto pred = Tensor<double>::from({q}, std::vector<double>(q, 1.0));
    double val = bce_loss_sum(pred, targets, 1e-7).item();
    CHECK(val >= 0.0);
    CHECK(val <= q * -std::log(1.0 - 1e-7) + 1e-12);
  }

  SUBCASE("random batch of 64 matches the scalar loop oracle") {
    Rng rng(6, 1);
    const std::size_t q = 64;
    std::vector<double> pv(q), targets(q);
    for (std::size_t i = 0; i < q; ++i) {
      pv[i] = rng.next_uniform(0.02, 0.98);
      targets[i] = rng.next_u64() % 2 ? 1.0 : 0.0;
    }
    auto loss = bce_loss_sum(Tensor<double>::from({q}, std::vector<double>(pv)), targets);
    double expect = 0;
    const double eps = 1e-7;
    for (std::size_t i = 0; i < q; ++i) {
      double p = std::min(std::max(pv[i], eps), 1.0 - eps);
      expect -= targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p);
    }
    CHECK(loss.item() == doctest::Approx(expect).epsilon(1e-12));
    CHECK(loss.item() >= 0.0);
  }

  SUBCASE("gradient matches (p - o) / (p (1 - p)) inside the clamp region") {
    Rng rng(9, 2);
    const std::size_t q = 16;
    std::vector<double> pv(q), targets(q);
    for (std::size_t i = 0; i < q; ++i) {
      pv[i] = rng.next_uniform(0.1, 0.9);
      targets[i] = rng.next_u64() % 2 ? 1.0 : 0.0;
    }
    auto pred = Tensor<double>::from({q}, std::vector<double>(pv));
    pred.set_requires_grad(true);
    auto loss = bce_loss_sum(pred, targets);
    backward(loss);
    for (std::size_t i = 0; i < q; ++i) {
      double analytic = (pv[i] - targets[i]) / (pv[i] * (1.0 - pv[i]));
      CHECK(pred.grad()[i] == doctest::Approx(analytic).epsilon(1e-10));
    }
    // and against finite differences
    auto pred2 = Tensor<double>::from({q}, std::vector<double>(pv));
    auto f = [&](const std::vector<Tensor<double>>& in) { return bce_loss_sum(in[0], targets); };
    auto report = grad_check<double>(f, {pred2}, 1e-6);
    CHECK(report.max_rel_err < 1e-6);
  }

  SUBCASE("invalid inputs rejected") {
    auto pred = Tensor<double>::from({2}, {0.5, 0.5});
    CHECK_THROWS_AS(bce_loss_sum(pred, {1.0, 0.5}), Error);
    auto bad = Tensor<double>::from({1}, {1.5});
    CHECK_THROWS_AS(bce_loss_sum(bad, {1.0}), Error);
    CHECK_THROWS_AS(bce_loss_sum(pred, {1.0}), Error);  // length mismatch
  }
}

TEST_CASE("fit: zero steps, determinism, learning sanity") {
  auto enc = tiny_encoder();
  auto dec = tiny_decoder();
  auto spec = sphere_spec();

  SUBCASE("zero steps leaves parameters untouched and history empty") {
    auto model = init_model<double>(enc, dec, 3);
    std::vector<std::vector<double>> before;
    for (auto& [n, t] : named_model_params(model)) before.push_back(t.values());
    TrainConfig cfg;
    cfg.steps = 0;
    cfg.points = 20;
    cfg.queries = 8;
    cfg.seed = 3;
    AdamState<double> adam;
    auto result = fit(spec, model, enc, dec, cfg, adam);
    CHECK(result.sum_loss.empty());
    CHECK(result.mean_loss.empty());
    std::size_t i = 0;
    for (auto& [n, t] : named_model_params(model)) CHECK(t.values() == before[i++]);
  }

  SUBCASE("same seed twice: bitwise-identical loss histories and parameters") {
    TrainConfig cfg;
    cfg.steps = 3;
    cfg.points = 25;
    cfg.queries = 12;
    cfg.lr = 1e-3;
    cfg.seed = 11;
    auto run = [&]() {
      auto model = init_model<double>(enc, dec, 7);
      AdamState<double> adam;
      auto r = fit(spec, model, enc, dec, cfg, adam);
      std::vector<std::vector<double>> vals;
      for (auto& [n, t] : named_model_params(model)) vals.push_back(t.values());
      return std::make_pair(r, vals);
    };
    auto [r1, v1] = run();
    auto [r2, v2] = run();
    CHECK(r1.sum_loss == r2.sum_loss);
    CHECK(r1.mean_loss == r2.mean_loss);
    CHECK(r1.cloud == r2.cloud);
    CHECK(v1 == v2);
    REQUIRE(r1.sum_loss.size() == 3);
    for (std::size_t s = 0; s < 3; ++s) CHECK(r1.mean_loss[s] == r1.sum_loss[s] / 12.0);
  }

  SUBCASE("loss trends down on a small overfit run") {
    TrainConfig cfg;
    cfg.steps = 60;
    cfg.points = 40;
    cfg.queries = 32;
    cfg.lr = 1e-3;
    cfg.seed = 5;
    auto model = init_model<double>(enc, dec, 5);
    AdamState<double> adam;
    auto r = fit(spec, model, enc, dec, cfg, adam);
    double first = 0, last = 0;
    for (std::size_t i = 0; i < 10; ++i) {
      first += r.mean_loss[i];
      last += r.mean_loss[r.mean_loss.size() - 1 - i];
    }
    CHECK(last < first);
    for (double v : r.sum_loss) CHECK(std::isfinite(v));
  }

  SUBCASE("fixed queries resample identically each step") {
    TrainConfig cfg;
    cfg.steps = 2;
    cfg.points = 20;
    cfg.queries = 8;
    cfg.seed = 9;
    cfg.fresh_queries = false;
    cfg.lr = 1e-9;  // so the model barely moves: near-identical losses
    auto model = init_model<double>(enc, dec, 9);
    AdamState<double> adam;
    auto r = fit(spec, model, enc, dec, cfg, adam);
    CHECK(std::abs(r.sum_loss[0] - r.sum_loss[1]) < 1e-6);
  }
}

TEST_CASE("checkpoints: roundtrip, byte idempotence, corruption rejected") {
  auto enc = tiny_encoder();
  auto dec = tiny_decoder();
  auto spec = sphere_spec();
  auto model = init_model<double>(enc, dec, 13);
  TrainConfig cfg;
  cfg.steps = 2;
  cfg.points = 20;
  cfg.queries = 8;
  cfg.lr = 1e-3;
  cfg.seed = 13;
  AdamState<double> adam;
  fit(spec, model, enc, dec, cfg, adam);  // nonzero adam state

  const std::string path = "ckpt_test.bin";
  const std::string config = R"({"resolution":8,"mode":"volume"})";
  checkpoint_save(path, config, 2, model, &adam);

  SUBCASE("roundtrip restores every tensor, optimizer state, and metadata bitwise") {
    auto other = init_model<double>(enc, dec, 999);  // different values, same shapes
    AdamState<double> adam2;
    auto info = checkpoint_load(path, other, &adam2);
    CHECK(info.step == 2);
    CHECK(info.adam_t == adam.t);
    CHECK(info.config_json == nlohmann::json::parse(config).dump());
    auto a = named_model_params(model);
    auto b = named_model_params(other);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].first == b[i].first);
      CHECK(a[i].second.values() == b[i].second.values());
    }
    CHECK(adam2.m == adam.m);
    CHECK(adam2.v == adam.v);

    // save -> load -> save is byte-identical
    const std::string path2 = "ckpt_test2.bin";
    checkpoint_save(path2, info.config_json, info.step, other, &adam2);
    CHECK(read_file(path) == read_file(path2));
    std::remove(path2.c_str());
  }

  SUBCASE("forward outputs are bitwise identical after reload") {
    auto other = init_model<double>(enc, dec, 999);
    checkpoint_load(path, other);
    NoGradGuard ng;
    std::vector<Vec3> qs = {{0.4, 0.5, 0.6}, {0.52, 0.48, 0.5}};
    auto cloud = add_noise(sample_surface(spec, 20, 4).points, 0.005, 5);
    auto p1 = predict_occupancy(encode(cloud, model.encoder, enc), qs, model.decoder, dec);
    auto p2 = predict_occupancy(encode(cloud, other.encoder, enc), qs, other.decoder, dec);
    CHECK(p1.values() == p2.values());
  }

  SUBCASE("corrupted magic, version, or truncation rejected with Io errors") {
    auto data = read_file(path);
    {
      auto bad = data;
      bad[3] ^= 0x40;
      std::ofstream("ckpt_bad.bin", std::ios::binary) << bad;
      auto m = init_model<double>(enc, dec, 1);
      CHECK_THROWS_WITH_AS(checkpoint_load("ckpt_bad.bin", m), doctest::Contains("magic"), Error);
    }
    {
      auto bad = data;
      bad[8] = 9;  // version field
      std::ofstream("ckpt_bad.bin", std::ios::binary) << bad;
      auto m = init_model<double>(enc, dec, 1);
      CHECK_THROWS_WITH_AS(checkpoint_load("ckpt_bad.bin", m), doctest::Contains("version"), Error);
    }
    {
      auto bad = data.substr(0, data.size() / 2);
      std::ofstream("ckpt_bad.bin", std::ios::binary) << bad;
      auto m = init_model<double>(enc, dec, 1);
      CHECK_THROWS_WITH_AS(checkpoint_load("ckpt_bad.bin", m), doctest::Contains("truncated"), Error);
    }
    std::remove("ckpt_bad.bin");
  }

  SUBCASE("architecture mismatch rejected by name") {
    auto enc2 = enc;
    enc2.depth = 1;  // different parameter set
    auto dec2 = dec;
    auto m = init_model<double>(enc2, dec2, 1);
    CHECK_THROWS_AS(checkpoint_load(path, m), Error);
  }

  std::remove(path.c_str());
}
