#pragma once

// Training: binary cross-entropy on occupancy probabilities, the fit loop
// (sample cloud once per run, fresh uniform queries per step, Adam updates),
// and checkpoint persistence.
//
// Checkpoint binary layout (all integers little-endian):
//   magic "ALTO\0CKP" (8 bytes), u32 version = 1,
//   u64 JSON-blob length, blob ({"adam_t":..,"config":{..},"step":..}),
//   u64 tensor count, then per tensor:
//     u16 name length, name bytes, u8 dtype (0 = f32, 1 = f64), u8 rank,
//     rank x u64 dims, raw little-endian element values.
// Tensors appear in model visitor order, then adam.m.<name>, adam.v.<name>.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "alto/adam.hpp"
#include "alto/decoder.hpp"
#include "alto/encoder.hpp"
#include "alto/geometry.hpp"
#include "json.hpp"

namespace alto {

template <class T>
struct ModelParams {
  EncoderParams<T> encoder;
  DecoderParams<T> decoder;
};

template <class T>
void for_each_model_param(ModelParams<T>& model, const std::function<void(const std::string&, Tensor<T>&)>& fn) {
  for_each_encoder_param<T>(model.encoder, [&fn](const std::string& n, Tensor<T>& t) { fn("encoder." + n, t); });
  for_each_decoder_param<T>(model.decoder, [&fn](const std::string& n, Tensor<T>& t) { fn("decoder." + n, t); });
}

template <class T>
std::vector<std::pair<std::string, Tensor<T>>> named_model_params(ModelParams<T>& model) {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  for_each_model_param<T>(model, [&out](const std::string& n, Tensor<T>& t) { out.emplace_back(n, t); });
  return out;
}

template <class T>
std::vector<Tensor<T>> model_param_list(ModelParams<T>& model) {
  std::vector<Tensor<T>> out;
  for_each_model_param<T>(model, [&out](const std::string&, Tensor<T>& t) { out.push_back(t); });
  return out;
}

template <class T>
ModelParams<T> init_model(const EncoderConfig& enc_cfg, const DecoderConfig& dec_cfg, std::uint64_t seed) {
  require(enc_cfg.mode == dec_cfg.mode, ErrorKind::Config, "encoder and decoder grid modes must match");
  require(enc_cfg.feature_dim == dec_cfg.feature_dim, ErrorKind::Config,
          "encoder and decoder feature dims must match");
  Rng rng(seed, streams::kInit);
  ModelParams<T> model;
  model.encoder = init_encoder<T>(enc_cfg, rng);
  model.decoder = init_decoder<T>(dec_cfg, rng);
  return model;
}

template <class T>
std::size_t model_param_count(ModelParams<T>& model) {
  std::size_t n = 0;
  for_each_model_param<T>(model, [&n](const std::string&, Tensor<T>& t) { n += t.size(); });
  return n;
}

// ---- loss ----

// -sum_q [ o log(p) + (1-o) log(1-p) ] with p clamped to [eps, 1-eps].
template <class T>
Tensor<T> bce_loss_sum(const Tensor<T>& pred, const std::vector<double>& targets, double clamp_eps = 1e-7) {
  require(pred.rank() == 1, ErrorKind::Dimension, "bce_loss: predictions must be a rank-1 batch");
  require(pred.size() == targets.size(), ErrorKind::Dimension,
          "bce_loss: " + std::to_string(pred.size()) + " predictions vs " + std::to_string(targets.size()) +
              " targets");
  require(clamp_eps > 0 && clamp_eps < 0.5, ErrorKind::Config, "bce_loss: clamp epsilon must be in (0, 0.5)");
  std::vector<T> pos(targets.size()), negv(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    require(targets[i] == 0.0 || targets[i] == 1.0, ErrorKind::Contract, "bce_loss: targets must be 0 or 1");
    double p = static_cast<double>(pred.values()[i]);
    require(p >= 0.0 && p <= 1.0, ErrorKind::Contract, "bce_loss: predictions must lie in [0, 1]");
    pos[i] = static_cast<T>(targets[i]);
    negv[i] = static_cast<T>(1.0 - targets[i]);
  }
  Tensor<T> o = Tensor<T>::from({targets.size()}, std::move(pos));
  Tensor<T> one_minus_o = Tensor<T>::from({targets.size()}, std::move(negv));
  Tensor<T> p = clamp(pred, static_cast<T>(clamp_eps), static_cast<T>(1.0 - clamp_eps));
  Tensor<T> term = add(mul(o, log_elem(p)), mul(one_minus_o, log_elem(add_scalar(neg(p), T(1)))));
  return neg(sum(term));
}

// ---- fit ----

struct TrainConfig {
  std::size_t steps = 500;
  std::size_t points = 2000;   // surface samples per run
  std::size_t queries = 1024;  // occupancy queries per step
  double lr = 1e-4;
  std::uint64_t seed = 0;
  double clamp_eps = 1e-7;
  std::size_t checkpoint_interval = 0;  // 0 = no periodic checkpoints (caller saves at the end)
  double sigma = 0.005;                 // cloud noise level
  bool fresh_queries = true;            // resample uniform queries each step

  void validate() const {
    require(points >= 1 && queries >= 1, ErrorKind::Config, "training needs at least one point and one query");
    require(lr > 0, ErrorKind::Config, "learning rate must be positive");
    require(clamp_eps > 0 && clamp_eps < 0.5, ErrorKind::Config, "clamp epsilon must be in (0, 0.5)");
    require(sigma >= 0, ErrorKind::Config, "noise level must be non-negative");
  }
};

struct FitResult {
  std::vector<double> sum_loss;   // per step, Eq.-form summed loss
  std::vector<double> mean_loss;  // per step, sum / queries
  std::vector<Vec3> cloud;        // the noisy input cloud used for the run
};

// Trains the model against the analytic occupancy oracle of `spec`. The
// noisy cloud is fixed for the whole run; queries are uniform, fresh each
// step (or fixed when cfg.fresh_queries is false). Query seeds derive from
// the global step index so resumed runs see the same stream a continuous
// run would. `on_step(step_just_finished)` fires after each Adam update.
template <class T>
FitResult fit(const ShapeSpec& spec, ModelParams<T>& model, const EncoderConfig& enc_cfg,
              const DecoderConfig& dec_cfg, const TrainConfig& cfg, AdamState<T>& adam,
              std::size_t start_step = 0, const std::function<void(std::size_t)>& on_step = nullptr) {
  cfg.validate();
  enc_cfg.validate();
  dec_cfg.validate();

  auto surface = sample_surface(spec, cfg.points, Rng(cfg.seed, streams::kCloud).next_u64());
  FitResult result;
  result.cloud = add_noise(surface.points, cfg.sigma, Rng(cfg.seed, streams::kNoise).next_u64());

  auto params = model_param_list(model);
  for (auto& p : params) p.set_requires_grad(true);
  if (adam.m.empty()) adam = AdamState<T>::init(params);
  require(adam.m.size() == params.size(), ErrorKind::Contract, "fit: optimizer state does not match model");
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;

  Rng query_seeds(cfg.seed, streams::kQueries);
  auto queries_for = [&](std::size_t global_step) {
    std::uint64_t qseed = query_seeds.value_at(cfg.fresh_queries ? global_step : 0);
    return sample_queries_uniform(cfg.queries, qseed);
  };

  for (std::size_t s = 0; s < cfg.steps; ++s) {
    std::size_t global = start_step + s;
    auto queries = queries_for(global);
    std::vector<double> labels(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) labels[i] = occupancy_oracle(spec, queries[i]) ? 1.0 : 0.0;

    for (auto& p : params) p.clear_grad();
    FeatureGrid<T> grid = encode(result.cloud, model.encoder, enc_cfg);
    Tensor<T> probs = predict_occupancy(grid, queries, model.decoder, dec_cfg);
    for (T p : probs.values())
      if (!std::isfinite(static_cast<double>(p)))
        fail(ErrorKind::Numeric,
             "fit: non-finite prediction at step " + std::to_string(global) +
                 (result.sum_loss.empty()
                      ? std::string()
                      : " (last finite loss " + std::to_string(result.sum_loss.back()) + ")"));
    Tensor<T> loss = bce_loss_sum(probs, labels, cfg.clamp_eps);
    double sum_val = static_cast<double>(loss.item());
    if (!std::isfinite(sum_val))
      fail(ErrorKind::Numeric, "fit: non-finite loss at step " + std::to_string(global) +
                                   (result.sum_loss.empty()
                                        ? std::string()
                                        : " (last finite loss " + std::to_string(result.sum_loss.back()) + ")"));
    backward(loss);
    adam_step(params, adam, adam_cfg);
    result.sum_loss.push_back(sum_val);
    result.mean_loss.push_back(sum_val / static_cast<double>(cfg.queries));
    if (on_step) on_step(global + 1);
  }
  return result;
}

// ---- checkpoints ----

namespace ckpt {

inline constexpr char kMagic[8] = {'A', 'L', 'T', 'O', '\0', 'C', 'K', 'P'};
inline constexpr std::uint32_t kVersion = 1;

inline void put_bytes(std::string& out, const void* p, std::size_t n) {
  out.append(static_cast<const char*>(p), n);
}
inline void put_u16(std::string& out, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF)};
  out.append(b, 2);
}
inline void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.append(b, 4);
}
inline void put_u64(std::string& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.append(b, 8);
}

template <class T>
void put_values(std::string& out, const std::vector<T>& values) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  for (T x : values) {
    if constexpr (sizeof(T) == 4) {
      std::uint32_t bits;
      std::memcpy(&bits, &x, 4);
      put_u32(out, bits);
    } else {
      std::uint64_t bits;
      std::memcpy(&bits, &x, 8);
      put_u64(out, bits);
    }
  }
}

struct Reader {
  const std::string& data;
  std::size_t pos = 0;
  void need(std::size_t n) const {
    require(pos + n <= data.size(), ErrorKind::Io, "checkpoint: truncated file");
  }
  void bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, data.data() + pos, n);
    pos += n;
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  template <class T>
  std::vector<T> values(std::size_t n) {
    std::vector<T> out(n);
    for (auto& x : out) {
      if constexpr (sizeof(T) == 4) {
        std::uint32_t bits = u32();
        std::memcpy(&x, &bits, 4);
      } else {
        std::uint64_t bits = u64();
        std::memcpy(&x, &bits, 8);
      }
    }
    return out;
  }
};

template <class T>
void put_tensor(std::string& out, const std::string& name, const Shape& shape, const std::vector<T>& values) {
  require(name.size() <= 0xFFFF, ErrorKind::Contract, "checkpoint: tensor name too long");
  put_u16(out, static_cast<std::uint16_t>(name.size()));
  put_bytes(out, name.data(), name.size());
  out.push_back(sizeof(T) == 4 ? '\x00' : '\x01');
  out.push_back(static_cast<char>(shape.size()));
  for (std::size_t d : shape) put_u64(out, d);
  put_values(out, values);
}

}  // namespace ckpt

struct CheckpointInfo {
  std::string config_json;  // canonicalized config snapshot
  std::uint64_t step = 0;
  std::uint64_t adam_t = 0;
};

template <class T>
void checkpoint_save(const std::string& path, const std::string& config_json, std::uint64_t step,
                     ModelParams<T>& model, const AdamState<T>* adam = nullptr) {
  nlohmann::json blob;
  try {
    blob["config"] = nlohmann::json::parse(config_json.empty() ? "{}" : config_json);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("checkpoint: config snapshot is not valid JSON: ") + e.what());
  }
  blob["step"] = step;
  blob["adam_t"] = adam != nullptr ? adam->t : 0;
  std::string blob_str = blob.dump();

  auto named = named_model_params(model);
  if (adam != nullptr)
    require(adam->m.size() == named.size(), ErrorKind::Contract, "checkpoint: optimizer state does not match model");

  std::string out;
  ckpt::put_bytes(out, ckpt::kMagic, 8);
  ckpt::put_u32(out, ckpt::kVersion);
  ckpt::put_u64(out, blob_str.size());
  ckpt::put_bytes(out, blob_str.data(), blob_str.size());
  std::uint64_t count = named.size() * (adam != nullptr ? 3 : 1);
  ckpt::put_u64(out, count);
  for (auto& [name, t] : named) ckpt::put_tensor<T>(out, name, t.shape(), t.values());
  if (adam != nullptr) {
    for (std::size_t i = 0; i < named.size(); ++i)
      ckpt::put_tensor<T>(out, "adam.m." + named[i].first, named[i].second.shape(), adam->m[i]);
    for (std::size_t i = 0; i < named.size(); ++i)
      ckpt::put_tensor<T>(out, "adam.v." + named[i].first, named[i].second.shape(), adam->v[i]);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorKind::Io, "checkpoint: cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  require(f.good(), ErrorKind::Io, "checkpoint: write failed for '" + path + "'");
}

namespace ckpt {

// Reads the header and metadata blob, leaving `r` positioned at the tensor
// table.
inline CheckpointInfo read_header(Reader& r, const std::string& data) {
  char magic[8];
  r.bytes(magic, 8);
  require(std::memcmp(magic, kMagic, 8) == 0, ErrorKind::Io, "checkpoint: bad magic bytes");
  std::uint32_t version = r.u32();
  require(version == kVersion, ErrorKind::Io,
          "checkpoint: unsupported version " + std::to_string(version));
  std::uint64_t blob_len = r.u64();
  r.need(blob_len);
  std::string blob(data.data() + r.pos, blob_len);
  r.pos += blob_len;

  CheckpointInfo info;
  try {
    auto j = nlohmann::json::parse(blob);
    info.step = j.at("step").get<std::uint64_t>();
    info.adam_t = j.at("adam_t").get<std::uint64_t>();
    info.config_json = j.at("config").dump();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, std::string("checkpoint: corrupt metadata blob: ") + e.what());
  }
  return info;
}

}  // namespace ckpt

// Reads only a checkpoint's metadata (config snapshot, step, optimizer time)
// without touching the tensor table.
inline CheckpointInfo checkpoint_peek(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::Io, "checkpoint: cannot open '" + path + "'");
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  ckpt::Reader r{data};
  return ckpt::read_header(r, data);
}

// Loads parameters (and optionally Adam state) into an already-constructed
// model of the same architecture; every stored tensor must match a model
// tensor by name, dtype, and shape, and vice versa.
template <class T>
CheckpointInfo checkpoint_load(const std::string& path, ModelParams<T>& model, AdamState<T>* adam = nullptr) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::Io, "checkpoint: cannot open '" + path + "'");
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  ckpt::Reader r{data};
  CheckpointInfo info = ckpt::read_header(r, data);

  struct Stored {
    Shape shape;
    std::vector<T> values;
    bool used = false;
  };
  std::uint64_t count = r.u64();
  std::vector<std::pair<std::string, Stored>> stored;
  stored.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint16_t name_len = r.u16();
    r.need(name_len);
    std::string name(data.data() + r.pos, name_len);
    r.pos += name_len;
    char dtype;
    r.bytes(&dtype, 1);
    require(dtype == (sizeof(T) == 4 ? 0 : 1), ErrorKind::Io,
            "checkpoint: tensor '" + name + "' has a different float width than this model");
    char rank;
    r.bytes(&rank, 1);
    Stored s;
    std::size_t n = 1;
    for (int dd = 0; dd < rank; ++dd) {
      std::uint64_t dim = r.u64();
      s.shape.push_back(static_cast<std::size_t>(dim));
      n *= static_cast<std::size_t>(dim);
    }
    s.values = r.template values<T>(n);
    stored.emplace_back(std::move(name), std::move(s));
  }
  require(r.pos == data.size(), ErrorKind::Io, "checkpoint: trailing bytes after tensor table");

  auto take = [&stored](const std::string& name) -> Stored& {
    for (auto& [n, s] : stored)
      if (n == name && !s.used) return s;
    fail(ErrorKind::Io, "checkpoint: missing tensor '" + name + "'");
  };

  auto named = named_model_params(model);
  for (auto& [name, t] : named) {
    Stored& s = take(name);
    require(s.shape == t.shape(), ErrorKind::Io, "checkpoint: shape mismatch for tensor '" + name + "'");
    t.values_mut() = s.values;
    s.used = true;
  }
  if (adam != nullptr) {
    adam->t = info.adam_t;
    adam->m.assign(named.size(), {});
    adam->v.assign(named.size(), {});
    for (std::size_t i = 0; i < named.size(); ++i) {
      Stored& m = take("adam.m." + named[i].first);
      require(m.shape == named[i].second.shape(), ErrorKind::Io,
              "checkpoint: shape mismatch for optimizer tensor adam.m." + named[i].first);
      adam->m[i] = m.values;
      m.used = true;
      Stored& v = take("adam.v." + named[i].first);
      require(v.shape == named[i].second.shape(), ErrorKind::Io,
              "checkpoint: shape mismatch for optimizer tensor adam.v." + named[i].first);
      adam->v[i] = v.values;
      v.used = true;
    }
  }
  for (auto& [n, s] : stored)
    require(s.used || n.rfind("adam.", 0) == 0, ErrorKind::Io, "checkpoint: unexpected tensor '" + n + "'");
  return info;
}

}  // namespace alto
