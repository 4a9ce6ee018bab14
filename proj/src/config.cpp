#include "alto/config.hpp"

#include <fstream>
#include <set>

namespace alto {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  require(j.is_object(), ErrorKind::Config, "config: " + where + " must be a JSON object");
  for (const auto& [key, _] : j.items())
    require(allowed.count(key) != 0, ErrorKind::Config,
            "config: unknown key '" + key + "' in " + where);
}

double get_number(const json& j, const std::string& where) {
  require(j.is_number(), ErrorKind::Config, "config: " + where + " must be a number");
  return j.get<double>();
}

std::size_t get_count(const json& j, const std::string& where) {
  require(j.is_number_integer() && j.get<long long>() >= 0, ErrorKind::Config,
          "config: " + where + " must be a non-negative integer");
  return j.get<std::size_t>();
}

bool get_bool(const json& j, const std::string& where) {
  require(j.is_boolean(), ErrorKind::Config, "config: " + where + " must be a boolean");
  return j.get<bool>();
}

std::string get_string(const json& j, const std::string& where) {
  require(j.is_string(), ErrorKind::Config, "config: " + where + " must be a string");
  return j.get<std::string>();
}

Vec3 get_vec3(const json& j, const std::string& where) {
  require(j.is_array() && j.size() == 3, ErrorKind::Config,
          "config: " + where + " must be an array of 3 numbers");
  return {get_number(j[0], where), get_number(j[1], where), get_number(j[2], where)};
}

Primitive parse_primitive(const json& j, const std::string& where) {
  const std::string type = j.contains("type") ? get_string(j["type"], where + ".type") : "sphere";
  Primitive p;
  if (type == "sphere") {
    check_keys(j, where, {"type", "center", "radius"});
    p.type = Primitive::Type::Sphere;
    if (j.contains("center")) p.center = get_vec3(j["center"], where + ".center");
    if (j.contains("radius")) p.radius = get_number(j["radius"], where + ".radius");
  } else if (type == "box") {
    check_keys(j, where, {"type", "min", "max"});
    p.type = Primitive::Type::Box;
    if (j.contains("min")) p.box_min = get_vec3(j["min"], where + ".min");
    if (j.contains("max")) p.box_max = get_vec3(j["max"], where + ".max");
  } else if (type == "torus") {
    check_keys(j, where, {"type", "center", "major_radius", "minor_radius"});
    p.type = Primitive::Type::Torus;
    if (j.contains("center")) p.center = get_vec3(j["center"], where + ".center");
    if (j.contains("major_radius"))
      p.major_radius = get_number(j["major_radius"], where + ".major_radius");
    if (j.contains("minor_radius"))
      p.radius = get_number(j["minor_radius"], where + ".minor_radius");
  } else {
    fail(ErrorKind::Config, "config: " + where + " has unknown primitive type '" + type + "'");
  }
  return p;
}

json primitive_to_json(const Primitive& p) {
  json j;
  switch (p.type) {
    case Primitive::Type::Sphere:
      j["type"] = "sphere";
      j["center"] = p.center;
      j["radius"] = p.radius;
      break;
    case Primitive::Type::Box:
      j["type"] = "box";
      j["min"] = p.box_min;
      j["max"] = p.box_max;
      break;
    case Primitive::Type::Torus:
      j["type"] = "torus";
      j["center"] = p.center;
      j["major_radius"] = p.major_radius;
      j["minor_radius"] = p.radius;
      break;
  }
  return j;
}

}  // namespace

void RunConfig::validate() const {
  encoder.validate();
  decoder.validate();
  train.validate();
  mesh.validate();
  metrics.validate();
  require(decoder.mode == encoder.mode, ErrorKind::Config,
          "config: encoder and decoder latent modes must match");
  require(decoder.feature_dim == encoder.feature_dim, ErrorKind::Config,
          "config: encoder and decoder feature widths must match");
  require(!shapes.primitives.empty(), ErrorKind::Config,
          "config: at least one shape primitive is required");
}

RunConfig parse_run_config(const json& j) {
  check_keys(j, "top level", {"mode", "encoder", "decoder", "train", "shapes", "mesh", "metrics"});
  RunConfig c;

  if (j.contains("mode")) {
    const std::string mode = get_string(j["mode"], "mode");
    require(mode == "volume" || mode == "triplane", ErrorKind::Config,
            "config: mode must be 'volume' or 'triplane'");
    c.encoder.mode = mode == "volume" ? GridKind::Volume : GridKind::Triplane;
  }
  c.decoder.mode = c.encoder.mode;

  if (j.contains("encoder")) {
    const json& e = j["encoder"];
    check_keys(e, "encoder", {"resolution", "feature_dim", "depth", "no_resample_levels",
                              "alternation", "padding", "pointnet_blocks"});
    if (e.contains("resolution")) c.encoder.resolution = get_count(e["resolution"], "encoder.resolution");
    if (e.contains("feature_dim")) c.encoder.feature_dim = get_count(e["feature_dim"], "encoder.feature_dim");
    if (e.contains("depth")) c.encoder.depth = get_count(e["depth"], "encoder.depth");
    if (e.contains("no_resample_levels"))
      c.encoder.no_resample_levels = get_count(e["no_resample_levels"], "encoder.no_resample_levels");
    if (e.contains("alternation")) {
      require(e["alternation"].is_number_integer(), ErrorKind::Config,
              "config: encoder.alternation must be an integer");
      c.encoder.alternation = e["alternation"].get<int>();
    }
    if (e.contains("padding")) {
      const std::string pad = get_string(e["padding"], "encoder.padding");
      require(pad == "zero" || pad == "circular", ErrorKind::Config,
              "config: encoder.padding must be 'zero' or 'circular'");
      c.encoder.padding = pad == "zero" ? Padding::Zero : Padding::Circular;
    }
    if (e.contains("pointnet_blocks"))
      c.encoder.pointnet_blocks = get_count(e["pointnet_blocks"], "encoder.pointnet_blocks");
  }
  c.decoder.feature_dim = c.encoder.feature_dim;

  if (j.contains("decoder")) {
    const json& d = j["decoder"];
    check_keys(d, "decoder", {"heads", "decode", "head_blocks"});
    if (d.contains("heads")) c.decoder.heads = get_count(d["heads"], "decoder.heads");
    if (d.contains("decode")) {
      const std::string mode = get_string(d["decode"], "decoder.decode");
      require(mode == "attention" || mode == "linear", ErrorKind::Config,
              "config: decoder.decode must be 'attention' or 'linear'");
      c.decoder.decode = mode == "attention" ? DecodeMode::Attention : DecodeMode::LinearInterp;
    }
    if (d.contains("head_blocks")) c.decoder.head_blocks = get_count(d["head_blocks"], "decoder.head_blocks");
  }

  if (j.contains("train")) {
    const json& t = j["train"];
    check_keys(t, "train", {"steps", "points", "queries", "lr", "seed", "clamp_eps",
                            "checkpoint_interval", "sigma", "fresh_queries"});
    if (t.contains("steps")) c.train.steps = get_count(t["steps"], "train.steps");
    if (t.contains("points")) c.train.points = get_count(t["points"], "train.points");
    if (t.contains("queries")) c.train.queries = get_count(t["queries"], "train.queries");
    if (t.contains("lr")) c.train.lr = get_number(t["lr"], "train.lr");
    if (t.contains("seed")) c.train.seed = get_count(t["seed"], "train.seed");
    if (t.contains("clamp_eps")) c.train.clamp_eps = get_number(t["clamp_eps"], "train.clamp_eps");
    if (t.contains("checkpoint_interval"))
      c.train.checkpoint_interval = get_count(t["checkpoint_interval"], "train.checkpoint_interval");
    if (t.contains("sigma")) c.train.sigma = get_number(t["sigma"], "train.sigma");
    if (t.contains("fresh_queries")) c.train.fresh_queries = get_bool(t["fresh_queries"], "train.fresh_queries");
  }

  if (j.contains("shapes")) {
    require(j["shapes"].is_array() && !j["shapes"].empty(), ErrorKind::Config,
            "config: shapes must be a non-empty array");
    for (std::size_t i = 0; i < j["shapes"].size(); ++i)
      c.shapes.primitives.push_back(
          parse_primitive(j["shapes"][i], "shapes[" + std::to_string(i) + "]"));
  } else {
    c.shapes = make_sphere({0.5, 0.5, 0.5}, 0.3);
  }

  if (j.contains("mesh")) {
    const json& m = j["mesh"];
    check_keys(m, "mesh", {"resolution", "threshold", "refine_iters", "chunk"});
    if (m.contains("resolution")) c.mesh.resolution = get_count(m["resolution"], "mesh.resolution");
    if (m.contains("threshold")) c.mesh.threshold = get_number(m["threshold"], "mesh.threshold");
    if (m.contains("refine_iters")) c.mesh.refine_iters = get_count(m["refine_iters"], "mesh.refine_iters");
    if (m.contains("chunk")) c.mesh.chunk = get_count(m["chunk"], "mesh.chunk");
  }

  if (j.contains("metrics")) {
    const json& m = j["metrics"];
    check_keys(m, "metrics", {"samples", "seed", "fscore_threshold"});
    if (m.contains("samples")) c.metrics.samples = get_count(m["samples"], "metrics.samples");
    if (m.contains("seed")) c.metrics.seed = get_count(m["seed"], "metrics.seed");
    if (m.contains("fscore_threshold"))
      c.metrics.fscore_threshold = get_number(m["fscore_threshold"], "metrics.fscore_threshold");
  }

  c.validate();
  return c;
}

nlohmann::json run_config_to_json(const RunConfig& c) {
  json j;
  j["mode"] = c.encoder.mode == GridKind::Volume ? "volume" : "triplane";
  j["encoder"] = {{"resolution", c.encoder.resolution},
                  {"feature_dim", c.encoder.feature_dim},
                  {"depth", c.encoder.depth},
                  {"no_resample_levels", c.encoder.no_resample_levels},
                  {"alternation", c.encoder.alternation},
                  {"padding", c.encoder.padding == Padding::Zero ? "zero" : "circular"},
                  {"pointnet_blocks", c.encoder.pointnet_blocks}};
  j["decoder"] = {{"heads", c.decoder.heads},
                  {"decode", c.decoder.decode == DecodeMode::Attention ? "attention" : "linear"},
                  {"head_blocks", c.decoder.head_blocks}};
  j["train"] = {{"steps", c.train.steps},
                {"points", c.train.points},
                {"queries", c.train.queries},
                {"lr", c.train.lr},
                {"seed", c.train.seed},
                {"clamp_eps", c.train.clamp_eps},
                {"checkpoint_interval", c.train.checkpoint_interval},
                {"sigma", c.train.sigma},
                {"fresh_queries", c.train.fresh_queries}};
  j["shapes"] = json::array();
  for (const Primitive& p : c.shapes.primitives) j["shapes"].push_back(primitive_to_json(p));
  j["mesh"] = {{"resolution", c.mesh.resolution},
               {"threshold", c.mesh.threshold},
               {"refine_iters", c.mesh.refine_iters},
               {"chunk", c.mesh.chunk}};
  j["metrics"] = {{"samples", c.metrics.samples},
                  {"seed", c.metrics.seed},
                  {"fscore_threshold", c.metrics.fscore_threshold}};
  return j;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "config: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Config, "config: '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

}  // namespace alto
