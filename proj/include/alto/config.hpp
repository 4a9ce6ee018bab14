#pragma once

#include <string>

#include "alto/decoder.hpp"
#include "alto/encoder.hpp"
#include "alto/geometry.hpp"
#include "alto/train.hpp"
#include "json.hpp"

namespace alto {

// Surface-extraction settings.
struct MeshConfig {
  std::size_t resolution = 64;
  double threshold = 0.5;
  std::size_t refine_iters = 10;
  std::size_t chunk = 4096;

  void validate() const {
    require(resolution >= 8, ErrorKind::Config, "mesh resolution must be at least 8");
    require(threshold > 0.0 && threshold < 1.0, ErrorKind::Config,
            "mesh threshold must lie in (0,1)");
    require(chunk >= 1, ErrorKind::Config, "mesh chunk size must be positive");
  }
};

// Evaluation-metric settings.
struct MetricConfig {
  std::size_t samples = 10000;
  std::uint64_t seed = 0;
  double fscore_threshold = 0.01;

  void validate() const {
    require(samples >= 1, ErrorKind::Config, "metric sample count must be positive");
    require(fscore_threshold > 0.0, ErrorKind::Config, "f-score threshold must be positive");
  }
};

// Union of every module's settings, parsed from one strict JSON document.
struct RunConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  TrainConfig train;
  ShapeSpec shapes;
  MeshConfig mesh;
  MetricConfig metrics;

  void validate() const;
};

// Parses a config document. Unknown keys anywhere in the document are
// rejected; missing keys take the defaults above. Throws Config errors.
RunConfig parse_run_config(const nlohmann::json& j);

// Full round trip: parse_run_config(run_config_to_json(c)) reproduces c.
nlohmann::json run_config_to_json(const RunConfig& c);

// Reads and parses a config file (Io on unreadable file, Config on bad JSON).
RunConfig load_run_config(const std::string& path);

}  // namespace alto
