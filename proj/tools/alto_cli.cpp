// Command-line surface for the occupancy-field reconstruction pipeline:
// data generation, training, mesh extraction, evaluation, gradient checking,
// and timing. Exit codes: 0 success, 2 usage/config/file error, 3 numerical
// failure. ALTO_THREADS caps kernel parallelism (0 or unset = auto).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "alto/config.hpp"
#include "alto/gradsuite.hpp"
#include "alto/io.hpp"
#include "alto/mesh.hpp"
#include "alto/train.hpp"

namespace fs = std::filesystem;
using namespace alto;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out << text;
  require(out.good(), ErrorKind::Io, "write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// generate-data

int cmd_generate_data(const RunConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);

  const std::uint64_t cloud_seed = Rng(cfg.train.seed, streams::kCloud).next_u64();
  const std::uint64_t noise_seed = Rng(cfg.train.seed, streams::kNoise).next_u64();
  const std::uint64_t query_seed = Rng(cfg.train.seed, streams::kHeldOut).next_u64();

  const auto surface = sample_surface(cfg.shapes, cfg.train.points, cloud_seed);
  const auto cloud = add_noise(surface.points, cfg.train.sigma, noise_seed);
  write_xyz((dir / "cloud.xyz").string(), cloud);

  const auto queries = sample_queries_uniform(cfg.metrics.samples, query_seed);
  const auto labels = oracle_labels(cfg.shapes, queries);
  write_xyz((dir / "queries.xyz").string(), queries);
  write_labels((dir / "labels.txt").string(), labels);

  json manifest;
  manifest["config"] = run_config_to_json(cfg);
  manifest["files"] = json::array(
      {{{"path", "cloud.xyz"}, {"kind", "surface_cloud"}, {"count", cloud.size()},
        {"seed", cloud_seed}, {"noise_seed", noise_seed}},
       {{"path", "queries.xyz"}, {"kind", "uniform_queries"}, {"count", queries.size()},
        {"seed", query_seed}},
       {{"path", "labels.txt"}, {"kind", "occupancy_labels"}, {"count", labels.size()},
        {"seed", query_seed}}});
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  std::cout << "wrote " << cloud.size() << " cloud points, " << queries.size()
            << " labeled queries to " << out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const RunConfig& cfg, const std::string& out_dir, const std::string& resume) {
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  const std::string config_json = run_config_to_json(cfg).dump();

  auto model = init_model<double>(cfg.encoder, cfg.decoder, cfg.train.seed);
  AdamState<double> adam;
  std::size_t start_step = 0;

  if (!resume.empty()) {
    const CheckpointInfo peek = checkpoint_peek(resume);
    json stored;
    try {
      stored = json::parse(peek.config_json);
    } catch (const json::exception&) {
      fail(ErrorKind::Config, "resume: checkpoint has no readable config snapshot");
    }
    const json current = run_config_to_json(cfg);
    for (const char* section : {"mode", "encoder", "decoder"})
      require(stored.contains(section) && stored[section] == current[section], ErrorKind::Config,
              std::string("resume: checkpoint architecture differs from config in '") + section +
                  "'");
    start_step = checkpoint_load(resume, model, &adam).step;
    std::cout << "resumed from " << resume << " at step " << start_step << "\n";
  }

  auto on_step = [&](std::size_t step) {
    if (cfg.train.checkpoint_interval > 0 && step % cfg.train.checkpoint_interval == 0) {
      const fs::path p = dir / ("checkpoint_" + std::to_string(step) + ".bin");
      checkpoint_save(p.string(), config_json, step, model, &adam);
    }
  };

  const FitResult result =
      fit(cfg.shapes, model, cfg.encoder, cfg.decoder, cfg.train, adam, start_step, on_step);

  checkpoint_save((dir / "checkpoint.bin").string(), config_json, start_step + cfg.train.steps,
                  model, &adam);
  write_loss_csv((dir / "loss.csv").string(), result.sum_loss, result.mean_loss, start_step);
  write_text(dir / "config.json", run_config_to_json(cfg).dump(2) + "\n");

  if (!result.mean_loss.empty())
    std::cout << "final mean loss " << result.mean_loss.back() << " after "
              << start_step + cfg.train.steps << " steps\n";
  else
    std::cout << "no training steps requested; saved initial model\n";
  return 0;
}

// ---------------------------------------------------------------------------
// reconstruct

int cmd_reconstruct(const std::string& ckpt_path, const std::string& cloud_path,
                    const std::string& out_path, long resolution, double threshold,
                    long refine_iters, long chunk) {
  const CheckpointInfo info = checkpoint_peek(ckpt_path);
  json stored;
  try {
    stored = json::parse(info.config_json);
  } catch (const json::exception&) {
    fail(ErrorKind::Config, "reconstruct: checkpoint has no readable config snapshot");
  }
  RunConfig cfg = parse_run_config(stored);
  if (resolution >= 0) cfg.mesh.resolution = static_cast<std::size_t>(resolution);
  if (threshold >= 0) cfg.mesh.threshold = threshold;
  if (refine_iters >= 0) cfg.mesh.refine_iters = static_cast<std::size_t>(refine_iters);
  if (chunk > 0) cfg.mesh.chunk = static_cast<std::size_t>(chunk);
  cfg.mesh.validate();

  auto model = init_model<double>(cfg.encoder, cfg.decoder, 0);
  checkpoint_load(ckpt_path, model);

  const auto raw_cloud = read_xyz(cloud_path);
  require(!raw_cloud.empty(), ErrorKind::Io, "reconstruct: '" + cloud_path + "' has no points");
  const NormalizeTransform transform = normalize_cloud(raw_cloud);
  const auto cloud = apply_transform(transform, raw_cloud);

  NoGradGuard ng;
  const auto grid = encode(cloud, model.encoder, cfg.encoder);
  OccupancyVolume vol =
      evaluate_grid(grid, model.decoder, cfg.decoder, cfg.mesh.resolution, cfg.mesh.chunk);
  vol.tau = cfg.mesh.threshold;
  Mesh mesh = marching_cubes(vol);
  if (cfg.mesh.refine_iters > 0 && !mesh.empty()) {
    const OccupancyFn predictor = make_occupancy_fn(grid, model.decoder, cfg.decoder);
    mesh = refine_vertices(mesh, cfg.mesh.resolution, predictor, cfg.mesh.threshold,
                           cfg.mesh.refine_iters);
  }
  for (Vec3& v : mesh.vertices) v = transform.invert(v);

  write_obj(out_path, mesh);
  write_text(out_path + ".config.json", run_config_to_json(cfg).dump(2) + "\n");
  std::cout << "wrote " << mesh.vertices.size() << " vertices, " << mesh.triangles.size()
            << " faces to " << out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const std::string& mesh_a, const std::string& mesh_b, const std::string& out_path,
             std::size_t samples, std::uint64_t seed, double fscore_threshold,
             const std::string& pred_labels, const std::string& gt_labels) {
  const Mesh a = read_obj(mesh_a);
  const Mesh b = read_obj(mesh_b);

  json out;
  out["chamfer_l1_x100"] = metric_chamfer_l1(a, b, samples, seed);
  out["normal_consistency"] = metric_normal_consistency(a, b, samples, seed);
  out["fscore_1pct"] = metric_fscore(a, b, fscore_threshold, samples, seed);
  out["n"] = samples;
  out["seed"] = seed;
  if (!pred_labels.empty() || !gt_labels.empty()) {
    require(!pred_labels.empty() && !gt_labels.empty(), ErrorKind::Config,
            "eval: --pred-labels and --gt-labels must be given together");
    out["iou"] = metric_iou(read_labels(pred_labels), read_labels(gt_labels));
  }
  out["options"] = {{"mesh_a", mesh_a},
                    {"mesh_b", mesh_b},
                    {"samples", samples},
                    {"seed", seed},
                    {"fscore_threshold", fscore_threshold}};

  const std::string text = out.dump(2) + "\n";
  std::cout << text;
  if (!out_path.empty()) write_text(out_path, text);
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

// The gradient audits themselves live in gradsuite.hpp; this command just
// picks the scope and formats the rows.
PipelineGradSpec cli_pipeline_spec() {
  PipelineGradSpec spec;
  spec.enc.mode = GridKind::Volume;
  spec.enc.resolution = 8;
  spec.enc.feature_dim = 2;
  spec.enc.depth = 2;
  spec.enc.no_resample_levels = 1;
  spec.enc.pointnet_blocks = 1;
  spec.enc.alternation = spec.enc.max_alternation();
  spec.dec.mode = GridKind::Volume;
  spec.dec.feature_dim = 2;
  spec.dec.heads = 1;
  spec.dec.head_blocks = 1;
  return spec;
}

int cmd_gradcheck(const std::string& scope) {
  std::vector<GradCheckRow> rows;
  if (scope == "kernels" || scope == "all") {
    auto k = kernel_grad_rows();
    rows.insert(rows.end(), k.begin(), k.end());
  }
  if (scope == "encoder" || scope == "all") rows.push_back(pipeline_grad_row(cli_pipeline_spec()));
  if (scope == "decoder" || scope == "all") {
    auto k = decoder_grad_rows();
    rows.insert(rows.end(), k.begin(), k.end());
  }
  bool all_pass = true;
  std::printf("%-20s %-14s %-10s %s\n", "op", "max_rel_err", "threshold", "status");
  for (const auto& r : rows) {
    all_pass = all_pass && r.pass();
    std::printf("%-20s %-14.3e %-10.0e %s\n", r.name.c_str(), r.max_rel_err, r.threshold,
                r.pass() ? "PASS" : "FAIL");
  }
  return all_pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// bench

int cmd_bench(const RunConfig& cfg) {
  using clock = std::chrono::steady_clock;
  auto ms_since = [](clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  };

  auto model = init_model<double>(cfg.encoder, cfg.decoder, cfg.train.seed);
  const auto surface = sample_surface(cfg.shapes, cfg.train.points,
                                      Rng(cfg.train.seed, streams::kCloud).next_u64());
  NoGradGuard ng;

  auto t0 = clock::now();
  const auto grid = encode(surface.points, model.encoder, cfg.encoder);
  const double encode_ms = ms_since(t0);

  const std::size_t nq = 10000;
  const auto queries = sample_queries_uniform(nq, Rng(cfg.train.seed, streams::kHeldOut).next_u64());
  t0 = clock::now();
  predict_occupancy(grid, queries, model.decoder, cfg.decoder);
  const double decode_ms = ms_since(t0);

  OccupancyVolume vol;
  vol.res = cfg.mesh.resolution;
  vol.values.resize(vol.res * vol.res * vol.res);
  const double denom = static_cast<double>(vol.res - 1);
  for (std::size_t i = 0; i < vol.res; ++i)
    for (std::size_t j = 0; j < vol.res; ++j)
      for (std::size_t k = 0; k < vol.res; ++k)
        vol.values[(i * vol.res + j) * vol.res + k] =
            occupancy_oracle(cfg.shapes, {i / denom, j / denom, k / denom}) ? 1.0 : 0.0;
  t0 = clock::now();
  const Mesh mesh = marching_cubes(vol, cfg.mesh.threshold);
  const double mc_ms = ms_since(t0);

  std::printf("op,items,wall_ms\n");
  std::printf("encode,%zu,%.3f\n", surface.points.size(), encode_ms);
  std::printf("decode,%zu,%.3f\n", nq, decode_ms);
  std::printf("marching_cubes,%zu,%.3f\n", mesh.triangles.size(), mc_ms);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"occupancy-field reconstruction pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", resume, ckpt_path, cloud_path, out_path;
  std::string mesh_a, mesh_b, pred_labels, gt_labels, scope = "all";
  long steps = -1, seed = -1, resolution = -1, refine_iters = -1, chunk = -1;
  double lr = -1, threshold = -1, fscore_threshold = 0.01;
  std::size_t samples = 10000;
  std::uint64_t metric_seed = 0;

  auto* gen = app.add_subcommand("generate-data", "write cloud, query, and label files");
  gen->add_option("--config", config_path, "JSON config file")->required();
  gen->add_option("--out", out_dir, "output directory");

  auto* train = app.add_subcommand("train", "fit a model and write checkpoint + loss log");
  train->add_option("--config", config_path, "JSON config file")->required();
  train->add_option("--out", out_dir, "output directory");
  train->add_option("--resume", resume, "checkpoint to continue from");
  train->add_option("--steps", steps, "override train.steps");
  train->add_option("--seed", seed, "override train.seed");
  train->add_option("--lr", lr, "override train.lr");

  auto* rec = app.add_subcommand("reconstruct", "extract a mesh from a checkpoint and a cloud");
  rec->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  rec->add_option("--cloud", cloud_path, "input .xyz cloud")->required();
  rec->add_option("--out", out_path, "output .obj path")->required();
  rec->add_option("--resolution", resolution, "evaluation lattice resolution");
  rec->add_option("--threshold", threshold, "iso-threshold in (0,1)");
  rec->add_option("--refine-iters", refine_iters, "vertex refinement iterations");
  rec->add_option("--chunk", chunk, "query batch size");

  auto* ev = app.add_subcommand("eval", "compute mesh metrics as JSON");
  ev->add_option("--mesh-a", mesh_a, "first .obj mesh")->required();
  ev->add_option("--mesh-b", mesh_b, "second .obj mesh")->required();
  ev->add_option("--out", out_path, "also write the JSON here");
  ev->add_option("--samples", samples, "surface samples per mesh");
  ev->add_option("--seed", metric_seed, "sampling seed");
  ev->add_option("--fscore-threshold", fscore_threshold, "f-score distance threshold");
  ev->add_option("--pred-labels", pred_labels, "predicted 0/1 labels file (enables IoU)");
  ev->add_option("--gt-labels", gt_labels, "ground-truth 0/1 labels file (enables IoU)");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient report");
  gc->add_option("--scope", scope, "kernels|encoder|decoder|all")
      ->check(CLI::IsMember({"kernels", "encoder", "decoder", "all"}));

  auto* bench = app.add_subcommand("bench", "timing table for encode/decode/meshing");
  bench->add_option("--config", config_path, "JSON config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed() || train->parsed() || bench->parsed()) {
      RunConfig cfg = load_run_config(config_path);
      if (steps >= 0) cfg.train.steps = static_cast<std::size_t>(steps);
      if (seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(seed);
      if (lr > 0) cfg.train.lr = lr;
      cfg.validate();
      if (gen->parsed()) return cmd_generate_data(cfg, out_dir);
      if (train->parsed()) return cmd_train(cfg, out_dir, resume);
      return cmd_bench(cfg);
    }
    if (rec->parsed())
      return cmd_reconstruct(ckpt_path, cloud_path, out_path, resolution, threshold, refine_iters,
                             chunk);
    if (ev->parsed())
      return cmd_eval(mesh_a, mesh_b, out_path, samples, metric_seed, fscore_threshold,
                      pred_labels, gt_labels);
    if (gc->parsed()) return cmd_gradcheck(scope);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::Numeric ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
