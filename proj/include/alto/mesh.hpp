#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "alto/decoder.hpp"
#include "alto/geometry.hpp"

namespace alto {

// Triangle mesh in normalized [0,1]^3 space. Triangle indices reference the
// shared vertex list; no triangle repeats a vertex index three times.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::size_t, 3>> triangles;

  bool empty() const { return triangles.empty(); }
};

// Dense occupancy probabilities on the R x R x R lattice (node i at
// i/(R-1) per axis), flat index (i*R + j)*R + k, plus the iso-threshold
// used when extracting a surface.
struct OccupancyVolume {
  std::size_t res = 0;
  double tau = 0.5;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return values[(i * res + j) * res + k];
  }
  void validate() const {
    require(res >= 8, ErrorKind::Config, "OccupancyVolume: resolution must be at least 8");
    require(tau > 0.0 && tau < 1.0, ErrorKind::Config, "OccupancyVolume: tau must lie in (0,1)");
    require(values.size() == res * res * res, ErrorKind::Contract,
            "OccupancyVolume: value count does not match resolution");
    for (double v : values)
      require(v >= 0.0 && v <= 1.0, ErrorKind::Contract,
              "OccupancyVolume: values must lie in [0,1]");
  }
};

// Batched occupancy evaluator: positions in [0,1]^3 -> probabilities in [0,1].
using OccupancyFn = std::function<std::vector<double>(const std::vector<Vec3>&)>;

// Evaluates the decoder at every lattice node of an R^3 grid, in chunks of
// `chunk` queries. Each query is independent, so the result is bitwise
// identical for any chunk size.
template <class T>
OccupancyVolume evaluate_grid(const FeatureGrid<T>& grid, const DecoderParams<T>& params,
                              const DecoderConfig& cfg, std::size_t res,
                              std::size_t chunk = 4096) {
  require(res >= 8, ErrorKind::Config, "evaluate_grid: resolution must be at least 8");
  require(chunk >= 1, ErrorKind::Config, "evaluate_grid: chunk size must be positive");
  NoGradGuard ng;
  OccupancyVolume vol;
  vol.res = res;
  vol.values.resize(res * res * res);
  const double denom = static_cast<double>(res - 1);
  for (std::size_t start = 0; start < vol.values.size(); start += chunk) {
    const std::size_t count = std::min(chunk, vol.values.size() - start);
    std::vector<Vec3> queries(count);
    for (std::size_t q = 0; q < count; ++q) {
      const std::size_t flat = start + q;
      const std::size_t i = flat / (res * res);
      const std::size_t j = (flat / res) % res;
      const std::size_t k = flat % res;
      queries[q] = {static_cast<double>(i) / denom, static_cast<double>(j) / denom,
                    static_cast<double>(k) / denom};
    }
    auto pred = predict_occupancy(grid, queries, params, cfg);
    for (std::size_t q = 0; q < count; ++q)
      vol.values[start + q] = static_cast<double>(pred.values()[q]);
  }
  return vol;
}

// Wraps an encoded field + decoder as a reusable occupancy evaluator.
template <class T>
OccupancyFn make_occupancy_fn(const FeatureGrid<T>& grid, const DecoderParams<T>& params,
                              const DecoderConfig& cfg) {
  return [&grid, &params, &cfg](const std::vector<Vec3>& pts) {
    NoGradGuard ng;
    auto pred = predict_occupancy(grid, pts, params, cfg);
    std::vector<double> out(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) out[i] = static_cast<double>(pred.values()[i]);
    return out;
  };
}

// 256-case marching cubes with linear interpolation to the iso-level.
// Vertices on shared lattice edges are emitted once; triangles wind so that
// face normals point from the high-occupancy side toward the low side.
Mesh marching_cubes(const OccupancyVolume& vol, double tau);
inline Mesh marching_cubes(const OccupancyVolume& vol) { return marching_cubes(vol, vol.tau); }

// Per-iteration record of one vertex's bisection bracket: position of the
// bracket endpoints along the vertex's lattice edge and whether the occupancy
// values at those endpoints straddled the iso-level.
struct RefineTrace {
  std::vector<std::vector<std::array<double, 2>>> brackets;  // [iter][vertex] -> {lo, hi}
  std::vector<std::vector<char>> straddled;                  // [iter][vertex] -> 0/1
};

// Iterative vertex refinement: each marching-cubes vertex lies on a lattice
// edge whose endpoint occupancies straddle tau; per iteration the occupancy is
// re-evaluated at the vertex, the sub-interval that still straddles tau is
// kept, and the vertex moves to its midpoint. iters=0 returns the input mesh.
// `res` is the lattice resolution the mesh was extracted at. Vertices that sit
// exactly on a lattice node (degenerate bracket) are left untouched.
Mesh refine_vertices(const Mesh& mesh, std::size_t res, const OccupancyFn& predictor, double tau,
                     std::size_t iters = 10, RefineTrace* trace = nullptr);

// Area-weighted uniform surface samples; `faces[i]` is the triangle that
// produced `points[i]`. Deterministic given (mesh, n, seed).
struct SurfaceSampleSet {
  std::vector<Vec3> points;
  std::vector<std::size_t> faces;
};
SurfaceSampleSet sample_mesh_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed);

// Unit face normal (zero vector for degenerate triangles).
Vec3 triangle_normal(const Mesh& mesh, std::size_t t);

// Exact nearest-neighbor index over a fixed point set (uniform-bucket grid
// with ring search). Matches a brute-force linear scan exactly, including the
// lowest-index rule on distance ties.
class NnIndex {
 public:
  struct Hit {
    std::size_t index;
    double dist;
  };

  explicit NnIndex(const std::vector<Vec3>& points);
  Hit query(const Vec3& p) const;

 private:
  std::vector<Vec3> points_;
  Vec3 origin_{0, 0, 0};
  std::array<double, 3> cell_{1, 1, 1};
  std::array<std::size_t, 3> dims_{1, 1, 1};
  std::vector<std::vector<std::size_t>> buckets_;

  std::size_t bucket_of(const Vec3& p, std::array<long, 3>& cell_idx) const;
};

// Intersection-over-union of two equal-length {0,1} label arrays; defined as
// 1 when both are empty.
double metric_iou(const std::vector<int>& pred, const std::vector<int>& gt);

// Symmetric mean nearest-neighbor Euclidean distance between area-weighted
// surface samples of the two meshes, scaled by 100.
double metric_chamfer_l1(const Mesh& a, const Mesh& b, std::size_t n, std::uint64_t seed);

// Mean absolute cosine between each sample's face normal and the face normal
// of its nearest neighbor on the other mesh, averaged over both directions.
double metric_normal_consistency(const Mesh& a, const Mesh& b, std::size_t n, std::uint64_t seed);

// Harmonic mean of precision/recall at the given distance threshold
// (normalized units); 0 when both are 0.
double metric_fscore(const Mesh& a, const Mesh& b, double threshold, std::size_t n,
                     std::uint64_t seed);

}  // namespace alto
