#include <algorithm>
#include <cmath>
#include <limits>

#include "alto/mesh.hpp"

namespace alto {

namespace {

double dist2(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

NnIndex::NnIndex(const std::vector<Vec3>& points) : points_(points) {
  require(!points_.empty(), ErrorKind::Contract, "NnIndex: point set is empty");
  Vec3 lo = points_[0], hi = points_[0];
  for (const Vec3& p : points_)
    for (int ax = 0; ax < 3; ++ax) {
      lo[ax] = std::min(lo[ax], p[ax]);
      hi[ax] = std::max(hi[ax], p[ax]);
    }
  origin_ = lo;
  const std::size_t dim = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::cbrt(static_cast<double>(points_.size()) / 2.0)));
  for (int ax = 0; ax < 3; ++ax) {
    dims_[ax] = dim;
    const double extent = hi[ax] - lo[ax];
    cell_[ax] = extent > 0.0 ? extent / static_cast<double>(dim) : 1.0;
  }
  buckets_.assign(dims_[0] * dims_[1] * dims_[2], {});
  for (std::size_t i = 0; i < points_.size(); ++i) {
    std::array<long, 3> c;
    buckets_[bucket_of(points_[i], c)].push_back(i);
  }
}

std::size_t NnIndex::bucket_of(const Vec3& p, std::array<long, 3>& cell_idx) const {
  for (int ax = 0; ax < 3; ++ax) {
    const long c = static_cast<long>(std::floor((p[ax] - origin_[ax]) / cell_[ax]));
    cell_idx[ax] = std::clamp(c, 0L, static_cast<long>(dims_[ax]) - 1);
  }
  return (static_cast<std::size_t>(cell_idx[0]) * dims_[1] + static_cast<std::size_t>(cell_idx[1])) *
             dims_[2] +
         static_cast<std::size_t>(cell_idx[2]);
}

NnIndex::Hit NnIndex::query(const Vec3& p) const {
  std::array<long, 3> c0;
  bucket_of(p, c0);
  const double min_edge = std::min({cell_[0], cell_[1], cell_[2]});
  double best_d2 = std::numeric_limits<double>::infinity();
  std::size_t best_idx = points_.size();

  long span = 0;
  for (int ax = 0; ax < 3; ++ax)
    span = std::max(span, std::max(c0[ax], static_cast<long>(dims_[ax]) - 1 - c0[ax]));

  auto scan_bucket = [&](long x, long y, long z) {
    const std::size_t b =
        (static_cast<std::size_t>(x) * dims_[1] + static_cast<std::size_t>(y)) * dims_[2] +
        static_cast<std::size_t>(z);
    for (std::size_t idx : buckets_[b]) {
      const double d2 = dist2(p, points_[idx]);
      if (d2 < best_d2 || (d2 == best_d2 && idx < best_idx)) {
        best_d2 = d2;
        best_idx = idx;
      }
    }
  };

  for (long ring = 0; ring <= span; ++ring) {
    if (best_idx < points_.size() && ring >= 1) {
      // Any point in a cell at Chebyshev cell-distance `ring` is at least
      // (ring-1) * min_edge away; once that strictly exceeds the best
      // distance no farther ring can improve or tie the result.
      const double lb = static_cast<double>(ring - 1) * min_edge * (1.0 - 1e-12);
      if (lb * lb > best_d2) break;
    }
    const long xlo = std::max(0L, c0[0] - ring), xhi = std::min<long>(dims_[0] - 1, c0[0] + ring);
    const long ylo = std::max(0L, c0[1] - ring), yhi = std::min<long>(dims_[1] - 1, c0[1] + ring);
    const long zlo = std::max(0L, c0[2] - ring), zhi = std::min<long>(dims_[2] - 1, c0[2] + ring);
    for (long x = xlo; x <= xhi; ++x)
      for (long y = ylo; y <= yhi; ++y)
        for (long z = zlo; z <= zhi; ++z) {
          const long cheb =
              std::max({std::labs(x - c0[0]), std::labs(y - c0[1]), std::labs(z - c0[2])});
          if (cheb != ring) continue;  // interior cells were scanned in earlier rings
          scan_bucket(x, y, z);
        }
  }
  return {best_idx, std::sqrt(best_d2)};
}

double metric_iou(const std::vector<int>& pred, const std::vector<int>& gt) {
  require(pred.size() == gt.size(), ErrorKind::Contract, "metric_iou: label arrays differ in length");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    require((pred[i] == 0 || pred[i] == 1) && (gt[i] == 0 || gt[i] == 1), ErrorKind::Contract,
            "metric_iou: labels must be 0 or 1");
    inter += static_cast<std::size_t>(pred[i] & gt[i]);
    uni += static_cast<std::size_t>(pred[i] | gt[i]);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double metric_chamfer_l1(const Mesh& a, const Mesh& b, std::size_t n, std::uint64_t seed) {
  require(n >= 1, ErrorKind::Config, "metric_chamfer_l1: sample count must be positive");
  require(!a.empty() && !b.empty(), ErrorKind::Contract, "metric_chamfer_l1: meshes must be nonempty");
  const auto sa = sample_mesh_surface(a, n, seed);
  const auto sb = sample_mesh_surface(b, n, seed);
  const NnIndex ia(sa.points), ib(sb.points);
  double acc_a = 0, acc_b = 0;
  for (const Vec3& p : sa.points) acc_a += ib.query(p).dist;
  for (const Vec3& p : sb.points) acc_b += ia.query(p).dist;
  const double nd = static_cast<double>(n);
  return 100.0 * 0.5 * (acc_a / nd + acc_b / nd);
}

double metric_normal_consistency(const Mesh& a, const Mesh& b, std::size_t n, std::uint64_t seed) {
  require(n >= 1, ErrorKind::Config, "metric_normal_consistency: sample count must be positive");
  require(!a.empty() && !b.empty(), ErrorKind::Contract,
          "metric_normal_consistency: meshes must be nonempty");
  const auto sa = sample_mesh_surface(a, n, seed);
  const auto sb = sample_mesh_surface(b, n, seed);
  const NnIndex ia(sa.points), ib(sb.points);
  std::vector<Vec3> na(a.triangles.size()), nb(b.triangles.size());
  for (std::size_t t = 0; t < a.triangles.size(); ++t) na[t] = triangle_normal(a, t);
  for (std::size_t t = 0; t < b.triangles.size(); ++t) nb[t] = triangle_normal(b, t);

  auto direction = [&](const SurfaceSampleSet& from, const std::vector<Vec3>& from_normals,
                       const NnIndex& to, const SurfaceSampleSet& to_samples,
                       const std::vector<Vec3>& to_normals) {
    double acc = 0;
    for (std::size_t s = 0; s < from.points.size(); ++s) {
      const Vec3& u = from_normals[from.faces[s]];
      const Vec3& v = to_normals[to_samples.faces[to.query(from.points[s]).index]];
      acc += std::abs(u[0] * v[0] + u[1] * v[1] + u[2] * v[2]);
    }
    return acc / static_cast<double>(from.points.size());
  };
  return 0.5 * (direction(sa, na, ib, sb, nb) + direction(sb, nb, ia, sa, na));
}

double metric_fscore(const Mesh& a, const Mesh& b, double threshold, std::size_t n,
                     std::uint64_t seed) {
  require(n >= 1, ErrorKind::Config, "metric_fscore: sample count must be positive");
  require(threshold > 0.0, ErrorKind::Config, "metric_fscore: threshold must be positive");
  require(!a.empty() && !b.empty(), ErrorKind::Contract, "metric_fscore: meshes must be nonempty");
  const auto sa = sample_mesh_surface(a, n, seed);
  const auto sb = sample_mesh_surface(b, n, seed);
  const NnIndex ia(sa.points), ib(sb.points);
  std::size_t hits_a = 0, hits_b = 0;
  for (const Vec3& p : sa.points)
    if (ib.query(p).dist <= threshold) ++hits_a;
  for (const Vec3& p : sb.points)
    if (ia.query(p).dist <= threshold) ++hits_b;
  const double precision = static_cast<double>(hits_a) / static_cast<double>(n);
  const double recall = static_cast<double>(hits_b) / static_cast<double>(n);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace alto
