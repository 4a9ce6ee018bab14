#include "alto/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "alto/mc_tables.hpp"
#include "alto/rng.hpp"

namespace alto {

namespace {

// Corner offsets (di,dj,dk) within a cell, matching the lookup-table layout.
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
// Cell-edge endpoints as corner indices.
constexpr int kEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                              {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

}  // namespace

Mesh marching_cubes(const OccupancyVolume& vol, double tau) {
  vol.validate();
  require(tau > 0.0 && tau < 1.0, ErrorKind::Config, "marching_cubes: tau must lie in (0,1)");
  const std::size_t r = vol.res;
  const double denom = static_cast<double>(r - 1);
  Mesh mesh;
  // One shared vertex per crossed lattice edge, keyed by its node pair.
  std::unordered_map<std::uint64_t, std::size_t> edge_vertex;
  const std::uint64_t node_count = static_cast<std::uint64_t>(r) * r * r;

  auto node_flat = [&](std::size_t i, std::size_t j, std::size_t k) {
    return (i * r + j) * r + k;
  };

  for (std::size_t i = 0; i + 1 < r; ++i)
    for (std::size_t j = 0; j + 1 < r; ++j)
      for (std::size_t k = 0; k + 1 < r; ++k) {
        double v[8];
        std::size_t node[8];
        int cidx = 0;
        for (int c = 0; c < 8; ++c) {
          node[c] = node_flat(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]);
          v[c] = vol.values[node[c]];
          if (v[c] < tau) cidx |= 1 << c;
        }
        const int flags = mc::kEdgeFlags[cidx];
        if (flags == 0) continue;

        std::size_t edge_ids[12];
        for (int e = 0; e < 12; ++e) {
          if (!(flags & (1 << e))) continue;
          const int ca = kEdge[e][0];
          const int cb = kEdge[e][1];
          const std::uint64_t a = node[ca];
          const std::uint64_t b = node[cb];
          const std::uint64_t key = std::min(a, b) * node_count + std::max(a, b);
          auto it = edge_vertex.find(key);
          if (it != edge_vertex.end()) {
            edge_ids[e] = it->second;
            continue;
          }
          double t = (tau - v[ca]) / (v[cb] - v[ca]);
          t = std::clamp(t, 0.0, 1.0);
          Vec3 pos;
          for (int ax = 0; ax < 3; ++ax) {
            const double pa = static_cast<double>(
                (ax == 0 ? i : ax == 1 ? j : k) + static_cast<std::size_t>(kCorner[ca][ax]));
            const double pb = static_cast<double>(
                (ax == 0 ? i : ax == 1 ? j : k) + static_cast<std::size_t>(kCorner[cb][ax]));
            pos[ax] = (pa + t * (pb - pa)) / denom;
          }
          edge_ids[e] = mesh.vertices.size();
          mesh.vertices.push_back(pos);
          edge_vertex.emplace(key, edge_ids[e]);
        }

        const int* tri = mc::kTriangleEdges[cidx];
        for (int ti = 0; tri[ti] != -1; ti += 3)
          mesh.triangles.push_back(
              {edge_ids[tri[ti]], edge_ids[tri[ti + 1]], edge_ids[tri[ti + 2]]});
      }
  return mesh;
}

Mesh refine_vertices(const Mesh& mesh, std::size_t res, const OccupancyFn& predictor, double tau,
                     std::size_t iters, RefineTrace* trace) {
  require(res >= 2, ErrorKind::Config, "refine_vertices: resolution must be at least 2");
  require(tau > 0.0 && tau < 1.0, ErrorKind::Config, "refine_vertices: tau must lie in (0,1)");
  Mesh out = mesh;
  if (trace) *trace = RefineTrace{};
  if (iters == 0 || out.vertices.empty()) return out;

  const double denom = static_cast<double>(res - 1);
  struct EdgeState {
    std::size_t vertex;
    int axis;
    double lo, hi;        // bracket endpoint coordinates along `axis`
    bool inside_lo, inside_hi;
  };
  std::vector<EdgeState> active;
  std::vector<Vec3> endpoints;

  for (std::size_t vi = 0; vi < out.vertices.size(); ++vi) {
    const Vec3& p = out.vertices[vi];
    int frac_axis = -1;
    int frac_count = 0;
    for (int ax = 0; ax < 3; ++ax) {
      const double u = p[ax] * denom;
      const double rounded = std::round(u);
      if (std::abs(u - rounded) > 1e-6) {
        frac_axis = ax;
        ++frac_count;
      } else {
        require(rounded >= 0.0 && rounded <= denom, ErrorKind::Contract,
                "refine_vertices: vertex lies outside the lattice");
      }
    }
    if (frac_count == 0) continue;  // exactly on a node: nothing to bisect
    require(frac_count == 1, ErrorKind::Contract,
            "refine_vertices: vertex does not lie on a lattice edge");
    const double u = p[frac_axis] * denom;
    const double lo_idx = std::floor(u);
    require(lo_idx >= 0.0 && lo_idx + 1.0 <= denom, ErrorKind::Contract,
            "refine_vertices: vertex edge leaves the lattice");
    EdgeState s;
    s.vertex = vi;
    s.axis = frac_axis;
    s.lo = lo_idx / denom;
    s.hi = (lo_idx + 1.0) / denom;
    active.push_back(s);
    Vec3 pl = p, ph = p;
    pl[frac_axis] = s.lo;
    ph[frac_axis] = s.hi;
    endpoints.push_back(pl);
    endpoints.push_back(ph);
  }
  if (active.empty()) return out;

  const auto end_occ = predictor(endpoints);
  require(end_occ.size() == endpoints.size(), ErrorKind::Contract,
          "refine_vertices: predictor returned the wrong number of values");
  for (std::size_t s = 0; s < active.size(); ++s) {
    active[s].inside_lo = end_occ[2 * s] >= tau;
    active[s].inside_hi = end_occ[2 * s + 1] >= tau;
    require(active[s].inside_lo != active[s].inside_hi, ErrorKind::Contract,
            "refine_vertices: edge endpoints do not straddle the iso-level");
  }

  std::vector<Vec3> positions(active.size());
  for (std::size_t it = 0; it < iters; ++it) {
    for (std::size_t s = 0; s < active.size(); ++s) positions[s] = out.vertices[active[s].vertex];
    const auto occ = predictor(positions);
    require(occ.size() == positions.size(), ErrorKind::Contract,
            "refine_vertices: predictor returned the wrong number of values");
    if (trace) {
      trace->brackets.emplace_back(active.size());
      trace->straddled.emplace_back(active.size());
    }
    for (std::size_t s = 0; s < active.size(); ++s) {
      EdgeState& e = active[s];
      const double coord = out.vertices[e.vertex][e.axis];
      const bool inside_v = occ[s] >= tau;
      if (inside_v != e.inside_lo) {
        e.hi = coord;
        e.inside_hi = inside_v;
      } else {
        e.lo = coord;
        e.inside_lo = inside_v;
      }
      out.vertices[e.vertex][e.axis] = 0.5 * (e.lo + e.hi);
      if (trace) {
        trace->brackets.back()[s] = {e.lo, e.hi};
        trace->straddled.back()[s] = e.inside_lo != e.inside_hi ? 1 : 0;
      }
    }
  }
  return out;
}

Vec3 triangle_normal(const Mesh& mesh, std::size_t t) {
  const Vec3& a = mesh.vertices[mesh.triangles[t][0]];
  const Vec3& b = mesh.vertices[mesh.triangles[t][1]];
  const Vec3& c = mesh.vertices[mesh.triangles[t][2]];
  const Vec3 u = {b[0] - a[0], b[1] - a[1], b[2] - a[2]};
  const Vec3 v = {c[0] - a[0], c[1] - a[1], c[2] - a[2]};
  Vec3 n = {u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]};
  const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
  if (len < 1e-30) return {0, 0, 0};
  return {n[0] / len, n[1] / len, n[2] / len};
}

SurfaceSampleSet sample_mesh_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed) {
  require(!mesh.triangles.empty(), ErrorKind::Contract, "sample_mesh_surface: mesh is empty");
  std::vector<double> cum(mesh.triangles.size());
  double total = 0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const Vec3& a = mesh.vertices[mesh.triangles[t][0]];
    const Vec3& b = mesh.vertices[mesh.triangles[t][1]];
    const Vec3& c = mesh.vertices[mesh.triangles[t][2]];
    const Vec3 u = {b[0] - a[0], b[1] - a[1], b[2] - a[2]};
    const Vec3 v = {c[0] - a[0], c[1] - a[1], c[2] - a[2]};
    const double cx = u[1] * v[2] - u[2] * v[1];
    const double cy = u[2] * v[0] - u[0] * v[2];
    const double cz = u[0] * v[1] - u[1] * v[0];
    total += 0.5 * std::sqrt(cx * cx + cy * cy + cz * cz);
    cum[t] = total;
  }
  require(total > 0.0, ErrorKind::Contract, "sample_mesh_surface: mesh has zero surface area");

  SurfaceSampleSet out;
  out.points.resize(n);
  out.faces.resize(n);
  Rng rng(seed, streams::kMeshSamples);
  for (std::size_t s = 0; s < n; ++s) {
    const double u = rng.next_uniform(0.0, total);
    const std::size_t face = std::min<std::size_t>(
        std::upper_bound(cum.begin(), cum.end(), u) - cum.begin(), cum.size() - 1);
    const double r1 = rng.next_uniform();
    const double r2 = rng.next_uniform();
    const double su = std::sqrt(r1);
    const double wa = 1.0 - su;
    const double wb = su * (1.0 - r2);
    const double wc = su * r2;
    const Vec3& a = mesh.vertices[mesh.triangles[face][0]];
    const Vec3& b = mesh.vertices[mesh.triangles[face][1]];
    const Vec3& c = mesh.vertices[mesh.triangles[face][2]];
    out.points[s] = {wa * a[0] + wb * b[0] + wc * c[0], wa * a[1] + wb * b[1] + wc * c[1],
                     wa * a[2] + wb * b[2] + wc * c[2]};
    out.faces[s] = face;
  }
  return out;
}

}  // namespace alto
