#include "alto/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "alto/rng.hpp"

namespace alto {

namespace {
constexpr double kPi = 3.14159265358979323846264338327950288;

double sq(double v) { return v * v; }

// Signed distance-like classifier: negative inside, 0 on boundary.
double primitive_signed(const Primitive& prim, const Vec3& p) {
  switch (prim.type) {
    case Primitive::Type::Sphere: {
      double d2 = sq(p[0] - prim.center[0]) + sq(p[1] - prim.center[1]) + sq(p[2] - prim.center[2]);
      return d2 - sq(prim.radius);
    }
    case Primitive::Type::Box: {
      double worst = -1e300;
      for (int a = 0; a < 3; ++a) {
        worst = std::max(worst, prim.box_min[a] - p[a]);
        worst = std::max(worst, p[a] - prim.box_max[a]);
      }
      return worst;
    }
    case Primitive::Type::Torus: {
      double ring = std::sqrt(sq(p[0] - prim.center[0]) + sq(p[1] - prim.center[1])) - prim.major_radius;
      return sq(ring) + sq(p[2] - prim.center[2]) - sq(prim.radius);
    }
  }
  return 1.0;
}
}  // namespace

ShapeSpec make_sphere(Vec3 center, double radius) {
  require(radius > 0, ErrorKind::Config, "sphere radius must be positive");
  Primitive prim;
  prim.type = Primitive::Type::Sphere;
  prim.center = center;
  prim.radius = radius;
  return ShapeSpec{{prim}};
}

ShapeSpec make_box(Vec3 lo, Vec3 hi) {
  for (int a = 0; a < 3; ++a)
    require(lo[a] < hi[a], ErrorKind::Config, "box min must be below max on every axis");
  Primitive prim;
  prim.type = Primitive::Type::Box;
  prim.box_min = lo;
  prim.box_max = hi;
  return ShapeSpec{{prim}};
}

ShapeSpec make_torus(Vec3 center, double major_radius, double minor_radius) {
  require(major_radius > 0 && minor_radius > 0, ErrorKind::Config, "torus radii must be positive");
  require(minor_radius < major_radius, ErrorKind::Config, "torus minor radius must be below major radius");
  Primitive prim;
  prim.type = Primitive::Type::Torus;
  prim.center = center;
  prim.radius = minor_radius;
  prim.major_radius = major_radius;
  return ShapeSpec{{prim}};
}

ShapeSpec shape_union(const ShapeSpec& a, const ShapeSpec& b) {
  ShapeSpec out = a;
  out.primitives.insert(out.primitives.end(), b.primitives.begin(), b.primitives.end());
  return out;
}

bool primitive_contains(const Primitive& prim, const Vec3& p) { return primitive_signed(prim, p) <= 0.0; }

bool primitive_contains_strict(const Primitive& prim, const Vec3& p) { return primitive_signed(prim, p) < 0.0; }

bool occupancy_oracle(const ShapeSpec& spec, const Vec3& p) {
  for (const auto& prim : spec.primitives)
    if (primitive_contains(prim, p)) return true;
  return false;
}

std::vector<double> oracle_labels(const ShapeSpec& spec, const std::vector<Vec3>& pts) {
  std::vector<double> out(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) out[i] = occupancy_oracle(spec, pts[i]) ? 1.0 : 0.0;
  return out;
}

double primitive_surface_area(const Primitive& prim) {
  switch (prim.type) {
    case Primitive::Type::Sphere:
      return 4.0 * kPi * sq(prim.radius);
    case Primitive::Type::Box: {
      double a = prim.box_max[0] - prim.box_min[0];
      double b = prim.box_max[1] - prim.box_min[1];
      double c = prim.box_max[2] - prim.box_min[2];
      return 2.0 * (a * b + b * c + c * a);
    }
    case Primitive::Type::Torus:
      return 4.0 * kPi * kPi * prim.major_radius * prim.radius;
  }
  return 0.0;
}

namespace {

void sample_primitive(const Primitive& prim, Rng& rng, Vec3& point, Vec3& normal) {
  switch (prim.type) {
    case Primitive::Type::Sphere: {
      double g0, g1, g2, len;
      do {
        g0 = rng.next_gaussian();
        g1 = rng.next_gaussian();
        g2 = rng.next_gaussian();
        len = std::sqrt(g0 * g0 + g1 * g1 + g2 * g2);
      } while (len < 1e-12);
      normal = {g0 / len, g1 / len, g2 / len};
      for (int a = 0; a < 3; ++a) point[a] = prim.center[a] + prim.radius * normal[a];
      return;
    }
    case Primitive::Type::Box: {
      double ext[3] = {prim.box_max[0] - prim.box_min[0], prim.box_max[1] - prim.box_min[1],
                       prim.box_max[2] - prim.box_min[2]};
      // Face pairs perpendicular to axis a have area ext[(a+1)%3]*ext[(a+2)%3].
      double areas[6], total = 0;
      for (int a = 0; a < 3; ++a) {
        double face = ext[(a + 1) % 3] * ext[(a + 2) % 3];
        areas[2 * a] = face;
        areas[2 * a + 1] = face;
        total += 2 * face;
      }
      double pick = rng.next_uniform() * total;
      int face = 5;
      double acc = 0;
      for (int f = 0; f < 6; ++f) {
        acc += areas[f];
        if (pick < acc) {
          face = f;
          break;
        }
      }
      int axis = face / 2;
      bool high = face % 2 == 1;
      int u = (axis + 1) % 3, v = (axis + 2) % 3;
      point[axis] = high ? prim.box_max[axis] : prim.box_min[axis];
      point[u] = prim.box_min[u] + ext[u] * rng.next_uniform();
      point[v] = prim.box_min[v] + ext[v] * rng.next_uniform();
      normal = {0, 0, 0};
      normal[axis] = high ? 1.0 : -1.0;
      return;
    }
    case Primitive::Type::Torus: {
      // Uniform-by-area: major angle uniform, minor angle by rejection with
      // weight proportional to (R + r cos(phi)).
      double theta = 2.0 * kPi * rng.next_uniform();
      double phi;
      for (;;) {
        phi = 2.0 * kPi * rng.next_uniform();
        double w = (prim.major_radius + prim.radius * std::cos(phi)) / (prim.major_radius + prim.radius);
        if (rng.next_uniform() < w) break;
      }
      double ring = prim.major_radius + prim.radius * std::cos(phi);
      point = {prim.center[0] + ring * std::cos(theta), prim.center[1] + ring * std::sin(theta),
               prim.center[2] + prim.radius * std::sin(phi)};
      normal = {std::cos(theta) * std::cos(phi), std::sin(theta) * std::cos(phi), std::sin(phi)};
      return;
    }
  }
}

}  // namespace

SurfaceSamples sample_surface(const ShapeSpec& spec, std::size_t n, std::uint64_t seed) {
  require(!spec.primitives.empty(), ErrorKind::Config, "sample_surface: shape spec has no primitives");
  std::vector<double> cumulative;
  double total = 0;
  for (const auto& prim : spec.primitives) {
    total += primitive_surface_area(prim);
    cumulative.push_back(total);
  }
  require(total > 0, ErrorKind::Config, "sample_surface: zero total surface area");

  Rng rng(seed, streams::kCloud);
  SurfaceSamples out;
  out.points.reserve(n);
  out.normals.reserve(n);
  std::size_t attempts = 0, max_attempts = 10000 * std::max<std::size_t>(n, 1);
  while (out.points.size() < n) {
    require(attempts++ < max_attempts, ErrorKind::Contract,
            "sample_surface: rejection sampling failed; union boundary may be degenerate");
    double pick = rng.next_uniform() * total;
    std::size_t k = std::lower_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin();
    if (k >= spec.primitives.size()) k = spec.primitives.size() - 1;
    Vec3 p, normal;
    sample_primitive(spec.primitives[k], rng, p, normal);
    bool interior = false;
    for (std::size_t j = 0; j < spec.primitives.size() && !interior; ++j)
      if (j != k && primitive_contains_strict(spec.primitives[j], p)) interior = true;
    if (interior) continue;
    out.points.push_back(p);
    out.normals.push_back(normal);
  }
  return out;
}

std::vector<Vec3> add_noise(const std::vector<Vec3>& pts, double sigma, std::uint64_t seed) {
  require(sigma >= 0, ErrorKind::Config, "add_noise: sigma must be non-negative");
  std::vector<Vec3> out = pts;
  if (sigma == 0) return out;
  Rng rng(seed, streams::kNoise);
  for (auto& p : out)
    for (int a = 0; a < 3; ++a) p[a] = std::clamp(p[a] + sigma * rng.next_gaussian(), 0.0, 1.0);
  return out;
}

std::vector<Vec3> sample_queries_uniform(std::size_t n, std::uint64_t seed) {
  Rng rng(seed, streams::kQueries);
  std::vector<Vec3> out(n);
  for (auto& p : out) p = rng.next_point3();
  return out;
}

NormalizeTransform normalize_cloud(const std::vector<Vec3>& pts, double pad) {
  require(!pts.empty(), ErrorKind::Contract, "normalize_cloud: empty cloud");
  require(pad >= 0 && pad < 1, ErrorKind::Config, "normalize_cloud: pad must be in [0, 1)");
  Vec3 lo = pts[0], hi = pts[0];
  for (const auto& p : pts)
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
  NormalizeTransform t;
  t.offset = {(lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2, (lo[2] + hi[2]) / 2};
  if (extent <= 0) {
    std::fprintf(stderr, "normalize_cloud: degenerate cloud; using unit scale about the cube center\n");
    t.scale = 1.0;
    return t;
  }
  t.scale = (1.0 - pad) / extent;
  return t;
}

std::vector<Vec3> apply_transform(const NormalizeTransform& t, const std::vector<Vec3>& pts) {
  std::vector<Vec3> out(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) out[i] = t.apply(pts[i]);
  return out;
}

}  // namespace alto
