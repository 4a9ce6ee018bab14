#pragma once

// Analytic shapes (unions of spheres, axis-aligned boxes, z-axis tori) in the
// unit cube: inside/outside oracle, area-weighted surface sampling with
// rejection of points interior to other union members, Gaussian cloud noise,
// uniform query sampling, and isotropic cloud normalization.
//
// All sampling is driven by the counter-based generator in rng.hpp, so every
// routine is a pure function of (spec, n, seed).

#include <array>
#include <cstdint>
#include <vector>

#include "alto/common.hpp"

namespace alto {

using Vec3 = std::array<double, 3>;

struct Primitive {
  enum class Type { Sphere, Box, Torus };
  Type type = Type::Sphere;
  Vec3 center{0.5, 0.5, 0.5};  // sphere / torus
  double radius = 0.25;        // sphere radius, torus minor radius
  double major_radius = 0.0;   // torus ring radius (axis along z)
  Vec3 box_min{0, 0, 0};
  Vec3 box_max{1, 1, 1};
};

struct ShapeSpec {
  std::vector<Primitive> primitives;
};

struct SurfaceSamples {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  // outward unit normals, same length as points
};

// raw -> normalized: (p - offset) * scale + 0.5 per axis.
struct NormalizeTransform {
  double scale = 1.0;
  Vec3 offset{0.5, 0.5, 0.5};

  Vec3 apply(const Vec3& p) const {
    return {(p[0] - offset[0]) * scale + 0.5, (p[1] - offset[1]) * scale + 0.5, (p[2] - offset[2]) * scale + 0.5};
  }
  Vec3 invert(const Vec3& p) const {
    return {(p[0] - 0.5) / scale + offset[0], (p[1] - 0.5) / scale + offset[1], (p[2] - 0.5) / scale + offset[2]};
  }
};

ShapeSpec make_sphere(Vec3 center, double radius);
ShapeSpec make_box(Vec3 lo, Vec3 hi);
ShapeSpec make_torus(Vec3 center, double major_radius, double minor_radius);
ShapeSpec shape_union(const ShapeSpec& a, const ShapeSpec& b);

// True when p lies inside or on the primitive boundary.
bool primitive_contains(const Primitive& prim, const Vec3& p);
// Strict interior test (boundary excluded), used for union surface rejection.
bool primitive_contains_strict(const Primitive& prim, const Vec3& p);

bool occupancy_oracle(const ShapeSpec& spec, const Vec3& p);
std::vector<double> oracle_labels(const ShapeSpec& spec, const std::vector<Vec3>& pts);

double primitive_surface_area(const Primitive& prim);

// n area-weighted samples of the union boundary with outward normals.
// Samples falling strictly inside another union member are rejected.
SurfaceSamples sample_surface(const ShapeSpec& spec, std::size_t n, std::uint64_t seed);

// Per-coordinate Gaussian noise, clamped to the unit cube.
std::vector<Vec3> add_noise(const std::vector<Vec3>& pts, double sigma, std::uint64_t seed);

std::vector<Vec3> sample_queries_uniform(std::size_t n, std::uint64_t seed);

// Maps the cloud bounding box isotropically into the unit cube with total
// margin `pad` on the longest axis. A degenerate (single-point) cloud maps to
// the cube center with unit scale and emits a warning on stderr.
NormalizeTransform normalize_cloud(const std::vector<Vec3>& pts, double pad = 0.1);

std::vector<Vec3> apply_transform(const NormalizeTransform& t, const std::vector<Vec3>& pts);

}  // namespace alto
