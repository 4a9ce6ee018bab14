#include <algorithm>
#include <cmath>

#include "alto/geometry.hpp"
#include "alto/rng.hpp"
#include "doctest.h"

using namespace alto;

namespace {
double dist(const Vec3& a, const Vec3& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}
}  // namespace

TEST_CASE("shape spec: invalid parameters are rejected") {
  CHECK_THROWS_AS((void)make_sphere({0.5, 0.5, 0.5}, -1.0), Error);
  CHECK_THROWS_AS((void)make_box({0.2, 0.2, 0.2}, {0.1, 0.4, 0.4}), Error);
  CHECK_THROWS_AS((void)make_torus({0.5, 0.5, 0.5}, 0.1, 0.2), Error);
}

TEST_CASE("oracle: sphere, box, torus membership") {
  auto sphere = make_sphere({0.5, 0.5, 0.5}, 0.25);
  CHECK(occupancy_oracle(sphere, {0.5, 0.5, 0.5}));
  CHECK(occupancy_oracle(sphere, {0.75, 0.5, 0.5}));  // boundary counts inside
  CHECK_FALSE(occupancy_oracle(sphere, {0.99, 0.99, 0.99}));

  auto box = make_box({0.2, 0.3, 0.4}, {0.6, 0.7, 0.8});
  CHECK(occupancy_oracle(box, {0.4, 0.5, 0.6}));
  CHECK(occupancy_oracle(box, {0.2, 0.3, 0.4}));
  CHECK_FALSE(occupancy_oracle(box, {0.61, 0.5, 0.6}));

  auto torus = make_torus({0.5, 0.5, 0.5}, 0.3, 0.1);
  CHECK(occupancy_oracle(torus, {0.8, 0.5, 0.5}));        // on the tube ring
  CHECK_FALSE(occupancy_oracle(torus, {0.5, 0.5, 0.5}));  // hole center
  CHECK(occupancy_oracle(torus, {0.5, 0.2, 0.5}));
}

TEST_CASE("oracle: union is the pointwise OR of member oracles") {
  auto a = make_sphere({0.35, 0.5, 0.5}, 0.15);
  auto b = make_box({0.55, 0.4, 0.4}, {0.8, 0.6, 0.6});
  auto u = shape_union(a, b);
  Rng rng(3, 50);
  for (int i = 0; i < 500; ++i) {
    Vec3 p = rng.next_point3();
    CHECK(occupancy_oracle(u, p) == (occupancy_oracle(a, p) || occupancy_oracle(b, p)));
  }
}

TEST_CASE("sample_surface: sphere samples lie on the sphere with outward normals") {
  auto spec = make_sphere({0.5, 0.5, 0.5}, 0.3);
  auto s = sample_surface(spec, 300, 11);
  REQUIRE(s.points.size() == 300);
  REQUIRE(s.normals.size() == 300);
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    CHECK(std::abs(dist(s.points[i], {0.5, 0.5, 0.5}) - 0.3) < 1e-12);
    double nl = std::sqrt(s.normals[i][0] * s.normals[i][0] + s.normals[i][1] * s.normals[i][1] +
                          s.normals[i][2] * s.normals[i][2]);
    CHECK(std::abs(nl - 1.0) < 1e-12);
    // outward: normal parallel to (p - c)
    for (int a = 0; a < 3; ++a)
      CHECK(std::abs(s.points[i][a] - (0.5 + 0.3 * s.normals[i][a])) < 1e-12);
  }
}

TEST_CASE("sample_surface: deterministic per seed") {
  auto spec = make_torus({0.5, 0.5, 0.5}, 0.25, 0.08);
  auto a = sample_surface(spec, 100, 7);
  auto b = sample_surface(spec, 100, 7);
  auto c = sample_surface(spec, 100, 8);
  CHECK(a.points == b.points);
  CHECK(a.normals == b.normals);
  CHECK(a.points != c.points);
}

TEST_CASE("sample_surface: torus samples satisfy the ring equation") {
  double R = 0.3, r = 0.1;
  auto spec = make_torus({0.5, 0.5, 0.5}, R, r);
  auto s = sample_surface(spec, 200, 5);
  for (const auto& p : s.points) {
    double ring = std::sqrt((p[0] - 0.5) * (p[0] - 0.5) + (p[1] - 0.5) * (p[1] - 0.5)) - R;
    double v = ring * ring + (p[2] - 0.5) * (p[2] - 0.5);
    CHECK(std::abs(v - r * r) < 1e-12);
  }
}

TEST_CASE("sample_surface: box faces drawn proportionally to area") {
  // box extents 0.1 x 0.2 x 0.4: areas per face pair: yz pairs 0.08, xz 0.04, xy 0.02
  auto spec = make_box({0.4, 0.4, 0.3}, {0.5, 0.6, 0.7});
  std::size_t n = 20000;
  auto s = sample_surface(spec, n, 13);
  std::size_t on_x = 0, on_y = 0, on_z = 0;
  for (const auto& p : s.points) {
    if (p[0] == 0.4 || p[0] == 0.5) on_x++;
    else if (p[1] == 0.4 || p[1] == 0.6) on_y++;
    else on_z++;
  }
  double total = 2 * (0.1 * 0.2 + 0.2 * 0.4 + 0.4 * 0.1);
  auto check_frac = [&](std::size_t count, double area) {
    double expect = area / total;
    double sigma = std::sqrt(expect * (1 - expect) / n);
    CHECK(std::abs(static_cast<double>(count) / n - expect) < 4 * sigma);
  };
  check_frac(on_x, 2 * 0.2 * 0.4);
  check_frac(on_y, 2 * 0.1 * 0.4);
  check_frac(on_z, 2 * 0.1 * 0.2);
}

TEST_CASE("sample_surface: union samples avoid other members' interiors") {
  auto u = shape_union(make_sphere({0.45, 0.5, 0.5}, 0.15), make_sphere({0.6, 0.5, 0.5}, 0.12));
  auto s = sample_surface(u, 500, 21);
  for (const auto& p : s.points) {
    bool strictly_inside_any = false;
    for (const auto& prim : u.primitives) {
      // a surface sample of one member may touch, but not penetrate, another
      if (primitive_contains_strict(prim, p) &&
          std::abs(dist(p, prim.center) - prim.radius) > 1e-9)
        strictly_inside_any = true;
    }
    CHECK_FALSE(strictly_inside_any);
  }
}

TEST_CASE("add_noise: zero sigma is the identity; statistics match sigma") {
  auto spec = make_sphere({0.5, 0.5, 0.5}, 0.3);
  auto pts = sample_surface(spec, 2000, 3).points;
  CHECK(add_noise(pts, 0.0, 9) == pts);
  double sigma = 0.01;
  auto noisy = add_noise(pts, sigma, 9);
  CHECK(add_noise(pts, sigma, 9) == noisy);  // deterministic
  double sum = 0, sum2 = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int a = 0; a < 3; ++a) {
      double dlt = noisy[i][a] - pts[i][a];
      sum += dlt;
      sum2 += dlt * dlt;
      n++;
    }
  CHECK(std::abs(sum / n) < 3 * sigma / std::sqrt(static_cast<double>(n)) + 1e-6);
  CHECK(std::abs(std::sqrt(sum2 / n) - sigma) < 0.1 * sigma);
}

TEST_CASE("add_noise: noisy points stay inside the unit cube") {
  std::vector<Vec3> pts(100, Vec3{0.001, 0.999, 0.5});
  auto noisy = add_noise(pts, 0.05, 17);
  for (const auto& p : noisy)
    for (int a = 0; a < 3; ++a) {
      CHECK(p[a] >= 0.0);
      CHECK(p[a] <= 1.0);
    }
}

TEST_CASE("sample_queries_uniform: bounds, count, determinism") {
  auto q = sample_queries_uniform(1000, 4);
  REQUIRE(q.size() == 1000);
  for (const auto& p : q)
    for (int a = 0; a < 3; ++a) {
      CHECK(p[a] >= 0.0);
      CHECK(p[a] < 1.0);
    }
  CHECK(sample_queries_uniform(1000, 4) == q);
  CHECK(sample_queries_uniform(1000, 5) != q);
  double mean = 0;
  for (const auto& p : q) mean += (p[0] + p[1] + p[2]) / 3.0;
  CHECK(std::abs(mean / q.size() - 0.5) < 0.03);
}

TEST_CASE("normalize_cloud: maps a 10-cube to the padded unit cube") {
  std::vector<Vec3> pts = {{0, 0, 0}, {10, 10, 10}, {5, 2, 7}};
  auto t = normalize_cloud(pts, 0.1);
  CHECK(t.scale == doctest::Approx(0.09));
  auto mapped = apply_transform(t, pts);
  CHECK(mapped[0][0] == doctest::Approx(0.05));
  CHECK(mapped[1][0] == doctest::Approx(0.95));
  // roundtrip
  for (std::size_t i = 0; i < pts.size(); ++i) {
    Vec3 back = t.invert(mapped[i]);
    for (int a = 0; a < 3; ++a) CHECK(back[a] == doctest::Approx(pts[i][a]).epsilon(1e-12));
  }
}

TEST_CASE("normalize_cloud: isotropic scaling uses the longest axis") {
  std::vector<Vec3> pts = {{0, 0, 0}, {2, 8, 4}};
  auto t = normalize_cloud(pts, 0.1);
  CHECK(t.scale == doctest::Approx(0.9 / 8));
  auto mapped = apply_transform(t, pts);
  // aspect ratio preserved
  CHECK((mapped[1][0] - mapped[0][0]) / (mapped[1][1] - mapped[0][1]) == doctest::Approx(2.0 / 8.0));
  CHECK(mapped[0][1] == doctest::Approx(0.05));
  CHECK(mapped[1][1] == doctest::Approx(0.95));
}

TEST_CASE("normalize_cloud: degenerate cloud centers with unit scale") {
  std::vector<Vec3> pts = {{3, 3, 3}, {3, 3, 3}};
  auto t = normalize_cloud(pts, 0.1);
  CHECK(t.scale == 1.0);
  auto mapped = apply_transform(t, pts);
  for (int a = 0; a < 3; ++a) CHECK(mapped[0][a] == doctest::Approx(0.5));
}
