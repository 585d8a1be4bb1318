#include <cmath>
#include <numbers>
#include <string>

#include "ioodg/data.hpp"
#include "ioodg/error.hpp"
#include "ioodg/rng.hpp"

namespace ioodg::data {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTorusMajor = 1.0;
constexpr double kTorusMinor = 0.35;

geo::Point on_sphere(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    const geo::Point p{normal(rng), normal(rng), normal(rng)};
    const double n = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    if (n > 1e-12) return {p[0] / n, p[1] / n, p[2] / n};
  }
}

geo::Point on_cube(Rng& rng) {
  const int face = std::uniform_int_distribution<int>(0, 5)(rng);
  const int axis = face / 2;
  geo::Point p{uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)};
  p[axis] = (face % 2 == 0) ? -1.0 : 1.0;
  return p;
}

// Radius 1, z in [-1, 1]: side area 4*pi against 2*pi for the two caps.
geo::Point on_cylinder(Rng& rng) {
  const double u = uniform(rng, 0.0, 1.0);
  const double theta = uniform(rng, 0.0, 2.0 * kPi);
  if (u < 2.0 / 3.0) return {std::cos(theta), std::sin(theta), uniform(rng, -1.0, 1.0)};
  const double rho = std::sqrt(uniform(rng, 0.0, 1.0));
  return {rho * std::cos(theta), rho * std::sin(theta), u < 5.0 / 6.0 ? 1.0 : -1.0};
}

// Apex at z = 1, unit base at z = -1.
geo::Point on_cone(Rng& rng) {
  const double slant = std::sqrt(5.0);
  const double side_share = slant / (slant + 1.0);
  const double theta = uniform(rng, 0.0, 2.0 * kPi);
  const double rho = std::sqrt(uniform(rng, 0.0, 1.0));
  if (uniform(rng, 0.0, 1.0) < side_share) return {rho * std::cos(theta), rho * std::sin(theta), 1.0 - 2.0 * rho};
  return {rho * std::cos(theta), rho * std::sin(theta), -1.0};
}

geo::Point on_torus(Rng& rng) {
  for (;;) {
    const double u = uniform(rng, 0.0, 2.0 * kPi);
    const double v = uniform(rng, 0.0, 2.0 * kPi);
    // Area element is proportional to R + r cos v.
    if (uniform(rng, 0.0, kTorusMajor + kTorusMinor) > kTorusMajor + kTorusMinor * std::cos(v)) continue;
    const double ring = kTorusMajor + kTorusMinor * std::cos(v);
    return {ring * std::cos(u), ring * std::sin(u), kTorusMinor * std::sin(v)};
  }
}

geo::Point on_plane(Rng& rng) { return {uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), 0.0}; }

}  // namespace

std::string_view shape_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Cube: return "cube";
    case ShapeKind::Cylinder: return "cylinder";
    case ShapeKind::Cone: return "cone";
    case ShapeKind::Torus: return "torus";
    case ShapeKind::Plane: return "plane";
  }
  return "unknown";
}

std::optional<ShapeKind> parse_shape(std::string_view name) {
  for (auto k : {ShapeKind::Sphere, ShapeKind::Cube, ShapeKind::Cylinder, ShapeKind::Cone, ShapeKind::Torus,
                 ShapeKind::Plane})
    if (shape_name(k) == name) return k;
  return std::nullopt;
}

std::vector<geo::Point> sample_surface(ShapeKind kind, std::size_t n, std::uint64_t seed) {
  if (n < 8) fail(ErrorCode::BadCount, "a shape needs at least 8 points, got " + std::to_string(n));
  Rng rng(seed);
  std::vector<geo::Point> pts(n);
  for (auto& p : pts) {
    switch (kind) {
      case ShapeKind::Sphere: p = on_sphere(rng); break;
      case ShapeKind::Cube: p = on_cube(rng); break;
      case ShapeKind::Cylinder: p = on_cylinder(rng); break;
      case ShapeKind::Cone: p = on_cone(rng); break;
      case ShapeKind::Torus: p = on_torus(rng); break;
      case ShapeKind::Plane: p = on_plane(rng); break;
    }
  }
  return pts;
}

LabeledCloud generate_shape(ShapeKind kind, std::size_t n, std::uint64_t seed) {
  LabeledCloud out{geo::normalize_cloud(geo::PointCloud(sample_surface(kind, n, seed))),
                   static_cast<std::size_t>(kind), Domain::Source, 0, seed, "none"};
  return out;
}

}  // namespace ioodg::data
