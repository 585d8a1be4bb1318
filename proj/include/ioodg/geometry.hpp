#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

namespace ioodg::geo {

using Point = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

/// N x 3 coordinates. Always holds at least one point, all finite.
class PointCloud {
 public:
  explicit PointCloud(std::vector<Point> points);

  std::size_t size() const noexcept { return points_.size(); }
  const Point& operator[](std::size_t i) const { return points_[i]; }
  std::span<const Point> points() const noexcept { return points_; }
  auto begin() const noexcept { return points_.begin(); }
  auto end() const noexcept { return points_.end(); }

 private:
  std::vector<Point> points_;
};

/// M x 3 anchor coordinates, M >= 1.
class AnchorSet {
 public:
  explicit AnchorSet(std::vector<Point> anchors);

  std::size_t size() const noexcept { return anchors_.size(); }
  const Point& operator[](std::size_t i) const { return anchors_[i]; }
  std::span<const Point> points() const noexcept { return anchors_; }

 private:
  std::vector<Point> anchors_;
};

/// Row-vector affine map p -> p * matrix + translation.
struct ParamTransform {
  Mat3 matrix{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  Point translation{0, 0, 0};

  static ParamTransform identity() { return {}; }
  /// Rotations are given in radians about x, then y, then z.
  static ParamTransform rotation(double rx, double ry, double rz);
  static ParamTransform scaling(double s);
};

double determinant(const Mat3& m);
Mat3 multiply(const Mat3& a, const Mat3& b);

/// Throws SingularTransform when |det| <= 1e-9.
void check_invertible(const ParamTransform& t);

Point apply(const Point& p, const ParamTransform& t);
PointCloud apply_param_transform(const PointCloud& cloud, const ParamTransform& t);
ParamTransform invert_param_transform(const ParamTransform& t);

/// Ranges for sampling T(theta). Angles in radians, per axis [lo, hi].
struct TransformDistribution {
  Point rotation_lo{0, 0, 0};
  Point rotation_hi{0, 0, 0};
  double scale_lo = 1.0;
  double scale_hi = 1.0;
  double translate_max = 0.0;

  bool is_identity() const;
};

ParamTransform sample_param_transform(const TransformDistribution& dist, std::uint64_t seed);

struct DropRandom {
  double keep_ratio = 1.0;
};
struct Resample {
  std::size_t target_count = 1;
};

struct NonParamTransform {
  std::variant<DropRandom, Resample> kind = DropRandom{};
  std::uint64_t seed = 0;

  static NonParamTransform keep_all() { return {}; }
};

/// Indices into a cloud of size n selected by t. DropRandom keeps
/// ceil(keep_ratio * n) distinct indices in ascending order; Resample draws
/// with replacement.
std::vector<std::size_t> select_indices(std::size_t n, const NonParamTransform& t);

PointCloud apply_nonparam_transform(const PointCloud& cloud, const NonParamTransform& t);

/// t2(t1(cloud)).
PointCloud compose_augment(const PointCloud& cloud, const ParamTransform& t1,
                           const NonParamTransform& t2);

/// Centre at the centroid and scale so the largest norm is 1.
PointCloud normalize_cloud(const PointCloud& cloud);

/// Greedy farthest point sampling. Ties go to the lowest index.
std::vector<std::size_t> farthest_point_indices(std::span<const Point> points, std::size_t m,
                                                std::size_t start_index);
AnchorSet farthest_point_sample(const PointCloud& cloud, std::size_t m, std::size_t start_index);

/// Index of the lexicographically smallest point; a start rule that depends
/// only on the point set, not on its ordering.
std::size_t canonical_start_index(std::span<const Point> points);

/// Per-anchor neighbour lists in CSR layout.
struct NeighborhoodSet {
  std::vector<std::size_t> offsets;   // size M + 1
  std::vector<std::size_t> indices;   // concatenated lists
  std::vector<bool> fallback;         // true where the list is the nearest-point singleton
  double r = 0.0;

  std::size_t anchor_count() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::span<const std::size_t> members(std::size_t i) const {
    return std::span<const std::size_t>(indices).subspan(offsets[i], offsets[i + 1] - offsets[i]);
  }
};

/// N_i = { j : |a_i - x_j|^2 < r }. `r` thresholds the squared distance.
/// Empty lists fall back to the single nearest point.
NeighborhoodSet radius_neighbors(std::span<const Point> anchors, std::span<const Point> cloud,
                                 double r);
NeighborhoodSet radius_neighbors(const AnchorSet& anchors, const PointCloud& cloud, double r);

/// Squared-distance threshold for a metric radius.
constexpr double squared_radius(double metric_radius) { return metric_radius * metric_radius; }

/// For every query point, the index of the nearest reference point.
std::vector<std::size_t> nearest_indices(std::span<const Point> queries,
                                         std::span<const Point> reference);

double chamfer_distance(std::span<const Point> a, std::span<const Point> x);
double chamfer_distance(const AnchorSet& a, const PointCloud& x);

inline double squared_distance(const Point& a, const Point& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace ioodg::geo
