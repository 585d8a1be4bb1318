#include "ioodg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "ioodg/error.hpp"
#include "ioodg/kernels.hpp"
#include "ioodg/rng.hpp"

namespace ioodg::geo {
namespace {

void check_finite(std::span<const Point> pts, const char* what) {
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (double v : pts[i])
      if (!std::isfinite(v))
        fail(ErrorCode::NonFinite, std::string(what) + ": coordinate of point " +
                                       std::to_string(i) + " is not finite");
}

constexpr double kSingularTolerance = 1e-9;

}  // namespace

PointCloud::PointCloud(std::vector<Point> points) : points_(std::move(points)) {
  if (points_.empty()) fail(ErrorCode::EmptyResult, "point cloud must hold at least one point");
  check_finite(points_, "PointCloud");
}

AnchorSet::AnchorSet(std::vector<Point> anchors) : anchors_(std::move(anchors)) {
  if (anchors_.empty()) fail(ErrorCode::BadCount, "anchor set must hold at least one anchor");
  check_finite(anchors_, "AnchorSet");
}

ParamTransform ParamTransform::rotation(double rx, double ry, double rz) {
  const double cx = std::cos(rx), sx = std::sin(rx);
  const double cy = std::cos(ry), sy = std::sin(ry);
  const double cz = std::cos(rz), sz = std::sin(rz);
  const Mat3 x{{{1, 0, 0}, {0, cx, -sx}, {0, sx, cx}}};
  const Mat3 y{{{cy, 0, sy}, {0, 1, 0}, {-sy, 0, cy}}};
  const Mat3 z{{{cz, -sz, 0}, {sz, cz, 0}, {0, 0, 1}}};
  // Column-vector rotation R = Rz Ry Rx; row vectors multiply by R^T.
  const Mat3 r = multiply(z, multiply(y, x));
  ParamTransform t;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t.matrix[i][j] = r[j][i];
  return t;
}

ParamTransform ParamTransform::scaling(double s) {
  ParamTransform t;
  t.matrix = {{{s, 0, 0}, {0, s, 0}, {0, 0, s}}};
  return t;
}

double determinant(const Mat3& m) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

Mat3 multiply(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

void check_invertible(const ParamTransform& t) {
  const double det = determinant(t.matrix);
  if (!(std::abs(det) > kSingularTolerance))
    fail(ErrorCode::SingularTransform, "|det| = " + std::to_string(std::abs(det)) + " <= 1e-9");
}

Point apply(const Point& p, const ParamTransform& t) {
  Point out;
  for (int j = 0; j < 3; ++j)
    out[j] = p[0] * t.matrix[0][j] + p[1] * t.matrix[1][j] + p[2] * t.matrix[2][j] +
             t.translation[j];
  return out;
}

PointCloud apply_param_transform(const PointCloud& cloud, const ParamTransform& t) {
  check_invertible(t);
  std::vector<Point> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud) out.push_back(apply(p, t));
  return PointCloud(std::move(out));
}

ParamTransform invert_param_transform(const ParamTransform& t) {
  check_invertible(t);
  const auto& m = t.matrix;
  const double det = determinant(m);
  ParamTransform inv;
  inv.matrix[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  inv.matrix[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  inv.matrix[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  inv.matrix[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  inv.matrix[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  inv.matrix[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  inv.matrix[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  inv.matrix[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  inv.matrix[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  // (y - t) M^-1 = y M^-1 - t M^-1
  for (int j = 0; j < 3; ++j) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += t.translation[k] * inv.matrix[k][j];
    inv.translation[j] = -s;
  }
  return inv;
}

bool TransformDistribution::is_identity() const {
  return rotation_lo == Point{0, 0, 0} && rotation_hi == Point{0, 0, 0} && scale_lo == 1.0 &&
         scale_hi == 1.0 && translate_max == 0.0;
}

ParamTransform sample_param_transform(const TransformDistribution& dist, std::uint64_t seed) {
  for (int a = 0; a < 3; ++a)
    if (!(dist.rotation_lo[a] <= dist.rotation_hi[a]))
      fail(ErrorCode::BadConfig, "empty rotation range on axis " + std::to_string(a));
  if (!(dist.scale_lo <= dist.scale_hi)) fail(ErrorCode::BadConfig, "empty scale range");
  if (dist.scale_lo <= 0.0 && dist.scale_hi >= 0.0)
    fail(ErrorCode::BadConfig, "scale range includes 0");
  if (!(dist.translate_max >= 0.0)) fail(ErrorCode::BadConfig, "negative translation magnitude");

  Rng rng(seed);
  Point angles;
  for (int a = 0; a < 3; ++a) angles[a] = uniform(rng, dist.rotation_lo[a], dist.rotation_hi[a]);
  const double s = uniform(rng, dist.scale_lo, dist.scale_hi);
  ParamTransform t = ParamTransform::rotation(angles[0], angles[1], angles[2]);
  for (auto& row : t.matrix)
    for (double& v : row) v *= s;
  for (int a = 0; a < 3; ++a) t.translation[a] = uniform(rng, -dist.translate_max, dist.translate_max);
  return t;
}

std::vector<std::size_t> select_indices(std::size_t n, const NonParamTransform& t) {
  Rng rng(t.seed);
  if (const auto* drop = std::get_if<DropRandom>(&t.kind)) {
    if (!(drop->keep_ratio > 0.0 && drop->keep_ratio <= 1.0))
      fail(ErrorCode::BadConfig, "keep_ratio must lie in (0, 1]");
    const auto keep = static_cast<std::size_t>(std::ceil(drop->keep_ratio * static_cast<double>(n)));
    if (keep == 0) fail(ErrorCode::EmptyResult, "DropRandom would keep no points");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (keep == n) return idx;
    // Partial Fisher-Yates, then restore the original relative order.
    for (std::size_t i = 0; i < keep; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(keep);
    std::sort(idx.begin(), idx.end());
    return idx;
  }
  const auto& resample = std::get<Resample>(t.kind);
  if (resample.target_count == 0) fail(ErrorCode::EmptyResult, "Resample target_count is 0");
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> idx(resample.target_count);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

PointCloud apply_nonparam_transform(const PointCloud& cloud, const NonParamTransform& t) {
  const auto idx = select_indices(cloud.size(), t);
  std::vector<Point> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(cloud[i]);
  return PointCloud(std::move(out));
}

PointCloud compose_augment(const PointCloud& cloud, const ParamTransform& t1,
                           const NonParamTransform& t2) {
  return apply_nonparam_transform(apply_param_transform(cloud, t1), t2);
}

PointCloud normalize_cloud(const PointCloud& cloud) {
  Point c{0, 0, 0};
  for (const auto& p : cloud)
    for (int a = 0; a < 3; ++a) c[a] += p[a];
  for (double& v : c) v /= static_cast<double>(cloud.size());
  double max_norm = 0.0;
  for (const auto& p : cloud)
    max_norm = std::max(max_norm, std::sqrt(squared_distance(p, c)));
  const double scale = max_norm > 0.0 ? 1.0 / max_norm : 1.0;
  std::vector<Point> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud)
    out.push_back({(p[0] - c[0]) * scale, (p[1] - c[1]) * scale, (p[2] - c[2]) * scale});
  return PointCloud(std::move(out));
}

std::vector<std::size_t> farthest_point_indices(std::span<const Point> points, std::size_t m,
                                                std::size_t start_index) {
  if (m < 1 || m > points.size())
    fail(ErrorCode::BadCount, "FPS count " + std::to_string(m) + " not in [1, " +
                                  std::to_string(points.size()) + "]");
  if (start_index >= points.size()) fail(ErrorCode::BadCount, "FPS start index out of range");
  std::vector<std::size_t> out(m);
  kernels::farthest_points(points, start_index, out);
  return out;
}

AnchorSet farthest_point_sample(const PointCloud& cloud, std::size_t m, std::size_t start_index) {
  const auto idx = farthest_point_indices(cloud.points(), m, start_index);
  std::vector<Point> out;
  out.reserve(m);
  for (auto i : idx) out.push_back(cloud[i]);
  return AnchorSet(std::move(out));
}

std::size_t canonical_start_index(std::span<const Point> points) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < points.size(); ++i)
    if (points[i] < points[best]) best = i;
  return best;
}

NeighborhoodSet radius_neighbors(std::span<const Point> anchors, std::span<const Point> cloud,
                                 double r) {
  if (!(r > 0.0)) fail(ErrorCode::BadRadius, "radius threshold must be positive");
  const std::size_t n = cloud.size();
  std::vector<double> d(anchors.size() * n);
  kernels::squared_distances(anchors, cloud, d);
  NeighborhoodSet out;
  out.r = r;
  out.offsets.reserve(anchors.size() + 1);
  out.offsets.push_back(0);
  out.fallback.assign(anchors.size(), false);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const double* row = d.data() + i * n;
    const std::size_t before = out.indices.size();
    for (std::size_t j = 0; j < n; ++j)
      if (row[j] < r) out.indices.push_back(j);
    if (out.indices.size() == before) {
      out.indices.push_back(static_cast<std::size_t>(std::min_element(row, row + n) - row));
      out.fallback[i] = true;
    }
    out.offsets.push_back(out.indices.size());
  }
  return out;
}

NeighborhoodSet radius_neighbors(const AnchorSet& anchors, const PointCloud& cloud, double r) {
  return radius_neighbors(anchors.points(), cloud.points(), r);
}

std::vector<std::size_t> nearest_indices(std::span<const Point> queries,
                                         std::span<const Point> reference) {
  const std::size_t n = reference.size();
  std::vector<double> d(queries.size() * n);
  kernels::squared_distances(queries, reference, d);
  std::vector<std::size_t> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const double* row = d.data() + i * n;
    out[i] = static_cast<std::size_t>(std::min_element(row, row + n) - row);
  }
  return out;
}

double chamfer_distance(std::span<const Point> a, std::span<const Point> x) {
  if (a.empty() || x.empty()) fail(ErrorCode::BadCount, "chamfer distance needs non-empty sets");
  check_finite(a, "chamfer anchors");
  check_finite(x, "chamfer cloud");
  const std::size_t m = a.size(), n = x.size();
  std::vector<double> d(m * n);
  kernels::squared_distances(a, x, d);
  double forward = 0.0;
  for (std::size_t i = 0; i < m; ++i) forward += *std::min_element(&d[i * n], &d[i * n] + n);
  double backward = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) best = std::min(best, d[i * n + j]);
    backward += best;
  }
  return forward / static_cast<double>(m) + backward / static_cast<double>(n);
}

double chamfer_distance(const AnchorSet& a, const PointCloud& x) {
  return chamfer_distance(a.points(), x.points());
}

}  // namespace ioodg::geo
