#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ioodg/geometry.hpp"

namespace ioodg::data {

enum class ShapeKind { Sphere, Cube, Cylinder, Cone, Torus, Plane };

std::string_view shape_name(ShapeKind kind);
std::optional<ShapeKind> parse_shape(std::string_view name);

enum class Domain { Source, Target };

struct LabeledCloud {
  geo::PointCloud cloud;
  std::size_t label = 0;
  Domain domain = Domain::Source;
  std::uint64_t sample_id = 0;
  std::uint64_t seed = 0;
  std::string corruption = "none";
};

/// n points uniform on the surface of the canonical shape (unit sphere, cube
/// [-1,1]^3, ...), before any normalisation.
std::vector<geo::Point> sample_surface(ShapeKind kind, std::size_t n, std::uint64_t seed);

/// sample_surface followed by centring and scaling into the unit ball. The
/// label is the shape's enum index; benchmarks relabel by class list position.
LabeledCloud generate_shape(ShapeKind kind, std::size_t n, std::uint64_t seed);

struct HalfSpaceCrop {
  double fraction = 0.0;
};
struct GaussianJitter {
  double sigma = 0.0;
};
struct NonuniformDensity {
  double bias = 0.0;
};
struct Outliers {
  std::size_t count = 0;
  double range = 1.0;
};

struct CorruptionSpec {
  std::variant<HalfSpaceCrop, GaussianJitter, NonuniformDensity, Outliers> mode = HalfSpaceCrop{};
  std::uint64_t seed = 0;
};

std::string_view corruption_name(const CorruptionSpec& spec);

/// Unit direction used by the crop and density corruptions for this seed.
geo::Point corruption_direction(std::uint64_t seed);

/// Throws TooFewPoints when fewer than 8 points would remain.
geo::PointCloud corrupt(const geo::PointCloud& cloud, const CorruptionSpec& spec);

/// Severities of the target-domain corruption suite. A zero entry disables
/// that mode; with every entry zero the test split is clean.
struct CorruptionSuite {
  double crop_fraction = 0.3;
  double jitter_sigma = 0.03;
  double density_bias = 0.7;
  std::size_t outlier_count = 24;
  double outlier_range = 1.2;
};

struct BenchmarkConfig {
  std::vector<ShapeKind> classes{ShapeKind::Sphere, ShapeKind::Cube, ShapeKind::Cylinder, ShapeKind::Torus};
  std::size_t train_per_class = 100;
  std::size_t test_per_class = 50;
  std::size_t points = 256;
  CorruptionSuite suite;
};

struct Benchmark {
  std::vector<LabeledCloud> train;
  std::vector<LabeledCloud> test;
  std::vector<std::string> class_names;
};

/// Clean source-domain train split and corrupted target-domain test split.
/// Every sample draws from its own stream derived from (seed, sample_id).
Benchmark build_benchmark(const BenchmarkConfig& config, std::uint64_t seed);

/// Seeded shuffle of [0, count) cut into batches; the last one may be short.
std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size,
                                                   std::uint64_t epoch_seed, std::uint64_t epoch);

// ---- files -------------------------------------------------------------------

/// One "x y z" per line; '#' lines are comments.
void save_xyz(const geo::PointCloud& cloud, const std::filesystem::path& path,
              std::string_view comment = {});
geo::PointCloud load_xyz(const std::filesystem::path& path);

/// <root>/<split>/<class>/<sample_id>.xyz plus <root>/manifest.csv.
void write_dataset(const Benchmark& bench, const std::filesystem::path& root);
Benchmark read_dataset(const std::filesystem::path& root);

}  // namespace ioodg::data
