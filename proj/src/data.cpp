#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "ioodg/data.hpp"
#include "ioodg/error.hpp"
#include "ioodg/parallel.hpp"
#include "ioodg/rng.hpp"

namespace ioodg::data {
namespace {

constexpr std::size_t kMinPoints = 8;

void require_points(std::size_t kept, std::string_view what) {
  if (kept < kMinPoints)
    fail(ErrorCode::TooFewPoints, std::string(what) + " leaves " + std::to_string(kept) + " points (minimum 8)");
}

double project(const geo::Point& p, const geo::Point& d) { return p[0] * d[0] + p[1] * d[1] + p[2] * d[2]; }

geo::PointCloud crop(const geo::PointCloud& cloud, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0) fail(ErrorCode::BadConfig, "crop fraction must lie in [0, 1]");
  const auto removed = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(cloud.size())));
  if (removed == 0) return cloud;
  require_points(cloud.size() - removed, "half-space crop");
  const geo::Point d = corruption_direction(seed);
  std::vector<std::size_t> order(cloud.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return project(cloud[a], d) > project(cloud[b], d); });
  std::vector<bool> drop(cloud.size(), false);
  for (std::size_t k = 0; k < removed; ++k) drop[order[k]] = true;
  std::vector<geo::Point> kept;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (!drop[i]) kept.push_back(cloud[i]);
  return geo::PointCloud(std::move(kept));
}

geo::PointCloud jitter(const geo::PointCloud& cloud, double sigma, std::uint64_t seed) {
  if (sigma < 0.0 || !std::isfinite(sigma)) fail(ErrorCode::BadConfig, "jitter sigma must be finite and >= 0");
  if (sigma == 0.0) return cloud;
  Rng rng(derive_seed(seed, {2}));
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<geo::Point> out(cloud.begin(), cloud.end());
  for (auto& p : out)
    for (double& v : p) v += noise(rng);
  return geo::PointCloud(std::move(out));
}

// Drop probability rises linearly from 0 to `bias` along the seeded axis.
geo::PointCloud thin(const geo::PointCloud& cloud, double bias, std::uint64_t seed) {
  if (bias < 0.0 || bias > 1.0) fail(ErrorCode::BadConfig, "density bias must lie in [0, 1]");
  if (bias == 0.0) return cloud;
  const geo::Point d = corruption_direction(seed);
  double lo = project(cloud[0], d), hi = lo;
  for (const auto& p : cloud) {
    lo = std::min(lo, project(p, d));
    hi = std::max(hi, project(p, d));
  }
  const double span = hi > lo ? hi - lo : 1.0;
  Rng rng(derive_seed(seed, {3}));
  std::vector<geo::Point> kept;
  for (const auto& p : cloud) {
    const double drop = bias * (project(p, d) - lo) / span;
    if (uniform(rng, 0.0, 1.0) >= drop) kept.push_back(p);
  }
  require_points(kept.size(), "non-uniform density");
  return geo::PointCloud(std::move(kept));
}

// Outliers are drawn from the cube [-range, range]^3 minus the unit ball so
// every one of them is off the normalised surface.
geo::PointCloud add_outliers(const geo::PointCloud& cloud, std::size_t count, double range, std::uint64_t seed) {
  if (count == 0) return cloud;
  if (!(range * std::sqrt(3.0) > 1.0) || !std::isfinite(range))
    fail(ErrorCode::BadConfig, "outlier range must reach outside the unit ball");
  Rng rng(derive_seed(seed, {4}));
  std::vector<geo::Point> out(cloud.begin(), cloud.end());
  while (out.size() < cloud.size() + count) {
    const geo::Point p{uniform(rng, -range, range), uniform(rng, -range, range), uniform(rng, -range, range)};
    if (p[0] * p[0] + p[1] * p[1] + p[2] * p[2] > 1.0) out.push_back(p);
  }
  return geo::PointCloud(std::move(out));
}

template <class... F>
struct Overloaded : F... {
  using F::operator()...;
};

}  // namespace

std::string_view corruption_name(const CorruptionSpec& spec) {
  return std::visit(Overloaded{[](const HalfSpaceCrop&) { return std::string_view("half_space_crop"); },
                               [](const GaussianJitter&) { return std::string_view("gaussian_jitter"); },
                               [](const NonuniformDensity&) { return std::string_view("nonuniform_density"); },
                               [](const Outliers&) { return std::string_view("outliers"); }},
                    spec.mode);
}

geo::Point corruption_direction(std::uint64_t seed) {
  Rng rng(derive_seed(seed, {1}));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    const geo::Point p{normal(rng), normal(rng), normal(rng)};
    const double n = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    if (n > 1e-12) return {p[0] / n, p[1] / n, p[2] / n};
  }
}

geo::PointCloud corrupt(const geo::PointCloud& cloud, const CorruptionSpec& spec) {
  return std::visit(
      Overloaded{[&](const HalfSpaceCrop& c) { return crop(cloud, c.fraction, spec.seed); },
                 [&](const GaussianJitter& c) { return jitter(cloud, c.sigma, spec.seed); },
                 [&](const NonuniformDensity& c) { return thin(cloud, c.bias, spec.seed); },
                 [&](const Outliers& c) { return add_outliers(cloud, c.count, c.range, spec.seed); }},
      spec.mode);
}

Benchmark build_benchmark(const BenchmarkConfig& config, std::uint64_t seed) {
  if (config.classes.empty()) fail(ErrorCode::BadConfig, "benchmark needs at least one class");
  if (config.train_per_class == 0 || config.test_per_class == 0)
    fail(ErrorCode::BadConfig, "samples per class must be positive");
  if (config.points < kMinPoints) fail(ErrorCode::BadConfig, "points per cloud must be at least 8");
  for (std::size_t i = 0; i < config.classes.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (config.classes[i] == config.classes[j]) fail(ErrorCode::BadConfig, "duplicate benchmark class");

  const CorruptionSuite& s = config.suite;
  std::vector<CorruptionSpec> modes;
  if (s.crop_fraction > 0.0) modes.push_back({HalfSpaceCrop{s.crop_fraction}, 0});
  if (s.jitter_sigma > 0.0) modes.push_back({GaussianJitter{s.jitter_sigma}, 0});
  if (s.density_bias > 0.0) modes.push_back({NonuniformDensity{s.density_bias}, 0});
  if (s.outlier_count > 0) modes.push_back({Outliers{s.outlier_count, s.outlier_range}, 0});

  const std::size_t c = config.classes.size();
  const std::size_t n_train = c * config.train_per_class;
  const std::size_t n_test = c * config.test_per_class;

  Benchmark bench;
  for (auto k : config.classes) bench.class_names.emplace_back(shape_name(k));

  // Sample ids are global across splits (train first), so per-sample seeds
  // never repeat between the source and target domains.
  auto make = [&](std::size_t id) {
    const bool is_train = id < n_train;
    const std::size_t local = is_train ? id : id - n_train;
    const std::size_t per_class = is_train ? config.train_per_class : config.test_per_class;
    const std::size_t label = local / per_class;
    const std::uint64_t sample_seed = derive_seed(seed, {0x5A4D, id});
    LabeledCloud lc = generate_shape(config.classes[label], config.points, sample_seed);
    lc.label = label;
    lc.sample_id = id;
    lc.domain = is_train ? Domain::Source : Domain::Target;
    if (!is_train && !modes.empty()) {
      const std::uint64_t corruption_seed = derive_seed(sample_seed, {0xC0});
      CorruptionSpec spec = modes[corruption_seed % modes.size()];
      spec.seed = corruption_seed;
      lc.cloud = corrupt(lc.cloud, spec);
      lc.corruption = std::string(corruption_name(spec));
    }
    return lc;
  };

  std::vector<std::optional<LabeledCloud>> slots(n_train + n_test);
  const bool par = parallel::worker_threads() > 1;
  std::vector<std::exception_ptr> errors(slots.size());
#pragma omp parallel for schedule(dynamic) num_threads(parallel::worker_threads()) if (par)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(slots.size()); ++i) {
    try {
      slots[i] = make(static_cast<std::size_t>(i));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  // The lowest failing sample wins, whatever the thread count.
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  bench.train.reserve(n_train);
  bench.test.reserve(n_test);
  for (std::size_t i = 0; i < slots.size(); ++i) (i < n_train ? bench.train : bench.test).push_back(std::move(*slots[i]));
  return bench;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size,
                                                   std::uint64_t epoch_seed, std::uint64_t epoch) {
  if (batch_size == 0) fail(ErrorCode::BadConfig, "batch size must be at least 1");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  Rng rng(derive_seed(epoch_seed, {0xBA7C, epoch}));
  // Fisher-Yates with explicit draws; std::shuffle's algorithm is unspecified.
  for (std::size_t i = count; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < count; start += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(count, start + batch_size)));
  return batches;
}

// ---- dataset directory ---------------------------------------------------------

namespace {

std::string split_name(Domain d) { return d == Domain::Source ? "train" : "test"; }

std::filesystem::path sample_path(const std::filesystem::path& root, const LabeledCloud& s,
                                  const std::string& class_name) {
  return root / split_name(s.domain) / class_name / (std::to_string(s.sample_id) + ".xyz");
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

void write_dataset(const Benchmark& bench, const std::filesystem::path& root) {
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create " + root.string() + ": " + ec.message());
  std::ofstream manifest(root / "manifest.csv", std::ios::binary);
  if (!manifest) fail(ErrorCode::IoError, "cannot write " + (root / "manifest.csv").string());
  manifest << "sample_id,split,class_index,class_name,corruption_mode,seed\n";
  for (const auto* split : {&bench.train, &bench.test}) {
    for (const auto& s : *split) {
      if (s.label >= bench.class_names.size()) fail(ErrorCode::BadLabel, "sample label outside class list");
      const std::string& name = bench.class_names[s.label];
      const auto path = sample_path(root, s, name);
      std::filesystem::create_directories(path.parent_path(), ec);
      if (ec) fail(ErrorCode::IoError, "cannot create " + path.parent_path().string());
      save_xyz(s.cloud, path);
      manifest << s.sample_id << ',' << split_name(s.domain) << ',' << s.label << ',' << name << ','
               << s.corruption << ',' << s.seed << '\n';
    }
  }
  if (!manifest.flush()) fail(ErrorCode::IoError, "failed writing manifest");
}

Benchmark read_dataset(const std::filesystem::path& root) {
  std::ifstream manifest(root / "manifest.csv");
  if (!manifest) fail(ErrorCode::IoError, "missing " + (root / "manifest.csv").string());
  std::string line;
  std::getline(manifest, line);
  if (line != "sample_id,split,class_index,class_name,corruption_mode,seed")
    fail(ErrorCode::ParseError, "manifest.csv: unexpected header");
  Benchmark bench;
  std::map<std::size_t, std::string> names;
  std::size_t line_no = 1;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 6 || (f[1] != "train" && f[1] != "test"))
      fail(ErrorCode::ParseError, "manifest.csv line " + std::to_string(line_no) + ": malformed row");
    LabeledCloud s{load_xyz(root / f[1] / f[3] / (f[0] + ".xyz")), 0, Domain::Source, 0, 0, f[4]};
    try {
      s.sample_id = std::stoull(f[0]);
      s.label = std::stoull(f[2]);
      s.seed = std::stoull(f[5]);
    } catch (const std::exception&) {
      fail(ErrorCode::ParseError, "manifest.csv line " + std::to_string(line_no) + ": bad number");
    }
    s.domain = f[1] == "train" ? Domain::Source : Domain::Target;
    auto [it, inserted] = names.emplace(s.label, f[3]);
    if (!inserted && it->second != f[3])
      fail(ErrorCode::ParseError, "manifest.csv line " + std::to_string(line_no) + ": class name mismatch");
    (s.domain == Domain::Source ? bench.train : bench.test).push_back(std::move(s));
  }
  for (std::size_t c = 0; c < names.size(); ++c) {
    auto it = names.find(c);
    if (it == names.end()) fail(ErrorCode::ParseError, "manifest.csv: class indices are not contiguous");
    bench.class_names.push_back(it->second);
  }
  return bench;
}

}  // namespace ioodg::data
