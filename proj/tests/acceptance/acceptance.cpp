// Acceptance suite: one PASS/FAIL line per criterion on stdout, progress on
// stderr. Exit status is non-zero when any criterion fails.
//
//   acceptance [--only 1,4,9]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../oracles.hpp"
#include "ioodg/error.hpp"
#include "ioodg/losses.hpp"
#include "ioodg/network.hpp"
#include "ioodg/training.hpp"

using namespace ioodg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

void randomize_zero_tensors(net::ModelParams& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto& [name, t] : p.entries())
    if (std::all_of(t.data().begin(), t.data().end(), [](double v) { return v == 0.0; }))
      for (double& v : t.data()) v = u(rng);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- 1 -----------------------------------------------------------------------

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string where;
  bool ok = true;
  std::string failing;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto report = train::model_gradient_check(seed, 1e-4, 1e-4);
    if (!report.passed) failing += (failing.empty() ? "" : ",") + std::to_string(seed);
    for (const auto& g : report.groups) {
      std::cerr << "  seed " << seed << " " << g.group << " max rel error " << g.max_rel_error << " ("
                << g.checked << " checked, " << g.non_differentiable << " at kinks)\n";
      if (g.checked == 0) ok = false;
    }
    if (report.groups.size() != 6) ok = false;
    ok = ok && report.passed && report.max_rel_error < 1e-4;
    if (report.max_rel_error >= worst) {
      worst = report.max_rel_error;
      where = report.worst_param + " seed " + std::to_string(seed);
    }
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 120.0,
          "max rel error " + fmt(worst) + " at " + where + " over 5 seeds" +
              (failing.empty() ? "" : " (failing seeds " + failing + ")") + ", " + fmt(secs) + " s"};
}

// ---- 2 -----------------------------------------------------------------------

Outcome permutation_invariance() {
  const auto t0 = Clock::now();
  const net::ModelConfig c;
  net::ModelParams p = net::ModelParams::initialize(c, 2, false);
  randomize_zero_tensors(p, 2);
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  bool equivariant = true;
  for (int rep = 0; rep < 100; ++rep) {
    const geo::PointCloud x = geo::normalize_cloud(geo::PointCloud(oracle::random_points(rng, 256)));
    std::vector<std::size_t> perm(x.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<geo::Point> permuted(x.size());
    for (std::size_t i = 0; i < perm.size(); ++i) permuted[i] = x[perm[i]];

    ad::Graph g;
    const net::BoundParams bp(g, p, false);
    const ad::Var h = net::extract_features(bp, g.constant(ad::Tensor::from_points(x.points())), 0);
    const ad::Var hp = net::extract_features(bp, g.constant(ad::Tensor::from_points(permuted)), 0);
    for (std::size_t i = 0; i < perm.size(); ++i)
      for (std::size_t k = 0; k < c.feature_dim; ++k)
        if (hp.value()(i, k) != h.value()(perm[i], k)) equivariant = false;

    const geo::AnchorSet a0 = net::initial_anchors(x, c.anchors);
    for (std::size_t l = 0; l < c.layers; ++l) {
      const ad::Tensor& a = net::learn_anchors(bp, h, a0, l).anchors.value();
      const ad::Tensor& ap = net::learn_anchors(bp, hp, a0, l).anchors.value();
      for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - ap[i]));
    }
  }
  const double secs = seconds_since(t0);
  return {equivariant && worst < 1e-6 && secs < 60.0,
          std::string("features ") + (equivariant ? "exactly equivariant" : "NOT equivariant") +
              ", max anchor deviation " + fmt(worst) + " over 100 permutations, " + fmt(secs) + " s"};
}

// ---- 3 -----------------------------------------------------------------------

Outcome transform_round_trips() {
  std::mt19937_64 rng(3);
  const geo::TransformDistribution wide{{-std::numbers::pi, -std::numbers::pi, -std::numbers::pi},
                                        {std::numbers::pi, std::numbers::pi, std::numbers::pi},
                                        0.5,
                                        2.0,
                                        1.0};
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst_round = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    geo::ParamTransform t = geo::sample_param_transform(wide, 1000 + rep);
    // Every third transform is a general (sheared) affine map.
    if (rep % 3 == 0) {
      for (auto& row : t.matrix)
        for (double& v : row) v += 0.3 * u(rng);
      if (std::abs(oracle::det3(t.matrix)) < 0.05) continue;
    }
    const geo::ParamTransform inv = geo::invert_param_transform(t);
    for (const auto& q : oracle::random_points(rng, 8)) {
      const geo::Point back = geo::apply(geo::apply(q, t), inv);
      for (int k = 0; k < 3; ++k) worst_round = std::max(worst_round, std::abs(back[k] - q[k]));
    }
  }

  net::ModelConfig c;
  c.radius = 0.1;
  net::ModelParams p = net::ModelParams::initialize(c, 3, false);
  randomize_zero_tensors(p, 3);
  double worst_anchor = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const geo::PointCloud x = geo::normalize_cloud(geo::PointCloud(oracle::random_points(rng, 128)));
    const geo::ParamTransform t1 = geo::sample_param_transform(wide, 5000 + rep);
    ad::Graph g;
    const net::BoundParams bp(g, p, false);
    const auto out = net::forward_two_branch(bp, x, t1, geo::NonParamTransform{geo::DropRandom{0.75}, 7}, c);
    for (std::size_t l = 0; l < c.layers; ++l) {
      const auto a = out.layers[l].anchors.value().to_points();
      const auto tilde = out.layers_aug[l].anchors.value().to_points();
      for (std::size_t i = 0; i < a.size(); ++i) {
        const geo::Point mapped = geo::apply(a[i], t1);
        for (int k = 0; k < 3; ++k) worst_anchor = std::max(worst_anchor, std::abs(mapped[k] - tilde[i][k]));
      }
    }
  }
  return {worst_round <= 1e-9 && worst_anchor <= 1e-9,
          "inverse round trip " + fmt(worst_round) + " over 1000 transforms, t1(A) vs learned anchors " +
              fmt(worst_anchor)};
}

// ---- 4 -----------------------------------------------------------------------

Outcome oracle_equivalence() {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> pick_n(1, 8), pick_m(1, 4);
  double worst_cd = 0.0;
  std::size_t fps_cases = 0, fps_mismatch = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = pick_n(rng);
    const std::size_t m = pick_m(rng);
    // A quarter of the instances sit on a coarse grid so ties actually occur.
    auto x = oracle::random_points(rng, n);
    auto a = oracle::random_points(rng, m);
    if (rep % 4 == 0) {
      for (auto* set : {&x, &a})
        for (auto& q : *set)
          for (double& v : q) v = std::round(v * 2.0) / 2.0;
    }
    worst_cd = std::max(worst_cd, std::abs(geo::chamfer_distance(a, x) - oracle::chamfer(a, x)));
    ad::Graph g;
    const double via_loss = loss::loss_cd(g.constant(ad::Tensor::from_points(a)), geo::PointCloud(x)).value().item();
    worst_cd = std::max(worst_cd, std::abs(via_loss - oracle::chamfer(a, x)));

    for (std::size_t mm = 1; mm <= std::min<std::size_t>(m, n); ++mm)
      for (std::size_t start = 0; start < n; ++start) {
        ++fps_cases;
        if (geo::farthest_point_indices(x, mm, start) != oracle::fps(x, mm, start)) ++fps_mismatch;
      }
  }
  return {worst_cd <= 1e-12 && fps_mismatch == 0,
          "Chamfer max deviation " + fmt(worst_cd) + ", FPS " + std::to_string(fps_mismatch) + " mismatches in " +
              std::to_string(fps_cases) + " (instance, M, start) cases"};
}

// ---- 5 and 6 -----------------------------------------------------------------

double branch_gap(const ad::Tensor& a, const ad::Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

Outcome degenerate_zeroing() {
  train::TrainConfig config;
  config.epochs = 5;
  config.augment.t1 = geo::TransformDistribution{};
  config.augment.keep_min = 1.0;
  config.augment.keep_max = 1.0;
  config.augment.resample_prob = 0.0;
  std::size_t passes = 0;
  double worst = 0.0;
  train::FitOptions opts;
  opts.observer = [&](const net::ForwardOutputs& f) {
    ++passes;
    for (std::size_t l = 0; l < f.layers.size(); ++l)
      if (f.layers[l].local && f.layers_aug[l].local)
        worst = std::max(worst, branch_gap(f.layers[l].local->features.value(), f.layers_aug[l].local->features.value()));
    worst = std::max(worst, branch_gap(f.global.value(), f.global_aug.value()));
  };
  opts.on_epoch = [](const train::MetricsRow& r) {
    std::cerr << "  degenerate epoch " << r.epoch << " local " << r.loss.local << " global " << r.loss.global << "\n";
  };
  const auto result = train::fit(config, opts);
  bool zero = result.history.size() == 5;
  for (const auto& row : result.history) zero = zero && row.loss.local == 0.0 && row.loss.global == 0.0;
  return {zero && worst == 0.0,
          "5 epochs, " + std::to_string(passes) + " forward passes, largest branch gap " + fmt(worst) +
              ", logged local/global " + (zero ? "all exactly 0" : "NOT all 0")};
}

Outcome normalization_over_epoch() {
  train::TrainConfig config;
  config.epochs = 1;
  std::size_t passes = 0, rows = 0, anchors = 0;
  double worst = 0.0;
  train::FitOptions opts;
  opts.observer = [&](const net::ForwardOutputs& f) {
    ++passes;
    for (const ad::Var& s : f.selections) {
      const ad::Tensor& t = s.value();
      for (std::size_t i = 0; i < t.rows(); ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < t.cols(); ++j) total += t(i, j);
        worst = std::max(worst, std::abs(total - 1.0));
        ++rows;
      }
    }
    for (const auto* branch : {&f.layers, &f.layers_aug})
      for (const auto& layer : *branch) {
        if (!layer.local) continue;
        for (std::size_t i = 0; i + 1 < layer.local->offsets.size(); ++i) {
          double total = 0.0;
          for (std::size_t e = layer.local->offsets[i]; e < layer.local->offsets[i + 1]; ++e)
            total += layer.local->weights.value()[e];
          worst = std::max(worst, std::abs(total - 1.0));
          ++anchors;
        }
      }
  };
  train::fit(config, opts);
  return {passes == config.benchmark.train_per_class * config.benchmark.classes.size() && rows > 0 && anchors > 0 &&
              worst <= 1e-6,
          std::to_string(passes) + " forward passes, " + std::to_string(rows) + " S rows and " +
              std::to_string(anchors) + " attention sets, max deviation " + fmt(worst)};
}

// ---- 7 and 8 -----------------------------------------------------------------

struct RunSummary {
  double train_acc = 0.0;
  double test_acc = 0.0;
  double seconds = 0.0;
};

const std::vector<std::uint64_t> kSeeds{1, 2, 3};

// Final-epoch accuracies of the three seeded runs of one mode, trained once.
const std::vector<RunSummary>& runs_of(train::Ablation mode) {
  static std::map<train::Ablation, std::vector<RunSummary>> cache;
  auto& runs = cache[mode];
  if (!runs.empty()) return runs;
  for (std::uint64_t seed : kSeeds) {
    train::TrainConfig config;
    config.seed = seed;
    config.ablation = mode;
    const auto t0 = Clock::now();
    const auto result = train::fit(config);
    RunSummary s{result.history.back().train_acc, result.history.back().test_acc, seconds_since(t0)};
    std::cerr << "  " << train::ablation_name(mode) << " seed " << seed << ": train " << 100 * s.train_acc
              << "% test " << 100 * s.test_acc << "% (" << fmt(s.seconds) << " s)" << std::endl;
    runs.push_back(s);
  }
  return runs;
}

Outcome training_convergence() {
  const auto& full = runs_of(train::Ablation::None);
  bool ok = full.size() == kSeeds.size();
  std::string detail = "final train accuracy";
  double secs = 0.0;
  for (std::size_t i = 0; i < full.size(); ++i) {
    ok = ok && full[i].train_acc >= 0.95;
    detail += " " + fmt(100 * full[i].train_acc, 4) + "%";
    secs += full[i].seconds;
  }
  return {ok, detail + " (seeds 1,2,3; threshold 95%), " + fmt(secs / 60.0) + " min for 3 runs"};
}

Outcome ablation_ordering() {
  auto mean_test = [](const std::vector<RunSummary>& runs) {
    double s = 0.0;
    for (const auto& r : runs) s += r.test_acc;
    return 100.0 * s / static_cast<double>(runs.size());
  };
  const double pointnet = mean_test(runs_of(train::Ablation::PointNet));
  const double no_anchor = mean_test(runs_of(train::Ablation::NoAnchor));
  const double no_local = mean_test(runs_of(train::Ablation::NoLocal));
  const double no_global = mean_test(runs_of(train::Ablation::NoGlobal));
  const double full = mean_test(runs_of(train::Ablation::None));
  bool ok = true;
  for (double v : {no_anchor, no_local, no_global}) ok = ok && full - v >= 1.0 && v > pointnet;
  ok = ok && full > pointnet;
  return {ok, "mean OOD test accuracy pointnet " + fmt(pointnet, 4) + ", no_anchor " + fmt(no_anchor, 4) +
                  ", no_local " + fmt(no_local, 4) + ", no_global " + fmt(no_global, 4) + ", full " + fmt(full, 4)};
}

// ---- 9 -----------------------------------------------------------------------

Outcome determinism_and_resume() {
  train::TrainConfig config;
  config.epochs = 4;
  config.benchmark.train_per_class = 12;
  config.benchmark.test_per_class = 6;
  config.lr_decay_every = 2;
  config.seed = 9;
  const fs::path root = fs::temp_directory_path() / "ioodg_acceptance_9";
  fs::remove_all(root);

  train::fit(config, {.out_dir = root / "a"});
  train::fit(config, {.out_dir = root / "b"});
  const bool same_csv = slurp(root / "a" / "metrics.csv") == slurp(root / "b" / "metrics.csv");
  const bool same_ckpt = slurp(root / "a" / "model.ckpt") == slurp(root / "b" / "model.ckpt");

  bool resume_ok = true;
  for (std::size_t k = 1; k < config.epochs; ++k) {
    const fs::path dir = root / ("resume" + std::to_string(k));
    train::fit(config, {.out_dir = dir, .stop_after = k});
    train::fit(config, {.out_dir = dir, .resume_from = dir / "model.ckpt"});
    const bool match = slurp(dir / "metrics.csv") == slurp(root / "a" / "metrics.csv") &&
                       slurp(dir / "model.ckpt") == slurp(root / "a" / "model.ckpt");
    std::cerr << "  resume at epoch " << k << (match ? " matches" : " DIFFERS") << "\n";
    resume_ok = resume_ok && match;
  }
  fs::remove_all(root);
  return {same_csv && same_ckpt && resume_ok,
          std::string("repeat run ") + (same_csv && same_ckpt ? "byte-identical" : "DIFFERS") +
              ", resume at epochs 1..3 " + (resume_ok ? "bit-exact" : "NOT bit-exact")};
}

// ---- 10 ----------------------------------------------------------------------

Outcome hyperparameter_fidelity() {
  const train::TrainConfig d;
  const bool defaults = d.learning_rate == 0.001 && d.weight_decay == 0.0001 && d.batch_size == 16 &&
                        d.weights.alpha == 1.0 && d.weights.beta == 1.0 && d.weights.gamma == 1.0 &&
                        d.model.layers == 2;

  train::TrainConfig big;
  big.model.anchors = 256;
  big.benchmark.train_per_class = 2;
  big.benchmark.test_per_class = 1;
  big.epochs = 1;
  bool big_ok = false;
  std::string why;
  try {
    train::validate(big);
    const auto result = train::fit(big);
    big_ok = std::isfinite(result.history.back().loss.total);
    for (const auto& [name, t] : result.state.params.entries()) big_ok = big_ok && t.all_finite();
  } catch (const std::exception& e) {
    why = std::string(" (") + e.what() + ")";
  }
  return {defaults && big_ok, std::string("lr/decay/batch/weights/L defaults ") + (defaults ? "match" : "DIFFER") +
                                  ", M=256 epoch " + (big_ok ? "runs" : "FAILS") + why};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      std::stringstream list(argv[++i]);
      std::string item;
      while (std::getline(list, item, ',')) only.insert(std::atoi(item.c_str()));
    } else {
      std::cerr << "usage: acceptance [--only 1,2,...]\n";
      return 2;
    }
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient fidelity", gradient_fidelity},
      {"permutation invariance", permutation_invariance},
      {"transform round trips", transform_round_trips},
      {"oracle equivalence", oracle_equivalence},
      {"degenerate augmentation zeroing", degenerate_zeroing},
      {"selection and attention normalization", normalization_over_epoch},
      {"training convergence", training_convergence},
      {"ablation ordering", ablation_ordering},
      {"determinism and resume", determinism_and_resume},
      {"hyperparameter defaults", hyperparameter_fidelity},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(id)) continue;
    std::cerr << "[" << id << "] " << criteria[i].first << "\n";
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << "CRITERION " << id << " " << (o.pass ? "PASS" : "FAIL") << " " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
