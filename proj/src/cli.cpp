#include "ioodg/cli.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

#include "CLI11.hpp"
#include "ioodg/config.hpp"
#include "ioodg/data.hpp"
#include "ioodg/error.hpp"
#include "ioodg/parallel.hpp"
#include "ioodg/training.hpp"
#include "json.hpp"

namespace ioodg::cli {
namespace {

namespace fs = std::filesystem;

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadConfig: return kExitBadConfig;
    case ErrorCode::IoError:
    case ErrorCode::ParseError: return kExitIo;
    case ErrorCode::NonFinite: return kExitNonFinite;
    case ErrorCode::BadMagic: return kExitBadMagic;
    default: return kExitFailure;
  }
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string percent(double acc) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(1) << 100.0 * acc;
  return s.str();
}

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
};

train::TrainConfig resolve_config(const Globals& g) {
  train::TrainConfig c = g.config.empty() ? train::TrainConfig{} : config::load(g.config);
  if (g.seed) c.seed = *g.seed;
  train::validate(c);
  return c;
}

// ---- gen --------------------------------------------------------------------------

int cmd_gen(const Globals& g, std::ostream& out, std::ostream& err) {
  if (g.out.empty()) fail(ErrorCode::BadConfig, "gen needs --out");
  const train::TrainConfig c = resolve_config(g);
  const data::Benchmark bench = data::build_benchmark(c.benchmark, c.seed);
  data::write_dataset(bench, g.out);
  err << "wrote " << bench.train.size() << " train and " << bench.test.size() << " test clouds to " << g.out
      << "\n";
  out << "RESULT train=" << bench.train.size() << " test=" << bench.test.size() << " classes="
      << bench.class_names.size() << "\n";
  return kExitOk;
}

// ---- train ------------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::optional<std::size_t> epochs;
  std::string ablation = "none";
  std::vector<std::uint64_t> seeds;
  std::string resume;
};

std::vector<train::Ablation> table_order() {
  using A = train::Ablation;
  return {A::PointNet, A::NoAnchor, A::NoLocal, A::NoGlobal, A::None};
}

int cmd_train(const Globals& g, const TrainArgs& a, std::ostream& out, std::ostream& err) {
  train::TrainConfig base = resolve_config(g);
  if (a.epochs) base.epochs = *a.epochs;
  std::vector<train::Ablation> modes;
  if (a.ablation == "all") {
    modes = table_order();
  } else {
    const auto m = train::parse_ablation(a.ablation);
    if (!m) fail(ErrorCode::BadConfig, "unknown ablation '" + a.ablation + "'");
    modes = {*m};
  }
  const std::vector<std::uint64_t> seeds = a.seeds.empty() ? std::vector<std::uint64_t>{base.seed} : a.seeds;
  if (!a.resume.empty() && (modes.size() > 1 || seeds.size() > 1))
    fail(ErrorCode::BadConfig, "--resume works with a single run only");

  std::optional<data::Benchmark> disk;
  if (!a.data.empty()) disk = data::read_dataset(a.data);

  std::map<train::Ablation, std::vector<double>> test_acc;
  train::MetricsRow last_row;
  for (const auto mode : modes) {
    for (const auto seed : seeds) {
      train::TrainConfig c = base;
      c.ablation = mode;
      c.seed = seed;
      // Each seed regenerates its own benchmark unless a dataset is given.
      std::optional<data::Benchmark> generated;
      if (!disk) generated = data::build_benchmark(c.benchmark, seed);
      train::FitOptions opts;
      opts.benchmark = disk ? &*disk : &*generated;
      const bool single = modes.size() == 1 && seeds.size() == 1;
      if (!g.out.empty())
        opts.out_dir = single ? fs::path(g.out)
                              : fs::path(g.out) / std::string(train::ablation_name(mode)) / ("seed" + std::to_string(seed));
      if (!a.resume.empty()) opts.resume_from = a.resume;
      opts.on_epoch = [&](const train::MetricsRow& r) {
        err << train::ablation_name(mode) << " seed " << seed << " epoch " << r.epoch << ": loss "
            << fmt(r.loss.total) << " train " << percent(r.train_acc) << "% test " << percent(r.test_acc) << "%\n";
      };
      const auto res = train::fit(c, opts);
      if (res.history.empty()) fail(ErrorCode::BadConfig, "checkpoint already at the requested epoch count");
      last_row = res.history.back();
      test_acc[mode].push_back(last_row.test_acc);
    }
  }

  if (modes.size() == 1 && seeds.size() == 1) {
    out << "RESULT epochs=" << last_row.epoch << " train_acc=" << fmt(last_row.train_acc)
        << " test_acc=" << fmt(last_row.test_acc) << " loss_total=" << fmt(last_row.loss.total) << "\n";
    return kExitOk;
  }

  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  if (modes.size() == table_order().size()) {
    err << "Target-domain accuracy (%), mean over " << seeds.size() << " seed(s)\n";
    err << "PointNet | w/o Anchor Points | w/o Local Invariance | w/o Global Invariance | w/ all\n";
    err << percent(mean(test_acc[train::Ablation::PointNet])) << " | "
        << percent(mean(test_acc[train::Ablation::NoAnchor])) << " | "
        << percent(mean(test_acc[train::Ablation::NoLocal])) << " | "
        << percent(mean(test_acc[train::Ablation::NoGlobal])) << " | "
        << percent(mean(test_acc[train::Ablation::None])) << "\n";
  }
  out << "RESULT";
  for (const auto mode : modes) {
    const char* key = mode == train::Ablation::None ? "full" : nullptr;
    out << ' ' << (key ? std::string(key) : std::string(train::ablation_name(mode))) << '='
        << fmt(mean(test_acc[mode]));
  }
  out << "\n";
  return kExitOk;
}

// ---- eval -------------------------------------------------------------------------

int cmd_eval(const Globals& g, const std::string& checkpoint, const std::string& data_dir, const std::string& split,
             std::ostream& out, std::ostream& err) {
  if (checkpoint.empty()) fail(ErrorCode::BadConfig, "eval needs --checkpoint");
  if (split != "train" && split != "test" && split != "both")
    fail(ErrorCode::BadConfig, "--split must be train, test or both");
  const fs::path ckpt_path(checkpoint);
  const train::TrainState state = train::load_state(ckpt_path);

  train::TrainConfig c;
  const fs::path sidecar = fs::path(ckpt_path).replace_extension(".json");
  if (std::ifstream in{sidecar, std::ios::binary}) {
    std::stringstream ss;
    ss << in.rdbuf();
    c = config::from_json(ss.str());
  } else if (!g.config.empty()) {
    c = config::load(g.config);
  } else {
    fail(ErrorCode::IoError, "no config sidecar at " + sidecar.string());
  }
  if (g.seed) c.seed = *g.seed;

  const data::Benchmark bench = data_dir.empty() ? data::build_benchmark(c.benchmark, c.seed) : data::read_dataset(data_dir);
  c.model.num_classes = bench.class_names.size();
  out << "RESULT";
  if (split != "test") {
    const double acc = train::evaluate(state.params, bench.train, c);
    err << "train accuracy " << percent(acc) << "% (" << bench.train.size() << " clouds)\n";
    out << " train_acc=" << fmt(acc);
  }
  if (split != "train") {
    const double acc = train::evaluate(state.params, bench.test, c);
    err << "test accuracy " << percent(acc) << "%, error " << percent(1.0 - acc) << "% (" << bench.test.size()
        << " clouds)\n";
    out << " test_acc=" << fmt(acc) << " test_error=" << fmt(1.0 - acc);
  }
  out << "\n";
  return kExitOk;
}

// ---- gradcheck --------------------------------------------------------------------

int cmd_gradcheck(const Globals& g, const std::string& fault, std::ostream& out, std::ostream& err) {
  if (fault == "relu_backward") ad::testing::inject_fault(ad::testing::Fault::ReluBackward);
  else if (!fault.empty()) fail(ErrorCode::BadConfig, "unknown fault '" + fault + "'");
  const auto report = train::model_gradient_check(g.seed.value_or(1));
  ad::testing::inject_fault(ad::testing::Fault::None);
  err << std::left << std::setw(10) << "group" << std::setw(14) << "max_rel_err" << std::setw(9) << "checked"
      << std::setw(9) << "kinked" << "worst\n";
  for (const auto& gr : report.groups) {
    std::ostringstream e;
    e << std::scientific << std::setprecision(3) << gr.max_rel_error;
    err << std::left << std::setw(10) << gr.group << std::setw(14) << e.str() << std::setw(9) << gr.checked
        << std::setw(9) << gr.non_differentiable << gr.worst_param << "\n";
  }
  out << "RESULT passed=" << (report.passed ? "true" : "false") << " max_rel_error=" << fmt(report.max_rel_error)
      << " worst=" << report.worst_param << "\n";
  if (!report.passed) {
    err << "gradient check FAILED, worst parameter " << report.worst_param << "\n";
    return kExitGradCheck;
  }
  return kExitOk;
}

// ---- augment ----------------------------------------------------------------------

struct AugmentArgs {
  std::string input;
  double rotate_x = 0.0, rotate_y = 0.0, rotate_z = 0.0;  // degrees
  double scale = 1.0;
  std::vector<double> translate;
  bool random_t1 = false;
  std::optional<double> keep;
  std::optional<std::size_t> resample;
};

int cmd_augment(const Globals& g, const AugmentArgs& a, std::ostream& out, std::ostream& err) {
  if (a.input.empty() || g.out.empty()) fail(ErrorCode::BadConfig, "augment needs an input file and --out");
  if (a.keep && a.resample) fail(ErrorCode::BadConfig, "--keep and --resample are exclusive");
  if (!a.translate.empty() && a.translate.size() != 3) fail(ErrorCode::BadConfig, "--translate takes 3 values");
  const std::uint64_t seed = g.seed.value_or(0);
  const geo::PointCloud input = data::load_xyz(a.input);

  geo::ParamTransform t1;
  if (a.random_t1) {
    const train::TrainConfig c = g.config.empty() ? train::TrainConfig{} : config::load(g.config);
    t1 = geo::sample_param_transform(c.augment.t1, seed);
  } else {
    constexpr double deg = std::numbers::pi / 180.0;
    t1 = geo::ParamTransform::rotation(a.rotate_x * deg, a.rotate_y * deg, a.rotate_z * deg);
    for (auto& row : t1.matrix)
      for (double& v : row) v *= a.scale;
    if (!a.translate.empty()) t1.translation = {a.translate[0], a.translate[1], a.translate[2]};
  }
  geo::check_invertible(t1);

  geo::NonParamTransform t2;
  t2.seed = seed;
  if (a.keep) t2.kind = geo::DropRandom{*a.keep};
  if (a.resample) t2.kind = geo::Resample{*a.resample};
  const auto kept = geo::select_indices(input.size(), t2);
  const geo::PointCloud result = geo::compose_augment(input, t1, t2);
  data::save_xyz(result, g.out);

  const geo::ParamTransform inv = geo::invert_param_transform(t1);
  auto mat = [](const geo::Mat3& m) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& row : m) j.push_back({row[0], row[1], row[2]});
    return j;
  };
  nlohmann::ordered_json side;
  side["matrix"] = mat(t1.matrix);
  side["translation"] = {t1.translation[0], t1.translation[1], t1.translation[2]};
  side["inverse_matrix"] = mat(inv.matrix);
  side["inverse_translation"] = {inv.translation[0], inv.translation[1], inv.translation[2]};
  side["convention"] = "row vectors: q = p * matrix + translation";
  side["t2"] = a.resample ? "resample" : "drop_random";
  side["keep_ratio"] = a.keep.value_or(1.0);
  side["seed"] = seed;
  side["kept_indices"] = kept;
  const fs::path side_path = fs::path(g.out).string() + ".json";
  std::ofstream s(side_path, std::ios::binary);
  s << side.dump(2) << "\n";
  if (!s) fail(ErrorCode::IoError, "cannot write " + side_path.string());
  err << "augmented " << input.size() << " -> " << result.size() << " points\n";
  out << "RESULT points=" << result.size() << " sidecar=" << side_path.string() << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-branch invariance learning for point-cloud OOD classification"};
  app.fallthrough();
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Run seed (overrides the config)");
  app.add_option("--config", g.config, "Flat key = value config file");
  app.add_option("--out", g.out, "Output directory or file");

  auto* gen = app.add_subcommand("gen", "Generate the synthetic benchmark on disk");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model, or the ablation matrix");
  tr->add_option("--data", ta.data, "Dataset directory written by gen");
  tr->add_option("--epochs", ta.epochs, "Override the epoch count");
  tr->add_option("--ablation", ta.ablation, "none|no_anchor|no_local|no_global|pointnet|all");
  tr->add_option("--seeds", ta.seeds, "Seeds for a matrix run")->delimiter(',');
  tr->add_option("--resume", ta.resume, "Checkpoint to continue from");

  std::string checkpoint, eval_data, split = "both";
  auto* ev = app.add_subcommand("eval", "Accuracy of a checkpoint");
  ev->add_option("--checkpoint", checkpoint, "model.ckpt written by train");
  ev->add_option("--data", eval_data, "Dataset directory written by gen");
  ev->add_option("--split", split, "train|test|both");

  std::string fault;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the full loss on a tiny model");
  gc->add_option("--inject-fault", fault, "Test fixture: relu_backward")->group("");

  AugmentArgs aa;
  auto* au = app.add_subcommand("augment", "Apply (t1, t2) to an XYZ file");
  au->add_option("input", aa.input, "Input .xyz")->required();
  au->add_option("--rotate-x", aa.rotate_x, "Degrees");
  au->add_option("--rotate-y", aa.rotate_y, "Degrees");
  au->add_option("--rotate-z", aa.rotate_z, "Degrees");
  au->add_option("--scale", aa.scale, "Uniform scale");
  au->add_option("--translate", aa.translate, "x y z")->expected(3);
  au->add_flag("--random-t1", aa.random_t1, "Sample t1 from the configured distribution");
  au->add_option("--keep", aa.keep, "Random drop keeping this fraction");
  au->add_option("--resample", aa.resample, "Resample to this many points");

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kExitBadConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen(g, out, err);
    if (tr->parsed()) return cmd_train(g, ta, out, err);
    if (ev->parsed()) return cmd_eval(g, checkpoint, eval_data, split, out, err);
    if (gc->parsed()) return cmd_gradcheck(g, fault, out, err);
    if (au->parsed()) return cmd_augment(g, aa, out, err);
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace ioodg::cli
