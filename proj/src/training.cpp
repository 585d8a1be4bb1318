#include "ioodg/training.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <string>

#include "ioodg/checkpoint.hpp"
#include "ioodg/config.hpp"
#include "ioodg/error.hpp"
#include "ioodg/parallel.hpp"
#include "ioodg/rng.hpp"

namespace ioodg::train {

std::string_view ablation_name(Ablation a) {
  switch (a) {
    case Ablation::None: return "none";
    case Ablation::NoAnchor: return "no_anchor";
    case Ablation::NoLocal: return "no_local";
    case Ablation::NoGlobal: return "no_global";
    case Ablation::PointNet: return "pointnet";
  }
  return "none";
}

std::optional<Ablation> parse_ablation(std::string_view name) {
  for (auto a : {Ablation::None, Ablation::NoAnchor, Ablation::NoLocal, Ablation::NoGlobal, Ablation::PointNet})
    if (ablation_name(a) == name) return a;
  return std::nullopt;
}

void validate(const TrainConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(ErrorCode::BadConfig, what);
  };
  require(c.learning_rate > 0.0 && std::isfinite(c.learning_rate), "learning_rate must be > 0");
  require(c.weight_decay >= 0.0 && std::isfinite(c.weight_decay), "weight_decay must be >= 0");
  require(c.batch_size >= 1, "batch_size must be >= 1");
  require(c.epochs >= 1, "epochs must be >= 1");
  require(c.lr_decay_every >= 1, "lr_decay_every must be >= 1");
  require(c.lr_decay_factor > 0.0 && c.lr_decay_factor <= 1.0, "lr_decay_factor must lie in (0, 1]");
  for (double w : {c.weights.alpha, c.weights.beta, c.weights.gamma})
    require(w >= 0.0 && std::isfinite(w), "loss weights must be finite and >= 0");
  require(c.grad_clip >= 0.0, "grad_clip must be >= 0");
  require(c.model.radius > 0.0, "radius must be > 0");
  require(c.augment.keep_min > 0.0 && c.augment.keep_min <= c.augment.keep_max && c.augment.keep_max <= 1.0,
          "keep ratios must satisfy 0 < keep_min <= keep_max <= 1");
  require(c.augment.resample_prob >= 0.0 && c.augment.resample_prob <= 1.0, "resample_prob must lie in [0, 1]");
}

net::ForwardOptions forward_options(const TrainConfig& config, bool training) {
  net::ForwardOptions o;
  if (config.ablation == Ablation::NoAnchor) o.anchor_mode = net::AnchorMode::FpsOnly;
  if (config.ablation == Ablation::PointNet) o.local_aggregation = false;
  o.last_layer_local = training && config.ablation != Ablation::NoLocal;
  return o;
}

TrainState TrainState::fresh(net::ModelParams params, bool float_storage) {
  TrainState s;
  for (const auto& [name, t] : params.entries()) {
    s.m.emplace_back(t.shape(), 0.0);
    s.v.emplace_back(t.shape(), 0.0);
  }
  s.params = std::move(params);
  s.float_storage = float_storage;
  return s;
}

void adam_step(TrainState& state, const std::vector<ad::Tensor>& grads, double lr, double weight_decay) {
  auto& entries = state.params.entries();
  if (grads.size() != entries.size() || state.m.size() != entries.size() || state.v.size() != entries.size())
    fail(ErrorCode::ShapeMismatch, "gradient count does not match parameter count");
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (grads[k].shape() != entries[k].second.shape())
      fail(ErrorCode::ShapeMismatch, "gradient of " + entries[k].first + " has shape " +
                                         ad::shape_string(grads[k].shape()));
    if (!grads[k].all_finite()) fail(ErrorCode::NonFinite, "gradient of " + entries[k].first + " is not finite");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(kAdamBeta1, t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, t);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    auto theta = entries[k].second.data();
    auto m = state.m[k].data();
    auto v = state.v[k].data();
    const auto g = grads[k].data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i] + weight_decay * theta[i];
      m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * gi;
      v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * gi * gi;
      theta[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kAdamEps);
      if (state.float_storage) {
        theta[i] = static_cast<float>(theta[i]);
        m[i] = static_cast<float>(m[i]);
        v[i] = static_cast<float>(v[i]);
      }
    }
  }
}

double lr_schedule(std::size_t epoch, const TrainConfig& config) {
  return config.learning_rate *
         std::pow(config.lr_decay_factor, static_cast<double>(epoch / config.lr_decay_every));
}

SampleLoss sample_loss(const net::ForwardOutputs& fwd, std::size_t label, const TrainConfig& config) {
  ad::Graph& g = fwd.logits.graph();
  const std::size_t labels[] = {label};
  loss::LossWeights w = config.weights;
  if (config.ablation == Ablation::NoLocal) w.beta = 0.0;
  if (config.ablation == Ablation::NoGlobal) w.gamma = 0.0;
  const bool pointnet = config.ablation == Ablation::PointNet;
  if (pointnet) w = {0.0, 0.0, 0.0};

  ad::Var task = loss::loss_task(fwd.logits, labels);
  if (config.task_branch == TaskBranch::Both && fwd.logits_aug.valid() && !pointnet)
    task = ad::scale(ad::add(task, loss::loss_task(fwd.logits_aug, labels)), 0.5);

  ad::Var cd, local, global;
  if (!pointnet) {
    for (std::size_t l = 0; l < fwd.layers.size(); ++l) {
      if (l > 0 && !config.cd_all_layers) break;
      const ad::Var term = loss::loss_cd(fwd.layers[l].anchors, fwd.original);
      cd = cd.valid() ? ad::add(cd, term) : term;
    }
  }
  if (!pointnet && config.ablation != Ablation::NoLocal) {
    std::vector<std::pair<ad::Var, ad::Var>> pairs;
    for (std::size_t l = 0; l < fwd.layers.size(); ++l)
      if (fwd.layers[l].local && fwd.layers_aug[l].local)
        pairs.emplace_back(fwd.layers[l].local->features, fwd.layers_aug[l].local->features);
    local = loss::loss_local(g, pairs, config.normalize_local);
  }
  if (!pointnet && config.ablation != Ablation::NoGlobal && fwd.global_aug.valid())
    global = loss::loss_global(fwd.global, fwd.global_aug);

  auto value = [](ad::Var v) { return v.valid() ? v.value().item() : 0.0; };
  SampleLoss out;
  out.parts = loss::loss_total(value(task), value(cd), value(local), value(global), w);
  out.total = loss::combine(g, task, cd, local, global, w);
  return out;
}

Augmentation draw_augmentation(const TrainConfig& config, std::size_t epoch, std::uint64_t sample_id,
                               std::size_t points) {
  const AugmentConfig& a = config.augment;
  Augmentation out;
  if (config.ablation == Ablation::PointNet) return out;
  out.t1 = geo::sample_param_transform(a.t1, derive_seed(config.seed, {0xA1, epoch, sample_id}));
  Rng rng(derive_seed(config.seed, {0xA2, epoch, sample_id}));
  const double pick = uniform(rng, 0.0, 1.0);
  const double keep = a.keep_min == a.keep_max ? a.keep_min : uniform(rng, a.keep_min, a.keep_max);
  out.t2.seed = rng();
  if (a.resample_prob > 0.0 && pick < a.resample_prob)
    out.t2.kind = geo::Resample{points};
  else
    out.t2.kind = geo::DropRandom{keep};
  return out;
}

namespace {

struct SampleResult {
  loss::LossBreakdown parts;
  std::vector<ad::Tensor> grads;
};

SampleResult run_sample(const net::ModelParams& params, const data::LabeledCloud& sample, const TrainConfig& config,
                        std::size_t epoch, const ForwardObserver& observer) {
  ad::Graph g;
  net::BoundParams bound(g, params, true);
  const net::ForwardOptions options = forward_options(config, true);
  net::ForwardOutputs fwd = [&] {
    if (config.ablation == Ablation::PointNet) return net::forward_single(bound, sample.cloud, config.model, options);
    const Augmentation aug = draw_augmentation(config, epoch, sample.sample_id, sample.cloud.size());
    return net::forward_two_branch(bound, sample.cloud, aug.t1, aug.t2, config.model, options);
  }();
  if (observer) {
#pragma omp critical(ioodg_forward_observer)
    observer(fwd);
  }
  SampleLoss loss = sample_loss(fwd, sample.label, config);
  g.backward(loss.total);
  SampleResult out{loss.parts, {}};
  out.grads.reserve(bound.vars().size());
  for (const auto& [name, var] : bound.vars()) {
    const ad::Tensor* gr = g.grad(var);
    out.grads.push_back(gr ? *gr : ad::Tensor(var.shape(), 0.0));
  }
  return out;
}

void accumulate(loss::LossBreakdown& acc, const loss::LossBreakdown& x, double w) {
  acc.task += w * x.task;
  acc.cd += w * x.cd;
  acc.local += w * x.local;
  acc.global += w * x.global;
  acc.total += w * x.total;
  acc.weights = x.weights;
}

}  // namespace

BatchResult batch_gradients(const net::ModelParams& params, const std::vector<data::LabeledCloud>& samples,
                            const std::vector<std::size_t>& batch, const TrainConfig& config, std::size_t epoch,
                            const ForwardObserver& observer) {
  if (batch.empty()) fail(ErrorCode::BadConfig, "empty batch");
  std::vector<std::optional<SampleResult>> results(batch.size());
  std::exception_ptr error;
  const int threads = parallel::worker_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads) if (threads > 1)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(batch.size()); ++i) {
    try {
      results[i] = run_sample(params, samples.at(batch[i]), config, epoch, observer);
    } catch (...) {
#pragma omp critical(ioodg_batch_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  const double inv = 1.0 / static_cast<double>(batch.size());
  BatchResult out;
  for (const auto& [name, t] : params.entries()) out.grads.emplace_back(t.shape(), 0.0);
  for (const auto& r : results) {
    accumulate(out.loss, r->parts, inv);
    for (std::size_t k = 0; k < out.grads.size(); ++k) {
      auto dst = out.grads[k].data();
      const auto src = r->grads[k].data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
  for (auto& gk : out.grads)
    for (double& v : gk.data()) v *= inv;
  return out;
}

EpochResult train_epoch(TrainState& state, const std::vector<data::LabeledCloud>& samples,
                        const std::vector<std::vector<std::size_t>>& batches, const TrainConfig& config,
                        const ForwardObserver& observer) {
  EpochResult out;
  const double lr = lr_schedule(state.epoch, config);
  std::size_t seen = 0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    BatchResult r;
    try {
      r = batch_gradients(state.params, samples, batches[b], config, state.epoch, observer);
      if (config.grad_clip > 0.0) {
        double sq = 0.0;
        for (const auto& gk : r.grads)
          for (double v : gk.data()) sq += v * v;
        const double norm = std::sqrt(sq);
        if (norm > config.grad_clip)
          for (auto& gk : r.grads)
            for (double& v : gk.data()) v *= config.grad_clip / norm;
      }
      adam_step(state, r.grads, lr, config.weight_decay);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NonFinite)
        fail(ErrorCode::NonFinite, "epoch " + std::to_string(state.epoch) + ", batch " + std::to_string(b) + ": " +
                                       e.what());
      throw;
    }
    out.batches.push_back(r.loss);
    accumulate(out.mean, r.loss, static_cast<double>(batches[b].size()));
    seen += batches[b].size();
  }
  if (seen > 0) {
    loss::LossBreakdown m = out.mean;
    out.mean = {m.task / seen, m.cd / seen, m.local / seen, m.global / seen, m.total / seen, m.weights};
  }
  ++state.epoch;
  return out;
}

double evaluate(const net::ModelParams& params, const std::vector<data::LabeledCloud>& samples,
                const TrainConfig& config) {
  if (samples.empty()) fail(ErrorCode::BadConfig, "evaluate needs at least one sample");
  const net::ForwardOptions options = forward_options(config, false);
  std::vector<char> correct(samples.size(), 0);
  std::exception_ptr error;
  const int threads = parallel::worker_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads) if (threads > 1)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(samples.size()); ++i) {
    try {
      ad::Graph g;
      net::BoundParams bound(g, params, false);
      const auto fwd = net::forward_single(bound, samples[i].cloud, config.model, options);
      correct[i] = net::predicted_class(fwd.logits.value()) == samples[i].label;
    } catch (...) {
#pragma omp critical(ioodg_eval_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  std::size_t hits = 0;
  for (char c : correct) hits += c;
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

// ---- metrics and checkpoints ------------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::string metrics_line(const MetricsRow& row) {
  return std::to_string(row.epoch) + "," + fmt(row.lr) + "," + fmt(row.loss.task) + "," + fmt(row.loss.cd) + "," +
         fmt(row.loss.local) + "," + fmt(row.loss.global) + "," + fmt(row.loss.total) + "," + fmt(row.train_acc) +
         "," + fmt(row.test_acc);
}

void save_state(const TrainState& state, const std::filesystem::path& path) {
  std::vector<ckpt::Entry> entries;
  const auto& params = state.params.entries();
  for (const auto& [name, t] : params) entries.push_back({name, t});
  for (std::size_t k = 0; k < params.size(); ++k) entries.push_back({"adam.m." + params[k].first, state.m[k]});
  for (std::size_t k = 0; k < params.size(); ++k) entries.push_back({"adam.v." + params[k].first, state.v[k]});
  entries.push_back({"state.step", ad::Tensor::scalar(static_cast<double>(state.step))});
  entries.push_back({"state.epoch", ad::Tensor::scalar(static_cast<double>(state.epoch))});
  ckpt::write_checkpoint(path, entries);
}

TrainState load_state(const std::filesystem::path& path) {
  const auto entries = ckpt::read_checkpoint(path);
  net::ModelParams params;
  std::optional<double> step, epoch;
  for (const auto& e : entries) {
    if (e.name == "state.step") step = e.tensor.item();
    else if (e.name == "state.epoch") epoch = e.tensor.item();
    else if (e.name.rfind("adam.", 0) != 0) params.set(e.name, e.tensor);
  }
  if (!step || !epoch || params.size() == 0)
    fail(ErrorCode::IoError, path.string() + ": checkpoint lacks training state");
  TrainState state = TrainState::fresh(std::move(params));
  state.step = static_cast<std::uint64_t>(*step);
  state.epoch = static_cast<std::size_t>(*epoch);
  const auto& names = state.params.entries();
  for (const auto& e : entries) {
    for (std::size_t k = 0; k < names.size(); ++k) {
      if (e.name == "adam.m." + names[k].first) state.m[k] = e.tensor;
      if (e.name == "adam.v." + names[k].first) state.v[k] = e.tensor;
    }
  }
  for (std::size_t k = 0; k < names.size(); ++k)
    if (state.m[k].shape() != names[k].second.shape() || state.v[k].shape() != names[k].second.shape())
      fail(ErrorCode::IoError, path.string() + ": optimizer moments do not match " + names[k].first);
  return state;
}

FitResult fit(const TrainConfig& config_in, const FitOptions& options) {
  TrainConfig config = config_in;
  validate(config);
  std::optional<data::Benchmark> owned;
  if (!options.benchmark) owned = data::build_benchmark(config.benchmark, config.seed);
  const data::Benchmark& bench = options.benchmark ? *options.benchmark : *owned;
  if (bench.train.empty() || bench.test.empty()) fail(ErrorCode::BadConfig, "benchmark has an empty split");
  config.model.num_classes = bench.class_names.size();

  FitResult result;
  result.state = options.resume_from
                     ? load_state(*options.resume_from)
                     : TrainState::fresh(net::ModelParams::initialize(config.model, config.seed));
  const net::ModelParams layout = net::ModelParams::initialize(config.model, 0, false);
  for (const auto& [name, t] : result.state.params.entries())
    if (!layout.contains(name) || layout.get(name).shape() != t.shape())
      fail(ErrorCode::BadConfig, "checkpoint parameter " + name + " does not fit the configured model");

  std::ofstream metrics;
  const bool write = !options.out_dir.empty();
  if (write) {
    std::error_code ec;
    std::filesystem::create_directories(options.out_dir, ec);
    if (ec) fail(ErrorCode::IoError, "cannot create " + options.out_dir.string());
    const auto path = options.out_dir / "metrics.csv";
    const bool append = options.resume_from && std::filesystem::exists(path);
    metrics.open(path, append ? std::ios::app | std::ios::binary : std::ios::trunc | std::ios::binary);
    if (!metrics) fail(ErrorCode::IoError, "cannot write " + path.string());
    if (!append) metrics << kMetricsHeader << '\n';
    std::ofstream sidecar(options.out_dir / "model.json", std::ios::binary);
    sidecar << config::to_json(config) << '\n';
    if (!sidecar) fail(ErrorCode::IoError, "cannot write " + (options.out_dir / "model.json").string());
  }

  const std::size_t last = std::min(config.epochs, options.stop_after.value_or(config.epochs));
  while (result.state.epoch < last) {
    const std::size_t epoch = result.state.epoch;
    const auto batches = data::make_batches(bench.train.size(), config.batch_size, config.seed, epoch);
    MetricsRow row;
    row.epoch = epoch + 1;
    row.lr = lr_schedule(epoch, config);
    row.loss = train_epoch(result.state, bench.train, batches, config, options.observer).mean;
    row.train_acc = evaluate(result.state.params, bench.train, config);
    row.test_acc = evaluate(result.state.params, bench.test, config);
    result.history.push_back(row);
    if (write) {
      metrics << metrics_line(row) << '\n';
      metrics.flush();
    }
    if (options.on_epoch) options.on_epoch(row);
  }
  if (write) {
    if (!metrics) fail(ErrorCode::IoError, "failed writing metrics.csv");
    save_state(result.state, options.out_dir / "model.ckpt");
  }
  return result;
}

}  // namespace ioodg::train
