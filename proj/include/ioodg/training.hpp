#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ioodg/data.hpp"
#include "ioodg/losses.hpp"
#include "ioodg/network.hpp"

namespace ioodg::train {

/// Which component a run switches off. PointNet disables anchors and local
/// aggregation altogether and trains on the task loss alone, without
/// augmentation.
enum class Ablation { None, NoAnchor, NoLocal, NoGlobal, PointNet };

std::string_view ablation_name(Ablation a);
std::optional<Ablation> parse_ablation(std::string_view name);

enum class TaskBranch { Original, Both };

/// Per-sample augmentation: t1 from `t1`, t2 a random drop keeping a
/// fraction in [keep_min, keep_max], or with probability `resample_prob` a
/// resample back to N points.
///
/// The default t1 is a uniform rescale without rotation. Point features are
/// computed from raw coordinates, and the corrupted test domain contains no
/// rotations; forcing rotation invariance made the full model underfit.
struct AugmentConfig {
  geo::TransformDistribution t1{{0, 0, 0}, {0, 0, 0}, 0.9, 1.1, 0.0};
  double keep_min = 0.6;
  double keep_max = 0.9;
  double resample_prob = 0.0;

  bool degenerate() const { return t1.is_identity() && keep_min == 1.0 && keep_max == 1.0 && resample_prob == 0.0; }
};

struct TrainConfig {
  double learning_rate = 0.001;
  double weight_decay = 0.0001;
  std::size_t batch_size = 16;
  std::size_t epochs = 100;
  std::size_t lr_decay_every = 20;
  double lr_decay_factor = 0.5;
  loss::LossWeights weights;
  Ablation ablation = Ablation::None;
  TaskBranch task_branch = TaskBranch::Both;
  bool cd_all_layers = true;
  bool normalize_local = false;
  double grad_clip = 0.0;  // global-norm clip, 0 = off
  std::uint64_t seed = 1;
  net::ModelConfig model;
  AugmentConfig augment;
  data::BenchmarkConfig benchmark;
};

/// Throws BadConfig when a rate or count is out of range.
void validate(const TrainConfig& config);

/// Forward-pass switches implied by the ablation, for training or inference.
net::ForwardOptions forward_options(const TrainConfig& config, bool training);

struct TrainState {
  net::ModelParams params;
  std::vector<ad::Tensor> m, v;  // Adam moments, aligned with params.entries()
  std::uint64_t step = 0;
  std::size_t epoch = 0;
  /// Round params and moments to float32 after every step, so a float32
  /// checkpoint holds the exact state.
  bool float_storage = true;

  static TrainState fresh(net::ModelParams params, bool float_storage = true);
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// One Adam step with L2 weight decay added to the gradient. ShapeMismatch
/// on misaligned gradients; NonFinite (state untouched) on NaN/Inf.
void adam_step(TrainState& state, const std::vector<ad::Tensor>& grads, double lr, double weight_decay);

/// base * factor^floor(epoch / every)
double lr_schedule(std::size_t epoch, const TrainConfig& config);

struct SampleLoss {
  ad::Var total;
  loss::LossBreakdown parts;
};

/// Loss of one sample from its two-branch outputs, honouring the ablation.
SampleLoss sample_loss(const net::ForwardOutputs& fwd, std::size_t label, const TrainConfig& config);

/// The (t1, t2) drawn for a sample at an epoch.
struct Augmentation {
  geo::ParamTransform t1;
  geo::NonParamTransform t2;
};
Augmentation draw_augmentation(const TrainConfig& config, std::size_t epoch, std::uint64_t sample_id,
                               std::size_t points);

/// Mean loss and gradients of a batch; gradients are reduced in sample order.
struct BatchResult {
  loss::LossBreakdown loss;  // means over the batch
  std::vector<ad::Tensor> grads;
};

/// Called for every training forward pass (serialised).
using ForwardObserver = std::function<void(const net::ForwardOutputs&)>;

BatchResult batch_gradients(const net::ModelParams& params, const std::vector<data::LabeledCloud>& samples,
                            const std::vector<std::size_t>& batch, const TrainConfig& config, std::size_t epoch,
                            const ForwardObserver& observer = {});

struct EpochResult {
  std::vector<loss::LossBreakdown> batches;
  loss::LossBreakdown mean;  // weighted by batch size
};

/// One pass over `batches`; NonFinite errors name the offending batch.
EpochResult train_epoch(TrainState& state, const std::vector<data::LabeledCloud>& samples,
                        const std::vector<std::vector<std::size_t>>& batches, const TrainConfig& config,
                        const ForwardObserver& observer = {});

/// Fraction of samples whose arg-max logit on the clean cloud is the label.
double evaluate(const net::ModelParams& params, const std::vector<data::LabeledCloud>& samples,
                const TrainConfig& config);

struct MetricsRow {
  std::size_t epoch = 0;
  double lr = 0.0;
  loss::LossBreakdown loss;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

inline constexpr std::string_view kMetricsHeader =
    "epoch,lr,loss_task,loss_cd,loss_local,loss_global,loss_total,train_acc,test_acc";
std::string metrics_line(const MetricsRow& row);

struct FitOptions {
  /// metrics.csv, model.ckpt and model.json go here; empty = nothing written.
  std::filesystem::path out_dir;
  /// Continue from this checkpoint instead of a fresh initialisation.
  std::optional<std::filesystem::path> resume_from;
  /// Use this data instead of build_benchmark(config.benchmark, config.seed).
  const data::Benchmark* benchmark = nullptr;
  /// Stop after this epoch count even if config.epochs is larger.
  std::optional<std::size_t> stop_after;
  ForwardObserver observer;
  /// Progress lines; null = silent.
  std::function<void(const MetricsRow&)> on_epoch;
};

struct FitResult {
  TrainState state;
  std::vector<MetricsRow> history;
};

FitResult fit(const TrainConfig& config, const FitOptions& options = {});

void save_state(const TrainState& state, const std::filesystem::path& path);
TrainState load_state(const std::filesystem::path& path);

}  // namespace ioodg::train

namespace ioodg::train {

/// Finite-difference check of the full two-branch training loss on a tiny
/// model (N=16, M=4, D=8, L=2, C=3), reported per parameter group.
struct GroupCheck {
  std::string group;
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t checked = 0;
  std::size_t non_differentiable = 0;
};

struct ModelGradCheck {
  std::vector<GroupCheck> groups;  // f(1), f(2), g1, g2, attention, head
  double max_rel_error = 0.0;
  std::string worst_param;
  bool passed = false;
};

ModelGradCheck model_gradient_check(std::uint64_t seed, double h = 1e-4, double tol = 1e-4);

}  // namespace ioodg::train
