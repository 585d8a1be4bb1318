#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ioodg/autodiff.hpp"
#include "ioodg/geometry.hpp"

namespace ioodg::net {

struct ModelConfig {
  std::size_t feature_dim = 16;  // D, width of every point-feature layer
  std::size_t hidden_dim = 16;   // inner width of every two-layer MLP
  std::size_t anchors = 32;      // M, constant across layers
  std::size_t layers = 2;        // L
  double radius = 0.04;          // squared-distance threshold r
  std::size_t num_classes = 4;   // C
  double leaky_slope = 0.2;
};

/// How anchors are produced. FpsOnly skips g1/g2 and uses the sampled
/// coordinates directly.
enum class AnchorMode { Learned, FpsOnly };

struct ForwardOptions {
  AnchorMode anchor_mode = AnchorMode::Learned;
  /// When false no anchors are built and every layer sees zero local
  /// features: a plain pointwise-MLP + max-pool classifier.
  bool local_aggregation = true;
  /// The last layer's aligned local features only feed the invariance loss.
  bool last_layer_local = true;
};

/// Named weight tensors in a fixed order.
///   f{l}.w0 f{l}.b0 f{l}.w1 f{l}.b1       point extractor of layer l
///   g1.{l}.*  g2.{l}.*                    anchor modules of layer l
///   attn.{l}.w  attn.{l}.a                attention of layer l
///   head.*                                classifier
class ModelParams {
 public:
  ModelParams() = default;

  /// He-uniform MLP weights and zero biases; g2's output layer is zero so the
  /// first anchors equal their sampled initialisation. With `float_storage`
  /// every value is rounded to float32.
  static ModelParams initialize(const ModelConfig& config, std::uint64_t seed, bool float_storage = true);

  const ad::Tensor& get(std::string_view name) const;
  ad::Tensor& get(std::string_view name);
  bool contains(std::string_view name) const;
  void set(std::string name, ad::Tensor tensor);

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::string, ad::Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, ad::Tensor>>& entries() { return entries_; }
  std::size_t scalar_count() const;

  /// Report group of a parameter: f(1), f(2), g1, g2, attention or head.
  static std::string group_of(std::string_view name);

 private:
  std::vector<std::pair<std::string, ad::Tensor>> entries_;
};

/// ModelParams placed on a graph.
class BoundParams {
 public:
  BoundParams(ad::Graph& graph, const ModelParams& params, bool trainable);
  /// Wraps Vars already on `graph`, named in the same order.
  BoundParams(ad::Graph& graph, const std::vector<std::string>& names, std::span<const ad::Var> vars);

  ad::Var operator[](std::string_view name) const;
  ad::Graph& graph() const { return *graph_; }
  const std::vector<std::pair<std::string, ad::Var>>& vars() const { return vars_; }

 private:
  ad::Graph* graph_;
  std::vector<std::pair<std::string, ad::Var>> vars_;
};

/// Two-layer pointwise MLP `prefix`.{w0,b0,w1,b1}.
ad::Var mlp(const BoundParams& p, ad::Var x, const std::string& prefix, bool final_relu);

/// Shared pointwise extractor; row i of the output depends only on row i of
/// the input.
ad::Var extract_features(const BoundParams& p, ad::Var input, std::size_t layer);

struct AnchorLearning {
  ad::Var anchors;    // M x 3
  ad::Var selection;  // N x M, rows sum to one
};

/// A = A0 + g2(S^T h) with S = row-softmax(g1(h)).
AnchorLearning learn_anchors(const BoundParams& p, ad::Var h, const geo::AnchorSet& a0, std::size_t layer);

/// A = t1^-1(anchors), differentiable in the anchor coordinates.
ad::Var map_anchors_back(ad::Var anchors, const geo::ParamTransform& t1);
geo::AnchorSet map_anchors_back(const geo::AnchorSet& anchors, const geo::ParamTransform& t1);

/// Layer-1 extractor applied to anchor coordinates.
ad::Var anchor_features(const BoundParams& p, ad::Var anchors);

struct LocalAggregation {
  ad::Var features;                  // M x D
  ad::Var weights;                   // E x 1 attention weights
  std::vector<std::size_t> offsets;  // M + 1; edge offsets[i] is the self edge of anchor i
};

/// f_i = w_ii hA_i + sum_j w_ij h_j over j in N_i, single-head attention
/// e = LeakyReLU(a^T [W hA_i || W h_j]) normalised over {i} and N_i.
LocalAggregation aggregate_local(const BoundParams& p, ad::Var anchor_feats, ad::Var h,
                                 const geo::NeighborhoodSet& nbrs, std::size_t layer,
                                 double leaky_slope);

/// H(l+1) = f(l+1)([H(l) || F(l)[nearest anchor]]).
ad::Var next_layer_features(const BoundParams& p, ad::Var h, ad::Var local,
                            std::span<const std::size_t> nearest_anchor, std::size_t next_layer);

/// Coordinatewise max over points, 1 x D.
ad::Var global_descriptor(ad::Var h_last);

/// 1 x C logits.
ad::Var classify(const BoundParams& p, ad::Var global);

/// Index of the largest logit, lowest index on ties.
std::size_t predicted_class(const ad::Tensor& logits);

struct BranchLayer {
  ad::Var features;  // H(l), N x D
  ad::Var anchors;   // M x 3
  std::optional<geo::NeighborhoodSet> neighborhoods;
  std::optional<LocalAggregation> local;
  std::vector<std::size_t> nearest_anchor;  // per point
};

struct ForwardOutputs {
  geo::PointCloud original;
  geo::PointCloud augmented;
  std::vector<BranchLayer> layers;      // original branch
  std::vector<BranchLayer> layers_aug;  // augmented branch
  std::vector<ad::Var> selections;      // S(l), learned from the augmented branch
  std::vector<geo::AnchorSet> initial_anchors;
  ad::Var global, global_aug;
  ad::Var logits, logits_aug;
};

/// Full two-branch pass. Anchors are learned on t2(t1(x)) and mapped back
/// to x with t1^-1; all weights are shared.
ForwardOutputs forward_two_branch(const BoundParams& p, const geo::PointCloud& x,
                                  const geo::ParamTransform& t1, const geo::NonParamTransform& t2,
                                  const ModelConfig& config, const ForwardOptions& options = {});

/// Inference pass on the un-augmented cloud; anchors are learned from x
/// itself. Only `layers`, `global` and `logits` are populated.
ForwardOutputs forward_single(const BoundParams& p, const geo::PointCloud& x, const ModelConfig& config,
                              const ForwardOptions& options = {});

/// Initial anchors for a cloud: FPS from the canonical start point. When the
/// cloud has fewer than m points the FPS order is cycled.
geo::AnchorSet initial_anchors(const geo::PointCloud& cloud, std::size_t m);

}  // namespace ioodg::net
