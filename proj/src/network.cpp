#include "ioodg/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ioodg/error.hpp"
#include "ioodg/rng.hpp"

namespace ioodg::net {
namespace {

std::string layer_name(const char* prefix, std::size_t layer) {
  return std::string(prefix) + std::to_string(layer + 1);
}

void add_linear(ModelParams& params, Rng& rng, const std::string& prefix, int index, std::size_t in,
                std::size_t out, bool zero, bool float_storage) {
  // He-uniform weights keep ReLU activations from shrinking through the
  // stacked MLPs; biases start at zero.
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  ad::Tensor w(ad::Shape{in, out});
  ad::Tensor b(ad::Shape{out});
  if (!zero)
    for (double& v : w.data()) v = uniform(rng, -bound, bound);
  if (float_storage) {
    for (double& v : w.data()) v = static_cast<float>(v);
    for (double& v : b.data()) v = static_cast<float>(v);
  }
  params.set(prefix + ".w" + std::to_string(index), std::move(w));
  params.set(prefix + ".b" + std::to_string(index), std::move(b));
}

void note_neighborhoods(ad::Graph& g, const geo::NeighborhoodSet& nbrs) {
  if (!g.tracking_decisions()) return;
  g.note_decision(nbrs.offsets);
  g.note_decision(nbrs.indices);
}

}  // namespace

// ---- parameters -------------------------------------------------------------

ModelParams ModelParams::initialize(const ModelConfig& c, std::uint64_t seed, bool float_storage) {
  if (c.layers < 1 || c.anchors < 1 || c.feature_dim < 1 || c.hidden_dim < 1 || c.num_classes < 1)
    fail(ErrorCode::BadConfig, "model dimensions must be positive");
  ModelParams p;
  Rng rng(derive_seed(seed, {0x4d4f44454cULL}));
  const std::size_t d = c.feature_dim, h = c.hidden_dim;
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string f = layer_name("f", l);
    add_linear(p, rng, f, 0, l == 0 ? 3 : 2 * d, h, false, float_storage);
    add_linear(p, rng, f, 1, h, d, false, float_storage);
  }
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string suffix = "." + std::to_string(l + 1);
    add_linear(p, rng, "g1" + suffix, 0, d, h, false, float_storage);
    add_linear(p, rng, "g1" + suffix, 1, h, c.anchors, false, float_storage);
    add_linear(p, rng, "g2" + suffix, 0, d, h, false, float_storage);
    add_linear(p, rng, "g2" + suffix, 1, h, 3, true, float_storage);

    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    ad::Tensor w(ad::Shape{d, d});
    ad::Tensor a(ad::Shape{2 * d, 1});
    for (double& v : w.data()) v = uniform(rng, -bound, bound);
    for (double& v : a.data()) v = uniform(rng, -bound, bound);
    if (float_storage) {
      for (double& v : w.data()) v = static_cast<float>(v);
      for (double& v : a.data()) v = static_cast<float>(v);
    }
    p.set("attn" + suffix + ".w", std::move(w));
    p.set("attn" + suffix + ".a", std::move(a));
  }
  add_linear(p, rng, "head", 0, d, h, false, float_storage);
  add_linear(p, rng, "head", 1, h, c.num_classes, false, float_storage);
  return p;
}

const ad::Tensor& ModelParams::get(std::string_view name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  fail(ErrorCode::BadConfig, "no parameter named " + std::string(name));
}

ad::Tensor& ModelParams::get(std::string_view name) {
  return const_cast<ad::Tensor&>(std::as_const(*this).get(name));
}

bool ModelParams::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

void ModelParams::set(std::string name, ad::Tensor tensor) {
  for (auto& [n, t] : entries_)
    if (n == name) {
      t = std::move(tensor);
      return;
    }
  entries_.emplace_back(std::move(name), std::move(tensor));
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

std::string ModelParams::group_of(std::string_view name) {
  const std::string_view head = name.substr(0, name.find('.'));
  if (head == "attn") return "attention";
  if (head.size() > 1 && head[0] == 'f') return "f(" + std::string(head.substr(1)) + ")";
  return std::string(head);
}

BoundParams::BoundParams(ad::Graph& graph, const ModelParams& params, bool trainable) : graph_(&graph) {
  vars_.reserve(params.size());
  for (const auto& [name, t] : params.entries())
    vars_.emplace_back(name, trainable ? graph.variable(t) : graph.constant(t));
}

BoundParams::BoundParams(ad::Graph& graph, const std::vector<std::string>& names, std::span<const ad::Var> vars)
    : graph_(&graph) {
  if (names.size() != vars.size()) fail(ErrorCode::ShapeMismatch, "parameter names and values differ in count");
  for (std::size_t k = 0; k < names.size(); ++k) vars_.emplace_back(names[k], vars[k]);
}

ad::Var BoundParams::operator[](std::string_view name) const {
  for (const auto& [n, v] : vars_)
    if (n == name) return v;
  fail(ErrorCode::BadConfig, "no bound parameter named " + std::string(name));
}

// ---- building blocks ----------------------------------------------------------

ad::Var mlp(const BoundParams& p, ad::Var x, const std::string& prefix, bool final_relu) {
  ad::Var h = ad::relu(ad::add_bias(ad::matmul(x, p[prefix + ".w0"]), p[prefix + ".b0"]));
  ad::Var y = ad::add_bias(ad::matmul(h, p[prefix + ".w1"]), p[prefix + ".b1"]);
  return final_relu ? ad::relu(y) : y;
}

ad::Var extract_features(const BoundParams& p, ad::Var input, std::size_t layer) {
  return mlp(p, input, layer_name("f", layer), true);
}

AnchorLearning learn_anchors(const BoundParams& p, ad::Var h, const geo::AnchorSet& a0, std::size_t layer) {
  const std::string suffix = "." + std::to_string(layer + 1);
  ad::Graph& g = p.graph();
  const ad::Var s = ad::softmax(mlp(p, h, "g1" + suffix, false), 1);
  if (s.value().cols() != a0.size())
    fail(ErrorCode::ShapeMismatch, "g1 produces " + std::to_string(s.value().cols()) + " anchors but A0 has " +
                                       std::to_string(a0.size()));
  const ad::Var pooled = ad::matmul(ad::transpose(s), h);
  const ad::Var offset = mlp(p, pooled, "g2" + suffix, false);
  const ad::Var anchors = ad::add(g.constant(ad::Tensor::from_points(a0.points())), offset);
  return {anchors, s};
}

ad::Var map_anchors_back(ad::Var anchors, const geo::ParamTransform& t1) {
  const geo::ParamTransform inv = geo::invert_param_transform(t1);
  ad::Graph& g = anchors.graph();
  // (y - t) M^-1: subtract the forward translation, then undo the matrix.
  ad::Tensor neg_t(ad::Shape{3});
  for (int j = 0; j < 3; ++j) neg_t[j] = -t1.translation[j];
  ad::Tensor minv(ad::Shape{3, 3});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) minv(i, j) = inv.matrix[i][j];
  return ad::matmul(ad::add_bias(anchors, g.constant(std::move(neg_t))), g.constant(std::move(minv)));
}

geo::AnchorSet map_anchors_back(const geo::AnchorSet& anchors, const geo::ParamTransform& t1) {
  const geo::ParamTransform inv = geo::invert_param_transform(t1);
  std::vector<geo::Point> out;
  out.reserve(anchors.size());
  for (const auto& a : anchors.points()) {
    const geo::Point shifted{a[0] - t1.translation[0], a[1] - t1.translation[1], a[2] - t1.translation[2]};
    geo::Point r{0, 0, 0};
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[j] += shifted[k] * inv.matrix[k][j];
    out.push_back(r);
  }
  return geo::AnchorSet(std::move(out));
}

ad::Var anchor_features(const BoundParams& p, ad::Var anchors) { return extract_features(p, anchors, 0); }

LocalAggregation aggregate_local(const BoundParams& p, ad::Var anchor_feats, ad::Var h,
                                 const geo::NeighborhoodSet& nbrs, std::size_t layer, double leaky_slope) {
  const std::size_t m = anchor_feats.value().rows();
  const std::size_t n = h.value().rows();
  const std::size_t d = h.value().cols();
  if (nbrs.anchor_count() != m)
    fail(ErrorCode::ShapeMismatch, "neighbourhoods for " + std::to_string(nbrs.anchor_count()) + " anchors, features for " +
                                       std::to_string(m));
  if (anchor_feats.value().cols() != d) fail(ErrorCode::ShapeMismatch, "anchor and point feature widths differ");

  // Edge list: anchor i owns [offsets[i], offsets[i+1]); its first edge is the
  // self edge (row i of [HA; H]), the rest point at rows m + j.
  LocalAggregation out;
  out.offsets.reserve(m + 1);
  std::vector<std::size_t> source;
  std::vector<std::size_t> owner;
  source.reserve(m + nbrs.indices.size());
  owner.reserve(m + nbrs.indices.size());
  out.offsets.push_back(0);
  for (std::size_t i = 0; i < m; ++i) {
    // An empty list leaves only the self edge, so f_i = hA_i.
    const auto members = nbrs.members(i);
    source.push_back(i);
    owner.push_back(i);
    for (auto j : members) {
      if (j >= n) fail(ErrorCode::ShapeMismatch, "neighbour index out of range");
      source.push_back(m + j);
      owner.push_back(i);
    }
    out.offsets.push_back(source.size());
  }

  const std::string suffix = "." + std::to_string(layer + 1);
  const ad::Var w = p["attn" + suffix + ".w"];
  const ad::Var a = p["attn" + suffix + ".a"];  // 2D x 1
  std::vector<std::size_t> first_half(d), second_half(d);
  for (std::size_t k = 0; k < d; ++k) {
    first_half[k] = k;
    second_half[k] = d + k;
  }
  const ad::Var nodes = ad::concat(anchor_feats, h, 0);  // (m + n) x D
  const ad::Var projected = ad::matmul(nodes, w);
  const ad::Var src_score = ad::matmul(projected, ad::gather_rows(a, first_half));
  const ad::Var dst_score = ad::matmul(projected, ad::gather_rows(a, second_half));
  const ad::Var logits = ad::leaky_relu(
      ad::add(ad::gather_rows(src_score, owner), ad::gather_rows(dst_score, source)), leaky_slope);
  out.weights = ad::segment_softmax(logits, out.offsets);
  out.features = ad::segment_sum(ad::row_scale(ad::gather_rows(nodes, source), out.weights), out.offsets);
  return out;
}

ad::Var next_layer_features(const BoundParams& p, ad::Var h, ad::Var local,
                            std::span<const std::size_t> nearest_anchor, std::size_t next_layer) {
  if (nearest_anchor.size() != h.value().rows())
    fail(ErrorCode::ShapeMismatch, "one nearest anchor per point required");
  const ad::Var broadcast = ad::gather_rows(local, nearest_anchor);
  return extract_features(p, ad::concat(h, broadcast, 1), next_layer);
}

ad::Var global_descriptor(ad::Var h_last) { return ad::max_pool(h_last, 0); }

ad::Var classify(const BoundParams& p, ad::Var global) { return mlp(p, global, "head", false); }

std::size_t predicted_class(const ad::Tensor& logits) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < logits.size(); ++j)
    if (logits[j] > logits[best]) best = j;
  return best;
}

geo::AnchorSet initial_anchors(const geo::PointCloud& cloud, std::size_t m) {
  const auto pts = cloud.points();
  const std::size_t take = std::min(m, pts.size());
  const auto idx = geo::farthest_point_indices(pts, take, geo::canonical_start_index(pts));
  std::vector<geo::Point> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) out.push_back(pts[idx[i % take]]);
  return geo::AnchorSet(std::move(out));
}

// ---- full passes --------------------------------------------------------------

namespace {

// Neighbourhoods, nearest-anchor assignment and aligned local features of
// one branch at one layer.
void local_stage(const BoundParams& p, BranchLayer& layer, ad::Var anchors, const geo::PointCloud& cloud,
                 const ModelConfig& config, std::size_t l, bool need_local, bool need_nearest) {
  ad::Graph& g = p.graph();
  layer.anchors = anchors;
  const auto pts = anchors.value().to_points();
  if (need_nearest) {
    layer.nearest_anchor = geo::nearest_indices(cloud.points(), pts);
    g.note_decision(layer.nearest_anchor);
  }
  if (!need_local) return;
  layer.neighborhoods = geo::radius_neighbors(pts, cloud.points(), config.radius);
  note_neighborhoods(g, *layer.neighborhoods);
  layer.local = aggregate_local(p, anchor_features(p, anchors), layer.features, *layer.neighborhoods, l,
                                config.leaky_slope);
}

ad::Var plain_next_layer(const BoundParams& p, ad::Var h, std::size_t next_layer) {
  ad::Graph& g = p.graph();
  const ad::Var zeros = g.constant(ad::Tensor(h.value().shape(), 0.0));
  return extract_features(p, ad::concat(h, zeros, 1), next_layer);
}

}  // namespace

ForwardOutputs forward_two_branch(const BoundParams& p, const geo::PointCloud& x, const geo::ParamTransform& t1,
                                  const geo::NonParamTransform& t2, const ModelConfig& config,
                                  const ForwardOptions& options) {
  ad::Graph& g = p.graph();
  ForwardOutputs out{x, geo::compose_augment(x, t1, t2), {}, {}, {}, {}, {}, {}, {}, {}};
  ad::Var h = extract_features(p, g.constant(ad::Tensor::from_points(x.points())), 0);
  ad::Var h_aug = extract_features(p, g.constant(ad::Tensor::from_points(out.augmented.points())), 0);

  std::optional<geo::AnchorSet> a0;
  if (options.local_aggregation) a0 = initial_anchors(out.augmented, config.anchors);

  for (std::size_t l = 0; l < config.layers; ++l) {
    if (l > 0) {
      if (options.local_aggregation) {
        const BranchLayer& prev = out.layers.back();
        const BranchLayer& prev_aug = out.layers_aug.back();
        h = next_layer_features(p, h, prev.local->features, prev.nearest_anchor, l);
        h_aug = next_layer_features(p, h_aug, prev_aug.local->features, prev_aug.nearest_anchor, l);
      } else {
        h = plain_next_layer(p, h, l);
        h_aug = plain_next_layer(p, h_aug, l);
      }
    }
    BranchLayer layer{h, {}, {}, {}, {}};
    BranchLayer layer_aug{h_aug, {}, {}, {}, {}};
    if (options.local_aggregation) {
      ad::Var anchors_aug;
      if (options.anchor_mode == AnchorMode::Learned) {
        AnchorLearning learned = learn_anchors(p, h_aug, *a0, l);
        anchors_aug = learned.anchors;
        out.selections.push_back(learned.selection);
      } else {
        anchors_aug = g.constant(ad::Tensor::from_points(a0->points()));
      }
      out.initial_anchors.push_back(*a0);
      const ad::Var anchors = map_anchors_back(anchors_aug, t1);
      const bool last = l + 1 == config.layers;
      const bool need_local = !last || options.last_layer_local;
      local_stage(p, layer_aug, anchors_aug, out.augmented, config, l, need_local, !last);
      local_stage(p, layer, anchors, x, config, l, need_local, !last);
    }
    out.layers.push_back(std::move(layer));
    out.layers_aug.push_back(std::move(layer_aug));
  }
  out.global = global_descriptor(h);
  out.global_aug = global_descriptor(h_aug);
  out.logits = classify(p, out.global);
  out.logits_aug = classify(p, out.global_aug);
  return out;
}

ForwardOutputs forward_single(const BoundParams& p, const geo::PointCloud& x, const ModelConfig& config,
                              const ForwardOptions& options) {
  ad::Graph& g = p.graph();
  ForwardOutputs out{x, x, {}, {}, {}, {}, {}, {}, {}, {}};
  ad::Var h = extract_features(p, g.constant(ad::Tensor::from_points(x.points())), 0);
  std::optional<geo::AnchorSet> a0;
  if (options.local_aggregation) a0 = initial_anchors(x, config.anchors);
  for (std::size_t l = 0; l < config.layers; ++l) {
    if (l > 0) {
      if (options.local_aggregation) {
        const BranchLayer& prev = out.layers.back();
        h = next_layer_features(p, h, prev.local->features, prev.nearest_anchor, l);
      } else {
        h = plain_next_layer(p, h, l);
      }
    }
    BranchLayer layer{h, {}, {}, {}, {}};
    if (options.local_aggregation) {
      ad::Var anchors;
      if (options.anchor_mode == AnchorMode::Learned) {
        AnchorLearning learned = learn_anchors(p, h, *a0, l);
        anchors = learned.anchors;
        out.selections.push_back(learned.selection);
      } else {
        anchors = g.constant(ad::Tensor::from_points(a0->points()));
      }
      out.initial_anchors.push_back(*a0);
      const bool last = l + 1 == config.layers;
      local_stage(p, layer, anchors, x, config, l, !last || options.last_layer_local, !last);
    }
    out.layers.push_back(std::move(layer));
  }
  out.global = global_descriptor(h);
  out.logits = classify(p, out.global);
  return out;
}

}  // namespace ioodg::net
