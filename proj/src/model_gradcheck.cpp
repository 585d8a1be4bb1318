#include <algorithm>

#include "ioodg/rng.hpp"
#include "ioodg/training.hpp"

namespace ioodg::train {

ModelGradCheck model_gradient_check(std::uint64_t seed, double h, double tol) {
  TrainConfig config;
  config.seed = seed;
  config.model.feature_dim = 8;
  config.model.hidden_dim = 8;
  config.model.anchors = 4;
  config.model.layers = 2;
  config.model.num_classes = 3;
  // Wide enough that anchors of a 16-point cloud gather real neighbourhoods.
  config.model.radius = 0.3;
  config.augment.t1 = {{-0.3, -0.3, -0.3}, {0.3, 0.3, 0.3}, 0.8, 1.2, 0.1};
  config.augment.keep_min = 0.75;
  config.augment.keep_max = 0.75;

  const auto kind = static_cast<data::ShapeKind>(seed % 3);
  const data::LabeledCloud sample = [&] {
    data::LabeledCloud s = data::generate_shape(kind, 16, derive_seed(seed, {0x6C}));
    s.label = seed % 3;
    return s;
  }();
  const Augmentation aug = draw_augmentation(config, 0, sample.sample_id, sample.cloud.size());

  net::ModelParams params = net::ModelParams::initialize(config.model, seed, false);
  // The zero-initialised anchor offset layer would make its upstream
  // gradients vanish identically; give it small values so they are tested.
  Rng rng(derive_seed(seed, {0x9C}));
  for (auto& [name, t] : params.entries())
    if (name.rfind("g2.", 0) == 0 && (name.ends_with(".w1") || name.ends_with(".b1")))
      for (double& v : t.data()) v = uniform(rng, -0.3, 0.3);

  std::vector<std::string> names;
  std::vector<ad::Tensor> values;
  for (const auto& [name, t] : params.entries()) {
    names.push_back(name);
    values.push_back(t);
  }

  const net::ForwardOptions options = forward_options(config, true);
  auto fn = [&](ad::Graph& g, std::span<const ad::Var> in) {
    net::BoundParams bound(g, names, in);
    const auto fwd = net::forward_two_branch(bound, sample.cloud, aug.t1, aug.t2, config.model, options);
    return sample_loss(fwd, sample.label, config).total;
  };
  const ad::GradCheckReport report = ad::gradient_check(fn, values, h, tol);

  ModelGradCheck out;
  auto named = [](std::string group) {
    GroupCheck c;
    c.group = std::move(group);
    return c;
  };
  for (const char* group : {"f(1)", "f(2)", "g1", "g2", "attention", "head"}) out.groups.push_back(named(group));
  for (std::size_t k = 0; k < names.size(); ++k) {
    const std::string group = net::ModelParams::group_of(names[k]);
    auto it = std::find_if(out.groups.begin(), out.groups.end(), [&](const GroupCheck& c) { return c.group == group; });
    if (it == out.groups.end()) it = out.groups.insert(out.groups.end(), named(group));
    const auto& e = report.entries[k];
    it->checked += e.checked;
    it->non_differentiable += e.non_differentiable;
    if (e.max_rel_error >= it->max_rel_error) {
      it->max_rel_error = e.max_rel_error;
      it->worst_param = names[k] + "[" + std::to_string(e.worst_index) + "]";
    }
    if (e.max_rel_error >= out.max_rel_error) {
      out.max_rel_error = e.max_rel_error;
      out.worst_param = names[k] + "[" + std::to_string(e.worst_index) + "]";
    }
  }
  out.passed = report.passed;
  return out;
}

}  // namespace ioodg::train
