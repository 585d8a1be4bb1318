#pragma once

#include <span>
#include <utility>

#include "ioodg/autodiff.hpp"
#include "ioodg/geometry.hpp"

namespace ioodg::loss {

struct LossWeights {
  double alpha = 1.0;  // Chamfer
  double beta = 1.0;   // local invariance
  double gamma = 1.0;  // global invariance
};

struct LossBreakdown {
  double task = 0.0;
  double cd = 0.0;
  double local = 0.0;
  double global = 0.0;
  double total = 0.0;
  LossWeights weights;
};

/// (1/M) sum_i min_x |a_i - x|^2 + (1/N) sum_j min_a |a - x_j|^2, differentiable
/// in the anchors. Gradient flows through the selected (lowest-index) minimisers.
ad::Var loss_cd(ad::Var anchors, const geo::PointCloud& x);

/// sum over layers of |F - F~|_F^2. `normalize` divides by the element count.
ad::Var loss_local(ad::Graph& g, std::span<const std::pair<ad::Var, ad::Var>> layers, bool normalize = false);

/// |g - g~|^2
ad::Var loss_global(ad::Var g, ad::Var g_tilde);

/// Mean cross-entropy of B x C logits against class indices.
ad::Var loss_task(ad::Var logits, std::span<const std::size_t> labels);

/// task + alpha cd + beta local + gamma global. Throws NonFinite.
LossBreakdown loss_total(double task, double cd, double local, double global, const LossWeights& w);

/// Differentiable counterpart of loss_total; invalid Vars count as zero.
ad::Var combine(ad::Graph& g, ad::Var task, ad::Var cd, ad::Var local, ad::Var global, const LossWeights& w);

}  // namespace ioodg::loss
