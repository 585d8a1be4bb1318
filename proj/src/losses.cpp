#include "ioodg/losses.hpp"

#include <cmath>
#include <string>

#include "ioodg/error.hpp"

namespace ioodg::loss {

ad::Var loss_cd(ad::Var anchors, const geo::PointCloud& x) {
  ad::Graph& g = anchors.graph();
  const auto a = anchors.value().to_points();
  const auto to_cloud = geo::nearest_indices(a, x.points());
  const auto to_anchor = geo::nearest_indices(x.points(), a);
  g.note_decision(to_cloud);
  g.note_decision(to_anchor);
  const ad::Var cloud = g.constant(ad::Tensor::from_points(x.points()));
  const ad::Var forward = ad::sq_diff_sum(anchors, ad::gather_rows(cloud, to_cloud));
  const ad::Var backward = ad::sq_diff_sum(ad::gather_rows(anchors, to_anchor), cloud);
  return ad::add(ad::scale(forward, 1.0 / static_cast<double>(a.size())),
                 ad::scale(backward, 1.0 / static_cast<double>(x.size())));
}

ad::Var loss_local(ad::Graph& g, std::span<const std::pair<ad::Var, ad::Var>> layers, bool normalize) {
  ad::Var total = g.constant(ad::Tensor::scalar(0.0));
  std::size_t elements = 0;
  for (const auto& [f, f_tilde] : layers) {
    if (f.shape() != f_tilde.shape())
      fail(ErrorCode::ShapeMismatch, "local features " + ad::shape_string(f.shape()) + " vs " +
                                         ad::shape_string(f_tilde.shape()));
    total = ad::add(total, ad::sq_diff_sum(f, f_tilde));
    elements += f.value().size();
  }
  if (normalize && elements > 0) total = ad::scale(total, 1.0 / static_cast<double>(elements));
  return total;
}

ad::Var loss_global(ad::Var g, ad::Var g_tilde) { return ad::sq_diff_sum(g, g_tilde); }

ad::Var loss_task(ad::Var logits, std::span<const std::size_t> labels) { return ad::cross_entropy(logits, labels); }

LossBreakdown loss_total(double task, double cd, double local, double global, const LossWeights& w) {
  for (double v : {task, cd, local, global, w.alpha, w.beta, w.gamma})
    if (!std::isfinite(v)) fail(ErrorCode::NonFinite, "loss component is not finite");
  LossBreakdown b{task, cd, local, global, 0.0, w};
  b.total = task + w.alpha * cd + w.beta * local + w.gamma * global;
  return b;
}

ad::Var combine(ad::Graph& g, ad::Var task, ad::Var cd, ad::Var local, ad::Var global, const LossWeights& w) {
  ad::Var total = task.valid() ? task : g.constant(ad::Tensor::scalar(0.0));
  const std::pair<ad::Var, double> terms[] = {{cd, w.alpha}, {local, w.beta}, {global, w.gamma}};
  for (const auto& [term, weight] : terms)
    if (term.valid() && weight != 0.0) total = ad::add(total, ad::scale(term, weight));
  return total;
}

}  // namespace ioodg::loss
