#include <algorithm>
#include <cmath>

#include "ioodg/autodiff.hpp"
#include "ioodg/error.hpp"

namespace ioodg::ad {
namespace {

struct Probe {
  double value;
  std::uint64_t signature;
};

Probe evaluate(const ScalarFn& f, const std::vector<Tensor>& at) {
  Graph g;
  g.set_track_decisions(true);
  std::vector<Var> inputs;
  inputs.reserve(at.size());
  for (const auto& t : at) inputs.push_back(g.constant(t));
  const Var out = f(g, inputs);
  return {out.value().item(), g.decision_signature()};
}

}  // namespace

GradCheckReport gradient_check(const ScalarFn& f, const std::vector<Tensor>& at, double h,
                               double tol) {
  if (!(h > 0.0)) fail(ErrorCode::BadConfig, "finite-difference step must be positive");

  std::vector<Tensor> analytic;
  std::uint64_t base_signature = 0;
  {
    Graph g;
    g.set_track_decisions(true);
    std::vector<Var> inputs;
    for (const auto& t : at) inputs.push_back(g.variable(t));
    const Var out = f(g, inputs);
    g.backward(out);
    base_signature = g.decision_signature();
    for (std::size_t k = 0; k < at.size(); ++k) {
      const Tensor* gr = g.grad(inputs[k]);
      analytic.push_back(gr ? *gr : Tensor(at[k].shape(), 0.0));
    }
  }

  GradCheckReport report;
  std::vector<Tensor> probe = at;
  for (std::size_t k = 0; k < at.size(); ++k) {
    GradCheckEntry entry;
    for (std::size_t i = 0; i < at[k].size(); ++i) {
      const double x0 = at[k][i];
      probe[k][i] = x0 + h;
      const Probe plus = evaluate(f, probe);
      probe[k][i] = x0 - h;
      const Probe minus = evaluate(f, probe);
      probe[k][i] = x0;
      if (plus.signature != base_signature || minus.signature != base_signature) {
        ++entry.non_differentiable;
        continue;
      }
      const double fd = (plus.value - minus.value) / (2.0 * h);
      const double ga = analytic[k][i];
      const double rel = std::abs(ga - fd) / std::max({std::abs(ga), std::abs(fd), 1e-8});
      ++entry.checked;
      if (rel > entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(entry);
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

GradCheckReport gradient_check(const std::function<Var(Graph&, Var)>& f, const Tensor& at,
                               double h, double tol) {
  return gradient_check([&f](Graph& g, std::span<const Var> in) { return f(g, in[0]); },
                        std::vector<Tensor>{at}, h, tol);
}

}  // namespace ioodg::ad
