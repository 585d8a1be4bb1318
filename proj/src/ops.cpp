#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>

#include "ioodg/autodiff.hpp"
#include "ioodg/error.hpp"
#include "ioodg/kernels.hpp"

namespace ioodg::ad {
namespace testing {
namespace {
std::atomic<Fault> g_fault{Fault::None};
}
void inject_fault(Fault fault) { g_fault.store(fault); }
Fault active_fault() { return g_fault.load(); }
}  // namespace testing

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) fail(ErrorCode::ShapeMismatch, msg);
}

void require_rank2(Var a, const char* op) {
  require(a.value().rank() == 2, std::string(op) + ": expected rank-2 input, got " +
                                     shape_string(a.shape()));
}

void require_same_shape(Var a, Var b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shapes " + shape_string(a.shape()) +
                                      " and " + shape_string(b.shape()) + " differ");
}

void require_same_graph(Var a, Var b) {
  require(&a.graph() == &b.graph(), "operands belong to different graphs");
}

// Records which side of zero every element lies on.
void note_sign_pattern(Var a) {
  Graph& graph = a.graph();
  if (!graph.tracking_decisions()) return;
  std::uint64_t bits = 0;
  std::size_t i = 0;
  for (double x : a.value().data()) {
    bits = (bits << 1) | (x > 0.0 ? 1u : 0u);
    if (++i % 64 == 0) {
      graph.note_decision(bits);
      bits = 0;
    }
  }
  graph.note_decision(bits);
}

template <typename F>
Var unary_elementwise(Var a, F&& f, Graph::BackwardFn bw, const char* op) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return a.graph().record(std::move(out), {a}, std::move(bw), op);
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_graph(a, b);
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.value().rows(), k = a.value().cols(), n = b.value().cols();
  require(b.value().rows() == k, "matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  Tensor out(Shape{m, n});
  kernels::matmul(a.value().data(), b.value().data(), out.data(), {m, k, n}, false);
  return a.graph().record(
      std::move(out), {a, b},
      [a, b, m, k, n](Graph& g, const Tensor& go) {
        if (g.requires_grad(a))  // dA = dC B^T
          kernels::matmul_nt(go.data(), g.value(b).data(), g.grad_buffer(a).data(), {m, n, k}, true);
        if (g.requires_grad(b))  // dB = A^T dC
          kernels::matmul_tn(g.value(a).data(), go.data(), g.grad_buffer(b).data(), {k, m, n}, true);
      },
      "matmul");
}

Var transpose(Var a) {
  require_rank2(a, "transpose");
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = x(i, j);
  return a.graph().record(
      std::move(out), {a},
      [a, r, c](Graph& g, const Tensor& go) {
        Tensor& ga = g.grad_buffer(a);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) ga(i, j) += go(j, i);
      },
      "transpose");
}

Var add(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  const Tensor& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  return a.graph().record(
      std::move(out), {a, b},
      [a, b](Graph& g, const Tensor& go) {
        for (Var v : {a, b}) {
          if (!g.requires_grad(v)) continue;
          Tensor& gv = g.grad_buffer(v);
          for (std::size_t i = 0; i < go.size(); ++i) gv[i] += go[i];
        }
      },
      "add");
}

Var sub(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  const Tensor& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  return a.graph().record(
      std::move(out), {a, b},
      [a, b](Graph& g, const Tensor& go) {
        if (g.requires_grad(a)) {
          Tensor& ga = g.grad_buffer(a);
          for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        }
        if (g.requires_grad(b)) {
          Tensor& gb = g.grad_buffer(b);
          for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
        }
      },
      "sub");
}

Var mul(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  const Tensor& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return a.graph().record(
      std::move(out), {a, b},
      [a, b](Graph& g, const Tensor& go) {
        if (g.requires_grad(a)) {
          Tensor& ga = g.grad_buffer(a);
          const Tensor& y = g.value(b);
          for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * y[i];
        }
        if (g.requires_grad(b)) {
          Tensor& gb = g.grad_buffer(b);
          const Tensor& x = g.value(a);
          for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * x[i];
        }
      },
      "mul");
}

Var scale(Var a, double s) {
  return unary_elementwise(
      a, [s](double x) { return x * s; },
      [a, s](Graph& g, const Tensor& go) {
        Tensor& ga = g.grad_buffer(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * s;
      },
      "scale");
}

Var add_bias(Var a, Var bias) {
  require_same_graph(a, bias);
  require_rank2(a, "add_bias");
  const std::size_t r = a.value().rows(), c = a.value().cols();
  require(bias.value().size() == c, "add_bias: bias " + shape_string(bias.shape()) + " vs " +
                                         shape_string(a.shape()));
  Tensor out = a.value();
  const Tensor& b = bias.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) += b[j];
  return a.graph().record(
      std::move(out), {a, bias},
      [a, bias, r, c](Graph& g, const Tensor& go) {
        if (g.requires_grad(a)) {
          Tensor& ga = g.grad_buffer(a);
          for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        }
        if (g.requires_grad(bias)) {
          Tensor& gb = g.grad_buffer(bias);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gb[j] += go[i * c + j];
        }
      },
      "add_bias");
}

Var relu(Var a) {
  note_sign_pattern(a);
  return unary_elementwise(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [a](Graph& g, const Tensor& go) {
        Tensor& ga = g.grad_buffer(a);
        const Tensor& x = g.value(a);
        const bool faulty = testing::active_fault() == testing::Fault::ReluBackward;
        for (std::size_t i = 0; i < go.size(); ++i)
          if (x[i] > 0.0 || faulty) ga[i] += go[i];
      },
      "relu");
}

Var leaky_relu(Var a, double slope) {
  note_sign_pattern(a);
  return unary_elementwise(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [a, slope](Graph& g, const Tensor& go) {
        Tensor& ga = g.grad_buffer(a);
        const Tensor& x = g.value(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += x[i] > 0.0 ? go[i] : slope * go[i];
      },
      "leaky_relu");
}

Var softmax(Var a, int axis) {
  require_rank2(a, "softmax");
  require(axis == 0 || axis == 1, "softmax: axis must be 0 or 1");
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  // Express both axes as (groups, length, stride).
  const std::size_t groups = axis == 1 ? r : c;
  const std::size_t len = axis == 1 ? c : r;
  const std::size_t stride = axis == 1 ? 1 : c;
  const std::size_t step = axis == 1 ? c : 1;
  Tensor out(x.shape());
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const std::size_t base = gi * step;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < len; ++t) mx = std::max(mx, x[base + t * stride]);
    double z = 0.0;
    for (std::size_t t = 0; t < len; ++t) {
      const double e = std::exp(x[base + t * stride] - mx);
      out[base + t * stride] = e;
      z += e;
    }
    for (std::size_t t = 0; t < len; ++t) out[base + t * stride] /= z;
  }
  Graph& graph = a.graph();
  const Var result(&graph, graph.size());  // id of the node recorded below
  return graph.record(
      std::move(out), {a},
      [a, result, groups, len, stride, step](Graph& g, const Tensor& go) {
        Tensor& ga = g.grad_buffer(a);
        const Tensor& y = g.value(result);
        for (std::size_t gi = 0; gi < groups; ++gi) {
          const std::size_t base = gi * step;
          double dot = 0.0;
          for (std::size_t t = 0; t < len; ++t) dot += go[base + t * stride] * y[base + t * stride];
          for (std::size_t t = 0; t < len; ++t) {
            const std::size_t i = base + t * stride;
            ga[i] += y[i] * (go[i] - dot);
          }
        }
      },
      "softmax");
}

Var max_pool(Var a, int axis) {
  require_rank2(a, "max_pool");
  require(axis == 0 || axis == 1, "max_pool: axis must be 0 or 1");
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  const std::size_t groups = axis == 1 ? r : c;
  const std::size_t len = axis == 1 ? c : r;
  const std::size_t stride = axis == 1 ? 1 : c;
  const std::size_t step = axis == 1 ? c : 1;
  Tensor out(axis == 0 ? Shape{1, c} : Shape{r, 1});
  std::vector<std::size_t> argmax(groups);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const std::size_t base = gi * step;
    std::size_t best = base;
    for (std::size_t t = 1; t < len; ++t)
      if (x[base + t * stride] > x[best]) best = base + t * stride;
    argmax[gi] = best;
    out[gi] = x[best];
  }
  a.graph().note_decision(argmax);
  return a.graph().record(
      std::move(out), {a},
      [a, argmax = std::move(argmax)](Graph& g, const Tensor& go) {
        Tensor& ga = g.grad_buffer(a);
        for (std::size_t gi = 0; gi < argmax.size(); ++gi) ga[argmax[gi]] += go[gi];
      },
      "max_pool");
}

Var concat(Var a, Var b, int axis) {
  require_same_graph(a, b);
  require_rank2(a, "concat");
  require_rank2(b, "concat");
  require(axis == 0 || axis == 1, "concat: axis must be 0 or 1");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (axis == 0) {
    require(x.cols() == y.cols(), "concat rows: " + shape_string(x.shape()) + " vs " + shape_string(y.shape()));
    const std::size_t ra = x.rows(), c = x.cols();
    Tensor out(Shape{ra + y.rows(), c});
    std::copy(x.data().begin(), x.data().end(), out.data().begin());
    std::copy(y.data().begin(), y.data().end(), out.data().begin() + x.size());
    return a.graph().record(
        std::move(out), {a, b},
        [a, b, ra, c](Graph& g, const Tensor& go) {
          if (g.requires_grad(a)) {
            Tensor& ga = g.grad_buffer(a);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
          }
          if (g.requires_grad(b)) {
            Tensor& gb = g.grad_buffer(b);
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[ra * c + i];
          }
        },
        "concat");
  }
  require(x.rows() == y.rows(), "concat cols: " + shape_string(x.shape()) + " vs " + shape_string(y.shape()));
  const std::size_t r = x.rows(), ca = x.cols(), cb = y.cols();
  Tensor out(Shape{r, ca + cb});
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(&x.data()[i * ca], ca, &out.data()[i * (ca + cb)]);
    std::copy_n(&y.data()[i * cb], cb, &out.data()[i * (ca + cb) + ca]);
  }
  return a.graph().record(
      std::move(out), {a, b},
      [a, b, r, ca, cb](Graph& g, const Tensor& go) {
        const std::size_t w = ca + cb;
        if (g.requires_grad(a)) {
          Tensor& ga = g.grad_buffer(a);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += go[i * w + j];
        }
        if (g.requires_grad(b)) {
          Tensor& gb = g.grad_buffer(b);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < cb; ++j) gb[i * cb + j] += go[i * w + ca + j];
        }
      },
      "concat");
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  require_rank2(a, "gather_rows");
  const Tensor& x = a.value();
  const std::size_t c = x.cols();
  Tensor out(Shape{rows.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < x.rows(), "gather_rows: index " + std::to_string(rows[i]) + " out of range");
    std::copy_n(&x.data()[rows[i] * c], c, &out.data()[i * c]);
  }
  return a.graph().record(
      std::move(out), {a},
      [a, c, idx = std::vector<std::size_t>(rows.begin(), rows.end())](Graph& g, const Tensor& go) {
        Tensor& ga = g.grad_buffer(a);
        for (std::size_t i = 0; i < idx.size(); ++i)
          for (std::size_t j = 0; j < c; ++j) ga[idx[i] * c + j] += go[i * c + j];
      },
      "gather_rows");
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph().record(
      Tensor::scalar(s), {a},
      [a](Graph& g, const Tensor& go) {
        Tensor& ga = g.grad_buffer(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[0];
      },
      "sum");
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph().record(
      Tensor::scalar(s / n), {a},
      [a, n](Graph& g, const Tensor& go) {
        Tensor& ga = g.grad_buffer(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[0] / n;
      },
      "mean");
}

Var sq_diff_sum(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape(a, b, "sq_diff_sum");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return a.graph().record(
      Tensor::scalar(s), {a, b},
      [a, b](Graph& g, const Tensor& go) {
        const Tensor& x = g.value(a);
        const Tensor& y = g.value(b);
        if (g.requires_grad(a)) {
          Tensor& ga = g.grad_buffer(a);
          for (std::size_t i = 0; i < x.size(); ++i) ga[i] += 2.0 * (x[i] - y[i]) * go[0];
        }
        if (g.requires_grad(b)) {
          Tensor& gb = g.grad_buffer(b);
          for (std::size_t i = 0; i < x.size(); ++i) gb[i] -= 2.0 * (x[i] - y[i]) * go[0];
        }
      },
      "sq_diff_sum");
}

Var cross_entropy(Var logits, std::span<const std::size_t> labels) {
  require_rank2(logits, "cross_entropy");
  const Tensor& x = logits.value();
  const std::size_t b = x.rows(), c = x.cols();
  require(labels.size() == b, "cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                  std::to_string(b) + " rows");
  for (auto y : labels)
    if (y >= c) fail(ErrorCode::BadLabel, "label " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");
  Tensor probs(x.shape());
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, x(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(x(i, j) - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) probs(i, j) = std::exp(x(i, j) - log_z);
    loss += log_z - x(i, labels[i]);
  }
  loss /= static_cast<double>(b);
  return logits.graph().record(
      Tensor::scalar(loss), {logits},
      [logits, b, c, probs = std::move(probs), y = std::vector<std::size_t>(labels.begin(), labels.end())](
          Graph& g, const Tensor& go) {
        Tensor& gl = g.grad_buffer(logits);
        const double s = go[0] / static_cast<double>(b);
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < c; ++j)
            gl(i, j) += s * (probs(i, j) - (j == y[i] ? 1.0 : 0.0));
      },
      "cross_entropy");
}

Var row_scale(Var a, Var w) {
  require_same_graph(a, w);
  require_rank2(a, "row_scale");
  const std::size_t r = a.value().rows(), c = a.value().cols();
  require(w.value().size() == r, "row_scale: " + std::to_string(w.value().size()) + " weights for " +
                                     std::to_string(r) + " rows");
  Tensor out = a.value();
  const Tensor& s = w.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) *= s[i];
  return a.graph().record(
      std::move(out), {a, w},
      [a, w, r, c](Graph& g, const Tensor& go) {
        if (g.requires_grad(a)) {
          Tensor& ga = g.grad_buffer(a);
          const Tensor& s = g.value(w);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += go[i * c + j] * s[i];
        }
        if (g.requires_grad(w)) {
          Tensor& gw = g.grad_buffer(w);
          const Tensor& x = g.value(a);
          for (std::size_t i = 0; i < r; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < c; ++j) acc += go[i * c + j] * x[i * c + j];
            gw[i] += acc;
          }
        }
      },
      "row_scale");
}

namespace {
void check_offsets(std::span<const std::size_t> offsets, std::size_t total, const char* op) {
  require(!offsets.empty() && offsets.front() == 0 && offsets.back() == total,
          std::string(op) + ": offsets do not cover the input");
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s)
    require(offsets[s] <= offsets[s + 1], std::string(op) + ": offsets not monotone");
}
}  // namespace

Var segment_softmax(Var a, std::span<const std::size_t> offsets) {
  const Tensor& x = a.value();
  check_offsets(offsets, x.size(), "segment_softmax");
  Tensor out(x.shape());
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const std::size_t lo = offsets[s], hi = offsets[s + 1];
    if (lo == hi) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = lo; i < hi; ++i) mx = std::max(mx, x[i]);
    double z = 0.0;
    for (std::size_t i = lo; i < hi; ++i) z += (out[i] = std::exp(x[i] - mx));
    for (std::size_t i = lo; i < hi; ++i) out[i] /= z;
  }
  Graph& graph = a.graph();
  const Var result(&graph, graph.size());
  return graph.record(
      std::move(out), {a},
      [a, result, off = std::vector<std::size_t>(offsets.begin(), offsets.end())](Graph& g, const Tensor& go) {
        Tensor& ga = g.grad_buffer(a);
        const Tensor& y = g.value(result);
        for (std::size_t s = 0; s + 1 < off.size(); ++s) {
          double dot = 0.0;
          for (std::size_t i = off[s]; i < off[s + 1]; ++i) dot += go[i] * y[i];
          for (std::size_t i = off[s]; i < off[s + 1]; ++i) ga[i] += y[i] * (go[i] - dot);
        }
      },
      "segment_softmax");
}

Var segment_sum(Var a, std::span<const std::size_t> offsets) {
  require_rank2(a, "segment_sum");
  const Tensor& x = a.value();
  const std::size_t c = x.cols();
  check_offsets(offsets, x.rows(), "segment_sum");
  const std::size_t segments = offsets.size() - 1;
  Tensor out(Shape{segments, c});
  for (std::size_t s = 0; s < segments; ++s)
    for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i)
      for (std::size_t j = 0; j < c; ++j) out(s, j) += x(i, j);
  return a.graph().record(
      std::move(out), {a},
      [a, c, off = std::vector<std::size_t>(offsets.begin(), offsets.end())](Graph& g, const Tensor& go) {
        Tensor& ga = g.grad_buffer(a);
        for (std::size_t s = 0; s + 1 < off.size(); ++s)
          for (std::size_t i = off[s]; i < off[s + 1]; ++i)
            for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += go[s * c + j];
      },
      "segment_sum");
}

}  // namespace ioodg::ad
