#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "ioodg/geometry.hpp"

namespace ioodg::ad {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. An empty shape is a scalar.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor(Shape{rows, cols}, std::move(data));
  }
  static Tensor from_points(std::span<const geo::Point> points);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  /// Rows of a rank-2 tensor; 1 for rank < 2.
  std::size_t rows() const noexcept { return rank() == 2 ? shape_[0] : 1; }
  /// Columns of a rank-2 tensor; the length of a rank-1 tensor.
  std::size_t cols() const noexcept { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 1); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double item() const;

  std::vector<geo::Point> to_points() const;
  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

class Graph;

/// Handle to a node of a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape of operations recorded in topological (creation) order. Backward
/// walks the tape in reverse, so gradient accumulation order is fixed.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  /// Adds an op result. `fn` is kept only if a parent requires grad.
  /// Throws NonFinite if `value` holds NaN or Inf.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn, const char* op);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  /// Gradient buffer of `v`, zero-initialised on first use.
  Tensor& grad_buffer(Var v);
  /// Gradient after backward(); nullptr when no gradient reached `v`.
  const Tensor* grad(Var v) const;

  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

  // Discrete choices (argmax, ReLU masks, neighbourhoods) hashed together so
  // a finite-difference probe can tell when it crossed a kink.
  void set_track_decisions(bool on) { track_decisions_ = on; }
  bool tracking_decisions() const noexcept { return track_decisions_; }
  void note_decision(std::uint64_t value);
  void note_decision(std::span<const std::size_t> values);
  std::uint64_t decision_signature() const noexcept { return signature_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;
  bool track_decisions_ = false;
  std::uint64_t signature_ = 0xcbf29ce484222325ULL;
};

// ---- differentiable ops ----------------------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// a (R x C) plus a bias of C elements on every row.
Var add_bias(Var a, Var bias);
Var relu(Var a);
Var leaky_relu(Var a, double slope = 0.2);
/// Rank-2 softmax along `axis` (1: each row sums to one).
Var softmax(Var a, int axis);
/// Rank-2 max along `axis`; argmax ties resolve to the lowest index and
/// receive the whole gradient.
Var max_pool(Var a, int axis);
Var concat(Var a, Var b, int axis);
Var gather_rows(Var a, std::span<const std::size_t> rows);
Var sum(Var a);
Var mean(Var a);
/// sum((a - b)^2)
Var sq_diff_sum(Var a, Var b);
/// Mean over rows of -log softmax(logits)[label].
Var cross_entropy(Var logits, std::span<const std::size_t> labels);
/// Multiply row r of a by w[r]; w has one element per row.
Var row_scale(Var a, Var w);
/// Softmax of a column vector within each segment [offsets[s], offsets[s+1]).
Var segment_softmax(Var a, std::span<const std::size_t> offsets);
/// Row sums of a within each segment; result has one row per segment.
Var segment_sum(Var a, std::span<const std::size_t> offsets);

// ---- gradient checking -----------------------------------------------------

struct GradCheckEntry {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  /// Elements whose +/-h probes changed a discrete decision (argmax tie,
  /// ReLU kink, neighbourhood membership); excluded from the error.
  std::size_t non_differentiable = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;  // one per input tensor
  double max_rel_error = 0.0;
  bool passed = false;
};

using ScalarFn = std::function<Var(Graph&, std::span<const Var>)>;

/// Central differences against reverse mode. Relative error per element is
/// |g_a - g_fd| / max(|g_a|, |g_fd|, 1e-8).
GradCheckReport gradient_check(const ScalarFn& f, const std::vector<Tensor>& at, double h,
                               double tol);
GradCheckReport gradient_check(const std::function<Var(Graph&, Var)>& f, const Tensor& at,
                               double h, double tol);

namespace testing {
/// Deliberately wrong backward rules for negative-control tests.
enum class Fault { None, ReluBackward };
void inject_fault(Fault fault);
Fault active_fault();
}  // namespace testing

}  // namespace ioodg::ad
