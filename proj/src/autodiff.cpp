#include "ioodg/autodiff.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "ioodg/error.hpp"

namespace ioodg::ad {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {
std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}
}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_))
    fail(ErrorCode::ShapeMismatch, "data length " + std::to_string(data_.size()) +
                                       " does not match shape " + shape_string(shape_));
}

Tensor Tensor::from_points(std::span<const geo::Point> points) {
  std::vector<double> d;
  d.reserve(points.size() * 3);
  for (const auto& p : points) d.insert(d.end(), p.begin(), p.end());
  return Tensor(Shape{points.size(), 3}, std::move(d));
}

double Tensor::item() const {
  if (data_.size() != 1) fail(ErrorCode::NotScalar, "item() on " + shape_string(shape_));
  return data_[0];
}

std::vector<geo::Point> Tensor::to_points() const {
  if (rank() != 2 || cols() != 3) fail(ErrorCode::ShapeMismatch, "expected Mx3, got " + shape_string(shape_));
  std::vector<geo::Point> out(rows());
  for (std::size_t i = 0; i < rows(); ++i) out[i] = {data_[3 * i], data_[3 * i + 1], data_[3 * i + 2]};
  return out;
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

const Tensor& Var::value() const { return graph_->value(*this); }

Var Graph::constant(Tensor value) {
  if (!value.all_finite()) fail(ErrorCode::NonFinite, "constant holds NaN/Inf");
  nodes_.push_back(Node{std::move(value), {}, false, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Graph::variable(Tensor value) {
  if (!value.all_finite()) fail(ErrorCode::NonFinite, "variable holds NaN/Inf");
  nodes_.push_back(Node{std::move(value), {}, true, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn, const char* op) {
  if (!value.all_finite()) fail(ErrorCode::NonFinite, std::string(op) + " produced NaN/Inf");
  bool needs = false;
  for (const Var& p : parents) needs = needs || nodes_[p.id()].requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs, false, needs ? std::move(fn) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

Tensor& Graph::grad_buffer(Var v) {
  Node& n = nodes_[v.id()];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

const Tensor* Graph::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  return n.has_grad ? &n.grad : nullptr;
}

void Graph::backward(Var loss) {
  if (value(loss).size() != 1)
    fail(ErrorCode::NotScalar, "backward() needs a scalar loss, got " + shape_string(value(loss).shape()));
  if (!requires_grad(loss)) return;
  grad_buffer(loss)[0] += 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

void Graph::note_decision(std::uint64_t value) {
  if (!track_decisions_) return;
  signature_ ^= value + 0x9e3779b97f4a7c15ULL + (signature_ << 6) + (signature_ >> 2);
}

void Graph::note_decision(std::span<const std::size_t> values) {
  if (!track_decisions_) return;
  note_decision(values.size());
  for (auto v : values) note_decision(v);
}

}  // namespace ioodg::ad
