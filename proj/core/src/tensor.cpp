#include "pare/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace pare {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ']';
  return os.str();
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

namespace {
std::atomic<bool> g_finite_check{false};
thread_local Graph* g_active_graph = nullptr;

void validate_shape(const Shape& s) {
  for (int64_t d : s) {
    if (d <= 0) throw TensorError("tensor shape must have positive dims, got " + shape_str(s));
  }
}
}  // namespace

void set_finite_check(bool on) { g_finite_check.store(on, std::memory_order_relaxed); }
bool finite_check_enabled() { return g_finite_check.load(std::memory_order_relaxed); }

Tensor::Tensor(Shape shape, real fill) {
  validate_shape(shape);
  d_ = std::make_shared<TensorData>();
  d_->shape = std::move(shape);
  d_->v.assign(static_cast<std::size_t>(shape_numel(d_->shape)), fill);
}

Tensor::Tensor(Shape shape, std::vector<real> values) {
  validate_shape(shape);
  if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
    throw TensorError("tensor data length " + std::to_string(values.size()) +
                      " does not match shape " + shape_str(shape));
  }
  d_ = std::make_shared<TensorData>();
  d_->shape = std::move(shape);
  d_->v = std::move(values);
}

Tensor Tensor::scalar(real value) { return Tensor(Shape{1}, std::vector<real>{value}); }

const Shape& Tensor::shape() const {
  if (!d_) throw TensorError("use of undefined tensor");
  return d_->shape;
}

int64_t Tensor::numel() const { return static_cast<int64_t>(data().size()); }

int64_t Tensor::dim(int axis) const {
  const Shape& s = shape();
  int r = static_cast<int>(s.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw TensorError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[static_cast<std::size_t>(axis)];
}

std::span<real> Tensor::data() {
  if (!d_) throw TensorError("use of undefined tensor");
  return {d_->v.data(), d_->v.size()};
}

std::span<const real> Tensor::data() const {
  if (!d_) throw TensorError("use of undefined tensor");
  return {d_->v.data(), d_->v.size()};
}

real Tensor::item() const {
  if (numel() != 1) throw TensorError("item() requires a scalar, got " + shape_str(shape()));
  return data()[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  if (!d_) throw TensorError("use of undefined tensor");
  d_->requires_grad = on;
  return *this;
}

std::span<real> Tensor::grad() {
  if (!d_) throw TensorError("use of undefined tensor");
  if (d_->g.empty()) d_->g.assign(d_->v.size(), real(0));
  return {d_->g.data(), d_->g.size()};
}

std::span<const real> Tensor::grad() const {
  if (!d_) throw TensorError("use of undefined tensor");
  return {d_->g.data(), d_->g.size()};
}

void Tensor::zero_grad() {
  // Drops the buffer entirely so has_grad() doubles as "touched since zero".
  if (d_) d_->g.clear();
}

Tensor Tensor::detach() const {
  if (!d_) return Tensor();
  Tensor t;
  t.d_ = std::make_shared<TensorData>();
  t.d_->shape = d_->shape;
  t.d_->v = d_->v;  // value copy; grads intentionally dropped
  return t;
}

Tensor Tensor::clone() const { return detach(); }

bool Tensor::all_finite() const {
  for (real x : data()) {
    if (!std::isfinite(static_cast<double>(x))) return false;
  }
  return true;
}

// ---- tape ------------------------------------------------------------------

Graph* Graph::active() { return g_active_graph; }

void Graph::record(std::function<void()> backward_fn) {
  nodes_.push_back(std::move(backward_fn));
}

void Graph::backward(Tensor root) {
  if (root.numel() != 1) {
    throw TensorError("backward: root must be scalar, got " + shape_str(root.shape()));
  }
  if (swept_) throw TensorError("backward: tape already swept");
  swept_ = true;
  root.grad()[0] += real(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

AutogradScope::AutogradScope() : prev_(g_active_graph) { g_active_graph = &graph_; }
AutogradScope::~AutogradScope() { g_active_graph = prev_; }

NoGradScope::NoGradScope() : prev_(g_active_graph) { g_active_graph = nullptr; }
NoGradScope::~NoGradScope() { g_active_graph = prev_; }

namespace detail {

bool tracing(std::initializer_list<const Tensor*> inputs) {
  if (g_active_graph == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t && t->requires_grad()) return true;
  }
  return false;
}

void check_finite(const Tensor& t, const char* op) {
  if (!finite_check_enabled()) return;
  if (!t.all_finite()) {
    throw NumericError(std::string("non-finite value in output of ") + op);
  }
}

}  // namespace detail
}  // namespace pare
