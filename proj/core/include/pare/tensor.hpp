#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pare {

// Scalar type of the engine. The float64 build (PARE_SCALAR_F64) exists only
// so gradient-check tests have enough headroom for per-coordinate finite
// differences; everything user-facing runs in float32.
#ifdef PARE_SCALAR_F64
using real = double;
#else
using real = float;
#endif

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

// Contract violations (shape mismatches, bad arguments).
class TensorError : public std::runtime_error {
 public:
  explicit TensorError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values, diverging losses.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Fail fast on NaN/Inf in op outputs when enabled (debug mode, off by default).
void set_finite_check(bool on);
bool finite_check_enabled();

struct TensorData {
  Shape shape;
  std::vector<real> v;
  std::vector<real> g;  // empty until a backward pass touches this tensor
  bool requires_grad = false;
};

// Shared-buffer handle. Copies alias the same storage, which is what the
// define-by-run tape needs: recorded closures hold handles to the exact
// buffers whose grads they accumulate into.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, real fill = real(0));
  Tensor(Shape shape, std::vector<real> values);

  static Tensor scalar(real value);
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, real value) { return Tensor(std::move(shape), value); }

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int64_t numel() const;
  int64_t dim(int axis) const;  // negative axis counts from the back

  std::span<real> data();
  std::span<const real> data() const;
  real item() const;  // scalar tensors only

  bool requires_grad() const { return d_ && d_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return d_ && !d_->g.empty(); }
  std::span<real> grad();              // allocates (zeroed) on first use
  std::span<const real> grad() const;  // empty span if never touched
  void zero_grad();

  // Same values, detached from autograd (no grad, never recorded).
  Tensor detach() const;
  // Deep copy of values (fresh storage, no grad).
  Tensor clone() const;

  bool all_finite() const;

  // Identity of the underlying buffer; used by tests.
  const void* storage_id() const { return d_.get(); }

 private:
  std::shared_ptr<TensorData> d_;
};

// Reverse-mode tape. One tape per training step (define-by-run); ops record
// themselves in execution order, so reversing the record is a valid
// topological order for the backward sweep and each op is visited once.
class Graph {
 public:
  static Graph* active();

  void record(std::function<void()> backward_fn);
  std::size_t size() const { return nodes_.size(); }

  // Seeds root.grad = 1 and runs every recorded closure in reverse order.
  // Root must be scalar. A tape can only be swept once.
  void backward(Tensor root);

 private:
  friend class AutogradScope;
  std::vector<std::function<void()>> nodes_;
  bool swept_ = false;
};

// Pushes a fresh tape as the active one for the scope's lifetime.
class AutogradScope {
 public:
  AutogradScope();
  ~AutogradScope();
  AutogradScope(const AutogradScope&) = delete;
  AutogradScope& operator=(const AutogradScope&) = delete;

  Graph& graph() { return graph_; }

 private:
  Graph graph_;
  Graph* prev_;
};

// Temporarily disables recording (inference paths).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Graph* prev_;
};

namespace detail {
// True when a tape is active and any input wants gradients.
bool tracing(std::initializer_list<const Tensor*> inputs);
void check_finite(const Tensor& t, const char* op);
}  // namespace detail

}  // namespace pare
