#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace snn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);
bool same_shape(const Shape& a, const Shape& b);

struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until backward touches this tensor
  bool tracked = false;      // gradients flow into this tensor
};

/// Dense double-precision tensor. Copies are cheap handles onto a shared
/// buffer; clone() deep-copies. Gradient buffers live on the shared impl so
/// that backward passes can accumulate into parameters held elsewhere.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor from(Shape shape, std::vector<double> data);
  static Tensor scalar(double v);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t dim(std::size_t i) const;

  double* data();
  const double* data() const;
  double item() const;  // single-element tensors only
  double at(std::size_t flat) const;
  double& at(std::size_t flat);

  bool tracked() const;
  Tensor& mark_parameter();  // tracked leaf; gradients accumulate here
  bool has_grad() const;     // a backward pass touched this tensor
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void clear_grad();  // drops the buffer; has_grad() becomes false

  Tensor detached() const;  // shares values, never tracked
  Tensor clone() const;     // deep copy of values, untracked

  std::shared_ptr<TensorImpl> impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

/// Reverse-mode tape. Eager ops append backward closures while a tape is
/// active on the current thread; backward() replays them exactly once in
/// reverse order. A tape is confined to the thread that created it.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void backward(const Tensor& loss);  // loss must be a tracked scalar
  std::size_t node_count() const { return nodes_.size(); }

  static Tape* active();
  static void record(std::function<void()> op);

 private:
  std::vector<std::function<void()>> nodes_;
  bool consumed_ = false;
  Tape* prev_ = nullptr;
};

/// RAII guard that suspends recording (pure inference inside a graph build).
class NoGrad {
 public:
  NoGrad();
  ~NoGrad();
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  Tape* saved_;
};

// Debug finiteness checks (lif_step, softmax inputs, grad_check). On by
// default; heavy inner loops avoid them.
void set_debug_checks(bool enabled);
bool debug_checks_enabled();
void check_finite(const Tensor& t, const char* what);

namespace detail {
// Grad accumulation buffer, zero-initialized on first touch.
std::vector<double>& grad_buf(TensorImpl& t);
// True when a tape is active and any input is tracked.
bool should_track(std::initializer_list<const Tensor*> inputs);
}  // namespace detail

}  // namespace snn
