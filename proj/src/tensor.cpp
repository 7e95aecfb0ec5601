#include "snn/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "snn/error.hpp"

namespace snn {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

Tensor Tensor::zeros(Shape shape) {
  auto impl = std::make_shared<TensorImpl>();
  impl->value.assign(numel(shape), 0.0);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double v) {
  auto impl = std::make_shared<TensorImpl>();
  impl->value.assign(numel(shape), v);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> data) {
  if (numel(shape) != data.size())
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->value = std::move(data);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::size() const { return impl_->value.size(); }

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= impl_->shape.size()) throw ShapeError("dim index out of range");
  return impl_->shape[i];
}

double* Tensor::data() { return impl_->value.data(); }
const double* Tensor::data() const { return impl_->value.data(); }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
  return impl_->value[0];
}

double Tensor::at(std::size_t flat) const { return impl_->value[flat]; }
double& Tensor::at(std::size_t flat) { return impl_->value[flat]; }

bool Tensor::tracked() const { return impl_ && impl_->tracked; }

Tensor& Tensor::mark_parameter() {
  impl_->tracked = true;
  return *this;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::vector<double>& Tensor::grad() { return detail::grad_buf(*impl_); }

const std::vector<double>& Tensor::grad() const {
  if (impl_->grad.empty()) throw Error("tensor has no gradient buffer");
  return impl_->grad;
}

void Tensor::clear_grad() {
  if (impl_) {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }
}

Tensor Tensor::detached() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->value = impl_->value;  // copy; detached views never alias training buffers
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const { return detached(); }

namespace {
thread_local Tape* g_active_tape = nullptr;
std::atomic<bool> g_debug_checks{true};
}  // namespace

Tape::Tape() {
  prev_ = g_active_tape;
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> op) {
  if (g_active_tape) g_active_tape->nodes_.push_back(std::move(op));
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw Error("tape already consumed by a previous backward()");
  if (!loss.defined() || loss.size() != 1) throw ShapeError("backward() needs a scalar loss");
  if (!loss.tracked()) throw Error("backward() on an untracked loss");
  consumed_ = true;
  detail::grad_buf(*loss.impl())[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  nodes_.clear();
}

NoGrad::NoGrad() {
  saved_ = g_active_tape;
  g_active_tape = nullptr;
}

NoGrad::~NoGrad() { g_active_tape = saved_; }

void set_debug_checks(bool enabled) { g_debug_checks.store(enabled); }
bool debug_checks_enabled() { return g_debug_checks.load(); }

void check_finite(const Tensor& t, const char* what) {
  if (!g_debug_checks.load()) return;
  const double* p = t.data();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(p[i]))
      throw NumericError(std::string("non-finite value in ") + what);
  }
}

namespace detail {

std::vector<double>& grad_buf(TensorImpl& t) {
  if (t.grad.empty()) t.grad.assign(t.value.size(), 0.0);
  return t.grad;
}

bool should_track(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const Tensor* t : inputs)
    if (t->defined() && t->tracked()) return true;
  return false;
}

}  // namespace detail

}  // namespace snn
