// Copyright (c) 2026 The psyn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "psyn/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace psyn {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  for (auto extent : shape) {
    if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_to_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, float fill) : impl_(std::make_shared<TensorImpl>()) {
  validate_shape(shape);
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<float> values) : impl_(std::make_shared<TensorImpl>()) {
  validate_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_to_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::scalar(float value) { return Tensor({1}, std::vector<float>{value}); }

Tensor Tensor::from_rows(const std::vector<std::vector<float>>& rows) {
  if (rows.empty() || rows.front().empty()) throw DimensionError("from_rows needs a non-empty matrix");
  const std::size_t cols = rows.front().size();
  std::vector<float> values;
  values.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw DimensionError("ragged rows in from_rows");
    values.insert(values.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_to_string(impl_->shape));
  }
  return impl_->shape[axis];
}

std::span<const float> Tensor::row(std::size_t r) const {
  const std::size_t width = impl_->data.size() / impl_->shape[0];
  return std::span<const float>(impl_->data).subspan(r * width, width);
}

float Tensor::item() const {
  if (impl_->data.size() != 1) {
    throw DimensionError("item() needs a single-element tensor, got " + shape_to_string(impl_->shape));
  }
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::vector<float> Tensor::grad() const {
  if (impl_->grad.empty()) return std::vector<float>(impl_->data.size(), 0.0f);
  return impl_->grad;
}

std::span<float> Tensor::grad_buffer() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0f);
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::clone() const { return Tensor(impl_->shape, impl_->data); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != size()) {
    throw DimensionError("cannot reshape " + shape_to_string(impl_->shape) + " to " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), impl_->data);
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

void Tape::record(std::function<void()> backward_fn) {
  if (consumed_) throw InvariantError("cannot record onto a tape that was already replayed");
  entries_.push_back(std::move(backward_fn));
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw InvariantError("backward called twice on the same tape");
  if (!loss.defined() || loss.size() != 1) {
    throw DimensionError("backward needs a scalar loss, got " +
                         (loss.defined() ? shape_to_string(loss.shape()) : std::string("undefined")));
  }
  if (entries_.empty()) throw InvariantError("backward on an empty tape");
  Tensor seed = loss;
  seed.grad_buffer()[0] += 1.0f;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  entries_.clear();
  consumed_ = true;
}

namespace detail {

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t != nullptr && t->defined() && t->requires_grad(); });
}

bool should_record(std::span<const Tensor> inputs) {
  if (Tape::active() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor& t) { return t.defined() && t.requires_grad(); });
}

void check_finite(const Tensor& out, const char* op) {
#ifndef NDEBUG
  for (float v : out.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
#else
  (void)out;
  (void)op;
#endif
}

void record(Tensor& out, std::function<void(std::span<const float>)> backward) {
  out.set_requires_grad(true);
  std::weak_ptr<TensorImpl> weak = out.shared_impl();
  // The tape must not keep the output alive through its own closure, so
  // the output is held weakly; downstream closures keep it alive as needed.
  Tape::active()->record([weak, fn = std::move(backward)]() {
    auto impl = weak.lock();
    if (!impl || impl->grad.empty()) return;
    fn(impl->grad);
  });
}

}  // namespace detail

}  // namespace psyn
