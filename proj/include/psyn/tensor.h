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

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "psyn/errors.h"

namespace psyn {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until something accumulates into it
  bool requires_grad = false;
};

// Dense row-major float32 array with an optional gradient buffer.
//
// Tensor is a handle: copies share storage. Use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor scalar(float value);
  static Tensor from_rows(const std::vector<std::vector<float>>& rows);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return impl_->data.size(); }
  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }

  std::span<float> data() { return impl_->data; }
  std::span<const float> data() const { return impl_->data; }
  const std::vector<float>& values() const { return impl_->data; }

  float& at(std::size_t i) { return impl_->data[i]; }
  float at(std::size_t i) const { return impl_->data[i]; }
  float& at(std::size_t r, std::size_t c) { return impl_->data[r * impl_->shape[1] + c]; }
  float at(std::size_t r, std::size_t c) const {
    return impl_->data[r * impl_->shape[1] + c];
  }
  std::span<const float> row(std::size_t r) const;
  float item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);
  bool has_grad() const { return !impl_->grad.empty(); }
  // Gradient values; all zeros when nothing has been accumulated yet.
  std::vector<float> grad() const;
  // Allocates a zero gradient buffer on first use.
  std::span<float> grad_buffer() const;
  void zero_grad();

  Tensor clone() const;
  // Same values, no gradient, no tape history.
  Tensor detach() const { return clone(); }
  Tensor reshaped(Shape shape) const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& shared_impl() const { return impl_; }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Ordered log of the backward closures of executed ops.
//
// Ops record onto the tape that is active on the calling thread (see Scope).
// A tape is single-use: backward() replays it once in exact reverse order and
// then clears it; a second backward() throws.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> backward_fn);
  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

  static Tape* active();

  // Makes `tape` the active tape of this thread for the guard's lifetime.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

 private:
  std::vector<std::function<void()>> entries_;
  bool consumed_ = false;
};

namespace detail {

// True when an op over `inputs` must be recorded on the active tape.
bool should_record(std::initializer_list<const Tensor*> inputs);
bool should_record(std::span<const Tensor> inputs);

// Debug builds reject non-finite op outputs; release builds skip the scan.
void check_finite(const Tensor& out, const char* op);

// Marks `out` as differentiable and registers `backward` on the active
// tape. `backward` receives the output gradient and runs only when one
// was propagated.
void record(Tensor& out, std::function<void(std::span<const float>)> backward);

}  // namespace detail

}  // namespace psyn
