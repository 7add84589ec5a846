// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with a tape-based reverse-mode autodiff engine.
//
// A Tensor is a cheap handle onto shared storage. Operations never modify
// their inputs; they allocate a new output and, when a Tape is active on the
// calling thread and any input requires a gradient, record a backward closure
// on that tape. Tape::backward replays the closures in reverse order.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cortex/error.hpp"

namespace cortex {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

template <typename T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until the first accumulation
    bool requires_grad = false;

    void accumulate_grad(std::span<const T> g);
    std::span<T> grad_buffer();  // allocates a zero buffer on demand
};

}  // namespace detail

template <typename T>
class Tensor {
public:
    using value_type = T;
    using Impl = detail::TensorImpl<T>;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0));
    Tensor(Shape shape, std::vector<T> values);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    std::int64_t dim(int i) const;
    std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

    std::span<const T> data() const { return impl_->data; }
    /// Writable view. Only for freshly built tensors and parameter updates.
    std::span<T> mutable_data() { return impl_->data; }
    T item() const;
    T operator[](std::int64_t i) const { return impl_->data[static_cast<std::size_t>(i)]; }

    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    Tensor& set_requires_grad(bool on);

    bool has_grad() const { return !impl_->grad.empty(); }
    /// Gradient buffer; all zeros when nothing has been accumulated yet.
    std::vector<T> grad() const;
    std::span<T> mutable_grad() { return impl_->grad_buffer(); }
    void zero_grad();

    /// Value copy with no recorded ancestry and no gradient requirement.
    Tensor detach() const;
    Tensor clone() const { return detach(); }

    bool is_same(const Tensor& other) const { return impl_ == other.impl_; }

    Impl* impl() const { return impl_.get(); }
    const std::shared_ptr<Impl>& impl_ptr() const { return impl_; }

private:
    std::shared_ptr<Impl> impl_;
};

/// Ordered record of executed operations for reverse traversal.
template <typename T>
class Tape {
public:
    /// Receives the gradient of the recorded output and accumulates into inputs.
    using BackwardFn = std::function<void(std::span<const T> grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    ~Tape();

    /// True when an op with these inputs should be recorded on the active tape.
    static bool should_record(std::initializer_list<const Tensor<T>*> inputs);
    static Tape* active();

    /// Marks `output` as requiring a gradient and appends the closure.
    void record(std::vector<std::shared_ptr<detail::TensorImpl<T>>> inputs,
                Tensor<T>& output, BackwardFn fn);

    /// Seeds d(loss)/d(loss) = 1 and runs every closure once in reverse order.
    /// Afterwards the tape is consumed and intermediate gradients are released.
    void backward(const Tensor<T>& loss);

    std::size_t size() const { return entries_.size(); }
    bool consumed() const { return consumed_; }
    /// Drops all records without running them; the tape becomes reusable.
    void reset();

private:
    template <typename>
    friend class TapeScope;
    template <typename>
    friend class NoGradScope;

    struct Entry {
        std::vector<std::shared_ptr<detail::TensorImpl<T>>> inputs;
        std::shared_ptr<detail::TensorImpl<T>> output;
        BackwardFn fn;
    };

    std::vector<Entry> entries_;
    bool consumed_ = false;

    static thread_local Tape* active_;
    static thread_local bool suspended_;
};

/// Makes `tape` the active tape of this thread for the scope's lifetime.
template <typename T>
class TapeScope {
public:
    explicit TapeScope(Tape<T>& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape<T>* previous_;
    bool previous_suspended_;
};

/// Suspends recording on this thread for the scope's lifetime.
template <typename T>
class NoGradScope {
public:
    NoGradScope();
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    bool previous_;
};

template <typename T>
void backward(const Tensor<T>& loss, Tape<T>& tape) {
    tape.backward(loss);
}

template <typename T>
Tensor<T> detach(const Tensor<T>& x) {
    return x.detach();
}

/// Converts element type; the result has no ancestry.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& x) {
    std::vector<To> v(x.data().begin(), x.data().end());
    return Tensor<To>(x.shape(), std::move(v));
}

}  // namespace cortex
