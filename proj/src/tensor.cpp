// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0

#include "cortex/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace cortex {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto e : shape) {
        if (e < 1) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
        n *= e;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

template <typename T>
void TensorImpl<T>::accumulate_grad(std::span<const T> g) {
    if (grad.empty()) {
        grad.assign(g.begin(), g.end());
        return;
    }
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
}

template <typename T>
std::span<T> TensorImpl<T>::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
}

template struct TensorImpl<float>;
template struct TensorImpl<double>;

}  // namespace detail

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : impl_(std::make_shared<Impl>()) {
    const auto n = shape_numel(shape);
    impl_->shape = std::move(shape);
    impl_->data.assign(static_cast<std::size_t>(n), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<Impl>()) {
    const auto n = shape_numel(shape);
    if (static_cast<std::int64_t>(values.size()) != n) {
        throw ShapeError("tensor of shape " + shape_str(shape) + " needs " + std::to_string(n) +
                         " values, got " + std::to_string(values.size()));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
}

template <typename T>
std::int64_t Tensor<T>::dim(int i) const {
    const int r = rank();
    if (i < 0) i += r;
    if (i < 0 || i >= r) throw ShapeError("dimension index out of range for " + shape_str(shape()));
    return impl_->shape[static_cast<std::size_t>(i)];
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
}

template <typename T>
std::vector<T> Tensor<T>::grad() const {
    if (impl_->grad.empty()) return std::vector<T>(impl_->data.size(), T(0));
    return impl_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return Tensor(impl_->shape, impl_->data);
}

template <typename T>
thread_local Tape<T>* Tape<T>::active_ = nullptr;
template <typename T>
thread_local bool Tape<T>::suspended_ = false;

template <typename T>
Tape<T>::~Tape() {
    if (active_ == this) active_ = nullptr;
}

template <typename T>
Tape<T>* Tape<T>::active() {
    return suspended_ ? nullptr : active_;
}

template <typename T>
bool Tape<T>::should_record(std::initializer_list<const Tensor<T>*> inputs) {
    if (active() == nullptr) return false;
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor<T>* t) { return t && t->defined() && t->requires_grad(); });
}

template <typename T>
void Tape<T>::record(std::vector<std::shared_ptr<detail::TensorImpl<T>>> inputs, Tensor<T>& output,
                     BackwardFn fn) {
    if (consumed_) throw GraphError("cannot record on a consumed tape");
    output.set_requires_grad(true);
    entries_.push_back(Entry{std::move(inputs), output.impl_ptr(), std::move(fn)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
    if (consumed_) throw GraphError("tape already consumed");
    if (!loss.defined() || loss.numel() != 1) {
        throw GraphError("backward() needs a scalar loss, got " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    }
    const auto* root = loss.impl();
    const bool on_tape = std::any_of(entries_.begin(), entries_.end(),
                                     [root](const Entry& e) { return e.output.get() == root; });
    if (!on_tape) throw GraphError("loss was not produced through this tape");

    loss.impl()->accumulate_grad(std::vector<T>{T(1)});
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (it->output->grad.empty()) continue;
        it->fn(it->output->grad);
    }

    // Intermediate outputs keep no gradient once the tape is spent; leaves do.
    for (auto& e : entries_) {
        e.output->grad.clear();
        e.output->grad.shrink_to_fit();
    }
    entries_.clear();
    consumed_ = true;
}

template <typename T>
void Tape<T>::reset() {
    entries_.clear();
    consumed_ = false;
}

template <typename T>
TapeScope<T>::TapeScope(Tape<T>& tape)
    : previous_(Tape<T>::active_), previous_suspended_(Tape<T>::suspended_) {
    Tape<T>::active_ = &tape;
    Tape<T>::suspended_ = false;
}

template <typename T>
TapeScope<T>::~TapeScope() {
    Tape<T>::active_ = previous_;
    Tape<T>::suspended_ = previous_suspended_;
}

template <typename T>
NoGradScope<T>::NoGradScope() : previous_(Tape<T>::suspended_) {
    Tape<T>::suspended_ = true;
}

template <typename T>
NoGradScope<T>::~NoGradScope() {
    Tape<T>::suspended_ = previous_;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template class TapeScope<float>;
template class TapeScope<double>;
template class NoGradScope<float>;
template class NoGradScope<double>;

}  // namespace cortex
