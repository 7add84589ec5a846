// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0

#include "cortex/sgd.hpp"

#include <string>

namespace cortex {

template <typename T>
SgdState<T>::SgdState(std::span<const Tensor<T>> params, SgdOptions opts) : options(opts) {
    set_lr(opts.lr);
    velocity.reserve(params.size());
    for (const auto& p : params) velocity.push_back(Tensor<T>::zeros(p.shape()));
}

template <typename T>
void SgdState<T>::set_lr(double lr) {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be strictly positive, got " + std::to_string(lr));
    options.lr = lr;
}

template <typename T>
void sgd_step(std::span<Tensor<T>> params, SgdState<T>& state) {
    if (params.size() != state.velocity.size()) {
        throw ShapeError("sgd_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(state.velocity.size()) + " momentum buffers");
    }
    const T m = static_cast<T>(state.options.momentum);
    const T wd = static_cast<T>(state.options.weight_decay);
    const T lr = static_cast<T>(state.options.lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        auto& v = state.velocity[i];
        if (p.shape() != v.shape()) {
            throw ShapeError("sgd_step: parameter " + shape_str(p.shape()) + " vs momentum buffer " +
                             shape_str(v.shape()));
        }
        auto w = p.mutable_data();
        auto vel = v.mutable_data();
        const bool has_grad = p.has_grad();
        const auto* g = has_grad ? p.impl()->grad.data() : nullptr;
        for (std::size_t j = 0; j < w.size(); ++j) {
            const T gj = has_grad ? g[j] : T(0);
            vel[j] = m * vel[j] + gj + wd * w[j];
            w[j] -= lr * vel[j];
        }
    }
}

template <typename T>
void zero_grads(std::span<Tensor<T>> params) {
    for (auto& p : params) p.zero_grad();
}

template struct SgdState<float>;
template struct SgdState<double>;
template void sgd_step(std::span<Tensor<float>>, SgdState<float>&);
template void sgd_step(std::span<Tensor<double>>, SgdState<double>&);
template void zero_grads(std::span<Tensor<float>>);
template void zero_grads(std::span<Tensor<double>>);

}  // namespace cortex
