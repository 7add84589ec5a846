// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "cortex/tensor.hpp"

namespace cortex {

struct SgdOptions {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
};

/// Momentum buffers plus hyperparameters for one parameter list.
///
/// Update rule, per parameter w with gradient g and velocity v:
///   v <- momentum * v + g + weight_decay * w
///   w <- w - lr * v
template <typename T>
struct SgdState {
    SgdOptions options;
    std::vector<Tensor<T>> velocity;

    SgdState() = default;
    SgdState(std::span<const Tensor<T>> params, SgdOptions opts);

    void set_lr(double lr);
};

/// Applies one update to `params` using their accumulated gradients (a missing
/// gradient counts as zero). Gradients are left untouched.
template <typename T>
void sgd_step(std::span<Tensor<T>> params, SgdState<T>& state);

template <typename T>
void zero_grads(std::span<Tensor<T>> params);

}  // namespace cortex
