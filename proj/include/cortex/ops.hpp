// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable layer primitives. Spatial ops accept either C×H×W or
// B×C×H×W inputs; the (de)convolutions are fixed to 3×3 kernels, stride 2,
// padding 1 (and output padding 1 for the transposed direction), so they
// exactly halve or double the spatial extents.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cortex/tensor.hpp"

namespace cortex {

/// Stride-2, pad-1 3×3 convolution. weight: C_out×C_in×3×3, bias: C_out.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

/// Adjoint of conv2d with output padding 1. weight: C_in×C_out×3×3, bias: C_out.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> relu(const Tensor<T>& input);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// Scalar multiple `factor * x`.
template <typename T>
Tensor<T> scale(const Tensor<T>& x, double factor);

/// Channel concatenation: `a` fills channels [0, C1), `b` fills [C1, C1 + C2).
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Mean over each H×W plane: ...×C×H×W -> ...×C.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input);

/// weight: K×F, bias: K. Input is F or B×F.
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

/// Softmax over the last dimension, max-subtracted.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

/// Log-softmax over the last dimension, computed as l - max - log(sum(exp(l - max))).
template <typename T>
Tensor<T> log_softmax(const Tensor<T>& logits);

/// Scalar sum of all elements (accumulated in double).
template <typename T>
Tensor<T> sum(const Tensor<T>& x);

/// Scalar `Σ_i coeff_i * term_i` over scalar tensors; terms with a zero
/// coefficient are skipped entirely and never enter the graph.
template <typename T>
Tensor<T> weighted_sum(std::span<const Tensor<T>> terms, std::span<const double> coeffs);

/// Zeroes whole batch rows where `rows[b]` is nonzero. Gradient is masked the same way.
template <typename T>
Tensor<T> zero_rows(const Tensor<T>& x, std::span<const std::uint8_t> rows);

struct BatchNormOptions {
    bool training = true;
    bool update_running = true;
    double momentum = 0.1;
    double eps = 1e-5;
};

/// Per-channel batch normalization over B×C×H×W.
///
/// In training mode the statistics are taken over the batch rows selected by
/// `stat_rows` (all rows when empty) and applied to every row, so unselected
/// rows cannot influence the result of selected ones. When no row is selected
/// the running statistics are used instead. Running statistics are buffers
/// updated in place (unbiased variance) and never receive gradients.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, const BatchNormOptions& options,
                     std::span<const std::uint8_t> stat_rows = {});

/// Upper bound on worker threads for per-row parallel loops (CORTEX_THREADS).
int max_threads();

}  // namespace cortex
