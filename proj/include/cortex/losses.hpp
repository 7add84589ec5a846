// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Training objectives and reporting units.
//
//   matching / replica:   MSE(a, b) = (1/#a) Σ (a - b)^2
//   temporal / periodic:  CE(l, c, w) = -w[c] log softmax(l)[c], batch-averaged
//   system:               L = mu L_mu + tau L_tau + pi L_pi

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cortex/tensor.hpp"

namespace cortex {

struct LossWeights {
    double mu = 1.0;
    double tau = 0.0;
    double pi = 0.0;
};

struct ClassWeights {
    std::vector<std::int64_t> counts;  // m[k]
    std::vector<double> weights;       // w[k]
    int classes() const { return static_cast<int>(weights.size()); }
};

/// w[k] = ((1/K) Σ_j m[j]) / m[k]. Throws ConfigError on an empty or zero count.
ClassWeights class_weights(std::span<const std::int64_t> counts);

/// All-ones weights for K classes.
ClassWeights unit_weights(int classes);

/// Mean squared error over every element of same-shaped tensors.
template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b);

/// MSE restricted to the selected batch rows (leading dimension); the mean is
/// over the elements of those rows only. Returns a zero constant when no row is
/// selected.
template <typename T>
Tensor<T> mse_rows(const Tensor<T>& a, const Tensor<T>& b, std::span<const std::uint8_t> rows);

/// Weighted cross-entropy of B×K logits against class indices, averaged over
/// the selected rows (all rows when `rows` is empty) as a plain arithmetic mean
/// of the weighted per-sample terms. Returns a zero constant when no row is
/// selected.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets, const ClassWeights& weights,
                        std::span<const std::uint8_t> rows = {});

/// mu L_mu + tau L_tau + pi L_pi; zero-coefficient terms do not enter the graph
/// (and may be undefined tensors).
template <typename T>
Tensor<T> system_loss(const Tensor<T>& l_mu, const Tensor<T>& l_tau, const Tensor<T>& l_pi,
                      const LossWeights& coeffs);

/// MSE between consecutive frames of one video.
template <typename T>
double panning_speed(const Tensor<T>& frame, const Tensor<T>& next_frame);

/// Reporting unit: 1000 × MSE on [0, 1] pixels.
inline double to_mmse(double mse_value) { return 1000.0 * mse_value; }

}  // namespace cortex
