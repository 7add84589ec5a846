// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference oracle used by the gradient tests. It only ever
// evaluates the loss function forward with recording suspended, so it shares
// no code path with the backward closures it checks.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "cortex/tensor.hpp"

namespace cortex::testing {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.mutable_data()) v = static_cast<T>(dist(rng));
    return t;
}

struct GradError {
    double worst = 0;  // largest norm-wise relative error across checked tensors
    std::size_t checked = 0;
};

// A tensor whose gradient vanishes identically (a bias feeding straight into a
// normalization) is measured against this fraction of the overall gradient norm
// instead of its own.
inline constexpr double kVanishingFloor = 1e-3;

/// Indices of the entries probed for a tensor of n elements: all of them up to
/// `limit`, otherwise a reproducible random subset.
inline std::vector<std::size_t> probe_indices(std::size_t n, std::size_t limit, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (n <= limit) return idx;
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(limit);
    std::sort(idx.begin(), idx.end());
    return idx;
}

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-12) {
    double diff = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nb), floor});
    return std::sqrt(diff) / denom;
}

inline GradError summarize(const std::vector<std::vector<double>>& analytic,
                           const std::vector<std::vector<double>>& numeric) {
    double total = 0;
    for (const auto& n : numeric) {
        for (double v : n) total += v * v;
    }
    const double floor = std::max(kVanishingFloor * std::sqrt(total), 1e-12);
    GradError err;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
        err.worst = std::max(err.worst, relative_error(analytic[k], numeric[k], floor));
        err.checked += analytic[k].size();
    }
    return err;
}

/// Finite-difference gradient of `loss` (evaluated without recording) with
/// respect to the probed entries of `wrt`.
template <typename T>
std::vector<double> numeric_gradient(const std::function<Tensor<T>()>& loss, Tensor<T>& wrt,
                                     const std::vector<std::size_t>& probes, double eps) {
    NoGradScope<T> no_grad;
    std::vector<double> out;
    out.reserve(probes.size());
    auto data = wrt.mutable_data();
    for (std::size_t i : probes) {
        const T saved = data[i];
        data[i] = static_cast<T>(saved + eps);
        const double up = static_cast<double>(loss().item());
        data[i] = static_cast<T>(saved - eps);
        const double down = static_cast<double>(loss().item());
        data[i] = saved;
        out.push_back((up - down) / (2 * eps));
    }
    return out;
}

/// Analytic gradient of `loss` for every tensor in `wrt`, via one taped run.
template <typename T>
std::vector<std::vector<T>> analytic_gradients(const std::function<Tensor<T>()>& loss, std::vector<Tensor<T>>& wrt) {
    for (auto& t : wrt) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    Tape<T> tape;
    {
        TapeScope<T> scope(tape);
        Tensor<T> l = loss();
        backward(l, tape);
    }
    std::vector<std::vector<T>> grads;
    for (auto& t : wrt) grads.push_back(t.grad());
    return grads;
}

/// Same-precision check: analytic vs finite differences in type T.
template <typename T>
GradError check_gradients(const std::function<Tensor<T>()>& loss, std::vector<Tensor<T>> wrt, double eps,
                          std::size_t probe_limit = 64) {
    const auto grads = analytic_gradients(loss, wrt);
    std::vector<std::vector<double>> analytic, numeric;
    for (std::size_t k = 0; k < wrt.size(); ++k) {
        const auto probes = probe_indices(static_cast<std::size_t>(wrt[k].numel()), probe_limit, 1000 + k);
        numeric.push_back(numeric_gradient(loss, wrt[k], probes, eps));
        analytic.emplace_back();
        for (std::size_t i : probes) analytic.back().push_back(static_cast<double>(grads[k][i]));
    }
    return summarize(analytic, numeric);
}

/// Single-precision check: float analytic gradients against finite
/// differences of the identical computation carried out in double precision
/// (the float tensors in `wrt_f` and the double tensors in `wrt_d` must hold
/// the same values). Differencing in float would measure rounding noise of
/// the loss rather than gradient error.
inline GradError check_gradients_single(const std::function<Tensor<float>()>& loss_f, std::vector<Tensor<float>> wrt_f,
                                        const std::function<Tensor<double>()>& loss_d, std::vector<Tensor<double>> wrt_d,
                                        double eps, std::size_t probe_limit = 64) {
    const auto grads = analytic_gradients(loss_f, wrt_f);
    std::vector<std::vector<double>> analytic, numeric;
    for (std::size_t k = 0; k < wrt_f.size(); ++k) {
        const auto probes = probe_indices(static_cast<std::size_t>(wrt_f[k].numel()), probe_limit, 1000 + k);
        numeric.push_back(numeric_gradient(loss_d, wrt_d[k], probes, eps));
        analytic.emplace_back();
        for (std::size_t i : probes) analytic.back().push_back(static_cast<double>(grads[k][i]));
    }
    return summarize(analytic, numeric);
}

}  // namespace cortex::testing
