// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0

#include "cortex/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "cortex/ops.hpp"

namespace cortex {

ClassWeights class_weights(std::span<const std::int64_t> counts) {
    if (counts.empty()) throw ConfigError("class_weights: no classes");
    double total = 0;
    for (auto m : counts) {
        if (m < 1) throw ConfigError("class_weights: every class needs at least one sample");
        total += static_cast<double>(m);
    }
    const double mean = total / static_cast<double>(counts.size());
    ClassWeights w;
    w.counts.assign(counts.begin(), counts.end());
    for (auto m : counts) w.weights.push_back(mean / static_cast<double>(m));
    return w;
}

ClassWeights unit_weights(int classes) {
    if (classes < 1) throw ConfigError("unit_weights: no classes");
    ClassWeights w;
    w.counts.assign(static_cast<std::size_t>(classes), 1);
    w.weights.assign(static_cast<std::size_t>(classes), 1.0);
    return w;
}

template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("mse: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    std::vector<std::uint8_t> all;
    if (a.rank() == 0) {
        const double d = static_cast<double>(a.item()) - b.item();
        Tensor<T> out = Tensor<T>::scalar(static_cast<T>(d * d));
        if (Tape<T>::should_record({&a, &b})) {
            auto ai = a.impl_ptr(), bi = b.impl_ptr();
            Tape<T>::active()->record({ai, bi}, out, [ai, bi](std::span<const T> g) {
                const T diff = ai->data[0] - bi->data[0];
                if (ai->requires_grad) ai->grad_buffer()[0] += T(2) * diff * g[0];
                if (bi->requires_grad) bi->grad_buffer()[0] -= T(2) * diff * g[0];
            });
        }
        return out;
    }
    all.assign(static_cast<std::size_t>(a.dim(0)), 1);
    return mse_rows(a, b, all);
}

template <typename T>
Tensor<T> mse_rows(const Tensor<T>& a, const Tensor<T>& b, std::span<const std::uint8_t> rows) {
    if (a.shape() != b.shape()) {
        throw ShapeError("mse: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    if (a.rank() < 1 || static_cast<std::int64_t>(rows.size()) != a.dim(0)) {
        throw ShapeError("mse_rows: mask length does not match leading dimension of " + shape_str(a.shape()));
    }
    const std::int64_t item = a.numel() / a.dim(0);
    std::int64_t selected = 0;
    double s = 0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (!rows[r]) continue;
        ++selected;
        const std::size_t off = r * static_cast<std::size_t>(item);
        for (std::int64_t i = 0; i < item; ++i) {
            const double d = static_cast<double>(a.data()[off + i]) - b.data()[off + i];
            s += d * d;
        }
    }
    if (selected == 0) return Tensor<T>::scalar(T(0));
    const double count = static_cast<double>(selected * item);
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(s / count));
    if (Tape<T>::should_record({&a, &b})) {
        auto ai = a.impl_ptr(), bi = b.impl_ptr();
        std::vector<std::uint8_t> mask(rows.begin(), rows.end());
        Tape<T>::active()->record({ai, bi}, out, [ai, bi, mask, item, count](std::span<const T> g) {
            const T f = static_cast<T>(2.0 / count) * g[0];
            for (std::size_t r = 0; r < mask.size(); ++r) {
                if (!mask[r]) continue;
                const std::size_t off = r * static_cast<std::size_t>(item);
                for (std::int64_t i = 0; i < item; ++i) {
                    const T d = f * (ai->data[off + i] - bi->data[off + i]);
                    if (ai->requires_grad) ai->grad_buffer()[off + i] += d;
                    if (bi->requires_grad) bi->grad_buffer()[off + i] -= d;
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets, const ClassWeights& weights,
                        std::span<const std::uint8_t> rows) {
    if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be B×K, got " + shape_str(logits.shape()));
    const std::int64_t nb = logits.dim(0), k = logits.dim(1);
    if (static_cast<std::int64_t>(targets.size()) != nb) throw ShapeError("cross_entropy: one target per row");
    if (!rows.empty() && static_cast<std::int64_t>(rows.size()) != nb) {
        throw ShapeError("cross_entropy: row mask length does not match batch");
    }
    if (weights.classes() != k) {
        throw ShapeError("cross_entropy: " + std::to_string(weights.classes()) + " class weights for " +
                         std::to_string(k) + " logits");
    }
    auto selected = [&](std::int64_t r) { return rows.empty() || rows[static_cast<std::size_t>(r)] != 0; };

    std::int64_t count = 0;
    double total = 0;
    std::vector<double> probs(static_cast<std::size_t>(nb * k), 0.0);
    for (std::int64_t r = 0; r < nb; ++r) {
        if (!selected(r)) continue;
        const int c = targets[static_cast<std::size_t>(r)];
        if (c < 0 || c >= k) {
            throw ConfigError("cross_entropy: class index " + std::to_string(c) + " outside [0, " +
                              std::to_string(k) + ")");
        }
        const T* l = logits.data().data() + r * k;
        const double m = *std::max_element(l, l + k);
        double z = 0;
        for (std::int64_t j = 0; j < k; ++j) z += std::exp(l[j] - m);
        const double lz = std::log(z);
        for (std::int64_t j = 0; j < k; ++j) probs[static_cast<std::size_t>(r * k + j)] = std::exp(l[j] - m - lz);
        total += -weights.weights[static_cast<std::size_t>(c)] * (l[c] - m - lz);
        ++count;
    }
    if (count == 0) return Tensor<T>::scalar(T(0));
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(count)));
    if (Tape<T>::should_record({&logits})) {
        auto li = logits.impl_ptr();
        std::vector<int> tgt(targets.begin(), targets.end());
        std::vector<std::uint8_t> mask(static_cast<std::size_t>(nb));
        for (std::int64_t r = 0; r < nb; ++r) mask[static_cast<std::size_t>(r)] = selected(r) ? 1 : 0;
        Tape<T>::active()->record(
            {li}, out,
            [li, probs = std::move(probs), tgt = std::move(tgt), mask = std::move(mask), w = weights.weights, k,
             count](std::span<const T> g) {
                auto gl = li->grad_buffer();
                for (std::size_t r = 0; r < mask.size(); ++r) {
                    if (!mask[r]) continue;
                    const int c = tgt[r];
                    const double f = w[static_cast<std::size_t>(c)] * g[0] / static_cast<double>(count);
                    for (std::int64_t j = 0; j < k; ++j) {
                        const std::size_t idx = r * static_cast<std::size_t>(k) + static_cast<std::size_t>(j);
                        gl[idx] += static_cast<T>(f * (probs[idx] - (j == c ? 1.0 : 0.0)));
                    }
                }
            });
    }
    return out;
}

template <typename T>
Tensor<T> system_loss(const Tensor<T>& l_mu, const Tensor<T>& l_tau, const Tensor<T>& l_pi,
                      const LossWeights& coeffs) {
    for (double c : {coeffs.mu, coeffs.tau, coeffs.pi}) {
        if (c < 0) throw ConfigError("loss coefficients must be non-negative");
    }
    const std::array<Tensor<T>, 3> terms{l_mu, l_tau, l_pi};
    const std::array<double, 3> coeffs_arr{coeffs.mu, coeffs.tau, coeffs.pi};
    return weighted_sum<T>(terms, coeffs_arr);
}

template <typename T>
double panning_speed(const Tensor<T>& frame, const Tensor<T>& next_frame) {
    NoGradScope<T> no_grad;
    return static_cast<double>(mse(next_frame, frame).item());
}

#define CORTEX_INSTANTIATE_LOSSES(T)                                                                        \
    template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);                                             \
    template Tensor<T> mse_rows(const Tensor<T>&, const Tensor<T>&, std::span<const std::uint8_t>);         \
    template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>, const ClassWeights&,           \
                                     std::span<const std::uint8_t>);                                         \
    template Tensor<T> system_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const LossWeights&); \
    template double panning_speed(const Tensor<T>&, const Tensor<T>&);

CORTEX_INSTANTIATE_LOSSES(float)
CORTEX_INSTANTIATE_LOSSES(double)

#undef CORTEX_INSTANTIATE_LOSSES

}  // namespace cortex
