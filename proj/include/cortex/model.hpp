// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0
//
// CortexNet: L discriminative blocks D_1..D_L (stride-2 convolutions) and L
// generative blocks G_1..G_L (stride-2 transposed convolutions) connected by
//
//   * bottom-up links      d_{n-1} -> D_n
//   * top-down links       g_{n+1} -> G_n
//   * lateral links        the pre-activation of D_n is added right after the
//                          deconvolution of the G block emitting at the same
//                          resolution (G_{n+1})
//   * one-step feedback    g_n[t-1] is concatenated to d_{n-1}[t] at the input
//                          of D_n, for n >= 2
//
// G_1 emits the frame prediction h[t] without superposition or nonlinearity.
// The embedding e[t] is the spatial mean of d_L and the logits are a linear
// map of e[t].

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cortex/tensor.hpp"

namespace cortex {

/// Feature-map ladder 3, 32, 64, 128, 256, then 256 for every extra level.
std::vector<int> default_feature_maps(int levels);

struct LayerSpec {
    int levels = 4;          // L
    std::vector<int> maps;   // f_0..f_L, f_0 = 3
    int side = 256;          // R, square input

    static LayerSpec standard(int levels, int side);

    /// Throws ConfigError unless L >= 2, maps has L + 1 positive entries with
    /// f_0 = 3 and R is a positive multiple of 2^L.
    void validate() const;

    int resolution(int level) const { return side >> level; }
    bool operator==(const LayerSpec&) const = default;
};

std::string to_string(const LayerSpec& spec);

template <typename T>
struct ConvBlock {
    Tensor<T> weight;
    Tensor<T> bias;
    // Batch-norm parameters and buffers; undefined when the block has no norm.
    Tensor<T> gamma, beta, running_mean, running_var;

    bool has_norm() const { return gamma.defined(); }
};

/// Delayed feedback g_2[t-1]..g_L[t-1] (index n-2) and per-row frame ages.
template <typename T>
struct ModelState {
    std::vector<Tensor<T>> feedback;
    std::vector<std::int64_t> age;

    std::int64_t batch() const { return static_cast<std::int64_t>(age.size()); }
    ModelState detach() const;
};

template <typename T>
ModelState<T> zero_state(const LayerSpec& spec, std::int64_t batch);

/// Zeroes the selected rows of every feedback tensor and their age counters.
/// Differentiable: gradients still flow through the rows that are kept.
template <typename T>
ModelState<T> reset_state_rows(const ModelState<T>& state, std::span<const std::uint8_t> rows);

template <typename T>
struct StepOutput {
    Tensor<T> prediction;  // h[t], B×3×R×R
    Tensor<T> embedding;   // e[t], B×f_L
    Tensor<T> logits;      // l[t], B×K
    ModelState<T> state;
};

struct StepOptions {
    /// Rows contributing to batch-norm statistics; empty means all rows.
    std::span<const std::uint8_t> stat_rows{};
    bool update_running = true;
};

template <typename T>
struct NamedTensor {
    std::string name;
    Tensor<T> tensor;
};

template <typename T>
class CortexModel {
public:
    CortexModel(LayerSpec spec, int classes, bool batch_norm, std::uint64_t seed);

    CortexModel(const CortexModel&) = delete;
    CortexModel& operator=(const CortexModel&) = delete;
    CortexModel(CortexModel&&) noexcept = default;
    CortexModel& operator=(CortexModel&&) noexcept = default;

    /// Deep copy with independent parameter storage.
    CortexModel clone() const;

    const LayerSpec& spec() const { return spec_; }
    int classes() const { return classes_; }
    bool batch_norm() const { return batch_norm_; }

    /// Training mode uses batch statistics in the norm layers; evaluation mode
    /// uses the running estimates.
    void set_training(bool on) { training_ = on; }
    bool training() const { return training_; }

    /// One time step of the full recurrent model.
    StepOutput<T> step(const Tensor<T>& frames, const ModelState<T>& state, const StepOptions& options = {});

    /// Discriminative path only, with caller-supplied feedback tensors in the
    /// layout of ModelState::feedback. Returns {embedding, logits}.
    std::pair<Tensor<T>, Tensor<T>> discriminate(const Tensor<T>& frames, std::span<const Tensor<T>> feedback,
                                                 const StepOptions& options = {});

    /// Discriminative branch with all feedback zero and no state; logits B×K.
    Tensor<T> feedforward_logits(const Tensor<T>& frames, const StepOptions& options = {});

    /// Installs a fresh f_L -> K head; every other parameter is untouched.
    void replace_classifier(int classes, std::uint64_t seed);
    /// Sets the classifier weight and bias to zero.
    void zero_classifier();

    /// Trainable tensors in a fixed order.
    std::vector<NamedTensor<T>> named_parameters() const;
    /// Batch-norm running statistics.
    std::vector<NamedTensor<T>> named_buffers() const;
    std::vector<Tensor<T>> parameters() const;

    const ConvBlock<T>& discriminative(int level) const { return discriminative_.at(level - 1); }
    const ConvBlock<T>& generative(int level) const { return generative_.at(level - 1); }
    const Tensor<T>& classifier_weight() const { return classifier_weight_; }
    const Tensor<T>& classifier_bias() const { return classifier_bias_; }

private:
    CortexModel() = default;

    Tensor<T> apply_norm(ConvBlock<T>& block, const Tensor<T>& x, const StepOptions& options);
    void check_input(const Tensor<T>& frames) const;
    void check_feedback(std::span<const Tensor<T>> feedback, std::int64_t batch) const;

    LayerSpec spec_;
    int classes_ = 0;
    bool batch_norm_ = false;
    bool training_ = true;
    std::vector<ConvBlock<T>> discriminative_;
    std::vector<ConvBlock<T>> generative_;
    Tensor<T> classifier_weight_;
    Tensor<T> classifier_bias_;
};

}  // namespace cortex
