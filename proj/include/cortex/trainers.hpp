// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Training procedures:
//
//   matchnet  unsupervised next-frame matching (L_mu, BPTT within a chunk) plus
//             a static video-identity loss L_tau at the last frame of each clip
//   temponet  weakly supervised classification through the periodic loss L_pi
//             at the final column of every chunk (BPTT), class-balanced
//   pretrain  feed-forward classification of stills by the discriminative branch
//
// One optimizer step per chunk; state is detached between chunks.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cortex/losses.hpp"
#include "cortex/model.hpp"
#include "cortex/pipeline.hpp"
#include "cortex/sgd.hpp"

namespace cortex {

enum class TrainMode { matchnet, temponet, pretrain };

std::string to_string(TrainMode mode);
/// Throws ConfigError on an unknown name.
TrainMode parse_mode(const std::string& name);

/// Step decay: lr0 / gamma^floor((epoch - 1) / period).
struct Schedule {
    double lr0 = 0.1;
    double gamma = 10.0;
    int period = 10;
};

/// Throws ConfigError when epoch < 1 or the schedule is degenerate.
double lr_at(const Schedule& schedule, int epoch);

struct TrainConfig {
    TrainMode mode = TrainMode::matchnet;
    LossWeights coeffs{1.0, 0.01, 0.0};
    std::int64_t beta = 20;  // grid rows (batch size for pretraining)
    std::int64_t T = 10;     // chunk length
    int S = 5;               // temponet subsamples
    std::int64_t val_frames = 60;
    Schedule schedule;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    int epochs = 30;
    std::uint64_t seed = 0;
    bool batch_norm = true;
    LayerSpec spec = LayerSpec::standard(4, 256);
    int classes = 0;         // K
    double clip_norm = 0.0;  // global gradient-norm clip, 0 disables
    bool shuffle = true;     // permute the video order every epoch
    bool monitor = true;     // compute the zero-coefficient monitoring losses
    bool wall_clock = true;  // false writes 0 to wall_s

    /// Paper settings for each mode.
    static TrainConfig defaults(TrainMode mode);

    /// Throws ConfigError on inconsistent values.
    void validate() const;
};

/// One line of the metrics CSV. Absent values are left empty.
struct MetricsRow {
    int epoch = 0;
    std::string split;
    std::optional<double> l_mu_mmse;
    std::optional<double> l_rho_mmse;
    std::optional<double> l_tau_nit;
    std::optional<double> l_pi_nit;
    std::optional<double> accuracy;
    double lr = 0;
    double wall_s = 0;
};

inline constexpr const char* kMetricsHeader = "epoch,split,l_mu_mmse,l_rho_mmse,l_tau_nit,l_pi_nit,accuracy,lr,wall_s";

std::string to_csv(const MetricsRow& row);
void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows);

/// Running sums of the chunk losses, reported as MetricsRow means.
struct LossTotals {
    double mu_sum = 0, rho_sum = 0, panning_sum = 0;
    std::int64_t mu_cells = 0;
    double tau_sum = 0;
    std::int64_t tau_cells = 0;
    double pi_sum = 0;
    std::int64_t pi_cells = 0, correct = 0;

    void merge(const LossTotals& other);
    /// Fills the loss columns that have samples.
    void fill(MetricsRow& row) const;
    double panning_mmse() const;
};

/// Column frames of one chunk: columns[t] is the B×3×R×R batch of column t;
/// one extra trailing entry holds the next column when the layout has one.
struct ChunkFrames {
    std::vector<Tensor<float>> columns;
};

ChunkFrames load_chunk(FrameSource& source, const ChunkLayout& layout);

/// Targets used by the classification losses of one chunk (per cell, [t·rows + r]).
std::vector<int> chunk_targets(const ChunkLayout& layout, std::span<const VideoRecord> records, TrainMode mode);

struct ChunkResult {
    Tensor<float> loss;  // system loss; undefined when nothing carries gradient
    LossTotals totals;
    ModelState<float> state;
};

/// Runs one chunk forward. With a tape active the returned loss can be
/// back-propagated; without one everything runs as evaluation.
ChunkResult run_chunk(CortexModel<float>& model, const ChunkLayout& layout, const ChunkFrames& frames,
                      std::span<const int> targets, const ModelState<float>& state, const TrainConfig& config,
                      const ClassWeights& weights);

struct EpochReport {
    int epoch = 0;
    std::vector<MetricsRow> rows;  // train, then val when present
    const SgdState<float>* optimizer = nullptr;
};

struct TrainHooks {
    int start_epoch = 1;
    /// Optimizer state to continue from (resume); a fresh one otherwise.
    const SgdState<float>* optimizer = nullptr;
    std::function<void(const EpochReport&)> on_epoch;
};

/// Throws NumericalError on a non-finite loss, with the epoch and chunk.
std::vector<MetricsRow> train_matchnet(CortexModel<float>& model, FrameSource& train, FrameSource* val,
                                       const TrainConfig& config, const TrainHooks& hooks = {});

std::vector<MetricsRow> train_temponet(CortexModel<float>& model, FrameSource& train, FrameSource* val,
                                       const TrainConfig& config, const TrainHooks& hooks = {});

/// Stills are (record, frame) cells of the source; labels come from the records.
std::vector<MetricsRow> pretrain_discriminative(CortexModel<float>& model, FrameSource& source,
                                                std::span<const GridCell> train, std::span<const GridCell> val,
                                                const TrainConfig& config, const TrainHooks& hooks = {});

/// Every frame of every record, in order.
std::vector<GridCell> all_stills(std::span<const VideoRecord> records);

struct EvalResult {
    MetricsRow row;
    double panning_mmse = 0;  // mean MSE between matched consecutive frames
};

/// Chunked pass over the source without gradients, in evaluation mode.
EvalResult evaluate(CortexModel<float>& model, FrameSource& source, const TrainConfig& config);

/// Feed-forward accuracy and CE over stills, in evaluation mode.
EvalResult evaluate_stills(CortexModel<float>& model, FrameSource& source, std::span<const GridCell> stills,
                           const TrainConfig& config);

struct MatchTraceRow {
    std::int64_t t = 0;
    double l_mu_mmse = 0, l_rho_mmse = 0, panning_mmse = 0;
};

/// Predicts h[t] from x[t] for t = 1, 2, ...; called in frame order.
using FramePredictor = std::function<Tensor<float>(const Tensor<float>& frame, std::int64_t t)>;

/// Per-frame L_mu, L_rho and panning speed for t = 1..F-1.
std::vector<MatchTraceRow> match_trace(std::span<const Tensor<float>> frames, const FramePredictor& predict);
std::vector<MatchTraceRow> match_trace(CortexModel<float>& model, std::span<const Tensor<float>> frames);

/// Per-frame class probabilities of the full recurrent model from a reset state.
std::vector<std::vector<double>> probability_trace(CortexModel<float>& model, std::span<const Tensor<float>> frames);
/// Same for the discriminative branch alone.
std::vector<std::vector<double>> feedforward_trace(CortexModel<float>& model, std::span<const Tensor<float>> frames);

void write_match_trace(const std::filesystem::path& path, std::span<const MatchTraceRow> rows);
void write_probability_trace(const std::filesystem::path& path, const std::vector<std::vector<double>>& probs);

struct Stability {
    std::int64_t flicker_count = 0;
    double mean_top1_dwell = 0;
    double temporal_variance = 0;
};

/// Throws ConfigError on an empty trace.
Stability stability_metrics(const std::vector<std::vector<double>>& probs);

/// All frames of one record.
std::vector<Tensor<float>> clip_frames(FrameSource& source, std::int64_t record);

}  // namespace cortex
