// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic labelled clips: one class-determining shape moving at constant
// velocity with elastic bounces off the frame border, drawn over a textured
// background that pans at a constant velocity. Every pixel of every frame is a
// pure function of (seed, video index, frame index), so frames can be rendered
// on demand in any order.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cortex/pipeline.hpp"
#include "cortex/tensor.hpp"

namespace cortex {

struct SynthSpec {
    std::int64_t videos = 8;
    int classes = 2;
    std::int64_t min_frames = 40;  // lengths are drawn uniformly in [min, max]
    std::int64_t max_frames = 40;
    int side = 32;
    double object_speed_min = 0.5;  // px/frame
    double object_speed_max = 1.5;
    double pan_speed_min = 0.5;  // px/frame
    double pan_speed_max = 1.5;
    bool object = true;  // false leaves only the panning background
    double noise = 0.0;       // std of additive Gaussian pixel noise
    double class_skew = 0.0;  // probability that a video is forced to class 0
    std::uint64_t seed = 7;
    std::string format = "ppm";  // frame files: ppm or png

    /// Throws ConfigError on out-of-range fields.
    void validate() const;
};

/// Shape names indexed by class.
const std::vector<std::string>& shape_names();

/// Records of the clips as generate() would list them (paths video_0001, ...),
/// without touching the filesystem.
std::vector<VideoRecord> synth_records(const SynthSpec& spec, const std::filesystem::path& root = {});

/// Frame k (1-based) of video `index` (0-based), 3×side×side in [0, 1].
Tensor<float> render_frame(const SynthSpec& spec, std::int64_t index, std::int64_t frame);

/// Renders frames straight from a SynthSpec. Records are resolved by their
/// parent id, so split and subsampled records keep working.
FrameSource::Loader synth_loader(const SynthSpec& spec);

/// Writes one directory of frames per clip plus manifest.jsonl under `root`
/// and returns the records. Throws IoError when the destination is unwritable.
std::vector<VideoRecord> generate(const SynthSpec& spec, const std::filesystem::path& root);

enum class PerturbKind { blur, noise };

struct Perturbation {
    PerturbKind kind = PerturbKind::blur;
    double amount = 1.0;  // box radius in pixels for blur, Gaussian std for noise
    std::uint64_t seed = 0;
};

/// Applies the perturbation to frames first..last (1-based, inclusive) and
/// leaves the others untouched. An empty interval (last < first) returns the
/// frames unchanged; an interval reaching outside the clip throws ConfigError.
std::vector<Tensor<float>> perturb_stream(std::span<const Tensor<float>> frames, const Perturbation& p,
                                          std::int64_t first, std::int64_t last);

/// Same, for an arbitrary set of 1-based frame indices.
std::vector<Tensor<float>> perturb_frames(std::span<const Tensor<float>> frames, const Perturbation& p,
                                          std::span<const std::int64_t> indices);

}  // namespace cortex
