// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint layout ("CXCK"), all integers little-endian:
//   magic "CXCK", u8 version
//   u32 L, u32 f_0..f_L, u32 R, u32 K, u8 norm flag
//   u32 epoch
//   u8 has optimizer, f64 lr, f64 momentum, f64 weight decay
//   u32 record count, then per record: u32 name length, name bytes, CXTN tensor
//
// Records hold model parameters, batch-norm buffers and, when present, the
// momentum buffers under "momentum/<parameter name>".

#pragma once

#include <filesystem>
#include <optional>

#include "cortex/model.hpp"
#include "cortex/sgd.hpp"

namespace cortex {

inline constexpr std::uint8_t kCheckpointVersion = 1;

struct Checkpoint {
    CortexModel<float> model;
    std::optional<SgdState<float>> optimizer;
    int epoch = 0;
};

void save_checkpoint(const std::filesystem::path& path, const CortexModel<float>& model,
                     const SgdState<float>* optimizer, int epoch);

/// Reads a complete checkpoint. Throws FormatError on bad magic, version,
/// truncation or inconsistent records; nothing is returned on failure.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Reads the stored LayerSpec/K/norm flag only.
struct CheckpointHeader {
    LayerSpec spec;
    int classes = 0;
    bool batch_norm = false;
    int epoch = 0;
};
CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

/// Copies checkpoint parameters into an existing model whose LayerSpec and norm
/// flag must match (ShapeError otherwise). The classifier is copied only when
/// its width matches; returns whether it was.
bool load_parameters_into(const Checkpoint& checkpoint, CortexModel<float>& model);

}  // namespace cortex
