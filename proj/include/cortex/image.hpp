// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0
//
// 8-bit image files (PNG through libpng, binary PPM/PGM) and conversion to
// square CHW float tensors in [0, 1].

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cortex/tensor.hpp"

namespace cortex {

struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;                  // 1 (gray) or 3 (RGB)
    std::vector<std::uint8_t> pixels;  // row-major, interleaved
};

/// Decodes PNG, PPM (P6) or PGM (P5) by file signature. Alpha is dropped.
/// Throws IoError when unreadable and FormatError when corrupt.
Image read_image(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const Image& image);
void write_ppm(const std::filesystem::path& path, const Image& image);

/// Picks the encoder from the extension (.png, otherwise PPM).
void write_image(const std::filesystem::path& path, const Image& image);

/// Bilinear resampling with pixel-centre alignment.
Image resize_bilinear(const Image& image, int width, int height);

/// Scales the minor side to `side` (the major side rounds to nearest), centre
/// crops to side×side with the offset rounded down, replicates gray to three
/// channels and maps bytes to [0, 1]. Sources already side×side are not
/// resampled.
Tensor<float> image_to_tensor(const Image& image, int side);

/// 3×H×W (or 1×3×H×W) tensor to 8-bit RGB, clamping values to [0, 1].
Image tensor_to_image(const Tensor<float>& chw);

}  // namespace cortex
