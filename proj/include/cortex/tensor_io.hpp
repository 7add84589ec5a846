// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Binary tensor dump ("CXTN"):
//   4 bytes  magic "CXTN"
//   1 byte   format version (1)
//   1 byte   rank
//   rank × 8 bytes  little-endian int64 extents
//   numel × 4 bytes little-endian IEEE-754 float32, row-major

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "cortex/tensor.hpp"

namespace cortex {

inline constexpr std::uint8_t kTensorFormatVersion = 1;

void write_tensor(std::ostream& os, const Tensor<float>& t);
Tensor<float> read_tensor(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor<float>& t);
Tensor<float> load_tensor(const std::filesystem::path& path);

namespace io {

// Little-endian primitives shared by the tensor and checkpoint formats.
void write_u8(std::ostream& os, std::uint8_t v);
void write_u32(std::ostream& os, std::uint32_t v);
void write_i64(std::ostream& os, std::int64_t v);
void write_f32(std::ostream& os, float v);
void write_f64(std::ostream& os, double v);
std::uint8_t read_u8(std::istream& is);
std::uint32_t read_u32(std::istream& is);
std::int64_t read_i64(std::istream& is);
float read_f32(std::istream& is);
double read_f64(std::istream& is);

}  // namespace io

}  // namespace cortex
