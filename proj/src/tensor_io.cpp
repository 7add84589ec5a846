// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0

#include "cortex/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace cortex {

namespace io {

namespace {

template <typename U>
void put_le(std::ostream& os, U v) {
    std::array<char, sizeof(U)> bytes;
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& is) {
    std::array<unsigned char, sizeof(U)> bytes;
    is.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!is) throw FormatError("unexpected end of stream");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
    return v;
}

}  // namespace

void write_u8(std::ostream& os, std::uint8_t v) { put_le(os, v); }
void write_u32(std::ostream& os, std::uint32_t v) { put_le(os, v); }
void write_i64(std::ostream& os, std::int64_t v) { put_le(os, static_cast<std::uint64_t>(v)); }
void write_f32(std::ostream& os, float v) { put_le(os, std::bit_cast<std::uint32_t>(v)); }
void write_f64(std::ostream& os, double v) { put_le(os, std::bit_cast<std::uint64_t>(v)); }

std::uint8_t read_u8(std::istream& is) { return get_le<std::uint8_t>(is); }
std::uint32_t read_u32(std::istream& is) { return get_le<std::uint32_t>(is); }
std::int64_t read_i64(std::istream& is) { return static_cast<std::int64_t>(get_le<std::uint64_t>(is)); }
float read_f32(std::istream& is) { return std::bit_cast<float>(get_le<std::uint32_t>(is)); }
double read_f64(std::istream& is) { return std::bit_cast<double>(get_le<std::uint64_t>(is)); }

}  // namespace io

void write_tensor(std::ostream& os, const Tensor<float>& t) {
    os.write("CXTN", 4);
    io::write_u8(os, kTensorFormatVersion);
    io::write_u8(os, static_cast<std::uint8_t>(t.rank()));
    for (auto e : t.shape()) io::write_i64(os, e);
    for (float v : t.data()) io::write_f32(os, v);
}

Tensor<float> read_tensor(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is) throw FormatError("truncated tensor header");
    if (std::memcmp(magic, "CXTN", 4) != 0) throw FormatError("bad tensor magic");
    const auto version = io::read_u8(is);
    if (version != kTensorFormatVersion) {
        throw FormatError("unsupported tensor format version " + std::to_string(version));
    }
    const auto rank = io::read_u8(is);
    Shape shape(rank);
    for (auto& e : shape) {
        e = io::read_i64(is);
        if (e < 1 || e > (std::int64_t{1} << 40)) throw FormatError("invalid tensor extent");
    }
    const auto n = shape_numel(shape);
    std::vector<float> values(static_cast<std::size_t>(n));
    for (auto& v : values) v = io::read_f32(is);
    return Tensor<float>(std::move(shape), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const Tensor<float>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    write_tensor(os, t);
    if (!os) throw IoError("failed writing " + path.string());
}

Tensor<float> load_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    return read_tensor(is);
}

}  // namespace cortex
