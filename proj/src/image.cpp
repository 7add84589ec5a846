// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0

#include "cortex/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "cortex/error.hpp"

namespace cortex {

namespace {

std::string read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Image decode_png(const std::string& bytes, const std::filesystem::path& path) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
        throw FormatError("corrupt PNG " + path.string() + ": " + img.message);
    }
    const bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
    img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    Image out;
    out.width = static_cast<int>(img.width);
    out.height = static_cast<int>(img.height);
    out.channels = gray ? 1 : 3;
    out.pixels.resize(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
        png_image_free(&img);
        throw FormatError("corrupt PNG " + path.string() + ": " + img.message);
    }
    return out;
}

// Skips whitespace and '#' comments between PNM header tokens.
int pnm_int(const std::string& bytes, std::size_t& pos, const std::filesystem::path& path) {
    while (pos < bytes.size()) {
        if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
            ++pos;
        } else {
            break;
        }
    }
    long v = 0;
    std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
        v = v * 10 + (bytes[pos] - '0');
        if (v > 1 << 20) throw FormatError("PNM header value too large in " + path.string());
        ++pos;
    }
    if (pos == start) throw FormatError("malformed PNM header in " + path.string());
    return static_cast<int>(v);
}

Image decode_pnm(const std::string& bytes, const std::filesystem::path& path) {
    Image out;
    out.channels = bytes[1] == '6' ? 3 : 1;
    std::size_t pos = 2;
    out.width = pnm_int(bytes, pos, path);
    out.height = pnm_int(bytes, pos, path);
    const int maxval = pnm_int(bytes, pos, path);
    if (maxval < 1 || maxval > 255) throw FormatError("only 8-bit PNM is supported: " + path.string());
    if (out.width < 1 || out.height < 1) throw FormatError("empty PNM image " + path.string());
    ++pos;  // single whitespace before the raster
    const std::size_t n = static_cast<std::size_t>(out.width) * out.height * out.channels;
    if (bytes.size() < pos + n) throw FormatError("truncated PNM raster in " + path.string());
    out.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
    if (maxval != 255) {
        for (auto& p : out.pixels) p = static_cast<std::uint8_t>(std::min(255, p * 255 / maxval));
    }
    return out;
}

void check_image(const Image& image) {
    if (image.width < 1 || image.height < 1 || (image.channels != 1 && image.channels != 3) ||
        image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * image.channels) {
        throw ShapeError("inconsistent image buffer");
    }
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
    const std::string bytes = read_all(path);
    if (bytes.size() >= 8 && static_cast<unsigned char>(bytes[0]) == 0x89 && bytes.compare(1, 3, "PNG") == 0) {
        return decode_png(bytes, path);
    }
    if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) return decode_pnm(bytes, path);
    throw FormatError("unrecognized image format: " + path.string());
}

void write_png(const std::filesystem::path& path, const Image& image) {
    check_image(image);
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    img.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.string().c_str(), 0, image.pixels.data(), 0, nullptr)) {
        throw IoError("cannot write PNG " + path.string() + ": " + img.message);
    }
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
    check_image(image);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << (image.channels == 3 ? "P6" : "P5") << '\n' << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
    if (!out) throw IoError("cannot write " + path.string());
}

void write_image(const std::filesystem::path& path, const Image& image) {
    if (path.extension() == ".png") {
        write_png(path, image);
    } else {
        write_ppm(path, image);
    }
}

Image resize_bilinear(const Image& image, int width, int height) {
    check_image(image);
    if (width < 1 || height < 1) throw ShapeError("resize to an empty image");
    Image out;
    out.width = width;
    out.height = height;
    out.channels = image.channels;
    out.pixels.resize(static_cast<std::size_t>(width) * height * image.channels);
    const double sx = static_cast<double>(image.width) / width;
    const double sy = static_cast<double>(image.height) / height;
    auto coord = [](int dst, double scale, int limit, int& i0, int& i1, double& f) {
        double src = (dst + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(limit - 1));
        i0 = static_cast<int>(std::floor(src));
        i1 = std::min(i0 + 1, limit - 1);
        f = src - i0;
    };
    const int c = image.channels;
    for (int y = 0; y < height; ++y) {
        int y0, y1;
        double fy;
        coord(y, sy, image.height, y0, y1, fy);
        for (int x = 0; x < width; ++x) {
            int x0, x1;
            double fx;
            coord(x, sx, image.width, x0, x1, fx);
            for (int k = 0; k < c; ++k) {
                auto px = [&](int yy, int xx) {
                    return static_cast<double>(image.pixels[(static_cast<std::size_t>(yy) * image.width + xx) * c + k]);
                };
                const double top = px(y0, x0) * (1 - fx) + px(y0, x1) * fx;
                const double bottom = px(y1, x0) * (1 - fx) + px(y1, x1) * fx;
                const double v = top * (1 - fy) + bottom * fy;
                out.pixels[(static_cast<std::size_t>(y) * width + x) * c + k] =
                    static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return out;
}

Tensor<float> image_to_tensor(const Image& image, int side) {
    check_image(image);
    if (side < 1) throw ShapeError("target side must be positive");
    const Image* src = &image;
    Image scaled;
    if (image.width != side || image.height != side) {
        int w, h;
        if (image.width <= image.height) {
            w = side;
            h = static_cast<int>(std::lround(static_cast<double>(image.height) * side / image.width));
        } else {
            h = side;
            w = static_cast<int>(std::lround(static_cast<double>(image.width) * side / image.height));
        }
        if (w < 1 || h < 1) throw ShapeError("image collapses below one pixel when scaled");
        scaled = resize_bilinear(image, w, h);
        src = &scaled;
    }
    const int x0 = (src->width - side) / 2;
    const int y0 = (src->height - side) / 2;
    Tensor<float> out({3, side, side});
    auto data = out.mutable_data();
    const std::size_t plane = static_cast<std::size_t>(side) * side;
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            const std::size_t s = (static_cast<std::size_t>(y + y0) * src->width + (x + x0)) * src->channels;
            for (int k = 0; k < 3; ++k) {
                const std::uint8_t p = src->pixels[s + (src->channels == 3 ? k : 0)];
                data[k * plane + static_cast<std::size_t>(y) * side + x] = static_cast<float>(p) / 255.0f;
            }
        }
    }
    return out;
}

Image tensor_to_image(const Tensor<float>& chw) {
    Shape s = chw.shape();
    if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
    if (s.size() != 3 || s[0] != 3) throw ShapeError("expected a 3×H×W tensor, got " + shape_str(chw.shape()));
    Image img;
    img.height = static_cast<int>(s[1]);
    img.width = static_cast<int>(s[2]);
    img.channels = 3;
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
    const auto data = chw.data();
    for (std::size_t i = 0; i < plane; ++i) {
        for (int k = 0; k < 3; ++k) {
            const float v = std::clamp(data[k * plane + i], 0.0f, 1.0f);
            img.pixels[i * 3 + k] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
        }
    }
    return img;
}

}  // namespace cortex
