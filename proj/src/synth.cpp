// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0

#include "cortex/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "cortex/error.hpp"
#include "cortex/image.hpp"

namespace cortex {

namespace fs = std::filesystem;

namespace {

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t hash(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x243f6a8885a308d3ULL;
    for (auto p : parts) h = mix(h ^ mix(p));
    return h;
}



constexpr double kTau = 2 * std::numbers::pi;

struct Clip {
    int label = 0;
    std::int64_t frames = 0;
    // background
    double bg_x = 0, bg_y = 0, bg_vx = 0, bg_vy = 0;
    std::uint64_t texture = 0;
    // object
    double radius = 0;
    double ob_x = 0, ob_y = 0, ob_vx = 0, ob_vy = 0;
    double color[3] = {1, 1, 1};
};

Clip make_clip(const SynthSpec& spec, std::int64_t index) {
    std::mt19937_64 rng(hash({spec.seed, static_cast<std::uint64_t>(index), 1}));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Clip c;
    const bool skewed = u(rng) < spec.class_skew;
    c.label = skewed ? 0 : static_cast<int>(index % spec.classes);
    c.frames = std::uniform_int_distribution<std::int64_t>(spec.min_frames, spec.max_frames)(rng);

    const double side = spec.side;
    c.texture = rng();
    c.bg_x = u(rng) * side;
    c.bg_y = u(rng) * side;
    const double pan = spec.pan_speed_min + u(rng) * (spec.pan_speed_max - spec.pan_speed_min);
    const double pan_dir = u(rng) * kTau;
    c.bg_vx = pan * std::cos(pan_dir);
    c.bg_vy = pan * std::sin(pan_dir);

    c.radius = std::max(2.0, 0.16 * side);
    c.ob_x = c.radius + u(rng) * (side - 2 * c.radius);
    c.ob_y = c.radius + u(rng) * (side - 2 * c.radius);
    const double speed = spec.object_speed_min + u(rng) * (spec.object_speed_max - spec.object_speed_min);
    const double dir = u(rng) * kTau;
    c.ob_vx = speed * std::cos(dir);
    c.ob_vy = speed * std::sin(dir);
    const int dark = static_cast<int>(u(rng) * 3) % 3;
    for (int k = 0; k < 3; ++k) c.color[k] = k == dark ? 0.05 + 0.2 * u(rng) : 0.8 + 0.2 * u(rng);
    return c;
}

// Position after elastic bounces inside [lo, hi].
double reflect(double p, double lo, double hi) {
    const double span = hi - lo;
    if (span <= 0) return lo;
    double q = std::fmod(p - lo, 2 * span);
    if (q < 0) q += 2 * span;
    return lo + (q <= span ? q : 2 * span - q);
}

double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

// Periodic value noise (period = `cells` lattice cells) with smoothstep
// interpolation; u, v in cell units.
double value_noise(std::uint64_t seed, int cells, double u, double v) {
    const double fu = std::floor(u), fv = std::floor(v);
    const double tu = u - fu, tv = v - fv;
    const double su = tu * tu * (3 - 2 * tu), sv = tv * tv * (3 - 2 * tv);
    auto wrap = [cells](double x) {
        long long i = static_cast<long long>(x) % cells;
        return static_cast<std::uint64_t>(i < 0 ? i + cells : i);
    };
    const std::uint64_t i0 = wrap(fu), i1 = wrap(fu + 1), j0 = wrap(fv), j1 = wrap(fv + 1);
    auto at = [&](std::uint64_t i, std::uint64_t j) { return unit(hash({seed, i, j})); };
    const double a = at(i0, j0) * (1 - su) + at(i1, j0) * su;
    const double b = at(i0, j1) * (1 - su) + at(i1, j1) * su;
    return a * (1 - sv) + b * sv;
}

bool inside_shape(int shape, double dx, double dy, double r) {
    const double ax = std::abs(dx), ay = std::abs(dy);
    switch (shape) {
        case 0:  // disc
            return dx * dx + dy * dy <= r * r;
        case 1:  // square
            return std::max(ax, ay) <= 0.8 * r;
        case 2: {  // triangle, apex up
            const double h = 1.6 * r;
            const double y = dy + 0.5 * h;  // depth below the apex
            return y >= 0 && y <= h && ax <= 0.55 * y * (2 * r / h);
        }
        case 3:  // cross
            return (ax <= 0.3 * r && ay <= r) || (ay <= 0.3 * r && ax <= r);
        case 4: {  // ring
            const double d2 = dx * dx + dy * dy;
            return d2 <= r * r && d2 >= 0.36 * r * r;
        }
        case 5:  // diamond
            return ax + ay <= r;
        case 6:  // horizontal bar
            return ax <= r && ay <= 0.35 * r;
        default:  // vertical bar
            return ay <= r && ax <= 0.35 * r;
    }
}

std::uint8_t quantize(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

Image render_image(const SynthSpec& spec, std::int64_t index, std::int64_t frame) {
    const Clip c = make_clip(spec, index);
    const int side = spec.side;
    const double t = static_cast<double>(frame - 1);
    Image img;
    img.width = img.height = side;
    img.channels = 3;
    img.pixels.resize(static_cast<std::size_t>(side) * side * 3);

    const double ox = c.bg_x + c.bg_vx * t, oy = c.bg_y + c.bg_vy * t;
    const double cx = reflect(c.ob_x + c.ob_vx * t, c.radius, side - c.radius);
    const double cy = reflect(c.ob_y + c.ob_vy * t, c.radius, side - c.radius);
    constexpr int coarse = 4, fine = 8;
    constexpr int ss = 4;  // supersampling per axis for the shape edge

    std::mt19937_64 noise_rng(hash({spec.seed, static_cast<std::uint64_t>(index), static_cast<std::uint64_t>(frame), 2}));
    std::normal_distribution<double> noise(0.0, spec.noise > 0 ? spec.noise : 1.0);

    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            const double px = x + 0.5 + ox, py = y + 0.5 + oy;
            double coverage = 0;
            if (spec.object && std::abs(x + 0.5 - cx) <= c.radius + 1 && std::abs(y + 0.5 - cy) <= c.radius + 1) {
                int hits = 0;
                for (int sy = 0; sy < ss; ++sy) {
                    for (int sx = 0; sx < ss; ++sx) {
                        const double dx = x + (sx + 0.5) / ss - cx, dy = y + (sy + 0.5) / ss - cy;
                        hits += inside_shape(c.label % static_cast<int>(shape_names().size()), dx, dy, c.radius);
                    }
                }
                coverage = static_cast<double>(hits) / (ss * ss);
            }
            for (int k = 0; k < 3; ++k) {
                const std::uint64_t s = c.texture + static_cast<std::uint64_t>(k);
                const double bg = 0.1 + 0.55 * (0.65 * value_noise(s, coarse, px * coarse / side, py * coarse / side) +
                                                0.35 * value_noise(s ^ 0x5bd1e995ULL, fine, px * fine / side,
                                                                   py * fine / side));
                double v = bg * (1 - coverage) + c.color[k] * coverage;
                if (spec.noise > 0) v += noise(noise_rng);
                img.pixels[(static_cast<std::size_t>(y) * side + x) * 3 + k] = quantize(v);
            }
        }
    }
    return img;
}

Tensor<float> box_blur(const Tensor<float>& frame, int radius) {
    if (radius <= 0) return frame.detach();
    const std::int64_t c = frame.dim(-3), h = frame.dim(-2), w = frame.dim(-1);
    Tensor<float> out(frame.shape());
    const auto in = frame.data();
    auto o = out.mutable_data();
    for (std::int64_t k = 0; k < c; ++k) {
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                double s = 0;
                for (int dy = -radius; dy <= radius; ++dy) {
                    const std::int64_t yy = std::clamp<std::int64_t>(y + dy, 0, h - 1);
                    for (int dx = -radius; dx <= radius; ++dx) {
                        const std::int64_t xx = std::clamp<std::int64_t>(x + dx, 0, w - 1);
                        s += in[static_cast<std::size_t>((k * h + yy) * w + xx)];
                    }
                }
                o[static_cast<std::size_t>((k * h + y) * w + x)] =
                    static_cast<float>(s / ((2 * radius + 1) * (2 * radius + 1)));
            }
        }
    }
    return out;
}

Tensor<float> perturb_one(const Tensor<float>& frame, const Perturbation& p, std::int64_t index) {
    if (p.kind == PerturbKind::blur) return box_blur(frame, static_cast<int>(std::lround(p.amount)));
    Tensor<float> out = frame.detach();
    if (p.amount <= 0) return out;
    std::mt19937_64 rng(hash({p.seed, static_cast<std::uint64_t>(index), 3}));
    std::normal_distribution<double> noise(0.0, p.amount);
    for (auto& v : out.mutable_data()) v = static_cast<float>(std::clamp(v + noise(rng), 0.0, 1.0));
    return out;
}

}  // namespace

void SynthSpec::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("synthetic dataset: " + m); };
    if (videos < 1) fail("videos must be >= 1");
    if (classes < 1 || classes > static_cast<int>(shape_names().size())) {
        fail("classes must lie in [1, " + std::to_string(shape_names().size()) + "]");
    }
    if (min_frames < 1 || max_frames < min_frames) fail("frame range must satisfy 1 <= min <= max");
    if (side < 16) fail("side must be >= 16");
    if (object_speed_min < 0 || object_speed_max < object_speed_min || object_speed_max > side / 4.0) {
        fail("object speed range must satisfy 0 <= min <= max <= side/4");
    }
    if (pan_speed_min < 0 || pan_speed_max < pan_speed_min || pan_speed_max > side / 4.0) {
        fail("panning speed range must satisfy 0 <= min <= max <= side/4");
    }
    if (noise < 0) fail("noise must be >= 0");
    if (class_skew < 0 || class_skew > 1) fail("class skew must lie in [0, 1]");
    if (format != "ppm" && format != "png") fail("format must be ppm or png");
}

const std::vector<std::string>& shape_names() {
    static const std::vector<std::string> names{"disc", "square", "triangle", "cross", "ring", "diamond", "hbar", "vbar"};
    return names;
}

std::vector<VideoRecord> synth_records(const SynthSpec& spec, const fs::path& root) {
    spec.validate();
    std::vector<VideoRecord> out;
    for (std::int64_t i = 0; i < spec.videos; ++i) {
        const Clip c = make_clip(spec, i);
        char name[32];
        std::snprintf(name, sizeof(name), "video_%04lld", static_cast<long long>(i + 1));
        VideoRecord r;
        r.id = r.parent = i + 1;
        r.label = c.label;
        r.class_name = std::to_string(c.label);
        r.path = root / name;
        r.frames = c.frames;
        out.push_back(std::move(r));
    }
    return out;
}

Tensor<float> render_frame(const SynthSpec& spec, std::int64_t index, std::int64_t frame) {
    if (index < 0 || index >= spec.videos) throw ConfigError("video index out of range");
    const Image img = render_image(spec, index, frame);
    return image_to_tensor(img, spec.side);
}

FrameSource::Loader synth_loader(const SynthSpec& spec) {
    spec.validate();
    return [spec](const VideoRecord& r, std::int64_t frame) {
        return render_frame(spec, r.parent - 1, r.offset + (frame - 1) * r.stride + 1);
    };
}

std::vector<VideoRecord> generate(const SynthSpec& spec, const fs::path& root) {
    auto records = synth_records(spec, root);
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        fs::create_directories(r.path, ec);
        if (ec) throw IoError("cannot create " + r.path.string() + ": " + ec.message());
        for (std::int64_t k = 1; k <= r.frames; ++k) {
            char name[32];
            std::snprintf(name, sizeof(name), "%05lld.%s", static_cast<long long>(k), spec.format.c_str());
            write_image(r.path / name, render_image(spec, static_cast<std::int64_t>(i), k));
        }
    }
    write_manifest(root / "manifest.jsonl", records, root);
    return records;
}

std::vector<Tensor<float>> perturb_stream(std::span<const Tensor<float>> frames, const Perturbation& p,
                                          std::int64_t first, std::int64_t last) {
    std::vector<std::int64_t> idx;
    if (last >= first) {
        if (first < 1 || last > static_cast<std::int64_t>(frames.size())) {
            throw ConfigError("perturbation interval [" + std::to_string(first) + ", " + std::to_string(last) +
                              "] lies outside a clip of " + std::to_string(frames.size()) + " frames");
        }
        for (std::int64_t k = first; k <= last; ++k) idx.push_back(k);
    }
    return perturb_frames(frames, p, idx);
}

std::vector<Tensor<float>> perturb_frames(std::span<const Tensor<float>> frames, const Perturbation& p,
                                          std::span<const std::int64_t> indices) {
    if (p.amount < 0) throw ConfigError("perturbation amount must be >= 0");
    std::vector<std::uint8_t> hit(frames.size(), 0);
    for (auto k : indices) {
        if (k < 1 || k > static_cast<std::int64_t>(frames.size())) throw ConfigError("perturbed frame index out of range");
        hit[static_cast<std::size_t>(k - 1)] = 1;
    }
    std::vector<Tensor<float>> out;
    out.reserve(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
        out.push_back(hit[i] ? perturb_one(frames[i], p, static_cast<std::int64_t>(i) + 1) : frames[i].detach());
    }
    return out;
}

}  // namespace cortex
