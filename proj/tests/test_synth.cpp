// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <numeric>

#include "cortex/error.hpp"
#include "cortex/losses.hpp"
#include "cortex/synth.hpp"

using namespace cortex;
namespace fs = std::filesystem;

namespace {

SynthSpec small_spec() {
    SynthSpec s;
    s.videos = 4;
    s.classes = 2;
    s.min_frames = s.max_frames = 20;
    s.side = 32;
    s.seed = 7;
    return s;
}

std::vector<Tensor<float>> clip(const SynthSpec& s, std::int64_t index) {
    std::vector<Tensor<float>> out;
    const auto recs = synth_records(s);
    for (std::int64_t k = 1; k <= recs[static_cast<std::size_t>(index)].frames; ++k) {
        out.push_back(render_frame(s, index, k));
    }
    return out;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool same(const Tensor<float>& a, const Tensor<float>& b) {
    return std::equal(a.data().begin(), a.data().end(), b.data().begin(), b.data().end());
}

}  // namespace

TEST_CASE("generation is byte-for-byte deterministic", "[synth]") {
    const auto base = fs::temp_directory_path() / "cortex_test_synth";
    fs::remove_all(base);
    const auto a = generate(small_spec(), base / "a");
    const auto b = generate(small_spec(), base / "b");
    REQUIRE(a.size() == 4);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].frames == 20);
        const auto fa = list_frames(a[i].path), fb = list_frames(b[i].path);
        REQUIRE(fa.size() == 20);
        REQUIRE(fb.size() == 20);
        for (std::size_t k = 0; k < fa.size(); ++k) CHECK(slurp(fa[k]) == slurp(fb[k]));
    }
    CHECK(slurp(base / "a" / "manifest.jsonl").size() > 0);

    // rescanning reproduces the records, and disk frames equal in-memory frames
    const auto scanned = scan_dataset(base / "a");
    REQUIRE(scanned.size() == a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(scanned[i].label == a[i].label);
        CHECK(scanned[i].frames == a[i].frames);
    }
    FrameSource disk(scanned, 32);
    FrameSource memory(scanned, 32, synth_loader(small_spec()));
    for (std::int64_t v = 0; v < 4; ++v) {
        for (std::int64_t k : {1, 7, 20}) CHECK(same(disk.frame(v, k), memory.frame(v, k)));
    }

    auto png = small_spec();
    png.format = "png";
    png.videos = 1;
    generate(png, base / "png");
    FrameSource png_disk(scan_dataset(base / "png"), 32);
    CHECK(same(png_disk.frame(0, 5), render_frame(png, 0, 5)));
}

TEST_CASE("labels and lengths", "[synth]") {
    auto s = small_spec();
    s.videos = 9;
    s.classes = 3;
    auto recs = synth_records(s);
    for (std::size_t i = 0; i < recs.size(); ++i) CHECK(recs[i].label == static_cast<int>(i % 3));

    s.min_frames = 10;
    s.max_frames = 30;
    for (const auto& r : synth_records(s)) {
        CHECK(r.frames >= 10);
        CHECK(r.frames <= 30);
    }

    s.class_skew = 1.0;
    for (const auto& r : synth_records(s)) CHECK(r.label == 0);

    s = small_spec();
    s.classes = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = small_spec();
    s.side = 8;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = small_spec();
    s.pan_speed_max = 100;
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("seeds", "[synth]") {
    auto s = small_spec();
    const auto a = render_frame(s, 1, 3);
    CHECK(same(a, render_frame(s, 1, 3)));
    s.seed = 8;
    CHECK_FALSE(same(a, render_frame(s, 1, 3)));
}

TEST_CASE("static scenes", "[synth]") {
    auto s = small_spec();
    s.object_speed_min = s.object_speed_max = 0;
    s.pan_speed_min = s.pan_speed_max = 0;
    const auto frames = clip(s, 0);
    for (std::size_t k = 1; k < frames.size(); ++k) {
        CHECK(same(frames[k], frames[0]));
        CHECK(panning_speed(frames[k - 1], frames[k]) == 0.0);
    }
}

TEST_CASE("pure panning moves at a steady rate", "[synth]") {
    auto s = small_spec();
    s.min_frames = s.max_frames = 30;
    s.object = false;
    s.pan_speed_min = s.pan_speed_max = 2;
    for (std::int64_t v = 0; v < s.videos; ++v) {
        const auto frames = clip(s, v);
        std::vector<double> speeds;
        for (std::size_t k = 1; k < frames.size(); ++k) speeds.push_back(panning_speed(frames[k - 1], frames[k]));
        const double mean = std::accumulate(speeds.begin(), speeds.end(), 0.0) / static_cast<double>(speeds.size());
        for (double sp : speeds) {
            CHECK(sp > 0);
            CHECK(std::abs(sp - mean) <= 0.05 * mean);
        }
    }
}

TEST_CASE("moving content changes every frame", "[synth]") {
    auto s = small_spec();
    for (std::int64_t v = 0; v < s.videos; ++v) {
        const auto frames = clip(s, v);
        for (std::size_t k = 1; k < frames.size(); ++k) CHECK(panning_speed(frames[k - 1], frames[k]) > 0);
    }
    // a static shape over a panning background still leaves every pair distinct
    s.object_speed_min = s.object_speed_max = 0;
    for (std::int64_t v = 0; v < s.videos; ++v) {
        const auto frames = clip(s, v);
        for (std::size_t k = 1; k < frames.size(); ++k) CHECK(panning_speed(frames[k - 1], frames[k]) > 0);
    }
}

TEST_CASE("perturbations", "[synth]") {
    const auto frames = clip(small_spec(), 1);
    REQUIRE(frames.size() == 20);
    const auto none = perturb_stream(frames, Perturbation{PerturbKind::blur, 2, 0}, 5, 4);
    for (std::size_t k = 0; k < frames.size(); ++k) CHECK(same(none[k], frames[k]));

    const auto zero = perturb_stream(frames, Perturbation{PerturbKind::blur, 0, 0}, 1, 20);
    for (std::size_t k = 0; k < frames.size(); ++k) CHECK(same(zero[k], frames[k]));

    auto long_spec = small_spec();
    long_spec.min_frames = long_spec.max_frames = 30;
    const auto longer = clip(long_spec, 0);
    const auto blurred = perturb_stream(longer, Perturbation{PerturbKind::blur, 2, 0}, 20, 25);
    for (std::size_t k = 0; k < longer.size(); ++k) {
        const double d = mse(longer[k], blurred[k]).item();
        if (k + 1 >= 20 && k + 1 <= 25) {
            CHECK(d > 0);
        } else {
            CHECK(d == 0);
        }
    }

    const std::vector<std::int64_t> picks{2, 9};
    const auto noisy = perturb_frames(frames, Perturbation{PerturbKind::noise, 0.1, 3}, picks);
    for (std::size_t k = 0; k < frames.size(); ++k) {
        const bool hit = k + 1 == 2 || k + 1 == 9;
        CHECK(same(noisy[k], frames[k]) == !hit);
        for (float v : noisy[k].data()) CHECK((v >= 0.0f && v <= 1.0f));
    }
    CHECK_THROWS_AS(perturb_stream(frames, Perturbation{}, 0, 3), ConfigError);
    CHECK_THROWS_AS(perturb_stream(frames, Perturbation{}, 15, 21), ConfigError);
}
