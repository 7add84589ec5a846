// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0

#include "cortex/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <set>

#include <boost/math/distributions/students_t.hpp>

#include "cortex/error.hpp"
#include "cortex/image.hpp"

namespace cortex {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<fs::path> list_frames(const fs::path& dir) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw IoError("frame directory not found: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = entry.path().extension().string();
        if (ext == ".png" || ext == ".ppm" || ext == ".pgm") out.push_back(entry.path());
    }
    if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

struct RawRecord {
    std::int64_t id = 0;
    std::optional<int> label;
    std::string class_name;
    fs::path path;
    std::int64_t frames = 0;
    std::int64_t offset = 0;
    std::int64_t stride = 1;
};

std::vector<RawRecord> read_manifest(const fs::path& root, const fs::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw IoError("cannot read manifest " + manifest.string());
    std::vector<RawRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = manifest.string() + ":" + std::to_string(lineno);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw FormatError(where + ": " + e.what());
        }
        try {
            RawRecord r;
            r.id = j.at("id").get<std::int64_t>();
            const auto& cls = j.at("class");
            if (cls.is_number_integer()) {
                r.label = cls.get<int>();
                if (*r.label < 0) throw FormatError(where + ": negative class index");
                r.class_name = std::to_string(*r.label);
            } else {
                r.class_name = cls.get<std::string>();
            }
            r.path = root / j.at("path").get<std::string>();
            r.frames = j.at("frames").get<std::int64_t>();
            r.offset = j.value("offset", std::int64_t{0});
            r.stride = j.value("stride", std::int64_t{1});
            if (r.frames < 1 || r.offset < 0 || r.stride < 1) throw FormatError(where + ": invalid frame range");
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw FormatError(where + ": " + e.what());
        }
    }
    return out;
}

std::vector<RawRecord> walk_root(const fs::path& root) {
    std::vector<RawRecord> out;
    std::vector<fs::path> children;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory()) children.push_back(e.path());
    }
    std::sort(children.begin(), children.end());
    for (const auto& child : children) {
        if (!list_frames(child).empty()) {
            // a video directly under the root carries no class
            RawRecord r;
            r.class_name = "unlabeled";
            r.path = child;
            out.push_back(std::move(r));
            continue;
        }
        std::vector<fs::path> videos;
        for (const auto& e : fs::directory_iterator(child)) {
            if (e.is_directory()) videos.push_back(e.path());
        }
        std::sort(videos.begin(), videos.end());
        for (const auto& v : videos) {
            RawRecord r;
            r.class_name = child.filename().string();
            r.path = v;
            out.push_back(std::move(r));
        }
    }
    std::int64_t id = 0;
    for (auto& r : out) {
        r.id = ++id;
        r.frames = static_cast<std::int64_t>(list_frames(r.path).size());
        if (r.frames == 0) throw IoError("video directory holds no frames: " + r.path.string());
    }
    return out;
}

}  // namespace

std::vector<VideoRecord> scan_dataset(const fs::path& root, const fs::path& manifest) {
    std::error_code ec;
    if (!fs::is_directory(root, ec)) throw IoError("dataset root not found: " + root.string());
    fs::path mf = manifest;
    if (mf.empty() && fs::exists(root / "manifest.jsonl")) mf = root / "manifest.jsonl";
    std::vector<RawRecord> raw = mf.empty() ? walk_root(root) : read_manifest(root, mf);
    if (raw.empty()) throw IoError("no videos found under " + root.string());

    std::set<std::int64_t> ids;
    for (const auto& r : raw) {
        if (!ids.insert(r.id).second) throw FormatError("duplicate video id " + std::to_string(r.id));
    }
    const bool numeric = raw.front().label.has_value();
    std::set<std::string> names;
    for (const auto& r : raw) {
        if (r.label.has_value() != numeric) throw FormatError("manifest mixes numeric and named classes");
        names.insert(r.class_name);
    }
    const std::vector<std::string> ordered(names.begin(), names.end());

    std::vector<VideoRecord> out;
    for (const auto& r : raw) {
        const auto available = static_cast<std::int64_t>(list_frames(r.path).size());
        if (r.offset + (r.frames - 1) * r.stride >= available) {
            throw IoError("video " + r.path.string() + " lists " + std::to_string(r.frames) + " frames, directory holds " +
                          std::to_string(available));
        }
        VideoRecord v;
        v.label = numeric ? *r.label
                          : static_cast<int>(std::lower_bound(ordered.begin(), ordered.end(), r.class_name) -
                                             ordered.begin());
        v.class_name = r.class_name;
        v.path = r.path;
        v.frames = r.frames;
        v.offset = r.offset;
        v.stride = r.stride;
        out.push_back(std::move(v));
    }
    std::stable_sort(out.begin(), out.end(), [](const VideoRecord& a, const VideoRecord& b) {
        return a.path.string() < b.path.string();
    });
    std::int64_t id = 0;
    for (auto& v : out) v.id = v.parent = ++id;
    return out;
}

void write_manifest(const fs::path& path, std::span<const VideoRecord> records, const fs::path& root) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw IoError("cannot write manifest " + path.string());
        for (const auto& r : records) {
            json j;
            j["id"] = r.id;
            const bool named = !r.class_name.empty() && r.class_name != std::to_string(r.label);
            if (named) {
                j["class"] = r.class_name;
            } else {
                j["class"] = r.label;
            }
            j["path"] = root.empty() ? r.path.generic_string() : r.path.lexically_relative(root).generic_string();
            j["frames"] = r.frames;
            if (r.offset != 0) j["offset"] = r.offset;
            if (r.stride != 1) j["stride"] = r.stride;
            out << j.dump() << '\n';
        }
        if (!out) throw IoError("cannot write manifest " + path.string());
    }
    fs::rename(tmp, path);
}

int class_count(std::span<const VideoRecord> records) {
    int k = 0;
    for (const auto& r : records) k = std::max(k, r.label + 1);
    return k;
}

std::vector<std::int64_t> frames_per_class(std::span<const VideoRecord> records, int classes) {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(classes), 0);
    for (const auto& r : records) {
        if (r.label < 0 || r.label >= classes) {
            throw ConfigError("class index " + std::to_string(r.label) + " outside [0, " + std::to_string(classes) + ")");
        }
        counts[static_cast<std::size_t>(r.label)] += r.frames;
    }
    return counts;
}

DurationInterval duration_interval(std::span<const double> lengths, double confidence) {
    const std::size_t n = lengths.size();
    if (n < 3) throw ConfigError("duration interval needs at least 3 videos, got " + std::to_string(n));
    if (!(confidence > 0 && confidence < 1)) throw ConfigError("confidence must lie in (0, 1)");
    DurationInterval d;
    d.mean = std::accumulate(lengths.begin(), lengths.end(), 0.0) / static_cast<double>(n);
    double ss = 0;
    for (double v : lengths) ss += (v - d.mean) * (v - d.mean);
    d.stddev = std::sqrt(ss / static_cast<double>(n - 1));
    boost::math::students_t dist(static_cast<double>(n - 1));
    d.quantile = boost::math::quantile(dist, 0.5 + confidence / 2);
    d.lower = d.mean - d.quantile * d.stddev;
    d.upper = d.mean + d.quantile * d.stddev;
    return d;
}

OutlierResult remove_duration_outliers(std::span<const VideoRecord> records, double confidence) {
    std::vector<double> lengths;
    for (const auto& r : records) lengths.push_back(static_cast<double>(r.frames));
    OutlierResult res;
    res.interval = duration_interval(lengths, confidence);
    const auto cap = static_cast<std::int64_t>(std::floor(res.interval.upper));
    for (const auto& r : records) {
        if (static_cast<double>(r.frames) < res.interval.lower) {
            ++res.removed;
            continue;
        }
        VideoRecord v = r;
        if (v.frames > cap) {
            v.frames = cap;
            ++res.trimmed;
        }
        v.id = static_cast<std::int64_t>(res.records.size()) + 1;
        res.records.push_back(std::move(v));
    }
    return res;
}

FrameGrid build_grid(std::span<const VideoRecord> records, std::int64_t beta) {
    if (beta < 1) throw ConfigError("grid height must be >= 1");
    if (records.empty()) throw ConfigError("cannot build a grid from an empty dataset");
    FrameGrid g;
    g.rows = beta;
    for (const auto& r : records) {
        if (r.frames < 1) throw ConfigError("video " + std::to_string(r.id) + " has no frames");
        g.frames += r.frames;
    }
    if (g.frames < beta) {
        throw ConfigError("dataset has " + std::to_string(g.frames) + " frames, fewer than the grid height " +
                          std::to_string(beta));
    }
    g.cols = (g.frames + beta - 1) / beta;
    g.cells.reserve(static_cast<std::size_t>(g.rows * g.cols));
    for (std::size_t v = 0; v < records.size(); ++v) {
        for (std::int64_t k = 1; k <= records[v].frames; ++k) {
            g.cells.push_back(GridCell{static_cast<std::int64_t>(v), k, false});
        }
    }
    const std::int64_t first = records.front().frames;
    for (std::int64_t p = 0; p < g.padding_cells(); ++p) g.cells.push_back(GridCell{0, p % first + 1, true});
    return g;
}

std::vector<ChunkLayout> chunk_layouts(const FrameGrid& grid, std::span<const VideoRecord> records, std::int64_t T) {
    if (T < 1) throw ConfigError("chunk length must be >= 1");
    std::vector<ChunkLayout> out;
    for (std::int64_t start = 0; start < grid.cols; start += T) {
        ChunkLayout c;
        c.start = start;
        c.length = std::min(T, grid.cols - start);
        c.rows = grid.rows;
        const std::size_t n = static_cast<std::size_t>(c.length * c.rows);
        c.cells.resize(n);
        c.labels.resize(n);
        c.match.assign(n, 0);
        c.video_end.assign(n, 0);
        c.reset.assign(n, 0);
        c.padding.assign(n, 0);
        for (std::int64_t t = 0; t < c.length; ++t) {
            const std::int64_t col = start + t;
            for (std::int64_t r = 0; r < c.rows; ++r) {
                const auto& cell = grid.at(r, col);
                const auto& rec = records[static_cast<std::size_t>(cell.record)];
                const std::size_t i = c.index(t, r);
                c.cells[i] = cell;
                c.labels[i] = rec.label;
                c.padding[i] = cell.padding;
                c.reset[i] = cell.frame == 1 || col == 0;
                c.video_end[i] = !cell.padding && cell.frame == rec.frames;
                c.match[i] = !cell.padding && !c.reset[i] && !c.video_end[i] && col + 1 < grid.cols;
            }
        }
        const std::int64_t after = start + c.length;
        if (after < grid.cols) {
            std::vector<GridCell> next;
            for (std::int64_t r = 0; r < c.rows; ++r) next.push_back(grid.at(r, after));
            c.next = std::move(next);
        }
        out.push_back(std::move(c));
    }
    return out;
}

SplitPlan matchnet_split(std::span<const VideoRecord> records, std::int64_t val_frames) {
    if (val_frames < 1) throw ConfigError("validation length must be >= 1");
    SplitPlan plan;
    plan.mode = SplitMode::matchnet;
    for (const auto& r : records) {
        if (r.frames <= val_frames) {
            throw ConfigError("video " + r.path.string() + " has " + std::to_string(r.frames) +
                              " frames; the next-frame split needs more than " + std::to_string(val_frames));
        }
        VideoRecord train = r, val = r;
        train.frames = r.frames - val_frames;
        val.frames = val_frames;
        val.offset = r.offset + train.frames * r.stride;
        train.parent = val.parent = r.id;
        train.id = static_cast<std::int64_t>(plan.train.size()) + 1;
        val.id = static_cast<std::int64_t>(plan.val.size()) + 1;
        plan.train.push_back(std::move(train));
        plan.val.push_back(std::move(val));
    }
    return plan;
}

SplitPlan temponet_split(std::span<const VideoRecord> records, int subsamples) {
    if (subsamples < 2) throw ConfigError("subsample count must be >= 2");
    SplitPlan plan;
    plan.mode = SplitMode::temponet;
    plan.subsamples = subsamples;
    for (const auto& r : records) {
        if (r.frames < subsamples) {
            throw ConfigError("video " + r.path.string() + " has " + std::to_string(r.frames) + " frames, fewer than " +
                              std::to_string(subsamples) + " subsamples");
        }
        for (int s = 1; s <= subsamples; ++s) {
            VideoRecord v = r;
            v.offset = r.offset + (s - 1) * r.stride;
            v.stride = r.stride * subsamples;
            v.frames = (r.frames - s) / subsamples + 1;
            v.parent = r.id;
            auto& dest = s < subsamples ? plan.train : plan.val;
            v.id = static_cast<std::int64_t>(dest.size()) + 1;
            dest.push_back(std::move(v));
        }
    }
    return plan;
}

json to_json(const SplitPlan& plan, const fs::path& root) {
    auto records = [&](const std::vector<VideoRecord>& list) {
        json arr = json::array();
        for (const auto& r : list) {
            arr.push_back({{"id", r.id},
                           {"parent", r.parent},
                           {"class", r.label},
                           {"path", root.empty() ? r.path.generic_string() : r.path.lexically_relative(root).generic_string()},
                           {"frames", r.frames},
                           {"offset", r.offset},
                           {"stride", r.stride}});
        }
        return arr;
    };
    json j;
    j["mode"] = plan.mode == SplitMode::matchnet ? "matchnet" : "temponet";
    if (plan.mode == SplitMode::temponet) j["subsamples"] = plan.subsamples;
    j["train"] = records(plan.train);
    j["val"] = records(plan.val);
    return j;
}

double expected_video_changes(double beta, double T, double mean_length) {
    if (!(mean_length > 0)) throw ConfigError("mean video length must be positive");
    return beta * T / mean_length;
}

Tensor<float> load_frame(const VideoRecord& record, std::int64_t frame, int side) {
    if (frame < 1 || frame > record.frames) {
        throw ConfigError("frame " + std::to_string(frame) + " outside video of " + std::to_string(record.frames));
    }
    const auto files = list_frames(record.path);
    const std::int64_t idx = record.offset + (frame - 1) * record.stride;
    if (idx >= static_cast<std::int64_t>(files.size())) {
        throw IoError("missing frame " + std::to_string(idx + 1) + " in " + record.path.string());
    }
    return image_to_tensor(read_image(files[static_cast<std::size_t>(idx)]), side);
}

FrameSource::FrameSource(std::vector<VideoRecord> records, int side) : records_(std::move(records)), side_(side) {
    auto listings = std::make_shared<std::map<fs::path, std::vector<fs::path>>>();
    loader_ = [listings, side](const VideoRecord& r, std::int64_t frame) {
        auto it = listings->find(r.path);
        if (it == listings->end()) it = listings->emplace(r.path, list_frames(r.path)).first;
        const std::int64_t idx = r.offset + (frame - 1) * r.stride;
        if (idx >= static_cast<std::int64_t>(it->second.size())) {
            throw IoError("missing frame " + std::to_string(idx + 1) + " in " + r.path.string());
        }
        return image_to_tensor(read_image(it->second[static_cast<std::size_t>(idx)]), side);
    };
}

FrameSource::FrameSource(std::vector<VideoRecord> records, int side, Loader loader)
    : records_(std::move(records)), side_(side), loader_(std::move(loader)) {}

Tensor<float> FrameSource::frame(std::int64_t record, std::int64_t frame) {
    std::lock_guard lock(mutex_);
    const auto key = std::make_pair(record, frame);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    const auto& rec = records_.at(static_cast<std::size_t>(record));
    if (frame < 1 || frame > rec.frames) {
        throw ConfigError("frame " + std::to_string(frame) + " outside video of " + std::to_string(rec.frames));
    }
    Tensor<float> t = loader_(rec, frame);
    if (t.shape() != Shape{3, side_, side_}) {
        throw ShapeError("frame loader returned " + shape_str(t.shape()) + ", expected 3×" + std::to_string(side_) +
                         "×" + std::to_string(side_));
    }
    cache_.emplace(key, t);
    return t;
}

Tensor<float> FrameSource::batch(std::span<const GridCell> cells) {
    const std::int64_t item = 3LL * side_ * side_;
    Tensor<float> out({static_cast<std::int64_t>(cells.size()), 3, side_, side_});
    auto data = out.mutable_data();
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto f = frame(cells[i].record, cells[i].frame);
        std::copy(f.data().begin(), f.data().end(), data.begin() + static_cast<std::ptrdiff_t>(i * item));
    }
    return out;
}

}  // namespace cortex
