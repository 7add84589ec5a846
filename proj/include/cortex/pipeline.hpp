// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Dataset ingestion and the data-feeding layout used by the trainers.
//
// All videos are concatenated (in record order) into one stream of N frames,
// which is laid row-major into a β × C rectangle, C = ceil(N / β): row r holds
// stream positions [r·C, (r+1)·C). The remaining β·C − N cells are padding and
// replay the first video's frames. Training walks the columns in chunks of T;
// every row is an independent sequence for the recurrent state.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cortex/tensor.hpp"

namespace cortex {

struct VideoRecord {
    std::int64_t id = 0;     // 1-based, contiguous within a record list
    int label = 0;           // class index, 0-based
    std::string class_name;
    std::filesystem::path path;  // frame directory
    std::int64_t frames = 0;     // T_v
    // Frame k (1-based) of this record is file offset + (k-1)·stride of the
    // directory listing; splits and subsampling only adjust these.
    std::int64_t offset = 0;
    std::int64_t stride = 1;
    std::int64_t parent = 0;  // id of the record this one was derived from

    bool operator==(const VideoRecord&) const = default;
};

/// Image files of a frame directory (.png, .ppm, .pgm), sorted by name.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

/// Reads a JSON-lines manifest ({"id", "class", "path", "frames"} per line;
/// paths relative to `root`) or, when `manifest` is empty and root has no
/// manifest.jsonl, walks root/<class>/<video>/. Records come back sorted by
/// path with ids 1..n; string class names map to indices in sorted order.
/// Throws IoError (empty root, missing directories, a record claiming more
/// frames than its directory holds) or FormatError (bad manifest, duplicate ids).
std::vector<VideoRecord> scan_dataset(const std::filesystem::path& root,
                                      const std::filesystem::path& manifest = {});

void write_manifest(const std::filesystem::path& path, std::span<const VideoRecord> records,
                    const std::filesystem::path& root);

/// Number of classes referenced by the records (max label + 1).
int class_count(std::span<const VideoRecord> records);
/// Per-class sum of video lengths, length `classes`.
std::vector<std::int64_t> frames_per_class(std::span<const VideoRecord> records, int classes);

struct DurationInterval {
    double mean = 0;
    double stddev = 0;  // sample standard deviation
    double quantile = 0;
    double lower = 0;
    double upper = 0;
};

/// mean ± t_{(1+confidence)/2, n-1} · s over the lengths; n ≥ 3.
DurationInterval duration_interval(std::span<const double> lengths, double confidence = 0.95);

struct OutlierResult {
    DurationInterval interval;
    std::vector<VideoRecord> records;  // ids renumbered 1..n
    std::int64_t removed = 0;
    std::int64_t trimmed = 0;
};

/// Drops records shorter than the lower bound and trims longer ones to
/// floor(upper) frames (keeping the first frames). Throws ConfigError on fewer
/// than 3 records.
OutlierResult remove_duration_outliers(std::span<const VideoRecord> records, double confidence = 0.95);

struct GridCell {
    std::int64_t record = 0;  // index into the record list
    std::int64_t frame = 0;   // 1-based frame within the record
    bool padding = false;

    bool operator==(const GridCell&) const = default;
};

struct FrameGrid {
    std::int64_t rows = 0;  // β
    std::int64_t cols = 0;  // C
    std::int64_t frames = 0;  // N
    std::vector<GridCell> cells;  // row-major

    const GridCell& at(std::int64_t row, std::int64_t col) const {
        return cells[static_cast<std::size_t>(row * cols + col)];
    }
    std::int64_t padding_cells() const { return rows * cols - frames; }
};

/// Throws ConfigError when β < 1, the dataset is empty or N < β.
FrameGrid build_grid(std::span<const VideoRecord> records, std::int64_t beta);

/// One temporal chunk: `length` consecutive grid columns starting at `start`.
/// Per-cell vectors are indexed [t · rows + r].
struct ChunkLayout {
    std::int64_t start = 0;
    std::int64_t length = 0;
    std::int64_t rows = 0;
    std::vector<GridCell> cells;
    std::vector<int> labels;
    std::vector<std::uint8_t> match;      // next-frame loss applies; target is the next column
    std::vector<std::uint8_t> video_end;  // last frame of a video
    std::vector<std::uint8_t> reset;      // first frame of a video or first grid column
    std::vector<std::uint8_t> padding;
    // Column `start + length` when it exists (the targets of the last column).
    std::optional<std::vector<GridCell>> next;

    std::size_t index(std::int64_t t, std::int64_t r) const { return static_cast<std::size_t>(t * rows + r); }
    std::span<const std::uint8_t> column(const std::vector<std::uint8_t>& mask, std::int64_t t) const {
        return std::span<const std::uint8_t>(mask).subspan(index(t, 0), static_cast<std::size_t>(rows));
    }
    std::span<const GridCell> column_cells(std::int64_t t) const {
        return std::span<const GridCell>(cells).subspan(index(t, 0), static_cast<std::size_t>(rows));
    }
};

/// Splits the grid into chunks of T columns (the last one may be shorter).
std::vector<ChunkLayout> chunk_layouts(const FrameGrid& grid, std::span<const VideoRecord> records, std::int64_t T);

enum class SplitMode { matchnet, temponet };

struct SplitPlan {
    SplitMode mode = SplitMode::matchnet;
    int subsamples = 0;  // S for temponet
    std::vector<VideoRecord> train;
    std::vector<VideoRecord> val;
};

/// Per video: train = frames [1, T_v − val_frames], val = the last val_frames.
/// Throws ConfigError when some T_v ≤ val_frames.
SplitPlan matchnet_split(std::span<const VideoRecord> records, std::int64_t val_frames = 60);

/// Per video, subsample s ∈ 1..S holds frames s, s+S, ...; subsamples 1..S−1
/// train, S validates. Throws ConfigError when S < 2 or some T_v < S.
SplitPlan temponet_split(std::span<const VideoRecord> records, int subsamples = 5);

nlohmann::json to_json(const SplitPlan& plan, const std::filesystem::path& root = {});

/// β·T / mean_length.
double expected_video_changes(double beta, double T, double mean_length);

/// Decodes frame k (1-based) of a record into a 3×side×side tensor.
Tensor<float> load_frame(const VideoRecord& record, std::int64_t frame, int side);

/// Provides decoded frames by (record, frame), caching them in memory.
class FrameSource {
public:
    using Loader = std::function<Tensor<float>(const VideoRecord&, std::int64_t frame)>;

    /// Frames decoded from disk at the given side.
    FrameSource(std::vector<VideoRecord> records, int side);
    /// Frames produced by a custom loader (for in-memory streams).
    FrameSource(std::vector<VideoRecord> records, int side, Loader loader);

    const std::vector<VideoRecord>& records() const { return records_; }
    int side() const { return side_; }

    Tensor<float> frame(std::int64_t record, std::int64_t frame);
    /// Stacks the frames of the given cells into a B×3×side×side batch.
    Tensor<float> batch(std::span<const GridCell> cells);

private:
    std::vector<VideoRecord> records_;
    int side_;
    Loader loader_;
    std::map<std::pair<std::int64_t, std::int64_t>, Tensor<float>> cache_;
    std::mutex mutex_;
};

}  // namespace cortex
