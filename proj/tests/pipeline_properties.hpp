// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Randomized structural checks of grids, chunk masks and splits. Each check
// returns an empty string on success and a description of the first violation
// otherwise.

#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cortex/error.hpp"
#include "cortex/pipeline.hpp"

namespace cortex::testing {

inline std::vector<VideoRecord> random_records(std::mt19937_64& rng, int min_frames = 1, int max_videos = 50,
                                               int max_frames = 200) {
    std::uniform_int_distribution<int> count(1, max_videos), length(min_frames, max_frames), label(0, 4);
    std::vector<VideoRecord> recs(static_cast<std::size_t>(count(rng)));
    std::int64_t id = 0;
    for (auto& r : recs) {
        r.id = r.parent = ++id;
        r.frames = length(rng);
        r.label = label(rng);
        r.path = "v" + std::to_string(id);
    }
    return recs;
}

// Source-file indices covered by a record.
inline std::vector<std::int64_t> file_indices(const VideoRecord& r) {
    std::vector<std::int64_t> out;
    for (std::int64_t k = 0; k < r.frames; ++k) out.push_back(r.offset + k * r.stride);
    return out;
}

inline std::string check_grid(const std::vector<VideoRecord>& recs, const FrameGrid& g) {
    std::ostringstream err;
    std::int64_t n = 0;
    for (const auto& r : recs) n += r.frames;
    if (g.frames != n || g.cols != (n + g.rows - 1) / g.rows || static_cast<std::int64_t>(g.cells.size()) != g.rows * g.cols) {
        return "grid dimensions inconsistent with the stream";
    }
    if (g.padding_cells() > g.rows - 1) return "more than beta-1 padding cells";

    std::map<std::pair<std::int64_t, std::int64_t>, int> seen;
    std::int64_t pad = 0;
    for (const auto& c : g.cells) {
        if (c.padding) {
            if (c.record != 0 || c.frame != pad % recs[0].frames + 1) return "padding does not replay the first video";
            ++pad;
        } else {
            ++seen[{c.record, c.frame}];
        }
    }
    if (pad != g.padding_cells()) return "padding cells are not all at the end of the stream";
    for (std::size_t v = 0; v < recs.size(); ++v) {
        for (std::int64_t k = 1; k <= recs[v].frames; ++k) {
            auto it = seen.find({static_cast<std::int64_t>(v), k});
            if (it == seen.end() || it->second != 1) {
                err << "frame " << k << " of video " << v << " appears " << (it == seen.end() ? 0 : it->second) << " times";
                return err.str();
            }
        }
    }
    if (seen.size() != static_cast<std::size_t>(n)) return "grid holds frames outside the dataset";

    for (std::int64_t r = 0; r < g.rows; ++r) {
        for (std::int64_t c = 0; c + 1 < g.cols; ++c) {
            const auto& a = g.at(r, c);
            const auto& b = g.at(r, c + 1);
            if (a.padding || b.padding) continue;
            const bool same = a.record == b.record && b.frame == a.frame + 1;
            const bool next = b.record == a.record + 1 && b.frame == 1 && a.frame == recs[a.record].frames;
            if (!same && !next) return "row continuity broken";
        }
    }
    return {};
}

inline std::string check_chunks(const std::vector<VideoRecord>& recs, const FrameGrid& g,
                                const std::vector<ChunkLayout>& chunks, std::int64_t T) {
    std::int64_t col = 0;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        const auto& ch = chunks[i];
        if (ch.start != col || ch.rows != g.rows) return "chunk columns are not contiguous";
        if (ch.length != std::min<std::int64_t>(T, g.cols - col)) return "chunk length wrong";
        for (std::int64_t t = 0; t < ch.length; ++t) {
            const std::int64_t c = ch.start + t;
            for (std::int64_t r = 0; r < ch.rows; ++r) {
                const std::size_t k = ch.index(t, r);
                const auto& cell = ch.cells[k];
                if (!(cell == g.at(r, c))) return "chunk cells do not reproduce the grid";
                const auto& rec = recs[static_cast<std::size_t>(cell.record)];
                if (ch.labels[k] != rec.label) return "label mismatch";
                if (ch.padding[k] != cell.padding) return "padding mask mismatch";
                if (ch.padding[k] && ch.video_end[k]) return "cell is both padding and video end";
                if (ch.video_end[k] && cell.frame != rec.frames) return "video_end on a non-final frame";
                if (!cell.padding && cell.frame == rec.frames && !ch.video_end[k]) return "final frame not flagged";
                if (ch.reset[k] != (cell.frame == 1 || c == 0)) return "reset mask wrong";
                if (ch.match[k]) {
                    if (cell.padding || cell.frame == 1 || cell.frame == rec.frames) return "match on a disabled cell";
                    if (c + 1 >= g.cols) return "match without a successor column";
                    const GridCell& succ = t + 1 < ch.length ? ch.cells[ch.index(t + 1, r)] : (*ch.next)[static_cast<std::size_t>(r)];
                    if (succ.padding || succ.record != cell.record || succ.frame != cell.frame + 1) {
                        return "match target is not the next frame of the same video";
                    }
                } else if (!cell.padding && !ch.reset[k] && !ch.video_end[k] && c + 1 < g.cols) {
                    return "eligible cell not matched";
                }
            }
        }
        const bool has_next = ch.start + ch.length < g.cols;
        if (ch.next.has_value() != has_next) return "next-column bookkeeping wrong";
        col += ch.length;
    }
    if (col != g.cols) return "chunks do not cover the grid";
    return {};
}

inline std::string check_matchnet_split(const std::vector<VideoRecord>& recs, std::int64_t val_frames) {
    const bool valid = std::all_of(recs.begin(), recs.end(), [&](const auto& r) { return r.frames > val_frames; });
    SplitPlan plan;
    try {
        plan = matchnet_split(recs, val_frames);
    } catch (const ConfigError&) {
        return valid ? "split refused a valid dataset" : "";
    }
    if (!valid) return "split accepted a video that is too short";
    if (plan.train.size() != recs.size() || plan.val.size() != recs.size()) return "split record counts wrong";
    for (std::size_t v = 0; v < recs.size(); ++v) {
        if (plan.val[v].frames != val_frames) return "validation length wrong";
        auto a = file_indices(plan.train[v]);
        const auto b = file_indices(plan.val[v]);
        if (!a.empty() && !b.empty() && a.back() >= b.front()) return "validation does not follow training";
        a.insert(a.end(), b.begin(), b.end());
        if (a != file_indices(recs[v])) return "train/val not disjoint and exhaustive";
        if (plan.train[v].label != recs[v].label || plan.val[v].parent != recs[v].id) return "split lost provenance";
    }
    return {};
}

inline std::string check_temponet_split(const std::vector<VideoRecord>& recs, int S) {
    const bool valid = std::all_of(recs.begin(), recs.end(), [&](const auto& r) { return r.frames >= S; });
    SplitPlan plan;
    try {
        plan = temponet_split(recs, S);
    } catch (const ConfigError&) {
        return valid ? "split refused a valid dataset" : "";
    }
    if (!valid) return "split accepted a video shorter than S";
    if (plan.train.size() != recs.size() * static_cast<std::size_t>(S - 1) || plan.val.size() != recs.size()) {
        return "subsample counts wrong";
    }
    for (std::size_t v = 0; v < recs.size(); ++v) {
        std::vector<std::int64_t> all;
        for (int s = 1; s <= S; ++s) {
            const auto& sub = s < S ? plan.train[v * (S - 1) + static_cast<std::size_t>(s - 1)] : plan.val[v];
            if (sub.parent != recs[v].id || sub.label != recs[v].label) return "subsample lost provenance";
            for (auto i : file_indices(sub)) {
                if ((i - recs[v].offset) % S != s - 1) return "subsample is not a residue class";
                all.push_back(i);
            }
        }
        std::sort(all.begin(), all.end());
        if (all != file_indices(recs[v])) return "subsamples do not partition the video";
    }
    return {};
}

/// One randomized case over every structural property.
inline std::string check_pipeline_case(std::mt19937_64& rng) {
    // half of the cases keep every video long enough for both splits
    auto recs = random_records(rng, std::bernoulli_distribution(0.5)(rng) ? 61 : 1);
    std::int64_t n = 0;
    for (const auto& r : recs) n += r.frames;
    std::uniform_int_distribution<std::int64_t> beta_dist(1, std::min<std::int64_t>(n, 25));
    std::uniform_int_distribution<std::int64_t> t_dist(2, 12);
    std::uniform_int_distribution<int> s_dist(2, 6);
    const std::int64_t beta = beta_dist(rng), T = t_dist(rng);
    const auto grid = build_grid(recs, beta);
    if (auto e = check_grid(recs, grid); !e.empty()) return "grid: " + e;
    const auto chunks = chunk_layouts(grid, recs, T);
    if (auto e = check_chunks(recs, grid, chunks, T); !e.empty()) return "chunks: " + e;
    const auto again = chunk_layouts(build_grid(recs, beta), recs, T);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        if (again[i].cells != chunks[i].cells || again[i].match != chunks[i].match || again[i].reset != chunks[i].reset) {
            return "layout is not deterministic";
        }
    }
    if (auto e = check_matchnet_split(recs, 60); !e.empty()) return "matchnet split: " + e;
    if (auto e = check_temponet_split(recs, s_dist(rng)); !e.empty()) return "temponet split: " + e;
    return {};
}

}  // namespace cortex::testing
