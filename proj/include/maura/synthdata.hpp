// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic video/caption/mask/sketch generation, the pixel-space
// masking strategies used by autoencoder training, and the on-disk dataset
// format (manifest.json + one MAURA1 array file per tensor).

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "maura/tensor.hpp"

namespace maura {

struct VideoClip {
    TensorF pixels; // (N, 3, H, W), values in [0,1]
    int fps = 8;

    int64_t frames() const { return pixels.shape[0]; }
    int64_t height() const { return pixels.shape[2]; }
    int64_t width() const { return pixels.shape[3]; }

    void validate() const;
};

enum class Shape { square, circle, triangle };

std::string shape_name(Shape s);
Shape shape_from_name(const std::string& name);

struct SceneSpec {
    Shape shape = Shape::square;
    std::array<float, 3> color{1.f, 0.f, 0.f};
    std::array<float, 2> velocity{0.f, 0.f}; // pixels/frame, (dx, dy)
    std::array<int, 2> start{8, 8};          // center (x, y)
    std::array<float, 3> background{0.f, 0.f, 0.f};
    int extent = 4; // half-size in pixels
};

struct InpaintSample {
    VideoClip clip;
    TensorU8 masks;  // (N, H, W), 1 = region to inpaint
    TensorU8 sketch; // (Hs, Ws) binary edge image
    std::string caption;

    void validate() const;
};

// One generated sample plus its provenance, as recorded in the manifest.
struct DatasetEntry {
    std::string id;
    uint64_t seed = 0;
    SceneSpec spec;
    InpaintSample sample;
};

enum class MaskKind { patch, full_frame };

struct MaskEvent {
    MaskKind kind = MaskKind::patch;
    int patch_size = 16;   // 16 or 32 when kind == patch
    double ratio = 0.0;    // in [0,1]
    int64_t frame_index = -1; // when kind == full_frame
    std::vector<int64_t> patches; // chosen flat patch ids, kind == patch
};

// Deterministic template caption, e.g. "a red square moves right".
std::string caption_for(const SceneSpec& spec);

// Renders a clip plus per-frame object masks and an edge-map sketch.
InpaintSample generate_clip(const SceneSpec& spec, int n_frames, int size, uint64_t seed);

// lo + (hi-lo) * (1 - cos(pi*step/total)) / 2; monotone between endpoints.
double cosine_ratio(int64_t step, int64_t total_steps, double lo, double hi);

// Zeroes ceil(ratio * P) of the P patches, chosen uniformly without
// replacement jointly across frames.
std::pair<VideoClip, MaskEvent> patch_mask(const VideoClip& clip, int patch_size, double ratio,
                                           uint64_t seed);

// Zeroes exactly one uniformly chosen frame; requires N >= 2.
std::pair<VideoClip, int64_t> full_frame_mask(const VideoClip& clip, uint64_t seed);

// A deterministic scene for dataset index i: small index sets enumerate
// distinct shape/color/motion combinations before any repetition.
SceneSpec scene_for_index(int64_t index, int size, uint64_t seed);

std::vector<DatasetEntry> make_dataset(int64_t n_clips, int n_frames, int size, uint64_t seed);

void write_dataset(const std::vector<DatasetEntry>& entries, const std::filesystem::path& dir);
std::vector<DatasetEntry> read_dataset(const std::filesystem::path& dir);

} // namespace maura
