// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal deterministic PNG and animated GIF writers for clip inspection.
// PNG uses stored (uncompressed) deflate blocks; GIF uses a fixed 6x6x6
// color cube with LZW encoding.

#pragma once

#include <filesystem>

#include "maura/synthdata.hpp"

namespace maura {

// RGB8 image, rows top to bottom.
void write_png_rgb(const std::filesystem::path& path, const TensorU8& rgb /* (H,W,3) */);

// Frames of the clip side by side in one PNG.
void write_png_strip(const std::filesystem::path& path, const VideoClip& clip);

// Animated GIF looping forever at the clip's frame rate.
void write_gif(const std::filesystem::path& path, const VideoClip& clip);

TensorU8 clip_frame_rgb8(const VideoClip& clip, int64_t frame);

} // namespace maura
