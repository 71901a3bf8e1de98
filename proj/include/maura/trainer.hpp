// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0
//
// Training loops for the three stages, generation/inpainting entry points,
// checkpoint bundles and evaluation. Everything is single-threaded and
// deterministic for a fixed config and seed; batches are assembled in
// dataset index order.

#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "maura/adapt.hpp"
#include "maura/checkpoint.hpp"
#include "maura/metrics.hpp"
#include "maura/run_config.hpp"

namespace maura {

struct TrainOutcome {
    std::filesystem::path checkpoint;
    MetricReport metrics;
    int64_t steps_run = 0;
};

TrainOutcome train_vae(const RunConfig& cfg);
TrainOutcome train_diffusion(const RunConfig& cfg);
TrainOutcome finetune_inpaint(const RunConfig& cfg);

struct VaeBundle {
    Vae3d<float> vae;
};
VaeBundle load_vae_bundle(const Checkpoint& ckpt);

struct DenoiserBundle {
    Vae3d<float> vae;
    SpectralDenoiser<float> denoiser;
    NoiseSchedule schedule;
    int fps = 8;
};
DenoiserBundle load_denoiser_bundle(const Checkpoint& ckpt);

// Rebuilds an adapted model from a base checkpoint + adapter checkpoint;
// refuses to combine when the adapter was trained against a different base.
AdaptedDenoiser<float> load_adapted(const Checkpoint& base, const Checkpoint& adapter);

struct GenerateArgs {
    std::filesystem::path checkpoint;
    std::string caption;
    int64_t steps = 30;
    double cfg_scale = 10.0;
    double temperature = 1.0;
    bool argmax = false;
    uint64_t seed = 0;
    std::filesystem::path out_dir;
    // optional externally produced (L x text_dim) embedding file
    std::optional<std::filesystem::path> text_embedding;
};

struct GenerateOutcome {
    std::filesystem::path gif;
    std::filesystem::path strip;
    std::filesystem::path clip_array;
    std::filesystem::path tokens_array;
};
GenerateOutcome generate_video(const GenerateArgs& args);

struct InpaintArgs {
    std::filesystem::path checkpoint;         // base denoiser
    std::filesystem::path adapter;            // adapter checkpoint
    std::filesystem::path video;              // (N,3,H,W) float array
    std::filesystem::path mask;               // (N,H,W) u8 array
    std::filesystem::path sketch;             // (Hs,Ws) u8 array
    std::string caption;
    int64_t steps = 30;
    double cfg_scale = 10.0;
    uint64_t seed = 0;
    bool composite = true;
    bool use_sketch = true;
    std::filesystem::path out_dir;
};
GenerateOutcome inpaint_video(const InpaintArgs& args);

MetricReport eval_checkpoint(const std::filesystem::path& ckpt_path,
                             const std::filesystem::path& dataset_dir);

} // namespace maura
