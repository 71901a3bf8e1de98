// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON run configuration for the three training stages. Parsing is strict:
// unknown keys anywhere are rejected, and serialize(parse(x)) is canonical.

#pragma once

#include <filesystem>
#include <string>

#include "maura/adapt.hpp"
#include "maura/spectral.hpp"
#include "maura/vae3d.hpp"

namespace maura {

struct OptimizerConfig {
    std::string kind = "adamw";
    double lr = 1e-3;
    std::string schedule = "cosine"; // cosine | linear | constant
    double weight_decay = 0.0;
    double grad_clip = 2.5;
};

struct VaeTrainConfig {
    double patch_ratio_lo = 0.2, patch_ratio_hi = 0.6;
    double frame_mask_lo = 0.1, frame_mask_hi = 0.5;
    double target_psnr = 0.0; // early stop when > 0 and reached (with ssim)
    double target_ssim = 0.0;
};

struct DiffusionTrainConfig {
    std::string vae_ckpt;
    int64_t timesteps = 30;
    std::string schedule_shape = "linear";
    double cond_dropout = 0.1;
    double target_accuracy = 0.0; // early stop when > 0 and reached
    int fps = 8;
};

struct InpaintTrainConfig {
    std::string base_ckpt;
    double cond_dropout = 0.1;
    int64_t sample_steps = 30;
    double cfg_scale = 10.0;
};

struct RunConfig {
    int version = 1;
    std::string stage; // vae | diffusion | inpaint
    std::string dataset;
    std::string out_dir;
    uint64_t seed = 0;
    int64_t steps = 1000;
    int64_t batch_size = 4;
    int64_t eval_every = 100;
    OptimizerConfig optimizer;

    Vae3dConfig vae;          // stage == vae
    VaeTrainConfig vae_train;
    SpectralConfig spectral;  // stage == diffusion
    DiffusionTrainConfig diffusion_train;
    LoraConfig lora;          // stage == inpaint
    InpaintTrainConfig inpaint_train;

    void validate() const;
};

RunConfig run_config_from_json_text(const std::string& text);
std::string run_config_to_json_text(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);

} // namespace maura
