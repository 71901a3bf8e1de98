// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>

#include "maura/synthdata.hpp"

namespace maura {

// 10*log10(1/MSE) with peak 1.0; capped at 99 dB when MSE < 1e-10.
double psnr(const TensorF& a, const TensorF& b);
double psnr(const VideoClip& a, const VideoClip& b);

// Mean SSIM over sliding 8x8 uniform windows, per channel per frame, with
// K1=0.01, K2=0.03 and unit dynamic range.
double ssim(const TensorF& a, const TensorF& b);
double ssim(const VideoClip& a, const VideoClip& b);

// PSNR restricted to pixels where mask == 1.
double masked_psnr(const VideoClip& a, const VideoClip& b, const TensorU8& masks);

struct MetricReport {
    std::optional<double> psnr;
    std::optional<double> ssim;
    std::optional<double> codebook_perplexity;
    std::optional<double> codebook_fraction_used;
    std::optional<double> mfi_accuracy;
    std::optional<double> token_accuracy;
    std::optional<double> final_loss;
    // metrics requiring pretrained networks are reported unavailable, never
    // approximated
    std::string lpips = "unavailable";
    std::string fvd = "unavailable";
    std::string clipsim = "unavailable";

    std::string to_json_text() const;
};

} // namespace maura
