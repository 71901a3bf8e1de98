// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0

#include "maura/metrics.hpp"

#include <cmath>

#include <json.hpp>

namespace maura {

namespace {

double mse(const TensorF& a, const TensorF& b) {
    require(a.same_shape(b), "metric inputs must have the same shape " + a.shape_str() + " vs " +
                                 b.shape_str());
    require(a.numel() > 0, "metric inputs must be nonempty");
    double acc = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.numel());
}

double psnr_of_mse(double m) {
    if (m < 1e-10) return 99.0;
    return 10.0 * std::log10(1.0 / m);
}

// SSIM of one (H,W) plane against another over sliding 8x8 uniform windows.
double ssim_plane(const float* a, const float* b, int64_t h, int64_t w) {
    constexpr int64_t win = 8;
    constexpr double c1 = (0.01) * (0.01);
    constexpr double c2 = (0.03) * (0.03);
    require(h >= win && w >= win, "frames smaller than the 8x8 SSIM window");
    double total = 0;
    int64_t count = 0;
    for (int64_t y0 = 0; y0 + win <= h; ++y0)
        for (int64_t x0 = 0; x0 + win <= w; ++x0) {
            double ma = 0, mb = 0;
            for (int64_t y = 0; y < win; ++y)
                for (int64_t x = 0; x < win; ++x) {
                    ma += a[(y0 + y) * w + x0 + x];
                    mb += b[(y0 + y) * w + x0 + x];
                }
            const double n = win * win;
            ma /= n;
            mb /= n;
            double va = 0, vb = 0, cov = 0;
            for (int64_t y = 0; y < win; ++y)
                for (int64_t x = 0; x < win; ++x) {
                    double da = a[(y0 + y) * w + x0 + x] - ma;
                    double db = b[(y0 + y) * w + x0 + x] - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            va /= n - 1;
            vb /= n - 1;
            cov /= n - 1;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return total / static_cast<double>(count);
}

} // namespace

double psnr(const TensorF& a, const TensorF& b) { return psnr_of_mse(mse(a, b)); }

double psnr(const VideoClip& a, const VideoClip& b) { return psnr(a.pixels, b.pixels); }

double ssim(const TensorF& a, const TensorF& b) {
    require(a.same_shape(b), "metric inputs must have the same shape");
    require(a.rank() == 4, "ssim expects (N,C,H,W)");
    const int64_t n = a.shape[0], c = a.shape[1], h = a.shape[2], w = a.shape[3];
    double total = 0;
    for (int64_t f = 0; f < n; ++f)
        for (int64_t ch = 0; ch < c; ++ch)
            total += ssim_plane(a.ptr() + (f * c + ch) * h * w, b.ptr() + (f * c + ch) * h * w, h,
                                w);
    return total / static_cast<double>(n * c);
}

double ssim(const VideoClip& a, const VideoClip& b) { return ssim(a.pixels, b.pixels); }

double masked_psnr(const VideoClip& a, const VideoClip& b, const TensorU8& masks) {
    require(a.pixels.same_shape(b.pixels), "metric inputs must have the same shape");
    require(masks.rank() == 3 && masks.shape[0] == a.frames() && masks.shape[1] == a.height() &&
                masks.shape[2] == a.width(),
            "mask shape must match the clips");
    double acc = 0;
    int64_t count = 0;
    for (int64_t f = 0; f < a.frames(); ++f)
        for (int64_t y = 0; y < a.height(); ++y)
            for (int64_t x = 0; x < a.width(); ++x) {
                if (!masks.at(f, y, x)) continue;
                for (int64_t c = 0; c < 3; ++c) {
                    double d = static_cast<double>(a.pixels.at(f, c, y, x)) -
                               static_cast<double>(b.pixels.at(f, c, y, x));
                    acc += d * d;
                    ++count;
                }
            }
    require(count > 0, "masked psnr needs at least one masked pixel");
    return psnr_of_mse(acc / static_cast<double>(count));
}

std::string MetricReport::to_json_text() const {
    nlohmann::ordered_json j;
    auto put = [&](const char* key, const std::optional<double>& v) {
        if (v) j[key] = *v;
    };
    put("psnr", psnr);
    put("ssim", ssim);
    put("codebook_perplexity", codebook_perplexity);
    put("codebook_fraction_used", codebook_fraction_used);
    put("mfi_accuracy", mfi_accuracy);
    put("token_accuracy", token_accuracy);
    put("final_loss", final_loss);
    j["lpips"] = lpips;
    j["fvd"] = fvd;
    j["clipsim"] = clipsim;
    return j.dump();
}

} // namespace maura
