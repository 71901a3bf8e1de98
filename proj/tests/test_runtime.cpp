// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "maura/checkpoint.hpp"
#include "maura/imageio.hpp"
#include "maura/metrics.hpp"
#include "maura/run_config.hpp"
#include "maura/trainer.hpp"

using namespace maura;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
    fs::path p = fs::temp_directory_path() / (std::string("maura_rt_") + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

TensorF const_clip_pixels(int64_t n, int64_t hw, float v) {
    return TensorF::full({n, 3, hw, hw}, v);
}

} // namespace

TEST_CASE("psnr: identity cap, exact values, shape check") {
    VideoClip a, b;
    a.pixels = const_clip_pixels(2, 32, 0.5f);
    b = a;
    CHECK(psnr(a, b) == 99.0);

    // MSE 0.01 -> 20 dB
    b.pixels = const_clip_pixels(2, 32, 0.6f);
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-4));

    // MSE 1 -> 0 dB
    VideoClip z, o;
    z.pixels = const_clip_pixels(1, 32, 0.f);
    o.pixels = const_clip_pixels(1, 32, 1.f);
    CHECK(psnr(z, o) == doctest::Approx(0.0));

    VideoClip small;
    small.pixels = const_clip_pixels(1, 16, 0.f);
    CHECK_THROWS_AS(psnr(a, small), ValidationError);
}

TEST_CASE("ssim: identity, constant-vs-constant, symmetry, window precondition") {
    Rng rng(1);
    VideoClip a, b;
    a.pixels = TensorF::randn({2, 3, 16, 16}, rng, 0.1f);
    for (auto& v : a.pixels.data) v = std::clamp(v + 0.5f, 0.f, 1.f);
    CHECK(ssim(a, a) == doctest::Approx(1.0));

    VideoClip z, o;
    z.pixels = const_clip_pixels(1, 16, 0.f);
    o.pixels = const_clip_pixels(1, 16, 1.f);
    CHECK(ssim(z, o) < 0.05);

    b.pixels = TensorF::randn({2, 3, 16, 16}, rng, 0.1f);
    for (auto& v : b.pixels.data) v = std::clamp(v + 0.5f, 0.f, 1.f);
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-9));

    TensorF tiny = TensorF::full({1, 3, 4, 4}, 0.5f);
    CHECK_THROWS_AS(ssim(tiny, tiny), ValidationError);
}

TEST_CASE("run config round-trips through parse -> serialize -> parse unchanged") {
    for (const char* stage : {"vae", "diffusion", "inpaint"}) {
        RunConfig c;
        c.stage = stage;
        c.dataset = "data/train";
        c.out_dir = "runs/x";
        c.seed = 42;
        c.steps = 100;
        c.vae = Vae3dConfig::desk();
        if (std::string(stage) == "diffusion") c.diffusion_train.vae_ckpt = "runs/vae/vae.ckpt";
        if (std::string(stage) == "inpaint") c.inpaint_train.base_ckpt = "runs/diff/denoiser.ckpt";
        std::string text = run_config_to_json_text(c);
        RunConfig back = run_config_from_json_text(text);
        std::string text2 = run_config_to_json_text(back);
        CAPTURE(stage);
        CHECK(text == text2);
    }
}

TEST_CASE("run config rejects unknown keys at every level") {
    RunConfig c;
    c.stage = "vae";
    c.dataset = "d";
    c.out_dir = "o";
    c.steps = 10;
    c.vae = Vae3dConfig::desk();
    std::string text = run_config_to_json_text(c);

    auto corrupt = [&](const std::string& needle, const std::string& inject) {
        std::string t = text;
        auto pos = t.find(needle);
        REQUIRE(pos != std::string::npos);
        t.insert(pos, inject);
        return t;
    };
    CHECK_THROWS_AS(run_config_from_json_text(corrupt("\"stage\"", "\"bogus\": 1, ")),
                    ValidationError);
    CHECK_THROWS_AS(run_config_from_json_text(corrupt("\"lr\"", "\"momentum\": 0.9, ")),
                    ValidationError);
    CHECK_THROWS_AS(run_config_from_json_text(corrupt("\"patch_ratio_lo\"", "\"typo\": 1, ")),
                    ValidationError);
    CHECK_THROWS_AS(run_config_from_json_text("{\"stage\": \"vae\"}"), ValidationError); // no version
}

TEST_CASE("checkpoint round trip preserves parameters; corruption is detected") {
    ParamStore<float> store;
    Rng rng(7);
    store.add("alpha.w", TensorF::randn({4, 3}, rng));
    store.add("beta.b", TensorF::randn({5}, rng));

    Checkpoint ckpt;
    ckpt.kind = "vae";
    ckpt.sections["vae"] = section_from_store(store, "{\"note\":1}");
    ckpt.extra["k"] = "v";
    auto dir = temp_dir("ckpt");
    fs::path path = dir / "test.ckpt";
    save_checkpoint(path, ckpt);
    CHECK(ckpt.content_hash != 0);

    Checkpoint back = load_checkpoint(path);
    CHECK(back.kind == "vae");
    CHECK(back.content_hash == ckpt.content_hash);
    CHECK(back.extra.at("k") == "v");
    auto store2 = store_from_section<float>(back.sections.at("vae"));
    CHECK(store2.get("alpha.w").data == store.get("alpha.w").data);
    CHECK(store2.get("beta.b").data == store.get("beta.b").data);

    // flip one payload byte -> hash mismatch
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekg(0, std::ios::end);
        auto size = static_cast<std::streamoff>(f.tellg());
        f.seekp(size - 3);
        char c;
        f.seekg(size - 3);
        f.read(&c, 1);
        c = static_cast<char>(c ^ 0x40);
        f.seekp(size - 3);
        f.write(&c, 1);
    }
    try {
        load_checkpoint(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("hash mismatch") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("uniform-t sampling is flat within 3 sigma over 10k draws") {
    const int64_t T = 30, n = 10000;
    std::vector<int64_t> counts(static_cast<size_t>(T) + 1, 0);
    Rng rng(999);
    for (int64_t i = 0; i < n; ++i) counts[static_cast<size_t>(rng.uniform_int(1, T))]++;
    double p = 1.0 / static_cast<double>(T);
    double sigma = std::sqrt(p * (1 - p) / static_cast<double>(n));
    for (int64_t t = 1; t <= T; ++t) {
        double freq = static_cast<double>(counts[static_cast<size_t>(t)]) / n;
        CHECK(std::abs(freq - p) <= 3 * sigma);
    }
}

TEST_CASE("png and gif writers produce valid signatures and are deterministic") {
    auto entries = make_dataset(1, 4, 32, 11);
    auto dir = temp_dir("img");
    fs::path png = dir / "strip.png";
    fs::path gif = dir / "clip.gif";
    write_png_strip(png, entries[0].sample.clip);
    write_gif(gif, entries[0].sample.clip);

    std::string png_bytes = read_file(png);
    CHECK(png_bytes.substr(1, 3) == "PNG");
    std::string gif_bytes = read_file(gif);
    CHECK(gif_bytes.substr(0, 6) == "GIF89a");

    write_png_strip(dir / "strip2.png", entries[0].sample.clip);
    write_gif(dir / "clip2.gif", entries[0].sample.clip);
    CHECK(read_file(dir / "strip2.png") == png_bytes);
    CHECK(read_file(dir / "clip2.gif") == gif_bytes);
    fs::remove_all(dir);
}

TEST_CASE("metric report serializes unavailable fields honestly") {
    MetricReport r;
    r.psnr = 31.0;
    std::string text = r.to_json_text();
    CHECK(text.find("\"lpips\":\"unavailable\"") != std::string::npos);
    CHECK(text.find("\"fvd\":\"unavailable\"") != std::string::npos);
    CHECK(text.find("\"clipsim\":\"unavailable\"") != std::string::npos);
}

TEST_CASE("masked psnr counts only masked pixels") {
    VideoClip a, b;
    a.pixels = const_clip_pixels(1, 16, 0.5f);
    b.pixels = const_clip_pixels(1, 16, 0.5f);
    TensorU8 mask({1, 16, 16});
    mask.at(0, 3, 3) = 1;
    b.pixels.at(0, 0, 3, 3) = 0.6f; // inside the mask
    b.pixels.at(0, 0, 8, 8) = 0.0f; // outside: ignored
    double expected_mse = (0.1 * 0.1) / 3.0; // three channels at the masked pixel
    CHECK(masked_psnr(a, b, mask) == doctest::Approx(10 * std::log10(1 / expected_mse)).epsilon(1e-3));
}

TEST_CASE("tiny end-to-end vae training run: deterministic and loss-reducing") {
    auto data_dir = temp_dir("vae_data");
    write_dataset(make_dataset(4, 4, 32, 5), data_dir);

    RunConfig cfg;
    cfg.stage = "vae";
    cfg.dataset = data_dir.string();
    cfg.seed = 3;
    cfg.steps = 6;
    cfg.batch_size = 2;
    cfg.eval_every = 6;
    cfg.optimizer.lr = 1e-3;
    cfg.vae = Vae3dConfig::desk(4, 4, 8, 4);
    cfg.vae.codebook_size = 16;
    cfg.vae.mfi_hidden = 8;

    auto out1 = temp_dir("vae_run1");
    cfg.out_dir = out1.string();
    auto r1 = train_vae(cfg);
    auto out2 = temp_dir("vae_run2");
    cfg.out_dir = out2.string();
    auto r2 = train_vae(cfg);

    // identical seeds -> bitwise identical checkpoints and loss curves
    CHECK(read_file(r1.checkpoint) == read_file(r2.checkpoint));
    CHECK(read_file(out1 / "metrics.jsonl") == read_file(out2 / "metrics.jsonl"));
    CHECK(r1.steps_run == 6);

    // reload and evaluate
    auto report = eval_checkpoint(r1.checkpoint, data_dir);
    CHECK(report.psnr.has_value());
    CHECK(report.mfi_accuracy.has_value());

    fs::remove_all(data_dir);
    fs::remove_all(out1);
    fs::remove_all(out2);
}
