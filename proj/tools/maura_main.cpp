// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0
//
// maura: synthesize datasets, train the three stages, generate and inpaint
// clips, evaluate checkpoints and run gradient checks.
// Exit codes: 0 success, 2 validation error, 3 numerical failure.

#include <CLI11.hpp>

#include <iostream>

#include "maura/gradcheck.hpp"
#include "maura/imageio.hpp"
#include "maura/trainer.hpp"

using namespace maura;

namespace {

int run(int argc, char** argv) {
    CLI::App app{"maura: vector-quantized video diffusion sandbox"};
    app.require_subcommand(1);

    // ---- synth-data
    auto* synth = app.add_subcommand("synth-data", "generate a synthetic video dataset");
    std::string synth_out;
    int64_t synth_clips = 32;
    int synth_frames = 8, synth_size = 32;
    uint64_t synth_seed = 0;
    bool synth_export = false;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--clips", synth_clips, "number of clips");
    synth->add_option("--frames", synth_frames, "frames per clip");
    synth->add_option("--size", synth_size, "frame height/width (multiple of 16)");
    synth->add_option("--seed", synth_seed, "RNG seed");
    synth->add_flag("--export-previews", synth_export, "also write GIF/PNG previews");

    // ---- train-*
    std::string cfg_path;
    auto* train_vae_cmd = app.add_subcommand("train-vae", "train the video autoencoder");
    train_vae_cmd->add_option("--config", cfg_path, "JSON run config")->required();
    auto* train_diff_cmd =
        app.add_subcommand("train-diffusion", "train the masked-token denoiser");
    train_diff_cmd->add_option("--config", cfg_path, "JSON run config")->required();
    auto* finetune_cmd =
        app.add_subcommand("finetune-inpaint", "finetune adapters for guided inpainting");
    finetune_cmd->add_option("--config", cfg_path, "JSON run config")->required();

    // ---- generate
    auto* gen = app.add_subcommand("generate", "sample a clip from a caption");
    GenerateArgs gen_args;
    std::string gen_ckpt, gen_out, gen_text_embed;
    gen->add_option("--ckpt", gen_ckpt, "denoiser checkpoint")->required();
    gen->add_option("--caption", gen_args.caption, "text prompt")->required();
    gen->add_option("--steps", gen_args.steps, "sampling steps");
    gen->add_option("--cfg", gen_args.cfg_scale, "classifier-free guidance scale");
    gen->add_option("--temperature", gen_args.temperature, "sampling temperature");
    gen->add_flag("--argmax", gen_args.argmax, "greedy decoding");
    gen->add_option("--seed", gen_args.seed, "RNG seed");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--text-embed", gen_text_embed,
                    "externally produced (L x text_dim) embedding array");

    // ---- inpaint
    auto* inp = app.add_subcommand("inpaint", "sketch+text guided video inpainting");
    InpaintArgs inp_args;
    std::string inp_ckpt, inp_adapter, inp_video, inp_mask, inp_sketch, inp_out;
    inp->add_option("--ckpt", inp_ckpt, "base denoiser checkpoint")->required();
    inp->add_option("--adapter", inp_adapter, "adapter checkpoint")->required();
    inp->add_option("--video", inp_video, "video array (N,3,H,W) float32")->required();
    inp->add_option("--mask", inp_mask, "mask array (N,H,W) uint8")->required();
    inp->add_option("--sketch", inp_sketch, "sketch array (Hs,Ws) uint8")->required();
    inp->add_option("--caption", inp_args.caption, "text prompt")->required();
    inp->add_option("--steps", inp_args.steps, "sampling steps");
    inp->add_option("--cfg", inp_args.cfg_scale, "guidance scale");
    inp->add_option("--seed", inp_args.seed, "RNG seed");
    bool no_composite = false, no_sketch = false;
    inp->add_flag("--no-composite", no_composite, "keep generated pixels everywhere");
    inp->add_flag("--no-sketch", no_sketch, "disable the sketch branch");
    inp->add_option("--out", inp_out, "output directory")->required();

    // ---- eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string ev_ckpt, ev_data;
    ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
    ev->add_option("--data", ev_data, "dataset directory")->required();

    // ---- gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    std::string gc_target;
    bool gc_list = false, gc_all = false;
    uint64_t gc_seed = 12345;
    gc->add_option("--target", gc_target, "registered target name");
    gc->add_flag("--list", gc_list, "list registered targets");
    gc->add_flag("--all", gc_all, "run every registered target");
    gc->add_option("--seed", gc_seed, "RNG seed");

    CLI11_PARSE(app, argc, argv);

    if (*synth) {
        auto entries = make_dataset(synth_clips, synth_frames, synth_size, synth_seed);
        write_dataset(entries, synth_out);
        if (synth_export)
            for (const auto& e : entries) {
                write_gif(std::filesystem::path(synth_out) / (e.id + ".gif"), e.sample.clip);
                write_png_strip(std::filesystem::path(synth_out) / (e.id + ".png"),
                                e.sample.clip);
            }
        std::cout << "wrote " << entries.size() << " clips to " << synth_out << "\n";
        return 0;
    }
    if (*train_vae_cmd) {
        auto outcome = train_vae(load_run_config(cfg_path));
        std::cout << outcome.metrics.to_json_text() << "\n";
        std::cout << "checkpoint: " << outcome.checkpoint.string() << "\n";
        return 0;
    }
    if (*train_diff_cmd) {
        auto outcome = train_diffusion(load_run_config(cfg_path));
        std::cout << outcome.metrics.to_json_text() << "\n";
        std::cout << "checkpoint: " << outcome.checkpoint.string() << "\n";
        return 0;
    }
    if (*finetune_cmd) {
        auto outcome = finetune_inpaint(load_run_config(cfg_path));
        std::cout << outcome.metrics.to_json_text() << "\n";
        std::cout << "checkpoint: " << outcome.checkpoint.string() << "\n";
        return 0;
    }
    if (*gen) {
        gen_args.checkpoint = gen_ckpt;
        gen_args.out_dir = gen_out;
        if (!gen_text_embed.empty()) gen_args.text_embedding = gen_text_embed;
        auto out = generate_video(gen_args);
        std::cout << "wrote " << out.gif.string() << ", " << out.strip.string() << "\n";
        return 0;
    }
    if (*inp) {
        inp_args.checkpoint = inp_ckpt;
        inp_args.adapter = inp_adapter;
        inp_args.video = inp_video;
        inp_args.mask = inp_mask;
        inp_args.sketch = inp_sketch;
        inp_args.composite = !no_composite;
        inp_args.use_sketch = !no_sketch;
        inp_args.out_dir = inp_out;
        auto out = inpaint_video(inp_args);
        std::cout << "wrote " << out.gif.string() << "\n";
        return 0;
    }
    if (*ev) {
        std::cout << eval_checkpoint(ev_ckpt, ev_data).to_json_text() << "\n";
        return 0;
    }
    if (*gc) {
        if (gc_list) {
            for (const auto& t : grad_targets())
                std::cout << t.name << " (tolerance " << t.tolerance << ")\n";
            return 0;
        }
        auto run_one = [&](const GradTarget& t) {
            auto res = t.run(gc_seed);
            bool ok = res.ok(t.tolerance);
            std::cout << (ok ? "PASS " : "FAIL ") << t.name << ": max rel err " << res.max_rel_err
                      << " over " << res.elements << " elements (tolerance " << t.tolerance
                      << ")\n";
            return ok;
        };
        bool all_ok = true;
        if (gc_all) {
            for (const auto& t : grad_targets()) all_ok = run_one(t) && all_ok;
        } else {
            require(!gc_target.empty(), "gradcheck needs --target NAME, --all or --list");
            all_ok = run_one(find_grad_target(gc_target));
        }
        if (!all_ok) throw NumericError("gradient check failed");
        return 0;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
