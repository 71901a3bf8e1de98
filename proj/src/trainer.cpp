// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0

#include "maura/trainer.hpp"

#include <fstream>
#include <iostream>

#include <json.hpp>

#include "maura/imageio.hpp"

namespace maura {

using json = nlohmann::ordered_json;

namespace {

double scheduled_lr(const OptimizerConfig& o, int64_t step, int64_t total) {
    if (o.schedule == "cosine") return cosine_lr(o.lr, step, total);
    if (o.schedule == "linear") return linear_lr(o.lr, step, total);
    return o.lr;
}

AdamW<float>::Hyper hyper_of(const OptimizerConfig& o) {
    AdamW<float>::Hyper h;
    h.weight_decay = o.weight_decay;
    h.grad_clip = o.grad_clip;
    return h;
}

Rng item_rng(uint64_t seed, const char* stage, int64_t global_slot) {
    return Rng(mix_seed(mix_seed(seed, fnv1a64(stage)), static_cast<uint64_t>(global_slot)));
}

class MetricLog {
public:
    explicit MetricLog(const std::filesystem::path& dir) {
        std::filesystem::create_directories(dir);
        path_ = dir / "metrics.jsonl";
        out_.open(path_, std::ios::trunc);
    }
    void line(const json& j) {
        out_ << j.dump() << "\n";
        out_.flush();
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

void abort_on_nan(double loss, const std::filesystem::path& out_dir, int64_t step,
                  const json& components) {
    if (std::isfinite(loss)) return;
    json diag;
    diag["step"] = step;
    diag["loss"] = "non-finite";
    diag["components"] = components;
    atomic_write_file(out_dir / "nan_diagnostic.json", diag.dump(2) + "\n");
    throw NumericError("training loss became non-finite at step " + std::to_string(step) +
                       " (diagnostic snapshot written to " +
                       (out_dir / "nan_diagnostic.json").string() + ")");
}

uint64_t hash_params(const ParamStore<float>& store, const std::vector<std::string>& names) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& n : names) {
        const TensorF& t = store.get(n);
        h = fnv1a64(t.data.data(), t.data.size() * sizeof(float), h);
    }
    return h;
}

// Reconstruction metrics over the dataset through the quantized round trip.
struct ReconEval {
    double psnr_mean = 0, ssim_mean = 0;
    std::vector<int32_t> token_stream;
};

ReconEval recon_eval(Vae3d<float>& vae, const std::vector<DatasetEntry>& entries) {
    ReconEval ev;
    for (const auto& e : entries) {
        TokenGrid tokens = vae.tokenize(clip_to_cthw(e.sample.clip));
        TensorF rec = vae.detokenize(tokens);
        VideoClip rc = cthw_to_clip(rec, e.sample.clip.fps);
        ev.psnr_mean += psnr(rc, e.sample.clip);
        ev.ssim_mean += ssim(rc, e.sample.clip);
        ev.token_stream.insert(ev.token_stream.end(), tokens.indices.data.begin(),
                               tokens.indices.data.end());
    }
    ev.psnr_mean /= static_cast<double>(entries.size());
    ev.ssim_mean /= static_cast<double>(entries.size());
    return ev;
}

double mfi_eval(Vae3d<float>& vae, const std::vector<DatasetEntry>& entries, uint64_t seed) {
    int64_t correct = 0, total = 0;
    for (const auto& e : entries) {
        for (int64_t f = 0; f < e.sample.clip.frames(); ++f) {
            VideoClip masked = e.sample.clip;
            const int64_t fe = 3 * masked.height() * masked.width();
            std::fill(masked.pixels.data.begin() + f * fe,
                      masked.pixels.data.begin() + (f + 1) * fe, 0.f);
            Tape<float> t;
            Binder<float> bind(t, vae.params);
            int z = vae.encode(t, bind, t.leaf(clip_to_cthw(masked), false));
            int logits = vae.mfi_logits(t, bind, z);
            const TensorF& row = t.val(logits);
            int64_t arg = 0;
            for (int64_t i = 1; i < row.numel(); ++i)
                if (row[i] > row[arg]) arg = i;
            correct += arg == f;
            ++total;
        }
    }
    (void)seed;
    return static_cast<double>(correct) / static_cast<double>(total);
}

} // namespace

// ---------------------------------------------------------------------------
// stage 1: autoencoder
// ---------------------------------------------------------------------------

TrainOutcome train_vae(const RunConfig& cfg) {
    cfg.validate();
    require(cfg.stage == "vae", "train_vae requires a vae-stage config");
    auto entries = read_dataset(cfg.dataset);
    require(!entries.empty(), "dataset is empty: " + cfg.dataset);
    for (const auto& e : entries)
        require(e.sample.clip.frames() == cfg.vae.n_frames,
                "dataset clip length does not match the configured n_frames");

    auto vae = Vae3d<float>::init(cfg.vae, cfg.seed);
    AdamW<float> opt(hyper_of(cfg.optimizer));
    MetricLog log(cfg.out_dir);
    const int64_t n = static_cast<int64_t>(entries.size());
    const int64_t B = std::min<int64_t>(cfg.batch_size, n);

    std::vector<TensorF> targets;
    targets.reserve(entries.size());
    for (const auto& e : entries) targets.push_back(clip_to_cthw(e.sample.clip));

    std::vector<int> patch_sizes;
    for (int ps : {16, 32})
        if (entries[0].sample.clip.height() % ps == 0 && entries[0].sample.clip.width() % ps == 0)
            patch_sizes.push_back(ps);
    require(!patch_sizes.empty(), "no legal patch size tiles the clips");

    int64_t steps_run = 0;
    double last_psnr = 0, last_ssim = 0;
    for (int64_t step = 0; step < cfg.steps; ++step) {
        double lr = scheduled_lr(cfg.optimizer, step, cfg.steps);
        std::map<std::string, TensorF> grads;
        double rec = 0, cb = 0, cm = 0, mfi = 0, total = 0;
        int64_t mfi_hit = 0, mfi_seen = 0;
        for (int64_t slot = 0; slot < B; ++slot) {
            int64_t idx = (step * B + slot) % n;
            Rng r = item_rng(cfg.seed, "vae", step * B + slot);
            const VideoClip& clip = entries[static_cast<size_t>(idx)].sample.clip;

            double pr = cosine_ratio(step, cfg.steps, cfg.vae_train.patch_ratio_lo,
                                     cfg.vae_train.patch_ratio_hi);
            int psz = patch_sizes[static_cast<size_t>(
                r.uniform_int(0, static_cast<int64_t>(patch_sizes.size()) - 1))];
            auto [masked, ev] = patch_mask(clip, psz, pr, r.next_u64());
            int64_t mfi_target = -1;
            double fp = cosine_ratio(step, cfg.steps, cfg.vae_train.frame_mask_lo,
                                     cfg.vae_train.frame_mask_hi);
            if (clip.frames() >= 2 && r.bernoulli(fp)) {
                auto [m2, fidx] = full_frame_mask(masked, r.next_u64());
                masked = std::move(m2);
                mfi_target = fidx;
            }

            Tape<float> t;
            Binder<float> bind(t, vae.params);
            int x = t.leaf(clip_to_cthw(masked), false);
            int tgt = t.leaf(targets[static_cast<size_t>(idx)], false);
            int z = vae.encode(t, bind, x);
            const auto zsh = t.val(z).shape;
            int rows = vae.latent_to_rows(t, z);
            auto q = vae.quantize_rows(t, bind, rows);
            int z_st = vae.rows_to_latent(t, q.z_st, {zsh[1], zsh[2], zsh[3]});
            int decoded = vae.decode(t, bind, z_st);
            int mfi_nll = -1;
            if (mfi_target >= 0) {
                int logits = vae.mfi_logits(t, bind, z);
                mfi_nll = masked_nll_rows(t, logits, {static_cast<int32_t>(mfi_target)}, {1});
                const TensorF& lrow = t.val(logits);
                int64_t arg = 0;
                for (int64_t i = 1; i < lrow.numel(); ++i)
                    if (lrow[i] > lrow[arg]) arg = i;
                mfi_hit += arg == mfi_target;
                ++mfi_seen;
            }
            auto nodes = vae_loss_nodes(t, tgt, decoded, q.codebook_loss, q.commit_loss,
                                        cfg.vae.beta, mfi_nll);
            int scaled = scale(t, nodes.total, 1.f / static_cast<float>(B));
            t.backward(scaled);
            bind.collect_grads(grads);
            rec += t.val(nodes.rec)[0] / static_cast<double>(B);
            cb += t.val(nodes.codebook)[0] / static_cast<double>(B);
            cm += t.val(nodes.commit)[0] / static_cast<double>(B);
            mfi += t.val(nodes.mfi)[0] / static_cast<double>(B);
            total += t.val(nodes.total)[0] / static_cast<double>(B);
        }
        json comp;
        comp["rec"] = rec;
        comp["codebook"] = cb;
        comp["commit"] = cm;
        comp["mfi"] = mfi;
        abort_on_nan(total, cfg.out_dir, step, comp);
        opt.step(vae.params, grads, lr);
        ++steps_run;

        bool last = step + 1 == cfg.steps;
        if ((step + 1) % cfg.eval_every == 0 || last) {
            ReconEval ev = recon_eval(vae, entries);
            last_psnr = ev.psnr_mean;
            last_ssim = ev.ssim_mean;
            json line;
            line["step"] = step + 1;
            line["lr"] = lr;
            line["loss"] = total;
            line["rec"] = rec;
            line["codebook"] = cb;
            line["commit"] = cm;
            line["mfi"] = mfi;
            if (mfi_seen) line["mfi_batch_acc"] = static_cast<double>(mfi_hit) / mfi_seen;
            line["psnr"] = ev.psnr_mean;
            line["ssim"] = ev.ssim_mean;
            log.line(line);
            bool hit_targets = cfg.vae_train.target_psnr > 0 &&
                               ev.psnr_mean >= cfg.vae_train.target_psnr &&
                               ev.ssim_mean >= cfg.vae_train.target_ssim;
            if (hit_targets) break;
        }
    }

    ReconEval ev = recon_eval(vae, entries);
    auto usage = codebook_usage(ev.token_stream, vae.codebook_spec().K);
    MetricReport report;
    report.psnr = ev.psnr_mean;
    report.ssim = ev.ssim_mean;
    report.codebook_perplexity = usage.perplexity;
    report.codebook_fraction_used = usage.fraction_used;
    report.mfi_accuracy = mfi_eval(vae, entries, cfg.seed);

    Checkpoint ckpt;
    ckpt.kind = "vae";
    ckpt.sections["vae"] = section_from_store(vae.params, vae_config_to_json_text(vae.cfg));
    ckpt.extra["train_seed"] = std::to_string(cfg.seed);
    std::filesystem::path ckpt_path = std::filesystem::path(cfg.out_dir) / "vae.ckpt";
    save_checkpoint(ckpt_path, ckpt);
    json final_line;
    final_line["final"] = true;
    final_line["psnr"] = ev.psnr_mean;
    final_line["ssim"] = ev.ssim_mean;
    final_line["mfi_accuracy"] = *report.mfi_accuracy;
    final_line["codebook_perplexity"] = usage.perplexity;
    log.line(final_line);
    return {ckpt_path, report, steps_run};
}

// ---------------------------------------------------------------------------
// stage 2: discrete diffusion
// ---------------------------------------------------------------------------

VaeBundle load_vae_bundle(const Checkpoint& ckpt) {
    auto it = ckpt.sections.find("vae");
    require(it != ckpt.sections.end(), "checkpoint has no vae section");
    VaeBundle b;
    b.vae.cfg = vae_config_from_json_text(it->second.config_json);
    b.vae.params = store_from_section<float>(it->second);
    return b;
}

DenoiserBundle load_denoiser_bundle(const Checkpoint& ckpt) {
    require(ckpt.kind == "denoiser", "expected a denoiser checkpoint, found kind '" + ckpt.kind +
                                         "'");
    DenoiserBundle b;
    auto vb = load_vae_bundle(ckpt);
    b.vae = std::move(vb.vae);
    auto it = ckpt.sections.find("denoiser");
    require(it != ckpt.sections.end(), "checkpoint has no denoiser section");
    b.denoiser.cfg = spectral_config_from_json_text(it->second.config_json);
    b.denoiser.params = store_from_section<float>(it->second);
    uint64_t vocab = std::stoull(ckpt.extra.at("vocab_hash"));
    require(vocab == toy_vocabulary_hash(),
            "checkpoint was built against a different caption vocabulary");
    int64_t T = std::stoll(ckpt.extra.at("schedule_T"));
    b.schedule = build_schedule(T, schedule_kind_from_name(ckpt.extra.at("schedule_shape")));
    b.fps = std::stoi(ckpt.extra.at("fps"));
    return b;
}

namespace {

struct TokenCache {
    std::vector<TokenGrid> grids;
    std::vector<std::string> captions;
    std::array<int64_t, 3> grid_shape{};
};

TokenCache tokenize_dataset(Vae3d<float>& vae, const std::vector<DatasetEntry>& entries,
                            int64_t vocab_k) {
    TokenCache cache;
    for (const auto& e : entries) {
        TokenGrid g = vae.tokenize(clip_to_cthw(e.sample.clip));
        for (int32_t v : g.indices.data)
            if (v >= vocab_k)
                throw ValidationError(
                    "cached token index " + std::to_string(v) +
                    " >= K; the VAE checkpoint and denoiser codebook size do not match");
        cache.grid_shape = {g.indices.shape[0], g.indices.shape[1], g.indices.shape[2]};
        cache.grids.push_back(std::move(g));
        cache.captions.push_back(e.sample.caption);
    }
    return cache;
}

// Fraction of positions recovered from the fully masked grid with the true
// caption (the hardest reconstruction the objective trains).
double token_accuracy_eval(SpectralDenoiser<float>& den, const TokenCache& cache,
                           const NoiseSchedule& schedule, int fps,
                           const DenoiserHooks<float>* hooks = nullptr,
                           const std::vector<TokenGrid>* context = nullptr,
                           AdaptedDenoiser<float>* adapted = nullptr,
                           const std::vector<TensorU8>* sketches = nullptr) {
    int64_t hit = 0, total = 0;
    for (size_t i = 0; i < cache.grids.size(); ++i) {
        const TokenGrid& z0 = cache.grids[i];
        TokenGrid z_t = z0;
        std::fill(z_t.indices.data.begin(), z_t.indices.data.end(),
                  static_cast<int32_t>(z0.K));
        Tape<float> t;
        Binder<float> bind(t, den.params);
        int text = den.encode_caption(t, bind, cache.captions[i]);
        int logits;
        if (context) {
            int sk = -1;
            if (sketches && adapted)
                sk = sketch_encode(t, bind, (*sketches)[i], adapted->lora);
            auto in = build_input_sequence<float>(z_t, (*context)[i], sk, text);
            logits = den.forward_logits(t, bind, in,
                                        CondSignal{schedule.T, fps}, hooks);
        } else {
            logits = den.forward_grid(t, bind, z_t, CondSignal{schedule.T, fps}, text, hooks);
        }
        const TensorF& lg = t.val(logits);
        for (int64_t p = 0; p < z0.count(); ++p) {
            int64_t arg = 0;
            for (int64_t k = 1; k < z0.K; ++k)
                if (lg.at(p, k) > lg.at(p, arg)) arg = k;
            hit += arg == z0.indices[p];
            ++total;
        }
    }
    return static_cast<double>(hit) / static_cast<double>(total);
}

} // namespace

TrainOutcome train_diffusion(const RunConfig& cfg) {
    cfg.validate();
    require(cfg.stage == "diffusion", "train_diffusion requires a diffusion-stage config");
    Checkpoint vae_ckpt = load_checkpoint(cfg.diffusion_train.vae_ckpt);
    require(vae_ckpt.kind == "vae", "diffusion training expects a vae checkpoint");
    auto bundle = load_vae_bundle(vae_ckpt);
    Vae3d<float>& vae = bundle.vae;
    require(cfg.spectral.vocab_k == vae.codebook_spec().K,
            "spectral vocab_k must equal the VAE codebook size " +
                std::to_string(vae.codebook_spec().K));

    auto entries = read_dataset(cfg.dataset);
    require(!entries.empty(), "dataset is empty: " + cfg.dataset);
    TokenCache cache = tokenize_dataset(vae, entries, cfg.spectral.vocab_k);
    NoiseSchedule schedule =
        build_schedule(cfg.diffusion_train.timesteps,
                       schedule_kind_from_name(cfg.diffusion_train.schedule_shape));

    auto den = SpectralDenoiser<float>::init(cfg.spectral, cfg.seed);
    AdamW<float> opt(hyper_of(cfg.optimizer));
    MetricLog log(cfg.out_dir);
    const int64_t n = static_cast<int64_t>(entries.size());
    const int64_t B = std::min<int64_t>(cfg.batch_size, n);
    const int fps = cfg.diffusion_train.fps;

    int64_t steps_run = 0;
    double last_acc = 0;
    for (int64_t step = 0; step < cfg.steps; ++step) {
        double lr = scheduled_lr(cfg.optimizer, step, cfg.steps);
        std::map<std::string, TensorF> grads;
        double loss_sum = 0;
        for (int64_t slot = 0; slot < B; ++slot) {
            int64_t idx = (step * B + slot) % n;
            Rng r = item_rng(cfg.seed, "diffusion", step * B + slot);
            int64_t t_diff = r.uniform_int(1, schedule.T);
            TokenGrid z_t = forward_corrupt(cache.grids[static_cast<size_t>(idx)], t_diff,
                                            schedule, r.next_u64());
            std::string caption = r.bernoulli(cfg.diffusion_train.cond_dropout)
                                      ? ""
                                      : cache.captions[static_cast<size_t>(idx)];
            Tape<float> t;
            Binder<float> bind(t, den.params);
            int text = den.encode_caption(t, bind, caption);
            int logits = den.forward_grid(t, bind, z_t, CondSignal{t_diff, fps}, text);
            auto dl = diffusion_loss(t, logits, cache.grids[static_cast<size_t>(idx)], z_t);
            int scaled = scale(t, dl.loss, 1.f / static_cast<float>(B));
            t.backward(scaled);
            bind.collect_grads(grads);
            loss_sum += t.val(dl.loss)[0] / static_cast<double>(B);
        }
        abort_on_nan(loss_sum, cfg.out_dir, step, json::object());
        opt.step(den.params, grads, lr);
        ++steps_run;

        bool last = step + 1 == cfg.steps;
        if ((step + 1) % cfg.eval_every == 0 || last) {
            last_acc = token_accuracy_eval(den, cache, schedule, fps);
            json line;
            line["step"] = step + 1;
            line["lr"] = lr;
            line["loss"] = loss_sum;
            line["token_accuracy"] = last_acc;
            log.line(line);
            if (cfg.diffusion_train.target_accuracy > 0 &&
                last_acc >= cfg.diffusion_train.target_accuracy)
                break;
        }
    }

    MetricReport report;
    report.token_accuracy = last_acc;
    Checkpoint out;
    out.kind = "denoiser";
    out.sections["vae"] = vae_ckpt.sections.at("vae");
    out.sections["denoiser"] = section_from_store(den.params, spectral_config_to_json_text(den.cfg));
    out.extra["grid_t"] = std::to_string(cache.grid_shape[0]);
    out.extra["grid_h"] = std::to_string(cache.grid_shape[1]);
    out.extra["grid_w"] = std::to_string(cache.grid_shape[2]);
    out.extra["schedule_T"] = std::to_string(schedule.T);
    out.extra["schedule_shape"] = schedule_kind_name(schedule.kind);
    out.extra["fps"] = std::to_string(fps);
    out.extra["vocab_hash"] = std::to_string(toy_vocabulary_hash());
    out.extra["train_seed"] = std::to_string(cfg.seed);
    std::filesystem::path ckpt_path = std::filesystem::path(cfg.out_dir) / "denoiser.ckpt";
    save_checkpoint(ckpt_path, out);
    json final_line;
    final_line["final"] = true;
    final_line["token_accuracy"] = last_acc;
    log.line(final_line);
    return {ckpt_path, report, steps_run};
}

// ---------------------------------------------------------------------------
// stage 3: adapter finetuning for inpainting
// ---------------------------------------------------------------------------

LoraConfig lora_from_adapter_config(const std::string& text);
std::string lora_to_adapter_config(const LoraConfig& l);

AdaptedDenoiser<float> load_adapted(const Checkpoint& base, const Checkpoint& adapter) {
    require(adapter.kind == "adapter", "expected an adapter checkpoint");
    require(adapter.base_hash == base.content_hash,
            "adapter was trained against a different base checkpoint (hash mismatch); "
            "refusing to load");
    auto bundle = load_denoiser_bundle(base);
    auto sec = adapter.sections.at("adapter");
    LoraConfig lora = lora_from_adapter_config(sec.config_json);
    auto adapted = attach_adapters(std::move(bundle.denoiser), lora, /*seed=*/0);
    // overwrite freshly initialized adapter/condition tensors with the saved ones
    for (const auto& [name, raw] : sec.arrays) {
        require(adapted.model.params.has(name), "adapter checkpoint carries unknown tensor " + name);
        adapted.model.params.get(name) = raw_to_f32(raw);
    }
    return adapted;
}

LoraConfig lora_from_adapter_config(const std::string& text) {
    json j = json::parse(text);
    LoraConfig l;
    l.rank = j.at("rank").get<int64_t>();
    l.attention_kq = j.at("attention_kq").get<bool>();
    l.feedforward = j.at("feedforward").get<bool>();
    l.scaling = j.at("scaling").get<double>();
    l.sketch_patch = j.at("sketch_patch").get<int64_t>();
    l.sketch_hidden = j.at("sketch_hidden").get<int64_t>();
    return l;
}

std::string lora_to_adapter_config(const LoraConfig& l) {
    json j;
    j["rank"] = l.rank;
    j["attention_kq"] = l.attention_kq;
    j["feedforward"] = l.feedforward;
    j["scaling"] = l.scaling;
    j["sketch_patch"] = l.sketch_patch;
    j["sketch_hidden"] = l.sketch_hidden;
    return j.dump();
}

TrainOutcome finetune_inpaint(const RunConfig& cfg) {
    cfg.validate();
    require(cfg.stage == "inpaint", "finetune_inpaint requires an inpaint-stage config");
    Checkpoint base = load_checkpoint(cfg.inpaint_train.base_ckpt);
    auto bundle = load_denoiser_bundle(base);
    Vae3d<float>& vae = bundle.vae;
    auto adapted = attach_adapters(std::move(bundle.denoiser), cfg.lora, cfg.seed);
    const NoiseSchedule& schedule = bundle.schedule;
    const int fps = bundle.fps;

    auto entries = read_dataset(cfg.dataset);
    require(!entries.empty(), "dataset is empty: " + cfg.dataset);

    // cached conditioning per sample
    std::vector<TokenGrid> z0s, zms;
    std::vector<TensorU8> sketches;
    std::vector<std::string> captions;
    std::vector<VideoClip> masked_clips;
    for (const auto& e : entries) {
        z0s.push_back(vae.tokenize(clip_to_cthw(e.sample.clip)));
        VideoClip vm = mask_video(e.sample.clip, e.sample.masks);
        zms.push_back(vae.tokenize(clip_to_cthw(vm)));
        masked_clips.push_back(std::move(vm));
        sketches.push_back(e.sample.sketch);
        captions.push_back(e.sample.caption);
    }
    for (const auto& g : z0s)
        require(g.K == adapted.model.cfg.vocab_k, "token grid K mismatch against the base model");

    auto trainable = adapted.trainable_set();
    uint64_t base_hash_before = hash_params(adapted.model.params, adapted.base_names);
    AdamW<float> opt(hyper_of(cfg.optimizer));
    MetricLog log(cfg.out_dir);
    const int64_t n = static_cast<int64_t>(entries.size());
    const int64_t B = std::min<int64_t>(cfg.batch_size, n);
    DenoiserHooks<float> hooks = adapted.hooks();

    int64_t steps_run = 0;
    double final_loss = 0;
    for (int64_t step = 0; step < cfg.steps; ++step) {
        double lr = scheduled_lr(cfg.optimizer, step, cfg.steps);
        std::map<std::string, TensorF> grads;
        double loss_sum = 0;
        for (int64_t slot = 0; slot < B; ++slot) {
            int64_t idx = (step * B + slot) % n;
            Rng r = item_rng(cfg.seed, "inpaint", step * B + slot);
            int64_t t_diff = r.uniform_int(1, schedule.T);
            TokenGrid z_t =
                forward_corrupt(z0s[static_cast<size_t>(idx)], t_diff, schedule, r.next_u64());
            bool drop = r.bernoulli(cfg.inpaint_train.cond_dropout);
            Tape<float> t;
            Binder<float> bind(t, adapted.model.params, &trainable);
            int sk = drop ? -1
                          : sketch_encode(t, bind, sketches[static_cast<size_t>(idx)],
                                          adapted.lora);
            int text = adapted.model.encode_caption(
                t, bind, drop ? "" : captions[static_cast<size_t>(idx)]);
            auto in = build_input_sequence<float>(z_t, zms[static_cast<size_t>(idx)], sk, text);
            int logits = adapted.model.forward_logits(t, bind, in, CondSignal{t_diff, fps}, &hooks);
            int diffused = slice_rows(t, logits, 0, z_t.count());
            auto dl = diffusion_loss(t, diffused, z0s[static_cast<size_t>(idx)], z_t);
            int scaled = scale(t, dl.loss, 1.f / static_cast<float>(B));
            t.backward(scaled);
            bind.collect_grads(grads);
            loss_sum += t.val(dl.loss)[0] / static_cast<double>(B);
        }
        abort_on_nan(loss_sum, cfg.out_dir, step, json::object());
        for (const auto& [name, g] : grads)
            if (!trainable.count(name))
                throw NumericError("gradient reached the frozen parameter '" + name +
                                   "' (freeze contract violated)");
        opt.step(adapted.model.params, grads, lr);
        ++steps_run;
        final_loss = loss_sum;

        bool last = step + 1 == cfg.steps;
        if ((step + 1) % cfg.eval_every == 0 || last) {
            require(hash_params(adapted.model.params, adapted.base_names) == base_hash_before,
                    "frozen base parameters changed during finetuning");
            json line;
            line["step"] = step + 1;
            line["lr"] = lr;
            line["loss"] = loss_sum;
            log.line(line);
        }
    }
    require(hash_params(adapted.model.params, adapted.base_names) == base_hash_before,
            "frozen base parameters changed during finetuning");

    // masked-region reconstruction vs the unconditional baseline
    double cond_psnr = 0, uncond_psnr = 0;
    for (size_t i = 0; i < entries.size(); ++i) {
        InpaintOptions iop;
        iop.steps = cfg.inpaint_train.sample_steps;
        iop.cfg_scale = cfg.inpaint_train.cfg_scale;
        iop.seed = mix_seed(cfg.seed, 0xabc0 + i);
        iop.caption = captions[i];
        iop.argmax = true;
        VideoClip cond_out = inpaint_sample(vae, adapted, masked_clips[i], entries[i].sample.masks,
                                            sketches[i], schedule, iop);
        cond_psnr += masked_psnr(cond_out, entries[i].sample.clip, entries[i].sample.masks);
        InpaintOptions base_op = iop;
        base_op.caption = "";
        base_op.use_sketch = false;
        base_op.cfg_scale = 1.0;
        VideoClip unc_out = inpaint_sample(vae, adapted, masked_clips[i], entries[i].sample.masks,
                                           sketches[i], schedule, base_op);
        uncond_psnr += masked_psnr(unc_out, entries[i].sample.clip, entries[i].sample.masks);
    }
    cond_psnr /= static_cast<double>(entries.size());
    uncond_psnr /= static_cast<double>(entries.size());

    MetricReport report;
    report.final_loss = final_loss;
    report.psnr = cond_psnr;

    Checkpoint out;
    out.kind = "adapter";
    out.base_hash = base.content_hash;
    CheckpointSection sec;
    sec.config_json = lora_to_adapter_config(cfg.lora);
    for (const auto& name : adapted.trainable_set())
        sec.arrays.emplace_back(name, to_raw(adapted.model.params.get(name)));
    out.sections["adapter"] = std::move(sec);
    out.extra["train_seed"] = std::to_string(cfg.seed);
    out.extra["masked_psnr_cond"] = std::to_string(cond_psnr);
    out.extra["masked_psnr_uncond"] = std::to_string(uncond_psnr);
    std::filesystem::path ckpt_path = std::filesystem::path(cfg.out_dir) / "adapter.ckpt";
    save_checkpoint(ckpt_path, out);
    json final_line;
    final_line["final"] = true;
    final_line["loss"] = final_loss;
    final_line["masked_psnr_cond"] = cond_psnr;
    final_line["masked_psnr_uncond"] = uncond_psnr;
    log.line(final_line);
    return {ckpt_path, report, steps_run};
}

// ---------------------------------------------------------------------------
// generation / inpainting / eval
// ---------------------------------------------------------------------------

GenerateOutcome generate_video(const GenerateArgs& args) {
    Checkpoint ckpt = load_checkpoint(args.checkpoint);
    DenoiserBundle bundle = load_denoiser_bundle(ckpt);
    Vae3d<float>& vae = bundle.vae;
    SpectralDenoiser<float>& den = bundle.denoiser;

    require(ckpt.extra.count("grid_t") != 0, "checkpoint is missing its token grid shape");
    std::array<int64_t, 3> grid{std::stoll(ckpt.extra.at("grid_t")),
                                std::stoll(ckpt.extra.at("grid_h")),
                                std::stoll(ckpt.extra.at("grid_w"))};

    std::optional<TensorF> external_text;
    if (args.text_embedding) {
        external_text = raw_to_f32(load_array(*args.text_embedding));
        require(external_text->rank() == 2 && external_text->shape[1] == den.cfg.text_dim,
                "external text embedding must be (L, text_dim)");
    }

    auto denoise = [&](const std::string& caption) {
        return [&, caption](const TokenGrid& z_t, int64_t t_step) {
            Tape<float> t;
            Binder<float> bind(t, den.params);
            int text = (external_text && !caption.empty())
                           ? t.leaf(*external_text, false)
                           : den.encode_caption(t, bind, caption);
            int logits = den.forward_grid(t, bind, z_t, CondSignal{t_step, bundle.fps}, text);
            return t.val(logits);
        };
    };

    SampleOptions opt;
    opt.steps = args.steps;
    opt.cfg_scale = args.cfg_scale;
    opt.temperature = args.temperature;
    opt.argmax = args.argmax;
    opt.seed = args.seed;
    TokenGrid tokens = reverse_sample(denoise(args.caption), denoise(""), bundle.schedule, grid,
                                      den.cfg.vocab_k, opt);
    TensorF decoded = vae.detokenize(tokens);
    VideoClip clip = cthw_to_clip(decoded, bundle.fps);

    std::filesystem::create_directories(args.out_dir);
    GenerateOutcome out;
    out.gif = args.out_dir / "sample.gif";
    out.strip = args.out_dir / "strip.png";
    out.clip_array = args.out_dir / "clip.m1";
    out.tokens_array = args.out_dir / "tokens.m1";
    write_gif(out.gif, clip);
    write_png_strip(out.strip, clip);
    save_array(out.clip_array, to_raw(clip.pixels));
    save_array(out.tokens_array, to_raw(tokens.indices));
    return out;
}

GenerateOutcome inpaint_video(const InpaintArgs& args) {
    Checkpoint base = load_checkpoint(args.checkpoint);
    Checkpoint adapter = load_checkpoint(args.adapter);
    auto adapted = load_adapted(base, adapter);
    auto bundle = load_denoiser_bundle(base);
    Vae3d<float>& vae = bundle.vae;

    VideoClip video;
    video.pixels = raw_to_f32(load_array(args.video));
    video.fps = bundle.fps;
    video.validate();
    TensorU8 masks = raw_to_u8(load_array(args.mask));
    TensorU8 sketch = raw_to_u8(load_array(args.sketch));
    VideoClip v_m = mask_video(video, masks);

    InpaintOptions opt;
    opt.steps = args.steps;
    opt.cfg_scale = args.cfg_scale;
    opt.seed = args.seed;
    opt.composite = args.composite;
    opt.use_sketch = args.use_sketch;
    opt.caption = args.caption;
    VideoClip result = inpaint_sample(vae, adapted, v_m, masks, sketch, bundle.schedule, opt);

    std::filesystem::create_directories(args.out_dir);
    GenerateOutcome out;
    out.gif = args.out_dir / "inpaint.gif";
    out.strip = args.out_dir / "inpaint_strip.png";
    out.clip_array = args.out_dir / "inpaint.m1";
    write_gif(out.gif, result);
    write_png_strip(out.strip, result);
    save_array(out.clip_array, to_raw(result.pixels));
    out.tokens_array.clear();
    return out;
}

MetricReport eval_checkpoint(const std::filesystem::path& ckpt_path,
                             const std::filesystem::path& dataset_dir) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    auto entries = read_dataset(dataset_dir);
    require(!entries.empty(), "dataset is empty: " + dataset_dir.string());
    MetricReport report;
    if (ckpt.kind == "vae") {
        auto bundle = load_vae_bundle(ckpt);
        ReconEval ev = recon_eval(bundle.vae, entries);
        auto usage = codebook_usage(ev.token_stream, bundle.vae.codebook_spec().K);
        report.psnr = ev.psnr_mean;
        report.ssim = ev.ssim_mean;
        report.codebook_perplexity = usage.perplexity;
        report.codebook_fraction_used = usage.fraction_used;
        report.mfi_accuracy = mfi_eval(bundle.vae, entries, 0);
    } else if (ckpt.kind == "denoiser") {
        auto bundle = load_denoiser_bundle(ckpt);
        ReconEval ev = recon_eval(bundle.vae, entries);
        report.psnr = ev.psnr_mean;
        report.ssim = ev.ssim_mean;
        TokenCache cache = tokenize_dataset(bundle.vae, entries, bundle.denoiser.cfg.vocab_k);
        report.token_accuracy =
            token_accuracy_eval(bundle.denoiser, cache, bundle.schedule, bundle.fps);
    } else {
        throw ValidationError("eval expects a vae or denoiser checkpoint");
    }
    return report;
}

} // namespace maura
