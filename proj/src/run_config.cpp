// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0

#include "maura/run_config.hpp"

#include <set>

#include <json.hpp>

#include "maura/array_io.hpp"

namespace maura {

using json = nlohmann::ordered_json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    require(j.is_object(), where + " must be a JSON object");
    for (const auto& [key, value] : j.items())
        require(allowed.count(key) != 0, "unknown key '" + key + "' in " + where);
}

json optimizer_to_json(const OptimizerConfig& o) {
    json j;
    j["kind"] = o.kind;
    j["lr"] = o.lr;
    j["schedule"] = o.schedule;
    j["weight_decay"] = o.weight_decay;
    j["grad_clip"] = o.grad_clip;
    return j;
}

OptimizerConfig optimizer_from_json(const json& j) {
    check_keys(j, {"kind", "lr", "schedule", "weight_decay", "grad_clip"}, "optimizer");
    OptimizerConfig o;
    o.kind = j.value("kind", o.kind);
    o.lr = j.at("lr").get<double>();
    o.schedule = j.value("schedule", o.schedule);
    o.weight_decay = j.value("weight_decay", o.weight_decay);
    o.grad_clip = j.value("grad_clip", o.grad_clip);
    require(o.kind == "adamw", "optimizer kind must be 'adamw'");
    require(o.lr > 0, "learning rate must be positive");
    require(o.schedule == "cosine" || o.schedule == "linear" || o.schedule == "constant",
            "schedule must be cosine, linear or constant");
    require(o.weight_decay >= 0 && o.grad_clip >= 0, "negative optimizer hyperparameter");
    return o;
}

json lora_to_json(const LoraConfig& l) {
    json j;
    j["rank"] = l.rank;
    j["attention_kq"] = l.attention_kq;
    j["feedforward"] = l.feedforward;
    j["scaling"] = l.scaling;
    j["sketch_patch"] = l.sketch_patch;
    j["sketch_hidden"] = l.sketch_hidden;
    return j;
}

LoraConfig lora_from_json(const json& j) {
    check_keys(j, {"rank", "attention_kq", "feedforward", "scaling", "sketch_patch",
                   "sketch_hidden"},
               "model (lora)");
    LoraConfig l;
    l.rank = j.at("rank").get<int64_t>();
    l.attention_kq = j.value("attention_kq", l.attention_kq);
    l.feedforward = j.value("feedforward", l.feedforward);
    l.scaling = j.value("scaling", l.scaling);
    l.sketch_patch = j.value("sketch_patch", l.sketch_patch);
    l.sketch_hidden = j.value("sketch_hidden", l.sketch_hidden);
    return l;
}

} // namespace

void RunConfig::validate() const {
    require(version == 1, "unsupported config version");
    require(stage == "vae" || stage == "diffusion" || stage == "inpaint",
            "stage must be vae, diffusion or inpaint");
    require(!dataset.empty(), "dataset path required");
    require(!out_dir.empty(), "out_dir required");
    require(steps >= 1, "steps must be >= 1");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(eval_every >= 1, "eval_every must be >= 1");
    if (stage == "vae") {
        vae.validate();
        require(vae_train.patch_ratio_lo >= 0 && vae_train.patch_ratio_lo <= vae_train.patch_ratio_hi &&
                    vae_train.patch_ratio_hi <= 1,
                "patch ratio endpoints must satisfy 0 <= lo <= hi <= 1");
        require(vae_train.frame_mask_lo >= 0 && vae_train.frame_mask_lo <= vae_train.frame_mask_hi &&
                    vae_train.frame_mask_hi <= 1,
                "frame mask endpoints must satisfy 0 <= lo <= hi <= 1");
    } else if (stage == "diffusion") {
        spectral.validate();
        require(!diffusion_train.vae_ckpt.empty(), "diffusion stage needs vae_ckpt");
        require(diffusion_train.timesteps >= 1, "timesteps must be >= 1");
        schedule_kind_from_name(diffusion_train.schedule_shape);
        require(diffusion_train.cond_dropout >= 0 && diffusion_train.cond_dropout <= 1,
                "cond_dropout must be in [0,1]");
    } else {
        require(!inpaint_train.base_ckpt.empty(), "inpaint stage needs base_ckpt");
        require(inpaint_train.sample_steps >= 1, "sample_steps must be >= 1");
        require(inpaint_train.cond_dropout >= 0 && inpaint_train.cond_dropout <= 1,
                "cond_dropout must be in [0,1]");
    }
}

RunConfig run_config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j,
               {"version", "stage", "dataset", "out_dir", "seed", "steps", "batch_size",
                "eval_every", "optimizer", "model", "train"},
               "config");
    RunConfig c;
    require(j.contains("version"), "config must carry a version field");
    c.version = j.at("version").get<int>();
    c.stage = j.at("stage").get<std::string>();
    c.dataset = j.at("dataset").get<std::string>();
    c.out_dir = j.at("out_dir").get<std::string>();
    c.seed = j.value("seed", uint64_t(0));
    c.steps = j.at("steps").get<int64_t>();
    c.batch_size = j.value("batch_size", int64_t(4));
    c.eval_every = j.value("eval_every", int64_t(100));
    if (j.contains("optimizer")) c.optimizer = optimizer_from_json(j.at("optimizer"));

    const json model = j.value("model", json::object());
    const json train = j.value("train", json::object());
    if (c.stage == "vae") {
        c.vae = vae_config_from_json_text(model.dump());
        check_keys(train,
                   {"patch_ratio_lo", "patch_ratio_hi", "frame_mask_lo", "frame_mask_hi",
                    "target_psnr", "target_ssim"},
                   "train (vae)");
        c.vae_train.patch_ratio_lo = train.value("patch_ratio_lo", c.vae_train.patch_ratio_lo);
        c.vae_train.patch_ratio_hi = train.value("patch_ratio_hi", c.vae_train.patch_ratio_hi);
        c.vae_train.frame_mask_lo = train.value("frame_mask_lo", c.vae_train.frame_mask_lo);
        c.vae_train.frame_mask_hi = train.value("frame_mask_hi", c.vae_train.frame_mask_hi);
        c.vae_train.target_psnr = train.value("target_psnr", c.vae_train.target_psnr);
        c.vae_train.target_ssim = train.value("target_ssim", c.vae_train.target_ssim);
    } else if (c.stage == "diffusion") {
        c.spectral = spectral_config_from_json_text(model.dump());
        check_keys(train,
                   {"vae_ckpt", "timesteps", "schedule_shape", "cond_dropout", "target_accuracy",
                    "fps"},
                   "train (diffusion)");
        c.diffusion_train.vae_ckpt = train.at("vae_ckpt").get<std::string>();
        c.diffusion_train.timesteps = train.value("timesteps", c.diffusion_train.timesteps);
        c.diffusion_train.schedule_shape =
            train.value("schedule_shape", c.diffusion_train.schedule_shape);
        c.diffusion_train.cond_dropout = train.value("cond_dropout", c.diffusion_train.cond_dropout);
        c.diffusion_train.target_accuracy =
            train.value("target_accuracy", c.diffusion_train.target_accuracy);
        c.diffusion_train.fps = train.value("fps", c.diffusion_train.fps);
    } else if (c.stage == "inpaint") {
        c.lora = lora_from_json(model);
        check_keys(train, {"base_ckpt", "cond_dropout", "sample_steps", "cfg_scale"},
                   "train (inpaint)");
        c.inpaint_train.base_ckpt = train.at("base_ckpt").get<std::string>();
        c.inpaint_train.cond_dropout = train.value("cond_dropout", c.inpaint_train.cond_dropout);
        c.inpaint_train.sample_steps = train.value("sample_steps", c.inpaint_train.sample_steps);
        c.inpaint_train.cfg_scale = train.value("cfg_scale", c.inpaint_train.cfg_scale);
    }
    c.validate();
    return c;
}

std::string run_config_to_json_text(const RunConfig& c) {
    json j;
    j["version"] = c.version;
    j["stage"] = c.stage;
    j["dataset"] = c.dataset;
    j["out_dir"] = c.out_dir;
    j["seed"] = c.seed;
    j["steps"] = c.steps;
    j["batch_size"] = c.batch_size;
    j["eval_every"] = c.eval_every;
    j["optimizer"] = optimizer_to_json(c.optimizer);
    if (c.stage == "vae") {
        j["model"] = json::parse(vae_config_to_json_text(c.vae));
        json t;
        t["patch_ratio_lo"] = c.vae_train.patch_ratio_lo;
        t["patch_ratio_hi"] = c.vae_train.patch_ratio_hi;
        t["frame_mask_lo"] = c.vae_train.frame_mask_lo;
        t["frame_mask_hi"] = c.vae_train.frame_mask_hi;
        t["target_psnr"] = c.vae_train.target_psnr;
        t["target_ssim"] = c.vae_train.target_ssim;
        j["train"] = t;
    } else if (c.stage == "diffusion") {
        j["model"] = json::parse(spectral_config_to_json_text(c.spectral));
        json t;
        t["vae_ckpt"] = c.diffusion_train.vae_ckpt;
        t["timesteps"] = c.diffusion_train.timesteps;
        t["schedule_shape"] = c.diffusion_train.schedule_shape;
        t["cond_dropout"] = c.diffusion_train.cond_dropout;
        t["target_accuracy"] = c.diffusion_train.target_accuracy;
        t["fps"] = c.diffusion_train.fps;
        j["train"] = t;
    } else {
        j["model"] = lora_to_json(c.lora);
        json t;
        t["base_ckpt"] = c.inpaint_train.base_ckpt;
        t["cond_dropout"] = c.inpaint_train.cond_dropout;
        t["sample_steps"] = c.inpaint_train.sample_steps;
        t["cfg_scale"] = c.inpaint_train.cfg_scale;
        j["train"] = t;
    }
    return j.dump(2) + "\n";
}

RunConfig load_run_config(const std::filesystem::path& path) {
    return run_config_from_json_text(read_file(path));
}

} // namespace maura
