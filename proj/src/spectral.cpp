// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0

#include "maura/spectral.hpp"

#include <set>
#include <sstream>

#include <json.hpp>

namespace maura {

using json = nlohmann::ordered_json;

const std::vector<std::string>& toy_vocabulary() {
    static const std::vector<std::string> vocab = {
        "<unk>", "<null>", "a",        "red",   "green",    "blue",  "yellow",
        "cyan",  "magenta", "orange",  "white", "square",   "circle", "triangle",
        "moves", "sits",    "still",   "right", "left",     "up",     "down",
        "diagonally",
    };
    return vocab;
}

int32_t toy_unk_id() { return 0; }
int32_t toy_null_id() { return 1; }

uint64_t toy_vocabulary_hash() {
    std::string joined;
    for (const auto& w : toy_vocabulary()) {
        joined += w;
        joined += '|';
    }
    return fnv1a64(joined);
}

std::vector<int32_t> tokenize_caption(const std::string& caption) {
    std::vector<int32_t> ids;
    std::istringstream is(caption);
    std::string word;
    const auto& vocab = toy_vocabulary();
    while (is >> word) {
        int32_t id = toy_unk_id();
        for (size_t i = 0; i < vocab.size(); ++i)
            if (vocab[i] == word) {
                id = static_cast<int32_t>(i);
                break;
            }
        ids.push_back(id);
    }
    if (ids.empty()) ids.push_back(toy_null_id());
    return ids;
}

std::string spectral_config_to_json_text(const SpectralConfig& cfg) {
    json j;
    j["embed_dim"] = cfg.embed_dim;
    j["heads"] = cfg.heads;
    j["blocks"] = cfg.blocks;
    j["vocab_k"] = cfg.vocab_k;
    j["text_dim"] = cfg.text_dim;
    j["max_timestep"] = cfg.max_timestep;
    j["fps_min"] = cfg.fps_min;
    j["fps_max"] = cfg.fps_max;
    j["time_embed_dim"] = cfg.time_embed_dim;
    j["fps_embed_dim"] = cfg.fps_embed_dim;
    j["cond_hidden"] = cfg.cond_hidden;
    j["ff_mult"] = cfg.ff_mult;
    j["rope_enabled"] = cfg.rope_enabled;
    j["fft_enabled"] = cfg.fft_enabled;
    return j.dump();
}

SpectralConfig spectral_config_from_json_text(const std::string& text) {
    json j = json::parse(text);
    static const std::set<std::string> allowed = {
        "embed_dim",     "heads",        "blocks",     "vocab_k",       "text_dim",
        "max_timestep",  "fps_min",      "fps_max",    "time_embed_dim", "fps_embed_dim",
        "cond_hidden",   "ff_mult",      "rope_enabled", "fft_enabled"};
    for (const auto& [key, value] : j.items())
        require(allowed.count(key) != 0, "unknown key '" + key + "' in spectral model config");
    SpectralConfig cfg;
    cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
    cfg.heads = j.value("heads", cfg.heads);
    cfg.blocks = j.value("blocks", cfg.blocks);
    cfg.vocab_k = j.value("vocab_k", cfg.vocab_k);
    cfg.text_dim = j.value("text_dim", cfg.text_dim);
    cfg.max_timestep = j.value("max_timestep", cfg.max_timestep);
    cfg.fps_min = j.value("fps_min", cfg.fps_min);
    cfg.fps_max = j.value("fps_max", cfg.fps_max);
    cfg.time_embed_dim = j.value("time_embed_dim", cfg.time_embed_dim);
    cfg.fps_embed_dim = j.value("fps_embed_dim", cfg.fps_embed_dim);
    cfg.cond_hidden = j.value("cond_hidden", cfg.cond_hidden);
    cfg.ff_mult = j.value("ff_mult", cfg.ff_mult);
    cfg.rope_enabled = j.value("rope_enabled", cfg.rope_enabled);
    cfg.fft_enabled = j.value("fft_enabled", cfg.fft_enabled);
    cfg.validate();
    return cfg;
}

} // namespace maura
