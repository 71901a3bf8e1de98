// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0
//
// Multi-array checkpoint container: the MAURA1 magic, a container tag byte,
// a JSON header (kind, per-section module configs, named parameter table,
// content hash), then each parameter serialized in the single-array format.
// The content hash covers the whole payload region; adapters additionally
// record the hash of the base checkpoint they were trained against.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "maura/array_io.hpp"
#include "maura/nn.hpp"

namespace maura {

struct CheckpointSection {
    std::string config_json; // module config as serialized text
    std::vector<std::pair<std::string, RawArray>> arrays;
};

struct Checkpoint {
    std::string kind; // "vae" | "denoiser" | "adapter"
    int format_version = 1;
    std::map<std::string, CheckpointSection> sections;
    std::map<std::string, std::string> extra; // free-form metadata
    uint64_t content_hash = 0;                // filled by save/load
    uint64_t base_hash = 0;                   // adapter checkpoints only
};

void save_checkpoint(const std::filesystem::path& path, Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <class S>
CheckpointSection section_from_store(const ParamStore<S>& store, std::string config_json) {
    CheckpointSection sec;
    sec.config_json = std::move(config_json);
    for (const auto& [name, tensor] : store.params)
        sec.arrays.emplace_back(name, to_raw(tensor.template cast<float>()));
    return sec;
}

template <class S>
ParamStore<S> store_from_section(const CheckpointSection& sec) {
    ParamStore<S> store;
    for (const auto& [name, raw] : sec.arrays)
        store.add(name, raw_to_f32(raw).template cast<S>());
    return store;
}

} // namespace maura
