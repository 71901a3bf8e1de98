// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0

#include "maura/checkpoint.hpp"

#include <cstring>
#include <sstream>

#include <json.hpp>

#include "maura/rng.hpp"

namespace maura {

using json = nlohmann::ordered_json;

namespace {

constexpr char kMagic[6] = {'M', 'A', 'U', 'R', 'A', '1'};
constexpr uint8_t kContainerTag = 100;

std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

uint64_t hash_from_hex(const std::string& s) {
    return std::stoull(s, nullptr, 16);
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, Checkpoint& ckpt) {
    std::ostringstream payload(std::ios::binary);
    json params = json::object();
    for (const auto& [sec_name, sec] : ckpt.sections) {
        json names = json::array();
        for (const auto& [name, raw] : sec.arrays) {
            names.push_back(name);
            write_array(payload, raw);
        }
        params[sec_name] = names;
    }
    std::string payload_bytes = payload.str();
    ckpt.content_hash = fnv1a64(payload_bytes.data(), payload_bytes.size());

    json header;
    header["format_version"] = ckpt.format_version;
    header["kind"] = ckpt.kind;
    header["content_hash"] = hash_hex(ckpt.content_hash);
    if (ckpt.base_hash) header["base_hash"] = hash_hex(ckpt.base_hash);
    json configs = json::object();
    for (const auto& [sec_name, sec] : ckpt.sections)
        configs[sec_name] = json::parse(sec.config_json.empty() ? "{}" : sec.config_json);
    header["configs"] = configs;
    header["params"] = params;
    json extra = json::object();
    for (const auto& [k, v] : ckpt.extra) extra[k] = v;
    header["extra"] = extra;

    std::string header_text = header.dump();
    std::ostringstream os(std::ios::binary);
    os.write(kMagic, 6);
    os.put(static_cast<char>(kContainerTag));
    os.put(static_cast<char>(1)); // container version
    uint32_t len = static_cast<uint32_t>(header_text.size());
    unsigned char lb[4] = {static_cast<unsigned char>(len & 0xff),
                           static_cast<unsigned char>((len >> 8) & 0xff),
                           static_cast<unsigned char>((len >> 16) & 0xff),
                           static_cast<unsigned char>((len >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(lb), 4);
    os.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    os.write(payload_bytes.data(), static_cast<std::streamsize>(payload_bytes.size()));
    atomic_write_file(path, os.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::string bytes = read_file(path);
    std::istringstream is(bytes, std::ios::binary);
    char magic[6];
    if (!is.read(magic, 6) || std::memcmp(magic, kMagic, 6) != 0)
        throw FormatError(path.string() + ": bad magic bytes (not a MAURA1 container)");
    int tag = is.get();
    int version = is.get();
    if (tag != kContainerTag)
        throw FormatError(path.string() + ": not a checkpoint container (tag " +
                          std::to_string(tag) + ")");
    if (version != 1)
        throw FormatError(path.string() + ": unsupported container version " +
                          std::to_string(version));
    unsigned char lb[4];
    if (!is.read(reinterpret_cast<char*>(lb), 4))
        throw FormatError(path.string() + ": truncated header");
    uint32_t len = static_cast<uint32_t>(lb[0]) | (static_cast<uint32_t>(lb[1]) << 8) |
                   (static_cast<uint32_t>(lb[2]) << 16) | (static_cast<uint32_t>(lb[3]) << 24);
    std::string header_text(len, '\0');
    if (!is.read(header_text.data(), len)) throw FormatError(path.string() + ": truncated header");
    json header;
    try {
        header = json::parse(header_text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": corrupt header json (" + e.what() + ")");
    }

    std::string payload_bytes(bytes.begin() + static_cast<std::streamoff>(is.tellg()),
                              bytes.end());
    uint64_t got_hash = fnv1a64(payload_bytes.data(), payload_bytes.size());
    uint64_t want_hash = hash_from_hex(header.at("content_hash").get<std::string>());
    if (got_hash != want_hash)
        throw FormatError(path.string() + ": payload hash mismatch (file is corrupt)");

    Checkpoint ckpt;
    ckpt.format_version = header.at("format_version").get<int>();
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.content_hash = got_hash;
    if (header.contains("base_hash"))
        ckpt.base_hash = hash_from_hex(header.at("base_hash").get<std::string>());
    for (const auto& [k, v] : header.at("extra").items()) ckpt.extra[k] = v.get<std::string>();

    std::istringstream ps(payload_bytes, std::ios::binary);
    for (const auto& [sec_name, names] : header.at("params").items()) {
        CheckpointSection sec;
        sec.config_json = header.at("configs").at(sec_name).dump();
        for (const auto& name : names) {
            RawArray raw = read_array(ps, path.string() + "#" + name.get<std::string>());
            sec.arrays.emplace_back(name.get<std::string>(), std::move(raw));
        }
        ckpt.sections[sec_name] = std::move(sec);
    }
    return ckpt;
}

} // namespace maura
