// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0

#include "maura/array_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace maura {

// Payloads are defined little-endian; raw memcpy below relies on this.
static_assert(std::endian::native == std::endian::little);

namespace {

constexpr char kMagic[6] = {'M', 'A', 'U', 'R', 'A', '1'};

void put_u32le(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32le(std::istream& is, const std::string& origin) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw FormatError(origin + ": truncated header");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

} // namespace

void write_array(std::ostream& os, const RawArray& a) {
    os.write(kMagic, 6);
    uint8_t dt = static_cast<uint8_t>(a.dtype);
    uint8_t rank = static_cast<uint8_t>(a.shape.size());
    os.put(static_cast<char>(dt));
    os.put(static_cast<char>(rank));
    for (int64_t d : a.shape) {
        require(d >= 0 && d <= 0xffffffffLL, "array dimension out of u32 range");
        put_u32le(os, static_cast<uint32_t>(d));
    }
    require(a.bytes.size() == static_cast<size_t>(a.numel()) * dtype_size(a.dtype),
            "array payload size mismatch");
    os.write(reinterpret_cast<const char*>(a.bytes.data()),
             static_cast<std::streamsize>(a.bytes.size()));
}

RawArray read_array(std::istream& is, const std::string& origin) {
    char magic[6];
    if (!is.read(magic, 6)) throw FormatError(origin + ": truncated header");
    if (std::memcmp(magic, kMagic, 6) != 0)
        throw FormatError(origin + ": bad magic bytes (not a MAURA1 array)");
    int dt = is.get();
    int rank = is.get();
    if (dt < 0 || rank < 0) throw FormatError(origin + ": truncated header");
    if (dt > 2) throw FormatError(origin + ": unknown dtype code " + std::to_string(dt));
    RawArray a;
    a.dtype = static_cast<DType>(dt);
    a.shape.resize(static_cast<size_t>(rank));
    for (auto& d : a.shape) d = get_u32le(is, origin);
    size_t payload = static_cast<size_t>(a.numel()) * dtype_size(a.dtype);
    a.bytes.resize(payload);
    if (!is.read(reinterpret_cast<char*>(a.bytes.data()), static_cast<std::streamsize>(payload)))
        throw FormatError(origin + ": truncated payload (expected " + std::to_string(payload) +
                          " bytes)");
    return a;
}

void save_array(const std::filesystem::path& path, const RawArray& a) {
    std::ostringstream os(std::ios::binary);
    write_array(os, a);
    atomic_write_file(path, os.str());
}

RawArray load_array(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError(path.string() + ": cannot open");
    return read_array(is, path.string());
}

namespace {

template <class S>
RawArray to_raw_impl(const Tensor<S>& t, DType dt) {
    RawArray a;
    a.dtype = dt;
    a.shape = t.shape;
    a.bytes.resize(t.data.size() * sizeof(S));
    std::memcpy(a.bytes.data(), t.data.data(), a.bytes.size());
    return a;
}

template <class S>
Tensor<S> from_raw_impl(const RawArray& a, DType expect, const char* what) {
    if (a.dtype != expect)
        throw FormatError(std::string("array dtype mismatch: expected ") + what);
    Tensor<S> t;
    t.shape = a.shape;
    t.data.resize(static_cast<size_t>(a.numel()));
    std::memcpy(t.data.data(), a.bytes.data(), a.bytes.size());
    return t;
}

} // namespace

RawArray to_raw(const TensorF& t) { return to_raw_impl(t, DType::f32); }
RawArray to_raw(const TensorI& t) { return to_raw_impl(t, DType::i32); }
RawArray to_raw(const TensorU8& t) { return to_raw_impl(t, DType::u8); }

TensorF raw_to_f32(const RawArray& a) { return from_raw_impl<float>(a, DType::f32, "float32"); }
TensorI raw_to_i32(const RawArray& a) { return from_raw_impl<int32_t>(a, DType::i32, "int32"); }
TensorU8 raw_to_u8(const RawArray& a) { return from_raw_impl<uint8_t>(a, DType::u8, "uint8"); }

void atomic_write_file(const std::filesystem::path& path, const std::string& bytes) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw ValidationError(tmp.string() + ": cannot open for writing");
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw ValidationError(tmp.string() + ": write failed");
    }
    fs::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError(path.string() + ": cannot open");
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

} // namespace maura
