// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0
//
// Single-array binary container: magic "MAURA1" (6 bytes), u8 dtype code
// (0 = float32, 1 = uint8, 2 = int32), u8 rank, rank little-endian u32 dims,
// then the row-major little-endian payload.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "maura/tensor.hpp"

namespace maura {

enum class DType : uint8_t { f32 = 0, u8 = 1, i32 = 2 };

inline size_t dtype_size(DType d) {
    switch (d) {
        case DType::f32: return 4;
        case DType::u8: return 1;
        case DType::i32: return 4;
    }
    throw FormatError("unknown dtype code");
}

struct RawArray {
    DType dtype;
    std::vector<int64_t> shape;
    std::vector<uint8_t> bytes; // little-endian payload

    int64_t numel() const { return Tensor<float>::numel_of(shape); }
};

// Stream-level primitives so arrays can be embedded in larger containers.
void write_array(std::ostream& os, const RawArray& a);
RawArray read_array(std::istream& is, const std::string& origin);

// Whole-file helpers; writes go through a temp file + rename.
void save_array(const std::filesystem::path& path, const RawArray& a);
RawArray load_array(const std::filesystem::path& path);

RawArray to_raw(const TensorF& t);
RawArray to_raw(const TensorI& t);
RawArray to_raw(const TensorU8& t);

TensorF raw_to_f32(const RawArray& a);
TensorI raw_to_i32(const RawArray& a);
TensorU8 raw_to_u8(const RawArray& a);

// Atomic byte-level file write (temp + rename).
void atomic_write_file(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

} // namespace maura
