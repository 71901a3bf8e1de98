// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0

#include "maura/imageio.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "maura/array_io.hpp"

namespace maura {

namespace {

// ---------------------------------------------------------------- PNG

uint32_t crc32_of(const uint8_t* data, size_t n, uint32_t crc = 0) {
    static uint32_t table[256];
    static bool init = false;
    if (!init) {
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            table[i] = c;
        }
        init = true;
    }
    crc ^= 0xffffffffu;
    for (size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

void put_be32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>(v & 0xff));
}

void png_chunk(std::string& out, const char type[4], const std::string& body) {
    put_be32(out, static_cast<uint32_t>(body.size()));
    std::string tb(type, 4);
    tb += body;
    out += tb;
    put_be32(out, crc32_of(reinterpret_cast<const uint8_t*>(tb.data()), tb.size()));
}

// zlib stream with stored deflate blocks
std::string zlib_stored(const std::string& raw) {
    std::string out;
    out.push_back(0x78);
    out.push_back(0x01);
    size_t pos = 0;
    while (pos < raw.size() || raw.empty()) {
        size_t n = std::min<size_t>(65535, raw.size() - pos);
        bool last = pos + n == raw.size();
        out.push_back(last ? 1 : 0);
        out.push_back(static_cast<char>(n & 0xff));
        out.push_back(static_cast<char>((n >> 8) & 0xff));
        out.push_back(static_cast<char>(~n & 0xff));
        out.push_back(static_cast<char>((~n >> 8) & 0xff));
        out.append(raw, pos, n);
        pos += n;
        if (last) break;
    }
    uint32_t a = 1, b = 0;
    for (unsigned char c : raw) {
        a = (a + c) % 65521;
        b = (b + a) % 65521;
    }
    put_be32(out, (b << 16) | a);
    return out;
}

// ---------------------------------------------------------------- GIF

// 6x6x6 color cube starting at palette index 0; remaining entries black.
uint8_t cube_index(uint8_t r, uint8_t g, uint8_t b) {
    auto q = [](uint8_t v) { return static_cast<int>((v * 5 + 127) / 255); };
    return static_cast<uint8_t>(q(r) * 36 + q(g) * 6 + q(b));
}

void gif_lzw(std::string& out, const std::vector<uint8_t>& indices) {
    constexpr int min_code_size = 8;
    const int clear_code = 1 << min_code_size;   // 256
    const int end_code = clear_code + 1;         // 257
    out.push_back(static_cast<char>(min_code_size));

    std::string block;
    uint32_t bitbuf = 0;
    int bitcount = 0;
    int code_size = min_code_size + 1;
    auto emit = [&](int code) {
        bitbuf |= static_cast<uint32_t>(code) << bitcount;
        bitcount += code_size;
        while (bitcount >= 8) {
            block.push_back(static_cast<char>(bitbuf & 0xff));
            bitbuf >>= 8;
            bitcount -= 8;
            if (block.size() == 255) {
                out.push_back(static_cast<char>(255));
                out += block;
                block.clear();
            }
        }
    };

    std::map<std::pair<int, int>, int> table; // (prefix code, next byte) -> code
    int next_code = end_code + 1;
    emit(clear_code);
    int prefix = -1;
    for (uint8_t sym : indices) {
        if (prefix < 0) {
            prefix = sym;
            continue;
        }
        auto it = table.find({prefix, sym});
        if (it != table.end()) {
            prefix = it->second;
            continue;
        }
        emit(prefix);
        table[{prefix, sym}] = next_code++;
        if (next_code > (1 << code_size) && code_size < 12) ++code_size;
        if (next_code >= 4096) {
            emit(clear_code);
            table.clear();
            next_code = end_code + 1;
            code_size = min_code_size + 1;
        }
        prefix = sym;
    }
    if (prefix >= 0) emit(prefix);
    emit(end_code);
    if (bitcount > 0) block.push_back(static_cast<char>(bitbuf & 0xff));
    if (!block.empty()) {
        out.push_back(static_cast<char>(block.size()));
        out += block;
    }
    out.push_back(0); // block terminator
}

void put_u16le(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

} // namespace

TensorU8 clip_frame_rgb8(const VideoClip& clip, int64_t frame) {
    const int64_t h = clip.height(), w = clip.width();
    TensorU8 out({h, w, 3});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < 3; ++c) {
                float v = clip.pixels.at(frame, c, y, x);
                out.at(y, x, c) = static_cast<uint8_t>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
            }
    return out;
}

void write_png_rgb(const std::filesystem::path& path, const TensorU8& rgb) {
    require(rgb.rank() == 3 && rgb.shape[2] == 3, "png input must be (H,W,3)");
    const int64_t h = rgb.shape[0], w = rgb.shape[1];
    std::string out("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr;
    put_be32(ihdr, static_cast<uint32_t>(w));
    put_be32(ihdr, static_cast<uint32_t>(h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    png_chunk(out, "IHDR", ihdr);
    std::string raw;
    raw.reserve(static_cast<size_t>(h * (w * 3 + 1)));
    for (int64_t y = 0; y < h; ++y) {
        raw.push_back(0); // no filter
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < 3; ++c)
                raw.push_back(static_cast<char>(rgb.at(y, x, c)));
    }
    png_chunk(out, "IDAT", zlib_stored(raw));
    png_chunk(out, "IEND", "");
    atomic_write_file(path, out);
}

void write_png_strip(const std::filesystem::path& path, const VideoClip& clip) {
    const int64_t n = clip.frames(), h = clip.height(), w = clip.width();
    TensorU8 strip({h, n * w, 3});
    for (int64_t f = 0; f < n; ++f) {
        TensorU8 frame = clip_frame_rgb8(clip, f);
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                for (int64_t c = 0; c < 3; ++c) strip.at(y, f * w + x, c) = frame.at(y, x, c);
    }
    write_png_rgb(path, strip);
}

void write_gif(const std::filesystem::path& path, const VideoClip& clip) {
    const int64_t n = clip.frames(), h = clip.height(), w = clip.width();
    std::string out = "GIF89a";
    put_u16le(out, static_cast<uint16_t>(w));
    put_u16le(out, static_cast<uint16_t>(h));
    out.push_back(static_cast<char>(0xf7)); // global color table, 256 entries
    out.push_back(0);                       // background
    out.push_back(0);                       // aspect
    for (int i = 0; i < 256; ++i) {
        if (i < 216) {
            out.push_back(static_cast<char>((i / 36) * 51));
            out.push_back(static_cast<char>(((i / 6) % 6) * 51));
            out.push_back(static_cast<char>((i % 6) * 51));
        } else {
            out.append(3, '\0');
        }
    }
    // loop forever
    out += std::string("\x21\xff\x0b", 3);
    out += "NETSCAPE2.0";
    out += std::string("\x03\x01\x00\x00\x00", 5);

    const uint16_t delay = static_cast<uint16_t>(std::max(2, 100 / std::max(1, clip.fps)));
    for (int64_t f = 0; f < n; ++f) {
        out += std::string("\x21\xf9\x04\x04", 4);
        put_u16le(out, delay);
        out.push_back(0); // no transparency
        out.push_back(0);
        out.push_back(0x2c); // image descriptor
        put_u16le(out, 0);
        put_u16le(out, 0);
        put_u16le(out, static_cast<uint16_t>(w));
        put_u16le(out, static_cast<uint16_t>(h));
        out.push_back(0); // no local color table
        TensorU8 frame = clip_frame_rgb8(clip, f);
        std::vector<uint8_t> indices(static_cast<size_t>(h * w));
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                indices[static_cast<size_t>(y * w + x)] =
                    cube_index(frame.at(y, x, 0), frame.at(y, x, 1), frame.at(y, x, 2));
        gif_lzw(out, indices);
    }
    out.push_back(0x3b); // trailer
    atomic_write_file(path, out);
}

} // namespace maura
