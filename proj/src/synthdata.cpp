// Copyright 2026 the maura authors
// SPDX-License-Identifier: Apache-2.0

#include "maura/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "maura/array_io.hpp"
#include "maura/rng.hpp"

namespace maura {

using json = nlohmann::ordered_json;

void VideoClip::validate() const {
    require(pixels.rank() == 4 && pixels.shape[1] == 3, "clip must be (N,3,H,W)");
    require(frames() >= 1, "clip needs at least one frame");
    require(height() % 16 == 0 && width() % 16 == 0, "H and W must be divisible by 16");
    require(fps >= 1, "fps must be positive");
    bool ok = true;
    for (float v : pixels.data) ok = ok && std::isfinite(v) && v >= 0.f && v <= 1.f;
    require(ok, "pixel values must be finite in [0,1]");
}

void InpaintSample::validate() const {
    clip.validate();
    require(masks.rank() == 3 && masks.shape[0] == clip.frames() &&
                masks.shape[1] == clip.height() && masks.shape[2] == clip.width(),
            "masks must match clip (N,H,W)");
    require(sketch.rank() == 2, "sketch must be a single-channel image");
    bool any = false;
    for (uint8_t v : sketch.data) any = any || v != 0;
    require(any, "sketch must have at least one set pixel");
    require(!caption.empty(), "caption must be nonempty");
}

std::string shape_name(Shape s) {
    switch (s) {
        case Shape::square: return "square";
        case Shape::circle: return "circle";
        case Shape::triangle: return "triangle";
    }
    throw ValidationError("bad shape");
}

Shape shape_from_name(const std::string& name) {
    if (name == "square") return Shape::square;
    if (name == "circle") return Shape::circle;
    if (name == "triangle") return Shape::triangle;
    throw FormatError("unknown shape name: " + name);
}

namespace {

struct NamedColor {
    const char* name;
    std::array<float, 3> rgb;
};

// Caption palette; generated specs use these verbatim so captions stay exact.
constexpr NamedColor kPalette[] = {
    {"red", {0.85f, 0.15f, 0.15f}},   {"green", {0.15f, 0.8f, 0.2f}},
    {"blue", {0.15f, 0.25f, 0.85f}},  {"yellow", {0.9f, 0.85f, 0.15f}},
    {"cyan", {0.15f, 0.8f, 0.8f}},    {"magenta", {0.85f, 0.2f, 0.8f}},
    {"orange", {0.9f, 0.55f, 0.15f}}, {"white", {0.92f, 0.92f, 0.92f}},
};
constexpr int kPaletteSize = static_cast<int>(sizeof(kPalette) / sizeof(kPalette[0]));

const char* nearest_color_name(const std::array<float, 3>& rgb) {
    int best = 0;
    float best_d = 1e30f;
    for (int i = 0; i < kPaletteSize; ++i) {
        float d = 0;
        for (int c = 0; c < 3; ++c) {
            float t = rgb[static_cast<size_t>(c)] - kPalette[i].rgb[static_cast<size_t>(c)];
            d += t * t;
        }
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return kPalette[best].name;
}

bool inside_shape(Shape s, int extent, float dx, float dy) {
    switch (s) {
        case Shape::square:
            return std::abs(dx) <= static_cast<float>(extent) &&
                   std::abs(dy) <= static_cast<float>(extent);
        case Shape::circle:
            return dx * dx + dy * dy <= static_cast<float>(extent) * static_cast<float>(extent);
        case Shape::triangle: {
            // up-pointing isoceles: apex at dy = -extent
            float row = dy + static_cast<float>(extent); // 0 .. 2*extent
            if (row < 0 || row > 2.f * static_cast<float>(extent)) return false;
            return std::abs(dx) <= row * 0.5f;
        }
    }
    return false;
}

} // namespace

std::string caption_for(const SceneSpec& spec) {
    std::ostringstream os;
    os << "a " << nearest_color_name(spec.color) << " " << shape_name(spec.shape);
    float vx = spec.velocity[0], vy = spec.velocity[1];
    if (vx == 0.f && vy == 0.f) {
        os << " sits still";
    } else if (vx != 0.f && vy != 0.f) {
        os << " moves diagonally";
    } else if (vx != 0.f) {
        os << " moves " << (vx > 0 ? "right" : "left");
    } else {
        os << " moves " << (vy > 0 ? "down" : "up");
    }
    return os.str();
}

InpaintSample generate_clip(const SceneSpec& spec, int n_frames, int size, uint64_t seed) {
    require(n_frames >= 1, "n_frames must be >= 1");
    require(size >= 16 && size % 16 == 0, "size must be a positive multiple of 16");
    require(spec.extent >= 1 && 2 * spec.extent < size, "object extent does not fit the frame");
    (void)seed; // rendering is a pure function of the spec; seed reserved for noise variants

    const int64_t n = n_frames, hw = size;
    InpaintSample out;
    out.clip.pixels = TensorF({n, 3, hw, hw});
    out.clip.fps = 8;
    out.masks = TensorU8({n, hw, hw});
    out.caption = caption_for(spec);

    const float lo = static_cast<float>(spec.extent);
    const float hi = static_cast<float>(size - 1 - spec.extent);
    for (int64_t f = 0; f < n; ++f) {
        float cx = std::clamp(static_cast<float>(spec.start[0]) + spec.velocity[0] * f, lo, hi);
        float cy = std::clamp(static_cast<float>(spec.start[1]) + spec.velocity[1] * f, lo, hi);
        for (int64_t y = 0; y < hw; ++y)
            for (int64_t x = 0; x < hw; ++x) {
                bool in = inside_shape(spec.shape, spec.extent, static_cast<float>(x) - cx,
                                       static_cast<float>(y) - cy);
                out.masks.at(f, y, x) = in ? 1 : 0;
                for (int64_t c = 0; c < 3; ++c)
                    out.clip.pixels.at(f, c, y, x) =
                        in ? spec.color[static_cast<size_t>(c)]
                           : spec.background[static_cast<size_t>(c)];
            }
    }

    // Sketch: 4-neighbour boundary of the frame-0 object mask.
    out.sketch = TensorU8({hw, hw});
    for (int64_t y = 0; y < hw; ++y)
        for (int64_t x = 0; x < hw; ++x) {
            if (!out.masks.at(0, y, x)) continue;
            bool edge = y == 0 || y == hw - 1 || x == 0 || x == hw - 1 ||
                        !out.masks.at(0, y - 1, x) || !out.masks.at(0, y + 1, x) ||
                        !out.masks.at(0, y, x - 1) || !out.masks.at(0, y, x + 1);
            out.sketch.at(y, x) = edge ? 1 : 0;
        }

    out.validate();
    return out;
}

double cosine_ratio(int64_t step, int64_t total_steps, double lo, double hi) {
    require(total_steps >= 1, "total_steps must be >= 1");
    require(step >= 0 && step <= total_steps, "step out of range [0, total_steps]");
    require(lo >= 0.0 && lo <= hi && hi <= 1.0, "need 0 <= lo <= hi <= 1");
    constexpr double kPi = 3.14159265358979323846;
    double phase = static_cast<double>(step) / static_cast<double>(total_steps);
    return lo + (hi - lo) * (1.0 - std::cos(kPi * phase)) / 2.0;
}

std::pair<VideoClip, MaskEvent> patch_mask(const VideoClip& clip, int patch_size, double ratio,
                                           uint64_t seed) {
    require(patch_size == 16 || patch_size == 32, "patch_size must be 16 or 32");
    require(ratio >= 0.0 && ratio <= 1.0, "ratio must be in [0,1]");
    const int64_t n = clip.frames(), h = clip.height(), w = clip.width();
    require(h % patch_size == 0 && w % patch_size == 0,
            "patch grid must tile the frame exactly (patch_size " + std::to_string(patch_size) +
                " vs " + std::to_string(h) + "x" + std::to_string(w) + ")");
    const int64_t ph = h / patch_size, pw = w / patch_size;
    const int64_t total = n * ph * pw;
    const int64_t k = static_cast<int64_t>(std::ceil(ratio * static_cast<double>(total)));

    // partial Fisher-Yates: first k entries are a uniform sample w/o replacement
    std::vector<int64_t> ids(static_cast<size_t>(total));
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng(mix_seed(seed, 0x70617463 /* 'patc' */));
    for (int64_t i = 0; i < k; ++i)
        std::swap(ids[static_cast<size_t>(i)],
                  ids[static_cast<size_t>(rng.uniform_int(i, total - 1))]);
    ids.resize(static_cast<size_t>(k));
    std::sort(ids.begin(), ids.end());

    VideoClip out = clip;
    for (int64_t id : ids) {
        int64_t f = id / (ph * pw);
        int64_t py = (id / pw) % ph;
        int64_t px = id % pw;
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t y = py * patch_size; y < (py + 1) * patch_size; ++y)
                for (int64_t x = px * patch_size; x < (px + 1) * patch_size; ++x)
                    out.pixels.at(f, c, y, x) = 0.f;
    }
    MaskEvent ev;
    ev.kind = MaskKind::patch;
    ev.patch_size = patch_size;
    ev.ratio = ratio;
    ev.patches = std::move(ids);
    return {std::move(out), std::move(ev)};
}

std::pair<VideoClip, int64_t> full_frame_mask(const VideoClip& clip, uint64_t seed) {
    const int64_t n = clip.frames();
    require(n >= 2, "full-frame masking needs at least 2 frames");
    Rng rng(mix_seed(seed, 0x6672616d /* 'fram' */));
    int64_t idx = rng.uniform_int(0, n - 1);
    VideoClip out = clip;
    const int64_t frame_elems = 3 * clip.height() * clip.width();
    std::fill(out.pixels.data.begin() + idx * frame_elems,
              out.pixels.data.begin() + (idx + 1) * frame_elems, 0.f);
    return {std::move(out), idx};
}

SceneSpec scene_for_index(int64_t index, int size, uint64_t seed) {
    // Enumerate shape x color x motion first so small datasets are distinct.
    static constexpr std::array<std::array<float, 2>, 6> kMotions{{
        {2.f, 0.f}, {-2.f, 0.f}, {0.f, 2.f}, {0.f, -2.f}, {1.f, 1.f}, {0.f, 0.f},
    }};
    Rng rng(mix_seed(seed, static_cast<uint64_t>(index) ^ 0x7363656eULL /* 'scen' */));
    SceneSpec spec;
    spec.shape = static_cast<Shape>(index % 3);
    spec.color = kPalette[(index / 3) % kPaletteSize].rgb;
    spec.velocity = kMotions[static_cast<size_t>((index / (3 * kPaletteSize)) % 6)];
    if (index >= 3 * kPaletteSize * 6) // exhausted the grid: randomize motion
        spec.velocity = {static_cast<float>(rng.uniform_int(-2, 2)),
                         static_cast<float>(rng.uniform_int(-2, 2))};
    spec.extent = std::max(2, size / 8);
    int lo = spec.extent, hi = size - 1 - spec.extent;
    spec.start = {static_cast<int>(rng.uniform_int(lo, hi)),
                  static_cast<int>(rng.uniform_int(lo, hi))};
    float g = static_cast<float>(rng.uniform_int(0, 3)) * 0.05f;
    spec.background = {g, g, g + 0.05f};
    return spec;
}

std::vector<DatasetEntry> make_dataset(int64_t n_clips, int n_frames, int size, uint64_t seed) {
    require(n_clips >= 0, "clip count must be nonnegative");
    std::vector<DatasetEntry> out;
    out.reserve(static_cast<size_t>(n_clips));
    for (int64_t i = 0; i < n_clips; ++i) {
        DatasetEntry e;
        std::ostringstream id;
        id << "clip_" << std::setw(5) << std::setfill('0') << i;
        e.id = id.str();
        e.seed = mix_seed(seed, static_cast<uint64_t>(i));
        e.spec = scene_for_index(i, size, seed);
        e.sample = generate_clip(e.spec, n_frames, size, e.seed);
        out.push_back(std::move(e));
    }
    return out;
}

namespace {

json spec_to_json(const SceneSpec& s) {
    json j;
    j["shape"] = shape_name(s.shape);
    j["color"] = s.color;
    j["velocity"] = s.velocity;
    j["start"] = s.start;
    j["background"] = s.background;
    j["extent"] = s.extent;
    return j;
}

SceneSpec spec_from_json(const json& j) {
    SceneSpec s;
    s.shape = shape_from_name(j.at("shape").get<std::string>());
    s.color = j.at("color").get<std::array<float, 3>>();
    s.velocity = j.at("velocity").get<std::array<float, 2>>();
    s.start = j.at("start").get<std::array<int, 2>>();
    s.background = j.at("background").get<std::array<float, 3>>();
    s.extent = j.at("extent").get<int>();
    return s;
}

} // namespace

void write_dataset(const std::vector<DatasetEntry>& entries, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    json manifest;
    manifest["version"] = 1;
    manifest["samples"] = json::array();
    for (const auto& e : entries) {
        e.sample.validate();
        json rec;
        rec["id"] = e.id;
        rec["seed"] = e.seed;
        rec["spec"] = spec_to_json(e.spec);
        rec["caption"] = e.sample.caption;
        rec["fps"] = e.sample.clip.fps;
        json files;
        files["pixels"] = e.id + "_pixels.m1";
        files["masks"] = e.id + "_masks.m1";
        files["sketch"] = e.id + "_sketch.m1";
        rec["files"] = files;
        manifest["samples"].push_back(rec);
        save_array(dir / (e.id + "_pixels.m1"), to_raw(e.sample.clip.pixels));
        save_array(dir / (e.id + "_masks.m1"), to_raw(e.sample.masks));
        save_array(dir / (e.id + "_sketch.m1"), to_raw(e.sample.sketch));
    }
    atomic_write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<DatasetEntry> read_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::path mpath = dir / "manifest.json";
    json manifest;
    try {
        manifest = json::parse(read_file(mpath));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(mpath.string() + ": manifest is not valid JSON (" + e.what() + ")");
    }
    if (!manifest.contains("version") || manifest["version"].get<int>() != 1)
        throw FormatError(mpath.string() + ": unsupported manifest version");
    std::vector<DatasetEntry> out;
    for (const auto& rec : manifest.at("samples")) {
        DatasetEntry e;
        e.id = rec.at("id").get<std::string>();
        e.seed = rec.at("seed").get<uint64_t>();
        e.spec = spec_from_json(rec.at("spec"));
        e.sample.caption = rec.at("caption").get<std::string>();
        e.sample.clip.fps = rec.at("fps").get<int>();
        auto file_of = [&](const char* key) {
            fs::path p = dir / rec.at("files").at(key).get<std::string>();
            if (!fs::exists(p))
                throw FormatError("manifest/file mismatch: " + p.string() +
                                  " listed in manifest but missing on disk");
            return p;
        };
        e.sample.clip.pixels = raw_to_f32(load_array(file_of("pixels")));
        e.sample.masks = raw_to_u8(load_array(file_of("masks")));
        e.sample.sketch = raw_to_u8(load_array(file_of("sketch")));
        e.sample.validate();
        out.push_back(std::move(e));
    }
    return out;
}

} // namespace maura
