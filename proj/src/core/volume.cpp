#include "core/volume.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

namespace rili {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::array<double, 3> Volume::bbox_lo() const {
    return {origin_mm[0] - 0.5 * spacing_mm[0], origin_mm[1] - 0.5 * spacing_mm[1],
            origin_mm[2] - 0.5 * spacing_mm[2]};
}

std::array<double, 3> Volume::bbox_hi() const {
    return {origin_mm[0] + (static_cast<double>(shape[0]) - 0.5) * spacing_mm[0],
            origin_mm[1] + (static_cast<double>(shape[1]) - 0.5) * spacing_mm[1],
            origin_mm[2] + (static_cast<double>(shape[2]) - 0.5) * spacing_mm[2]};
}

void validate_prep_config(const PrepConfig& cfg) {
    if (!(cfg.window_lo_hu < cfg.window_hi_hu))
        throw ValidationError("prep: window_lo_hu must be below window_hi_hu");
    if (!(cfg.crop_side_mm > 0)) throw ValidationError("prep: crop_side_mm must be positive");
    if (cfg.input_resolution < 16) throw ValidationError("prep: input_resolution must be >= 16");
    for (double s : cfg.target_spacing_mm)
        if (!(s > 0)) throw ValidationError("prep: target spacing must be positive");
    if (cfg.input_mode != "orthogonal" && cfg.input_mode != "axial_repeat")
        throw ValidationError("prep: input_mode must be 'orthogonal' or 'axial_repeat', got '" +
                              cfg.input_mode + "'");
}

void validate_volume(const Volume& v) {
    for (int a = 0; a < 3; ++a) {
        if (v.shape[static_cast<size_t>(a)] <= 0)
            throw ValidationError("volume: shape must be positive on every axis");
        if (!(v.spacing_mm[static_cast<size_t>(a)] > 0))
            throw ValidationError("volume: spacing must be strictly positive on every axis");
    }
    if (static_cast<int64_t>(v.voxels.size()) != v.numel())
        throw FormatError("volume: voxel count " + std::to_string(v.voxels.size()) +
                          " does not match shape product " + std::to_string(v.numel()));
    const auto lo = v.bbox_lo();
    const auto hi = v.bbox_hi();
    double outside = 0;
    for (int a = 0; a < 3; ++a) {
        const double d = std::max({lo[static_cast<size_t>(a)] - v.isocenter_mm[static_cast<size_t>(a)],
                                   v.isocenter_mm[static_cast<size_t>(a)] - hi[static_cast<size_t>(a)], 0.0});
        outside = std::max(outside, d);
    }
    if (outside > 5.0)
        throw ValidationError("volume: isocenter lies " + std::to_string(outside) +
                              " mm outside the volume bounding box");
    if (outside > 0.0)
        std::cerr << "warning: isocenter " << outside << " mm outside volume bounds\n";
}

namespace {

std::array<double, 3> read_vec3(const ordered_json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3)
        throw FormatError(std::string("volume meta: missing or malformed '") + key + "'");
    std::array<double, 3> out{};
    for (int i = 0; i < 3; ++i) out[static_cast<size_t>(i)] = j[key][static_cast<size_t>(i)].get<double>();
    return out;
}

} // namespace

Volume load_volume(const fs::path& meta_path) {
    const std::string name = meta_path.filename().string();
    constexpr const char* kSuffix = ".meta.json";
    if (name.size() <= std::strlen(kSuffix) || name.substr(name.size() - std::strlen(kSuffix)) != kSuffix)
        throw ValidationError("load_volume: expected a path ending in .meta.json, got " + meta_path.string());

    std::ifstream mf(meta_path);
    if (!mf) throw IoError("load_volume: cannot open " + meta_path.string());
    ordered_json j;
    try {
        mf >> j;
    } catch (const std::exception& e) {
        throw FormatError("load_volume: bad JSON in " + meta_path.string() + ": " + e.what());
    }

    Volume v;
    {
        if (!j.contains("shape") || !j["shape"].is_array() || j["shape"].size() != 3)
            throw FormatError("volume meta: missing or malformed 'shape'");
        for (int i = 0; i < 3; ++i) v.shape[static_cast<size_t>(i)] = j["shape"][static_cast<size_t>(i)].get<int64_t>();
    }
    v.spacing_mm = read_vec3(j, "spacing_mm");
    v.origin_mm = read_vec3(j, "origin_mm");
    v.isocenter_mm = read_vec3(j, "isocenter_mm");
    const std::string dtype = j.value("dtype", "");
    if (dtype != "i16" && dtype != "f32")
        throw FormatError("volume meta: dtype must be 'i16' or 'f32', got '" + dtype + "'");
    for (int a = 0; a < 3; ++a) {
        if (v.shape[static_cast<size_t>(a)] <= 0) throw ValidationError("volume meta: shape must be positive");
        if (!(v.spacing_mm[static_cast<size_t>(a)] > 0))
            throw ValidationError("volume meta: spacing must be strictly positive");
    }

    fs::path raw_path = meta_path;
    raw_path.replace_filename(name.substr(0, name.size() - std::strlen(kSuffix)) + ".raw");
    std::ifstream rf(raw_path, std::ios::binary);
    if (!rf) throw IoError("load_volume: cannot open " + raw_path.string());
    rf.seekg(0, std::ios::end);
    const int64_t bytes = static_cast<int64_t>(rf.tellg());
    rf.seekg(0);
    const int64_t elem = dtype == "i16" ? 2 : 4;
    if (bytes != v.numel() * elem)
        throw FormatError("load_volume: " + raw_path.string() + " holds " + std::to_string(bytes) +
                          " bytes, expected " + std::to_string(v.numel() * elem));

    v.voxels.resize(static_cast<size_t>(v.numel()));
    if (dtype == "i16") {
        std::vector<int16_t> buf(static_cast<size_t>(v.numel()));
        rf.read(reinterpret_cast<char*>(buf.data()), bytes);
        for (size_t i = 0; i < buf.size(); ++i) v.voxels[i] = static_cast<float>(buf[i]);
    } else {
        rf.read(reinterpret_cast<char*>(v.voxels.data()), bytes);
    }
    if (!rf) throw IoError("load_volume: short read from " + raw_path.string());

    validate_volume(v);
    return v;
}

void save_volume(const Volume& v, const fs::path& dir, const std::string& id, const std::string& dtype) {
    if (dtype != "i16" && dtype != "f32")
        throw ValidationError("save_volume: dtype must be 'i16' or 'f32', got '" + dtype + "'");
    if (static_cast<int64_t>(v.voxels.size()) != v.numel())
        throw ValidationError("save_volume: voxel count does not match shape");
    std::error_code ec;
    fs::create_directories(dir, ec);

    ordered_json j;
    j["shape"] = {v.shape[0], v.shape[1], v.shape[2]};
    j["spacing_mm"] = {v.spacing_mm[0], v.spacing_mm[1], v.spacing_mm[2]};
    j["origin_mm"] = {v.origin_mm[0], v.origin_mm[1], v.origin_mm[2]};
    j["isocenter_mm"] = {v.isocenter_mm[0], v.isocenter_mm[1], v.isocenter_mm[2]};
    j["dtype"] = dtype;

    const fs::path meta_path = dir / (id + ".meta.json");
    {
        std::ofstream mf(meta_path);
        if (!mf) throw IoError("save_volume: cannot write " + meta_path.string());
        mf << j.dump(2) << "\n";
        if (!mf) throw IoError("save_volume: write failed for " + meta_path.string());
    }
    const fs::path raw_path = dir / (id + ".raw");
    std::ofstream rf(raw_path, std::ios::binary);
    if (!rf) throw IoError("save_volume: cannot write " + raw_path.string());
    if (dtype == "i16") {
        std::vector<int16_t> buf(v.voxels.size());
        for (size_t i = 0; i < v.voxels.size(); ++i) {
            const double r = std::floor(static_cast<double>(v.voxels[i]) + 0.5);
            buf[i] = static_cast<int16_t>(std::clamp(r, -32768.0, 32767.0));
        }
        rf.write(reinterpret_cast<const char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(int16_t)));
    } else {
        rf.write(reinterpret_cast<const char*>(v.voxels.data()),
                 static_cast<std::streamsize>(v.voxels.size() * sizeof(float)));
    }
    if (!rf) throw IoError("save_volume: write failed for " + raw_path.string());
}

namespace {

// Per-axis interpolation plan for one output coordinate: clamped corner
// indices, fractional weight, and whether the point falls inside the bbox.
struct AxisSample {
    int64_t i0, i1;
    float t;
    bool inside;
};

AxisSample plan_axis(double world, double origin, double spacing, int64_t n) {
    AxisSample s{};
    const double lo = origin - 0.5 * spacing;
    const double hi = origin + (static_cast<double>(n) - 0.5) * spacing;
    s.inside = world >= lo && world <= hi;
    const double f = (world - origin) / spacing;
    double fl = std::floor(f);
    s.t = static_cast<float>(f - fl);
    s.i0 = static_cast<int64_t>(fl);
    s.i1 = s.i0 + 1;
    if (s.i0 < 0) s.i0 = 0;
    if (s.i1 < 0) s.i1 = 0;
    if (s.i0 > n - 1) s.i0 = n - 1;
    if (s.i1 > n - 1) s.i1 = n - 1;
    return s;
}

} // namespace

Volume resample(const Volume& v, const std::array<double, 3>& target_spacing_mm, double fill_hu) {
    for (double s : target_spacing_mm)
        if (!(s > 0)) throw ValidationError("resample: target spacing must be strictly positive");
    if (v.spacing_mm == target_spacing_mm) {
        return v; // identical grid, exact copy
    }

    Volume out;
    out.spacing_mm = target_spacing_mm;
    out.isocenter_mm = v.isocenter_mm;
    for (int a = 0; a < 3; ++a) {
        const double extent = static_cast<double>(v.shape[static_cast<size_t>(a)]) * v.spacing_mm[static_cast<size_t>(a)];
        int64_t n = static_cast<int64_t>(std::round(extent / target_spacing_mm[static_cast<size_t>(a)]));
        if (n < 1) n = 1;
        out.shape[static_cast<size_t>(a)] = n;
        // Edge-aligned: the output grid's bounding box starts where the input's does.
        out.origin_mm[static_cast<size_t>(a)] = (v.origin_mm[static_cast<size_t>(a)] -
                                                 0.5 * v.spacing_mm[static_cast<size_t>(a)]) +
                                                0.5 * target_spacing_mm[static_cast<size_t>(a)];
    }
    out.voxels.resize(static_cast<size_t>(out.numel()));

    std::array<std::vector<AxisSample>, 3> plans;
    for (int a = 0; a < 3; ++a) {
        plans[static_cast<size_t>(a)].resize(static_cast<size_t>(out.shape[static_cast<size_t>(a)]));
        for (int64_t i = 0; i < out.shape[static_cast<size_t>(a)]; ++i) {
            const double world = out.origin_mm[static_cast<size_t>(a)] +
                                 static_cast<double>(i) * out.spacing_mm[static_cast<size_t>(a)];
            plans[static_cast<size_t>(a)][static_cast<size_t>(i)] =
                plan_axis(world, v.origin_mm[static_cast<size_t>(a)], v.spacing_mm[static_cast<size_t>(a)],
                          v.shape[static_cast<size_t>(a)]);
        }
    }

    const float fill = static_cast<float>(fill_hu);
    size_t w = 0;
    for (int64_t z = 0; z < out.shape[2]; ++z) {
        const AxisSample& sz = plans[2][static_cast<size_t>(z)];
        for (int64_t y = 0; y < out.shape[1]; ++y) {
            const AxisSample& sy = plans[1][static_cast<size_t>(y)];
            for (int64_t x = 0; x < out.shape[0]; ++x, ++w) {
                const AxisSample& sx = plans[0][static_cast<size_t>(x)];
                if (!sx.inside || !sy.inside || !sz.inside) {
                    out.voxels[w] = fill;
                    continue;
                }
                const float c000 = v.at(sx.i0, sy.i0, sz.i0), c100 = v.at(sx.i1, sy.i0, sz.i0);
                const float c010 = v.at(sx.i0, sy.i1, sz.i0), c110 = v.at(sx.i1, sy.i1, sz.i0);
                const float c001 = v.at(sx.i0, sy.i0, sz.i1), c101 = v.at(sx.i1, sy.i0, sz.i1);
                const float c011 = v.at(sx.i0, sy.i1, sz.i1), c111 = v.at(sx.i1, sy.i1, sz.i1);
                const float x00 = c000 + (c100 - c000) * sx.t;
                const float x10 = c010 + (c110 - c010) * sx.t;
                const float x01 = c001 + (c101 - c001) * sx.t;
                const float x11 = c011 + (c111 - c011) * sx.t;
                const float y0 = x00 + (x10 - x00) * sy.t;
                const float y1 = x01 + (x11 - x01) * sy.t;
                out.voxels[w] = y0 + (y1 - y0) * sz.t;
            }
        }
    }
    return out;
}

Volume crop_isocenter(const Volume& v, double side_mm, double fill_hu) {
    if (!(side_mm > 0)) throw ValidationError("crop_isocenter: side_mm must be positive");
    {
        const auto lo = v.bbox_lo();
        const auto hi = v.bbox_hi();
        for (int a = 0; a < 3; ++a) {
            const double d = std::max({lo[static_cast<size_t>(a)] - v.isocenter_mm[static_cast<size_t>(a)],
                                       v.isocenter_mm[static_cast<size_t>(a)] - hi[static_cast<size_t>(a)], 0.0});
            if (d > side_mm)
                throw ValidationError("crop_isocenter: isocenter " + std::to_string(d) +
                                      " mm outside volume bounds; crop would be all padding");
        }
    }

    Volume out;
    out.spacing_mm = v.spacing_mm;
    out.isocenter_mm = v.isocenter_mm;
    std::array<int64_t, 3> start{};
    for (int a = 0; a < 3; ++a) {
        const int64_t n = static_cast<int64_t>(std::ceil(side_mm / v.spacing_mm[static_cast<size_t>(a)]));
        out.shape[static_cast<size_t>(a)] = n;
        const int64_t center = n / 2;
        // Isocenter's voxel index, round half up so repeated crops land on the
        // same grid.
        const double f = (v.isocenter_mm[static_cast<size_t>(a)] - v.origin_mm[static_cast<size_t>(a)]) /
                         v.spacing_mm[static_cast<size_t>(a)];
        const int64_t ic = static_cast<int64_t>(std::floor(f + 0.5));
        start[static_cast<size_t>(a)] = ic - center;
        out.origin_mm[static_cast<size_t>(a)] = v.origin_mm[static_cast<size_t>(a)] +
                                                static_cast<double>(start[static_cast<size_t>(a)]) *
                                                    v.spacing_mm[static_cast<size_t>(a)];
    }

    out.voxels.resize(static_cast<size_t>(out.numel()));
    const float fill = static_cast<float>(fill_hu);
    size_t w = 0;
    for (int64_t z = 0; z < out.shape[2]; ++z) {
        const int64_t sz = start[2] + z;
        const bool zin = sz >= 0 && sz < v.shape[2];
        for (int64_t y = 0; y < out.shape[1]; ++y) {
            const int64_t sy = start[1] + y;
            const bool yin = zin && sy >= 0 && sy < v.shape[1];
            for (int64_t x = 0; x < out.shape[0]; ++x, ++w) {
                const int64_t sx = start[0] + x;
                out.voxels[w] = (yin && sx >= 0 && sx < v.shape[0]) ? v.at(sx, sy, sz) : fill;
            }
        }
    }
    return out;
}

Volume window_normalize(const Volume& v, double lo_hu, double hi_hu) {
    if (!(lo_hu < hi_hu)) throw ValidationError("window_normalize: lo must be below hi");
    Volume out = v;
    const float lo = static_cast<float>(lo_hu);
    const float inv = static_cast<float>(1.0 / (hi_hu - lo_hu));
    for (auto& x : out.voxels) x = std::clamp((x - lo) * inv, 0.0f, 1.0f);
    return out;
}

namespace {

void require_sliceable(const Volume& v) {
    for (int a = 0; a < 3; ++a)
        if (v.shape[static_cast<size_t>(a)] < 2)
            throw ValidationError("slice extraction: every crop axis needs >= 2 voxels, got " +
                                  std::to_string(v.shape[0]) + "x" + std::to_string(v.shape[1]) + "x" +
                                  std::to_string(v.shape[2]));
}

} // namespace

Image2D mid_axial(const Volume& v) {
    require_sliceable(v);
    const int64_t zm = v.shape[2] / 2;
    Image2D img{v.shape[0], v.shape[1], {}};
    img.data.resize(static_cast<size_t>(img.h * img.w));
    for (int64_t x = 0; x < v.shape[0]; ++x)
        for (int64_t y = 0; y < v.shape[1]; ++y) img.data[static_cast<size_t>(x * img.w + y)] = v.at(x, y, zm);
    return img;
}

Image2D mid_coronal(const Volume& v) {
    require_sliceable(v);
    const int64_t ym = v.shape[1] / 2;
    Image2D img{v.shape[0], v.shape[2], {}};
    img.data.resize(static_cast<size_t>(img.h * img.w));
    for (int64_t x = 0; x < v.shape[0]; ++x)
        for (int64_t z = 0; z < v.shape[2]; ++z) img.data[static_cast<size_t>(x * img.w + z)] = v.at(x, ym, z);
    return img;
}

Image2D mid_sagittal(const Volume& v) {
    require_sliceable(v);
    const int64_t xm = v.shape[0] / 2;
    Image2D img{v.shape[1], v.shape[2], {}};
    img.data.resize(static_cast<size_t>(img.h * img.w));
    for (int64_t y = 0; y < v.shape[1]; ++y)
        for (int64_t z = 0; z < v.shape[2]; ++z) img.data[static_cast<size_t>(y * img.w + z)] = v.at(xm, y, z);
    return img;
}

Image2D bilinear_resize(const Image2D& img, int64_t out_h, int64_t out_w) {
    if (img.h < 1 || img.w < 1 || out_h < 1 || out_w < 1)
        throw ValidationError("bilinear_resize: degenerate image");
    Image2D out{out_h, out_w, {}};
    out.data.resize(static_cast<size_t>(out_h * out_w));
    const double sr = static_cast<double>(img.h) / static_cast<double>(out_h);
    const double sc = static_cast<double>(img.w) / static_cast<double>(out_w);
    for (int64_t r = 0; r < out_h; ++r) {
        // half-pixel-center mapping, clamped at the borders
        const double fr = (static_cast<double>(r) + 0.5) * sr - 0.5;
        int64_t r0 = static_cast<int64_t>(std::floor(fr));
        const float tr = static_cast<float>(fr - std::floor(fr));
        int64_t r1 = r0 + 1;
        r0 = std::clamp<int64_t>(r0, 0, img.h - 1);
        r1 = std::clamp<int64_t>(r1, 0, img.h - 1);
        for (int64_t c = 0; c < out_w; ++c) {
            const double fc = (static_cast<double>(c) + 0.5) * sc - 0.5;
            int64_t c0 = static_cast<int64_t>(std::floor(fc));
            const float tc = static_cast<float>(fc - std::floor(fc));
            int64_t c1 = c0 + 1;
            c0 = std::clamp<int64_t>(c0, 0, img.w - 1);
            c1 = std::clamp<int64_t>(c1, 0, img.w - 1);
            const float a = img.at(r0, c0) + (img.at(r0, c1) - img.at(r0, c0)) * tc;
            const float b = img.at(r1, c0) + (img.at(r1, c1) - img.at(r1, c0)) * tc;
            out.data[static_cast<size_t>(r * out_w + c)] = a + (b - a) * tr;
        }
    }
    return out;
}

InputImage extract_orthogonal(const Volume& v, int64_t resolution) {
    if (resolution < 16) throw ValidationError("extract_orthogonal: resolution must be >= 16");
    InputImage img;
    img.resolution = resolution;
    img.provenance = "orthogonal";
    img.data.reserve(static_cast<size_t>(3 * resolution * resolution));
    for (const Image2D& s : {mid_axial(v), mid_coronal(v), mid_sagittal(v)}) {
        const Image2D r = bilinear_resize(s, resolution, resolution);
        img.data.insert(img.data.end(), r.data.begin(), r.data.end());
    }
    return img;
}

InputImage extract_axial_repeat(const Volume& v, int64_t resolution) {
    if (resolution < 16) throw ValidationError("extract_axial_repeat: resolution must be >= 16");
    InputImage img;
    img.resolution = resolution;
    img.provenance = "axial_repeat";
    const Image2D r = bilinear_resize(mid_axial(v), resolution, resolution);
    img.data.reserve(static_cast<size_t>(3 * resolution * resolution));
    for (int c = 0; c < 3; ++c) img.data.insert(img.data.end(), r.data.begin(), r.data.end());
    return img;
}

} // namespace rili
