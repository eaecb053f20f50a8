#pragma once

// CT sub-volume handling: container IO, resampling, isocenter crops,
// HU windowing, and 3-channel 2D input construction.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "core/error.hpp"

namespace rili {

// 3D scalar grid in HU. Voxels are x-fastest, then y, z slowest; voxel (i,j,k)
// has world-space center origin_mm + (i,j,k) * spacing_mm.
struct Volume {
    std::array<int64_t, 3> shape{0, 0, 0}; // voxels per axis (x, y, z)
    std::array<double, 3> spacing_mm{1, 1, 1};
    std::array<double, 3> origin_mm{0, 0, 0};
    std::array<double, 3> isocenter_mm{0, 0, 0};
    std::vector<float> voxels;

    int64_t numel() const { return shape[0] * shape[1] * shape[2]; }
    float at(int64_t x, int64_t y, int64_t z) const {
        return voxels[static_cast<size_t>((z * shape[1] + y) * shape[0] + x)];
    }
    float& at(int64_t x, int64_t y, int64_t z) {
        return voxels[static_cast<size_t>((z * shape[1] + y) * shape[0] + x)];
    }
    // World bounding box spans the voxel edges (center +/- half spacing).
    std::array<double, 3> bbox_lo() const;
    std::array<double, 3> bbox_hi() const;
};

struct PrepConfig {
    std::array<double, 3> target_spacing_mm{1, 1, 2};
    double crop_side_mm = 50;
    double window_lo_hu = -500;
    double window_hi_hu = 200;
    double fill_hu = -1000;
    int64_t input_resolution = 224;
    std::string input_mode = "orthogonal"; // or "axial_repeat"
};

void validate_prep_config(const PrepConfig& cfg);

// 3-channel square model input with values in [0,1], channel-major storage.
struct InputImage {
    int64_t resolution = 0;
    std::string provenance; // "axial_repeat" | "orthogonal"
    std::vector<float> data; // 3 * resolution * resolution

    const float* channel(int c) const { return data.data() + static_cast<size_t>(c) * resolution * resolution; }
};

// Checks shape/spacing/voxel-count invariants. The isocenter must lie inside
// the bounding box; up to 5 mm outside only warns (stderr), farther throws.
void validate_volume(const Volume& v);

// Container IO: `<id>.meta.json` + `<id>.raw` (little-endian, x-fastest).
// dtype "i16" stores rounded/clamped int16 HU, "f32" stores floats verbatim.
Volume load_volume(const std::filesystem::path& meta_path);
void save_volume(const Volume& v, const std::filesystem::path& dir, const std::string& id,
                 const std::string& dtype);

// Trilinear resample onto an edge-aligned grid covering the same world extent;
// shape per axis = round(extent / target). Isocenter world position unchanged.
Volume resample(const Volume& v, const std::array<double, 3>& target_spacing_mm, double fill_hu = -1000);

// Cube of physical side side_mm centered at the isocenter; ceil(side/spacing)
// voxels per axis, out-of-volume regions padded with fill_hu.
Volume crop_isocenter(const Volume& v, double side_mm, double fill_hu = -1000);

// out = clamp((hu - lo) / (hi - lo), 0, 1) elementwise.
Volume window_normalize(const Volume& v, double lo_hu, double hi_hu);

// Plain 2D image used for slice extraction and resizing.
struct Image2D {
    int64_t h = 0, w = 0;
    std::vector<float> data; // row-major
    float at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * w + c)]; }
};

// Mid-plane slices of a crop: axial z=floor(Z/2) -> (X,Y); coronal
// y=floor(Y/2) -> (X,Z); sagittal x=floor(X/2) -> (Y,Z).
Image2D mid_axial(const Volume& v);
Image2D mid_coronal(const Volume& v);
Image2D mid_sagittal(const Volume& v);

Image2D bilinear_resize(const Image2D& img, int64_t out_h, int64_t out_w);

// Channel order (axial, coronal, sagittal), each resized to resolution^2.
InputImage extract_orthogonal(const Volume& v, int64_t resolution);
// The mid-axial slice copied into all three channels.
InputImage extract_axial_repeat(const Volume& v, int64_t resolution);

} // namespace rili
