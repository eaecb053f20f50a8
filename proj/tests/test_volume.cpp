#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "core/rng.hpp"
#include "core/volume.hpp"

using namespace rili;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static int counter = 0;
    fs::path p = fs::temp_directory_path() / ("rili_vol_test_" + std::to_string(::getpid()) + "_" +
                                              std::to_string(counter++));
    fs::create_directories(p);
    return p;
}

// Volume with voxel centers at origin + idx*spacing, isocenter at the middle.
Volume make_volume(std::array<int64_t, 3> shape, std::array<double, 3> spacing, float value = 0.0f) {
    Volume v;
    v.shape = shape;
    v.spacing_mm = spacing;
    for (int a = 0; a < 3; ++a) {
        v.origin_mm[a] = -0.5 * (static_cast<double>(shape[a]) - 1.0) * spacing[a];
        v.isocenter_mm[a] = 0.0;
    }
    v.voxels.assign(static_cast<size_t>(v.numel()), value);
    return v;
}

} // namespace

TEST_CASE("container roundtrip preserves voxels and metadata") {
    const fs::path dir = temp_dir();
    Volume v = make_volume({4, 4, 2}, {1, 1, 2});
    Rng rng(3);
    for (auto& x : v.voxels) x = static_cast<float>(std::floor(rng.uniform(-1000, 1000)));
    v.isocenter_mm = {0.5, -0.25, 0.0};

    save_volume(v, dir, "vol_a", "i16");
    Volume r = load_volume(dir / "vol_a.meta.json");
    CHECK(r.shape == v.shape);
    CHECK(r.spacing_mm == v.spacing_mm);
    CHECK(r.origin_mm == v.origin_mm);
    CHECK(r.isocenter_mm == v.isocenter_mm);
    REQUIRE(r.voxels.size() == 32);
    for (size_t i = 0; i < r.voxels.size(); ++i) CHECK(r.voxels[i] == v.voxels[i]); // integral HU -> exact

    // f32 roundtrip is bit-exact even for fractional values
    for (auto& x : v.voxels) x += 0.125f;
    save_volume(v, dir, "vol_b", "f32");
    Volume rf = load_volume(dir / "vol_b.meta.json");
    for (size_t i = 0; i < rf.voxels.size(); ++i) CHECK(rf.voxels[i] == v.voxels[i]);
    fs::remove_all(dir);
}

TEST_CASE("i16 save rounds to nearest and clamps to the int16 range") {
    const fs::path dir = temp_dir();
    Volume v = make_volume({2, 1, 1}, {1, 1, 1});
    v.voxels = {1234.6f, -99999.0f};
    save_volume(v, dir, "clip", "i16");
    Volume r = load_volume(dir / "clip.meta.json");
    CHECK(r.voxels[0] == 1235.0f);
    CHECK(r.voxels[1] == -32768.0f);
    fs::remove_all(dir);
}

TEST_CASE("truncated raw file is a format error") {
    const fs::path dir = temp_dir();
    Volume v = make_volume({4, 4, 2}, {1, 1, 2});
    save_volume(v, dir, "trunc", "i16");
    fs::resize_file(dir / "trunc.raw", 31 * 2); // drop one voxel
    CHECK_THROWS_AS((void)load_volume(dir / "trunc.meta.json"), FormatError);
    fs::remove_all(dir);
}

TEST_CASE("non-positive spacing in the meta file is a validation error") {
    const fs::path dir = temp_dir();
    Volume v = make_volume({4, 4, 2}, {1, 1, 2});
    save_volume(v, dir, "sp", "i16");
    {
        std::ofstream out(dir / "sp.meta.json");
        out << R"({"shape":[4,4,2],"spacing_mm":[0,1,2],"origin_mm":[0,0,0],)"
            << R"("isocenter_mm":[0,0,0],"dtype":"i16"})";
    }
    CHECK_THROWS_AS((void)load_volume(dir / "sp.meta.json"), ValidationError);
    fs::remove_all(dir);
}

TEST_CASE("missing files and bad paths raise IO/validation errors") {
    CHECK_THROWS_AS((void)load_volume("/nonexistent/x.meta.json"), IoError);
    CHECK_THROWS_AS((void)load_volume("/tmp/not_a_meta_file.json"), ValidationError);
}

TEST_CASE("isocenter slightly outside warns, far outside fails") {
    Volume v = make_volume({10, 10, 10}, {1, 1, 1});
    v.isocenter_mm = {v.bbox_hi()[0] + 4.0, 0, 0};
    CHECK_NOTHROW(validate_volume(v)); // warn only
    v.isocenter_mm = {v.bbox_hi()[0] + 6.0, 0, 0};
    CHECK_THROWS_AS(validate_volume(v), ValidationError);
}

TEST_CASE("resample at identical spacing is an exact copy") {
    Volume v = make_volume({7, 5, 3}, {1, 1, 2});
    Rng rng(11);
    for (auto& x : v.voxels) x = static_cast<float>(rng.uniform(-1000, 400));
    Volume r = resample(v, {1, 1, 2});
    CHECK(r.shape == v.shape);
    CHECK(r.voxels == v.voxels);
    CHECK(r.origin_mm == v.origin_mm);
}

TEST_CASE("resample of a constant volume is constant at any target spacing") {
    Volume v = make_volume({9, 9, 9}, {0.7, 1.3, 2.1}, -100.0f);
    for (auto target : {std::array<double, 3>{1, 1, 2}, {0.5, 0.5, 0.5}, {3, 0.9, 1.7}}) {
        Volume r = resample(v, target);
        for (float x : r.voxels) CHECK(x == -100.0f);
    }
}

TEST_CASE("resampled shape follows round(extent/target)") {
    Volume v = make_volume({10, 10, 10}, {0.5, 0.5, 0.5});
    Volume r = resample(v, {1, 1, 2});
    CHECK(r.shape == std::array<int64_t, 3>{5, 5, 3});
    CHECK(r.spacing_mm == std::array<double, 3>{1, 1, 2});
    CHECK(r.isocenter_mm == v.isocenter_mm);
}

TEST_CASE("resample reproduces linear ramps in the interior") {
    Volume v = make_volume({12, 10, 8}, {1.0, 1.5, 2.0});
    const double a = 3.0, bx = 2.0, by = -1.5, bz = 0.75;
    for (int64_t z = 0; z < v.shape[2]; ++z)
        for (int64_t y = 0; y < v.shape[1]; ++y)
            for (int64_t x = 0; x < v.shape[0]; ++x) {
                const double wx = v.origin_mm[0] + x * v.spacing_mm[0];
                const double wy = v.origin_mm[1] + y * v.spacing_mm[1];
                const double wz = v.origin_mm[2] + z * v.spacing_mm[2];
                v.at(x, y, z) = static_cast<float>(a + bx * wx + by * wy + bz * wz);
            }
    Volume r = resample(v, {0.8, 1.1, 1.3});
    int checked = 0;
    for (int64_t z = 0; z < r.shape[2]; ++z)
        for (int64_t y = 0; y < r.shape[1]; ++y)
            for (int64_t x = 0; x < r.shape[0]; ++x) {
                const double wx = r.origin_mm[0] + x * r.spacing_mm[0];
                const double wy = r.origin_mm[1] + y * r.spacing_mm[1];
                const double wz = r.origin_mm[2] + z * r.spacing_mm[2];
                // interior = within the span of source voxel centers (no clamping)
                bool interior = wx >= v.origin_mm[0] && wx <= v.origin_mm[0] + (v.shape[0] - 1) * v.spacing_mm[0] &&
                                wy >= v.origin_mm[1] && wy <= v.origin_mm[1] + (v.shape[1] - 1) * v.spacing_mm[1] &&
                                wz >= v.origin_mm[2] && wz <= v.origin_mm[2] + (v.shape[2] - 1) * v.spacing_mm[2];
                if (!interior) continue;
                const double want = a + bx * wx + by * wy + bz * wz;
                CHECK(std::abs(r.at(x, y, z) - want) < 1e-3); // float storage; 1e-5 relative of ~100-scale values
                ++checked;
            }
    CHECK(checked > 100);
}

TEST_CASE("crop shapes follow ceil(side/spacing)") {
    Volume v = make_volume({96, 96, 48}, {1, 1, 2});
    Volume c50 = crop_isocenter(v, 50);
    CHECK(c50.shape == std::array<int64_t, 3>{50, 50, 25});
    Volume c75 = crop_isocenter(v, 75);
    CHECK(c75.shape == std::array<int64_t, 3>{75, 75, 38});
}

TEST_CASE("crop centers the isocenter voxel and preserves its value") {
    Volume v = make_volume({32, 32, 32}, {1, 1, 1});
    Rng rng(5);
    for (auto& x : v.voxels) x = static_cast<float>(rng.uniform(-500, 500));
    v.isocenter_mm = {3.0, -2.0, 5.0}; // on-grid world position
    Volume c = crop_isocenter(v, 10);
    const int64_t cx = c.shape[0] / 2, cy = c.shape[1] / 2, cz = c.shape[2] / 2;
    // voxel at the crop center must equal the source voxel nearest the isocenter
    const int64_t sx = static_cast<int64_t>(std::floor((3.0 - v.origin_mm[0]) / 1.0 + 0.5));
    const int64_t sy = static_cast<int64_t>(std::floor((-2.0 - v.origin_mm[1]) / 1.0 + 0.5));
    const int64_t sz = static_cast<int64_t>(std::floor((5.0 - v.origin_mm[2]) / 1.0 + 0.5));
    CHECK(c.at(cx, cy, cz) == v.at(sx, sy, sz));
    CHECK(c.isocenter_mm == v.isocenter_mm);
}

TEST_CASE("crop at a corner pads with fill") {
    Volume v = make_volume({20, 20, 20}, {1, 1, 1}, 100.0f);
    v.isocenter_mm = v.bbox_lo(); // corner
    Volume c = crop_isocenter(v, 10);
    int fill_count = 0;
    for (float x : c.voxels) {
        if (x == -1000.0f) ++fill_count;
        else CHECK(x == 100.0f);
    }
    CHECK(fill_count > 0);
    CHECK(fill_count < static_cast<int>(c.voxels.size()));
}

TEST_CASE("double crop with the same side returns identical voxels") {
    Volume v = make_volume({96, 96, 48}, {1, 1, 2});
    Rng rng(17);
    for (auto& x : v.voxels) x = static_cast<float>(rng.uniform(-1000, 200));
    v.isocenter_mm = {7.0, -11.0, 4.0};
    Volume c1 = crop_isocenter(v, 50);
    Volume c2 = crop_isocenter(c1, 50);
    CHECK(c1.shape == c2.shape);
    CHECK(c1.voxels == c2.voxels);
}

TEST_CASE("crop rejects an isocenter far outside the volume") {
    Volume v = make_volume({20, 20, 20}, {1, 1, 1});
    v.isocenter_mm = {v.bbox_hi()[0] + 51.0, 0, 0};
    CHECK_THROWS_AS((void)crop_isocenter(v, 50), ValidationError);
}

TEST_CASE("windowing maps the pinned control points") {
    Volume v = make_volume({5, 1, 1}, {1, 1, 1});
    v.voxels = {-500.0f, 200.0f, -150.0f, -1000.0f, 500.0f};
    Volume w = window_normalize(v, -500, 200);
    CHECK(w.voxels[0] == 0.0f);
    CHECK(w.voxels[1] == 1.0f);
    CHECK(w.voxels[2] == 0.5f);
    CHECK(w.voxels[3] == 0.0f); // clamped below
    CHECK(w.voxels[4] == 1.0f); // clamped above
    CHECK_THROWS_AS((void)window_normalize(v, 200, -500), ValidationError);
    CHECK_THROWS_AS((void)window_normalize(v, 100, 100), ValidationError);
}

TEST_CASE("windowing is monotone with outputs in [0,1]") {
    Volume v = make_volume({64, 1, 1}, {1, 1, 1});
    Rng rng(23);
    for (auto& x : v.voxels) x = static_cast<float>(rng.uniform(-1200, 600));
    Volume w = window_normalize(v, -500, 200);
    for (size_t i = 0; i < v.voxels.size(); ++i) {
        CHECK(w.voxels[i] >= 0.0f);
        CHECK(w.voxels[i] <= 1.0f);
        for (size_t j = 0; j < v.voxels.size(); ++j)
            if (v.voxels[i] <= v.voxels[j]) CHECK(w.voxels[i] <= w.voxels[j]);
    }
}

TEST_CASE("orthogonal inputs have the documented shape and channel order") {
    Volume v = make_volume({50, 50, 25}, {1, 1, 2}, 0.5f);
    InputImage img = extract_orthogonal(v, 224);
    CHECK(img.resolution == 224);
    CHECK(img.provenance == "orthogonal");
    CHECK(img.data.size() == static_cast<size_t>(3 * 224 * 224));
    for (float x : img.data) CHECK(x == 0.5f); // constant volume -> constant image
}

TEST_CASE("axial_repeat copies one slice into all channels and matches orthogonal channel 0") {
    Volume v = make_volume({50, 50, 25}, {1, 1, 2});
    Rng rng(31);
    for (auto& x : v.voxels) x = static_cast<float>(rng.uniform(0, 1));
    InputImage rep = extract_axial_repeat(v, 64);
    CHECK(rep.provenance == "axial_repeat");
    const size_t plane = 64 * 64;
    for (size_t i = 0; i < plane; ++i) {
        CHECK(rep.data[i] == rep.data[plane + i]);
        CHECK(rep.data[i] == rep.data[2 * plane + i]);
    }
    InputImage ortho = extract_orthogonal(v, 64);
    for (size_t i = 0; i < plane; ++i) CHECK(rep.data[i] == ortho.data[i]);
    for (float x : ortho.data) {
        CHECK(x >= 0.0f);
        CHECK(x <= 1.0f);
    }
}

TEST_CASE("axial channel of an x/y-symmetric volume is a symmetric matrix") {
    Volume v = make_volume({20, 20, 8}, {1, 1, 1});
    Rng rng(41);
    for (int64_t z = 0; z < 8; ++z)
        for (int64_t y = 0; y < 20; ++y)
            for (int64_t x = 0; x <= y; ++x) {
                const float val = static_cast<float>(rng.uniform(0, 1));
                v.at(x, y, z) = val;
                v.at(y, x, z) = val;
            }
    Image2D ax = mid_axial(v);
    for (int64_t r = 0; r < ax.h; ++r)
        for (int64_t c = 0; c < ax.w; ++c) CHECK(ax.at(r, c) == ax.at(c, r));
}

TEST_CASE("slice extraction needs at least 2 voxels per axis") {
    Volume v = make_volume({4, 4, 1}, {1, 1, 1});
    CHECK_THROWS_AS((void)extract_orthogonal(v, 32), ValidationError);
    CHECK_THROWS_AS((void)extract_axial_repeat(v, 32), ValidationError);
}

TEST_CASE("mid-plane slices take the documented planes and shapes") {
    Volume v = make_volume({4, 6, 8}, {1, 1, 1});
    for (int64_t z = 0; z < 8; ++z)
        for (int64_t y = 0; y < 6; ++y)
            for (int64_t x = 0; x < 4; ++x) v.at(x, y, z) = static_cast<float>(100 * x + 10 * y + z);
    Image2D ax = mid_axial(v); // z = 4
    CHECK(ax.h == 4);
    CHECK(ax.w == 6);
    CHECK(ax.at(2, 3) == 100 * 2 + 10 * 3 + 4);
    Image2D co = mid_coronal(v); // y = 3
    CHECK(co.h == 4);
    CHECK(co.w == 8);
    CHECK(co.at(1, 5) == 100 * 1 + 10 * 3 + 5);
    Image2D sa = mid_sagittal(v); // x = 2
    CHECK(sa.h == 6);
    CHECK(sa.w == 8);
    CHECK(sa.at(4, 7) == 100 * 2 + 10 * 4 + 7);
}

TEST_CASE("bilinear resize is exact on constants and no-op at identical size") {
    Image2D img{3, 5, std::vector<float>(15, 0.25f)};
    Image2D big = bilinear_resize(img, 17, 17);
    for (float x : big.data) CHECK(x == 0.25f);

    Rng rng(53);
    Image2D noisy{6, 6, {}};
    noisy.data.resize(36);
    for (auto& x : noisy.data) x = static_cast<float>(rng.uniform(0, 1));
    Image2D same = bilinear_resize(noisy, 6, 6);
    for (size_t i = 0; i < noisy.data.size(); ++i) CHECK(same.data[i] == doctest::Approx(noisy.data[i]));
}

TEST_CASE("isocenter world position survives the prep chain") {
    Volume v = make_volume({40, 40, 40}, {0.8, 0.8, 1.6});
    Rng rng(61);
    for (auto& x : v.voxels) x = static_cast<float>(rng.uniform(-900, 100));
    v.isocenter_mm = {2.5, -3.5, 1.0};
    Volume r = resample(v, {1, 1, 2});
    Volume c = crop_isocenter(r, 20);
    Volume w = window_normalize(c, -500, 200);
    for (int a = 0; a < 3; ++a) {
        CHECK(std::abs(r.isocenter_mm[a] - v.isocenter_mm[a]) < 1e-9);
        CHECK(std::abs(c.isocenter_mm[a] - v.isocenter_mm[a]) < 1e-9);
        CHECK(std::abs(w.isocenter_mm[a] - v.isocenter_mm[a]) < 1e-9);
    }
}

TEST_CASE("prep config validation catches bad fields") {
    PrepConfig ok;
    CHECK_NOTHROW(validate_prep_config(ok));
    PrepConfig bad = ok;
    bad.window_lo_hu = 300;
    CHECK_THROWS_AS(validate_prep_config(bad), ValidationError);
    bad = ok;
    bad.input_resolution = 8;
    CHECK_THROWS_AS(validate_prep_config(bad), ValidationError);
    bad = ok;
    bad.input_mode = "diagonal";
    CHECK_THROWS_AS(validate_prep_config(bad), ValidationError);
    bad = ok;
    bad.target_spacing_mm[1] = 0;
    CHECK_THROWS_AS(validate_prep_config(bad), ValidationError);
}
