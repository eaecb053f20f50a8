#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "error.hpp"
#include "rng.hpp"

namespace rili {

namespace {

std::string pad_id(const char* prefix, int64_t n, int width) {
    std::string digits = std::to_string(n);
    std::string out = prefix;
    for (int i = static_cast<int>(digits.size()); i < width; ++i) out += '0';
    return out + digits;
}

// Smooth low-frequency field: trilinear interpolation of a coarse grid of
// independent normals, one node roughly every 16 voxels.
struct CoarseField {
    std::array<int64_t, 3> dims;
    std::vector<double> nodes;

    CoarseField(const std::array<int64_t, 3>& vol_shape, double amplitude, Rng& rng) {
        for (int a = 0; a < 3; ++a) dims[a] = std::max<int64_t>(2, vol_shape[a] / 16 + 1);
        nodes.resize(static_cast<size_t>(dims[0] * dims[1] * dims[2]));
        for (auto& n : nodes) n = rng.normal(0.0, amplitude);
    }

    double node(int64_t i, int64_t j, int64_t k) const {
        return nodes[static_cast<size_t>((k * dims[1] + j) * dims[0] + i)];
    }

    double sample(double fx, double fy, double fz) const { // fractions in [0,1]
        double gx = fx * static_cast<double>(dims[0] - 1);
        double gy = fy * static_cast<double>(dims[1] - 1);
        double gz = fz * static_cast<double>(dims[2] - 1);
        int64_t i = std::min<int64_t>(static_cast<int64_t>(gx), dims[0] - 2);
        int64_t j = std::min<int64_t>(static_cast<int64_t>(gy), dims[1] - 2);
        int64_t k = std::min<int64_t>(static_cast<int64_t>(gz), dims[2] - 2);
        double tx = gx - static_cast<double>(i), ty = gy - static_cast<double>(j), tz = gz - static_cast<double>(k);
        auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
        double c00 = lerp(node(i, j, k), node(i + 1, j, k), tx);
        double c10 = lerp(node(i, j + 1, k), node(i + 1, j + 1, k), tx);
        double c01 = lerp(node(i, j, k + 1), node(i + 1, j, k + 1), tx);
        double c11 = lerp(node(i, j + 1, k + 1), node(i + 1, j + 1, k + 1), tx);
        return lerp(lerp(c00, c10, ty), lerp(c01, c11, ty), tz);
    }
};

} // namespace

void validate_synth_config(const SynthConfig& cfg) {
    if (cfg.n_patients < 1) throw ValidationError("synth: n_patients must be >= 1");
    if (cfg.min_scans_per_patient < 1 || cfg.max_scans_per_patient < cfg.min_scans_per_patient)
        throw ValidationError("synth: scans-per-patient range is invalid");
    if (!(cfg.prevalence > 0.0 && cfg.prevalence < 1.0))
        throw ValidationError("synth: prevalence must be in (0, 1)");
    for (int a = 0; a < 3; ++a) {
        if (cfg.shape[a] < 16) throw ValidationError("synth: volume shape must be at least 16 voxels per axis");
        if (!(cfg.spacing_mm[a] > 0)) throw ValidationError("synth: spacing must be positive");
    }
}

Volume synth_volume(const SynthConfig& cfg, const std::string& scan_id, int label, double nodule_size_cm) {
    validate_synth_config(cfg);
    Volume v;
    v.shape = cfg.shape;
    v.spacing_mm = cfg.spacing_mm;
    for (int a = 0; a < 3; ++a)
        v.origin_mm[a] = -0.5 * static_cast<double>(cfg.shape[a] - 1) * cfg.spacing_mm[a];
    v.isocenter_mm = {0, 0, 0};
    v.voxels.resize(static_cast<size_t>(v.numel()));

    Rng tex_rng = Rng::derive(cfg.seed, std::string(scan_id) + "/texture");
    Rng noise_rng = Rng::derive(cfg.seed, std::string(scan_id) + "/noise");
    CoarseField texture(cfg.shape, 40.0, tex_rng);

    const auto [nx, ny, nz] = cfg.shape;
    for (int64_t z = 0; z < nz; ++z)
        for (int64_t y = 0; y < ny; ++y)
            for (int64_t x = 0; x < nx; ++x) {
                double fx = static_cast<double>(x) / static_cast<double>(nx - 1);
                double fy = static_cast<double>(y) / static_cast<double>(ny - 1);
                double fz = static_cast<double>(z) / static_cast<double>(nz - 1);
                v.at(x, y, z) = static_cast<float>(-800.0 + texture.sample(fx, fy, fz) + noise_rng.normal(0.0, 60.0));
            }

    if (label == 1) {
        Rng lesion_rng = Rng::derive(cfg.seed, std::string(scan_id) + "/lesion");
        // Consolidation halo around the treated nodule: wider than the nodule
        // itself and growing with it.
        double r_xy = 12.0 + 3.0 * nodule_size_cm;
        double r_z = r_xy;
        double cx = lesion_rng.uniform(-2.0, 2.0);
        double cy = lesion_rng.uniform(-2.0, 2.0);
        double cz = 0.0;
        if (cfg.off_axial) {
            // Small flat lesion pushed off the axial mid-plane: the mid-axial
            // slice misses it, coronal/sagittal mid-planes still cut it.
            r_z = 5.0 + (std::clamp(nodule_size_cm, 1.0, 4.0) - 1.0) * (4.0 / 3.0);
            cz = (lesion_rng.bernoulli(0.5) ? 1.0 : -1.0) * (r_z + 4.0);
        }
        for (int64_t z = 0; z < nz; ++z)
            for (int64_t y = 0; y < ny; ++y)
                for (int64_t x = 0; x < nx; ++x) {
                    double wx = v.origin_mm[0] + static_cast<double>(x) * v.spacing_mm[0];
                    double wy = v.origin_mm[1] + static_cast<double>(y) * v.spacing_mm[1];
                    double wz = v.origin_mm[2] + static_cast<double>(z) * v.spacing_mm[2];
                    double rho2 = ((wx - cx) / r_xy) * ((wx - cx) / r_xy) +
                                  ((wy - cy) / r_xy) * ((wy - cy) / r_xy) +
                                  ((wz - cz) / r_z) * ((wz - cz) / r_z);
                    if (rho2 >= 1.0) continue;
                    double f = 1.0 - rho2;
                    double target = -100.0 + lesion_rng.normal(0.0, 40.0);
                    float& cell = v.at(x, y, z);
                    cell = static_cast<float>(cell + f * (target - static_cast<double>(cell)));
                }
    }
    return v;
}

Manifest synth_dataset(const SynthConfig& cfg, const std::string& out_dir) {
    validate_synth_config(cfg);
    std::filesystem::path root(out_dir);
    std::filesystem::create_directories(root / "volumes");

    Manifest m;
    int64_t scan_index = 0;
    for (int64_t p = 0; p < cfg.n_patients; ++p) {
        std::string pid = pad_id("P", p + 1, 3);
        int64_t span = cfg.max_scans_per_patient - cfg.min_scans_per_patient + 1;
        int64_t n_scans =
            cfg.min_scans_per_patient +
            static_cast<int64_t>(Rng::derive(cfg.seed, "scan-count", static_cast<uint64_t>(p)).uniform_int(static_cast<uint64_t>(span)));
        for (int64_t s = 0; s < n_scans; ++s, ++scan_index) {
            std::string sid = pid + pad_id("_S", s + 1, 2);
            uint64_t salt = static_cast<uint64_t>(scan_index);
            ManifestRow row;
            row.patient_id = pid;
            row.scan_id = sid;
            row.volume_path = "volumes/" + sid + ".meta.json";
            row.label = Rng::derive(cfg.seed, "label", salt).bernoulli(cfg.prevalence) ? 1 : 0;
            // One decimal, like clinical reports; rounding keeps the CSV tidy.
            row.nodule_size_cm = std::round(Rng::derive(cfg.seed, "nodule-size", salt).uniform(1.0, 4.0) * 10.0) / 10.0;
            row.months_post_sbrt =
                std::round(Rng::derive(cfg.seed, "months", salt).uniform(0.5, 24.0) * 10.0) / 10.0;

            Volume vol = synth_volume(cfg, sid, row.label, row.nodule_size_cm);
            save_volume(vol, (root / "volumes").string(), sid, "i16");
            m.rows.push_back(std::move(row));
        }
    }
    save_manifest(m, (root / "manifest.csv").string());
    return m;
}

double central_windowed_mean(const Volume& v, double side_mm, double lo_hu, double hi_hu) {
    if (!(side_mm > 0)) throw ValidationError("central_windowed_mean: side_mm must be positive");
    Volume w = window_normalize(v, lo_hu, hi_hu);
    double half = side_mm / 2;
    double sum = 0;
    int64_t count = 0;
    for (int64_t z = 0; z < w.shape[2]; ++z) {
        double wz = w.origin_mm[2] + static_cast<double>(z) * w.spacing_mm[2];
        if (std::abs(wz - w.isocenter_mm[2]) > half) continue;
        for (int64_t y = 0; y < w.shape[1]; ++y) {
            double wy = w.origin_mm[1] + static_cast<double>(y) * w.spacing_mm[1];
            if (std::abs(wy - w.isocenter_mm[1]) > half) continue;
            for (int64_t x = 0; x < w.shape[0]; ++x) {
                double wx = w.origin_mm[0] + static_cast<double>(x) * w.spacing_mm[0];
                if (std::abs(wx - w.isocenter_mm[0]) > half) continue;
                sum += static_cast<double>(w.at(x, y, z));
                ++count;
            }
        }
    }
    if (count == 0) throw ValidationError("central_windowed_mean: no voxels inside the requested cube");
    return sum / static_cast<double>(count);
}

} // namespace rili
