#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "manifest.hpp"
#include "volume.hpp"

namespace rili {

// Synthetic CT cohort generator. Scans are lung-like phantoms: a N(-800, 60)
// HU background with smooth low-frequency texture; positive scans add an
// ellipsoidal consolidation near the isocenter whose intensity ramps toward
// N(-100, 40) HU and whose extent grows with the recorded nodule size.
struct SynthConfig {
    int64_t n_patients = 40;
    int64_t min_scans_per_patient = 4;
    int64_t max_scans_per_patient = 7;
    double prevalence = 0.5; // per-scan probability of a positive label
    uint64_t seed = 0;
    std::array<int64_t, 3> shape{96, 96, 48};
    std::array<double, 3> spacing_mm{1, 1, 2};
    // When true the lesion is displaced along z so the mid-axial plane misses
    // it entirely while coronal/sagittal mid-planes still cut through it.
    bool off_axial = false;
};

void validate_synth_config(const SynthConfig& cfg);

// Writes volumes/<scan_id>.{meta.json,raw} plus manifest.csv under out_dir and
// returns the manifest. Identical configs produce byte-identical trees.
Manifest synth_dataset(const SynthConfig& cfg, const std::string& out_dir);

// Builds one phantom in memory (label decides whether a lesion is placed).
Volume synth_volume(const SynthConfig& cfg, const std::string& scan_id, int label, double nodule_size_cm);

// Mean of window-normalized intensity over a centered cube of side_mm around
// the isocenter. Separates phantom classes by a wide margin, which makes it a
// handy sanity probe for the generator and a reference feature for models.
double central_windowed_mean(const Volume& v, double side_mm, double lo_hu = -500, double hi_hu = 200);

} // namespace rili
