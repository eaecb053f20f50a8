#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "manifest.hpp"
#include "train.hpp"
#include "volume.hpp"

namespace rili {

// resample -> isocenter crop -> HU window -> 3-channel slice extraction.
InputImage prep_volume(const Volume& v, const PrepConfig& cfg);

Tensor input_to_tensor(const InputImage& img); // (3, R, R)

// All prepped inputs of a cohort, keyed by scan id.
struct PreppedDataset {
    PrepConfig prep;
    std::vector<std::string> scan_ids; // manifest order
    std::unordered_map<std::string, Tensor> inputs;
    std::unordered_map<std::string, int> labels;
};

// Loads every volume referenced by the manifest (paths resolved relative to
// manifest_path) and preps it.
PreppedDataset prep_dataset(const Manifest& m, const std::string& manifest_path, const PrepConfig& cfg);

// Cache layout: <dir>/prep.json (settings + scan list) and <dir>/inputs.bin
// (one named tensor per scan).
void save_prepped(const PreppedDataset& d, const std::string& dir);
PreppedDataset load_prepped(const std::string& dir);

// Samples for the given scan ids, in the given order. Unknown id -> error.
std::vector<Sample> gather_samples(const PreppedDataset& d, const std::vector<std::string>& scan_ids);

} // namespace rili
