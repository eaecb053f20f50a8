#pragma once

// Flat binary parameter files: a little-endian name table (count, then per
// entry name length + UTF-8 name + rank + dims, all uint32), followed by the
// raw float32 values of every entry in table order. Identical parameters
// produce identical bytes on any platform.

#include <string>
#include <vector>

#include "core/model.hpp"
#include "core/tensor.hpp"

namespace rili {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

void save_arrays(const std::vector<NamedTensor>& arrays, const std::string& path);
std::vector<NamedTensor> load_arrays(const std::string& path);

// Whole model, parameters in model order.
void save_checkpoint(const Model& m, const std::string& path);

// Restores every array in the file into the model; names missing from the
// model or shape mismatches are errors, model parameters absent from the
// file are left untouched (supports adapter-only files).
void load_checkpoint(Model& m, const std::string& path);

// Adapters and head only, plus `<path>.json` describing the adapter config.
void save_adapter_checkpoint(const Model& m, const std::string& path);

} // namespace rili
