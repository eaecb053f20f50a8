#pragma once

// Transformer classifiers built from configuration: ViT-style (CLS token,
// learned position embeddings) and Swin-style (shifted window attention,
// relative position bias, patch merging). Parameter sets are planned as
// metadata first so counting never has to materialize tensors.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/autodiff.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace rili {

enum class Family { vit, swin };

struct ModelConfig {
    Family family = Family::vit;
    int64_t input_resolution = 224;
    int64_t in_channels = 3;
    int64_t embed_dim = 768;       // swin: stage-0 dim, doubled per stage
    std::vector<int64_t> depths;   // vit: one entry; swin: per stage
    std::vector<int64_t> heads;    // vit: one entry; swin: per stage
    int64_t patch_size = 14;
    int64_t window_size = 0;       // swin only
    double mlp_ratio = 4.0;
    int64_t num_classes = 2;
};

void validate_config(const ModelConfig& cfg);

// Registry of named shapes. Unknown name -> ValidationError.
ModelConfig preset_config(const std::string& name);
const std::vector<std::string>& preset_names();

enum class Init { zeros, ones, trunc_normal };

// Kind drives weight decay (weight_matrix only) and regime bookkeeping.
enum class ParamKind { weight_matrix, bias, norm_gain, norm_bias, pos_embed, cls_token, bias_table };

struct ParamInfo {
    std::string name;
    Shape shape;
    Init init = Init::zeros;
    ParamKind kind = ParamKind::weight_matrix;
};

// Full parameter plan in a fixed deterministic order (adapters excluded; see
// lora module). Pure function of the config.
std::vector<ParamInfo> plan_params(const ModelConfig& cfg);

int64_t plan_total(const std::vector<ParamInfo>& plan);

// One entry per attention block: projection name prefix (append ".q" etc.)
// and the projection width at that depth.
struct AttnLayer {
    std::string prefix;
    int64_t dim = 0;
};
std::vector<AttnLayer> attention_layers(const ModelConfig& cfg);

// ------------------------------------------------------------ swin geometry

// Per-stage spatial grid side and effective window (window shrinks to the
// grid when the grid is smaller; such stages never shift).
struct SwinStageGeom {
    int64_t grid = 0;   // tokens per side
    int64_t window = 0; // effective window side
};
std::vector<SwinStageGeom> swin_geometry(const ModelConfig& cfg);

// Flattened (2M-1)^2 bias-table row index for every (query, key) pair of an
// M x M window; length M^4, query-major.
std::vector<int64_t> relative_position_index(int64_t window);

// Post-shift region ids (the 3x3 wrap bands) on a G x G grid; tokens in
// different regions of one window must not attend to each other.
std::vector<int> shift_region_ids(int64_t grid, int64_t window, int64_t shift);

// Additive attention mask (num_windows, win^2, win^2): 0 within a region,
// -1e9 across regions. shift == 0 gives all zeros.
TensorT<float> window_attention_mask(int64_t grid, int64_t window, int64_t shift);

// ------------------------------------------------------------------- model

struct LoRASpec {
    int64_t rank = 0; // 0 = no adapters
    double alpha = 0;
    std::vector<std::string> targets; // subset of {"q","k","v","o"}
};

template <class T>
struct ModelT {
    ModelConfig cfg;
    std::vector<std::string> order; // deterministic parameter order
    std::unordered_map<std::string, VarT<T>> params;
    LoRASpec lora; // rank 0 until adapters are injected

    VarT<T>& at(const std::string& name) {
        auto it = params.find(name);
        if (it == params.end()) throw Error("model: unknown parameter '" + name + "'");
        return it->second;
    }
    const VarT<T>& at(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) throw Error("model: unknown parameter '" + name + "'");
        return it->second;
    }
    bool has(const std::string& name) const { return params.count(name) != 0; }
};

using Model = ModelT<float>;
using Model64 = ModelT<double>;

namespace detail {

template <class T>
TensorT<T> materialize(const ParamInfo& info, uint64_t seed) {
    TensorT<T> t = TensorT<T>::zeros(info.shape);
    switch (info.init) {
    case Init::zeros: break;
    case Init::ones:
        for (auto& v : t.data) v = T(1);
        break;
    case Init::trunc_normal: {
        Rng rng = Rng::derive(seed, info.name);
        for (auto& v : t.data) v = static_cast<T>(rng.trunc_normal(0.02));
        break;
    }
    }
    return t;
}

} // namespace detail

// Builds every planned parameter; initialization is derived per (seed, name)
// so it is independent of build order. All parameters start trainable.
template <class T>
ModelT<T> build_model(const ModelConfig& cfg, uint64_t seed) {
    validate_config(cfg);
    ModelT<T> m;
    m.cfg = cfg;
    for (const ParamInfo& info : plan_params(cfg)) {
        m.order.push_back(info.name);
        m.params.emplace(info.name, make_var(detail::materialize<T>(info, seed), true));
    }
    return m;
}

template <class T>
int64_t count_params(const ModelT<T>& m, bool trainable_only) {
    int64_t total = 0;
    for (const auto& name : m.order) {
        const auto& p = m.params.at(name);
        if (!trainable_only || p->requires_grad) total += p->value.numel();
    }
    return total;
}

// Lookup of a plan entry's kind by name for decay decisions; adapter params
// (not in the plan) count as weight matrices.
ParamKind param_kind(const std::vector<ParamInfo>& plan, const std::string& name);

} // namespace rili
