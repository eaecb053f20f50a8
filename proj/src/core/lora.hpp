#pragma once

// Low-rank adapters on attention projections plus the three fine-tuning
// regimes (head-only, full, adapters). Weights are stored (d_in, d_out), so
// the adapted forward is y = x W + b + (alpha/r) * (x A) B with A (d_in, r)
// and B (r, d_out); B starts at zero so injection never changes the function.

#include <cstdint>
#include <string>
#include <vector>

#include "core/error.hpp"
#include "core/model.hpp"
#include "core/rng.hpp"

namespace rili {

enum class Regime { nft, fft, lora };

Regime parse_regime(const std::string& name); // "NFT"/"FFT"/"LoRA", case-insensitive
const char* regime_name(Regime r);
double regime_learning_rate(Regime r); // NFT 1e-3, LoRA 1e-4, FFT 1e-6

struct LoRAConfig {
    int64_t rank = 32;
    double alpha = 32.0;
    std::vector<std::string> targets = {"q", "v"}; // subset of q,k,v,o
    double init_std = 0.02;
};

void validate_lora_config(const LoRAConfig& cfg);

// Adapter parameter entries (A then B per targeted projection, block order).
// Pure plan arithmetic; pairs with plan_params for counting without building.
std::vector<ParamInfo> lora_plan(const ModelConfig& model_cfg, const LoRAConfig& cfg);

// Trainable-parameter count a regime leaves behind, from plans alone.
int64_t trainable_under_regime(const ModelConfig& model_cfg, Regime regime, const LoRAConfig* cfg);

namespace detail {

inline bool is_adapter(const std::string& name) { return name.find(".lora_") != std::string::npos; }
inline bool is_head(const std::string& name) { return name.rfind("head.", 0) == 0; }

} // namespace detail

template <class T>
void inject_lora(ModelT<T>& m, const LoRAConfig& cfg, uint64_t seed) {
    if (m.lora.rank != 0) throw Error("inject_lora: adapters already present");
    validate_lora_config(cfg);
    for (const auto& layer : attention_layers(m.cfg))
        if (cfg.rank > layer.dim)
            throw ValidationError("inject_lora: rank " + std::to_string(cfg.rank) + " exceeds projection dim " +
                                  std::to_string(layer.dim) + " at " + layer.prefix);

    for (const ParamInfo& info : lora_plan(m.cfg, cfg)) {
        TensorT<T> t = TensorT<T>::zeros(info.shape);
        if (info.init == Init::trunc_normal) {
            Rng rng = Rng::derive(seed, info.name);
            for (auto& v : t.data) v = static_cast<T>(rng.trunc_normal(cfg.init_std));
        }
        m.order.push_back(info.name);
        m.params.emplace(info.name, make_var(std::move(t), true));
    }
    for (const auto& name : m.order)
        m.params.at(name)->requires_grad = detail::is_adapter(name) || detail::is_head(name);
    m.lora.rank = cfg.rank;
    m.lora.alpha = cfg.alpha;
    m.lora.targets = cfg.targets;
}

// Folds every adapter pair into its base weight (W += (alpha/r) A B) and
// removes the adapter entries, leaving a plain model of the original size.
template <class T>
void merge_lora(ModelT<T>& m) {
    if (m.lora.rank == 0) throw Error("merge_lora: no adapters present");
    const double s = m.lora.alpha / static_cast<double>(m.lora.rank);

    for (const auto& name : m.order) {
        if (name.size() < 7 || name.rfind(".lora_A") != name.size() - 7) continue;
        const std::string base = name.substr(0, name.size() - 7);
        TensorT<T>& w = m.at(base + ".weight")->value;
        const TensorT<T>& a = m.at(name)->value;
        const TensorT<T>& b = m.at(base + ".lora_B")->value;
        const int64_t din = a.shape[0], r = a.shape[1], dout = b.shape[1];
        for (int64_t i = 0; i < din; ++i)
            for (int64_t k = 0; k < r; ++k) {
                const double aik = s * static_cast<double>(a.data[static_cast<size_t>(i * r + k)]);
                for (int64_t j = 0; j < dout; ++j)
                    w.data[static_cast<size_t>(i * dout + j)] +=
                        static_cast<T>(aik * static_cast<double>(b.data[static_cast<size_t>(k * dout + j)]));
            }
    }

    std::vector<std::string> kept;
    kept.reserve(m.order.size());
    for (const auto& name : m.order) {
        if (detail::is_adapter(name)) {
            m.params.erase(name);
        } else {
            kept.push_back(name);
        }
    }
    m.order = std::move(kept);
    m.lora = LoRASpec{};
}

// Sets trainable flags and returns the regime's learning rate. LoRA injects
// adapters when they are not already present.
template <class T>
double apply_regime(ModelT<T>& m, Regime regime, const LoRAConfig* cfg, uint64_t seed) {
    switch (regime) {
    case Regime::nft:
        if (m.lora.rank != 0) throw ValidationError("apply_regime: NFT expects a model without adapters");
        for (const auto& name : m.order) m.params.at(name)->requires_grad = detail::is_head(name);
        break;
    case Regime::fft:
        if (m.lora.rank != 0) throw ValidationError("apply_regime: FFT expects a model without adapters");
        for (const auto& name : m.order) m.params.at(name)->requires_grad = true;
        break;
    case Regime::lora:
        if (cfg == nullptr) throw ValidationError("apply_regime: LoRA regime needs an adapter config");
        if (m.lora.rank == 0) {
            inject_lora(m, *cfg, seed);
        } else {
            for (const auto& name : m.order)
                m.params.at(name)->requires_grad = detail::is_adapter(name) || detail::is_head(name);
        }
        break;
    }
    return regime_learning_rate(regime);
}

} // namespace rili
