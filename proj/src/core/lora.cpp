#include "core/lora.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace rili {

Regime parse_regime(const std::string& name) {
    std::string lower;
    for (const char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (lower == "nft") return Regime::nft;
    if (lower == "fft") return Regime::fft;
    if (lower == "lora") return Regime::lora;
    throw ValidationError("unknown regime '" + name + "' (expected NFT, FFT, or LoRA)");
}

const char* regime_name(Regime r) {
    switch (r) {
    case Regime::nft: return "NFT";
    case Regime::fft: return "FFT";
    default: return "LoRA";
    }
}

double regime_learning_rate(Regime r) {
    switch (r) {
    case Regime::nft: return 1e-3;
    case Regime::fft: return 1e-6;
    default: return 1e-4;
    }
}

void validate_lora_config(const LoRAConfig& cfg) {
    if (cfg.rank <= 0) throw ValidationError("lora: rank must be positive");
    if (cfg.alpha <= 0) throw ValidationError("lora: alpha must be positive");
    if (cfg.init_std <= 0) throw ValidationError("lora: init_std must be positive");
    if (cfg.targets.empty()) throw ValidationError("lora: at least one target projection required");
    std::set<std::string> seen;
    for (const auto& t : cfg.targets) {
        if (t != "q" && t != "k" && t != "v" && t != "o")
            throw ValidationError("lora: target '" + t + "' not one of q, k, v, o");
        if (!seen.insert(t).second) throw ValidationError("lora: duplicate target '" + t + "'");
    }
}

std::vector<ParamInfo> lora_plan(const ModelConfig& model_cfg, const LoRAConfig& cfg) {
    validate_lora_config(cfg);
    std::vector<ParamInfo> out;
    for (const auto& layer : attention_layers(model_cfg))
        for (const auto& t : cfg.targets) {
            out.push_back({layer.prefix + "." + t + ".lora_A", {layer.dim, cfg.rank}, Init::trunc_normal,
                           ParamKind::weight_matrix});
            out.push_back({layer.prefix + "." + t + ".lora_B", {cfg.rank, layer.dim}, Init::zeros,
                           ParamKind::weight_matrix});
        }
    return out;
}

int64_t trainable_under_regime(const ModelConfig& model_cfg, Regime regime, const LoRAConfig* cfg) {
    const auto plan = plan_params(model_cfg);
    if (regime == Regime::fft) return plan_total(plan);
    int64_t head = 0;
    for (const auto& p : plan)
        if (detail::is_head(p.name)) head += shape_numel(p.shape);
    if (regime == Regime::nft) return head;
    if (cfg == nullptr) throw ValidationError("trainable_under_regime: LoRA regime needs an adapter config");
    return head + plan_total(lora_plan(model_cfg, *cfg));
}

} // namespace rili
