#include "core/model.hpp"

#include <algorithm>

#include "core/error.hpp"

namespace rili {

void validate_config(const ModelConfig& cfg) {
    if (cfg.input_resolution < 16) throw ValidationError("model: input_resolution must be >= 16");
    if (cfg.in_channels != 3) throw ValidationError("model: in_channels must be 3");
    if (cfg.embed_dim <= 0 || cfg.patch_size <= 0) throw ValidationError("model: embed_dim/patch_size must be positive");
    if (cfg.num_classes < 2) throw ValidationError("model: num_classes must be >= 2");
    if (cfg.mlp_ratio <= 0) throw ValidationError("model: mlp_ratio must be positive");
    if (cfg.depths.empty() || cfg.heads.empty())
        throw ValidationError("model: depths and heads must be non-empty");
    if (cfg.input_resolution % cfg.patch_size != 0)
        throw ValidationError("model: input_resolution " + std::to_string(cfg.input_resolution) +
                              " not divisible by patch_size " + std::to_string(cfg.patch_size));

    if (cfg.family == Family::vit) {
        if (cfg.depths.size() != 1 || cfg.heads.size() != 1)
            throw ValidationError("model: vit takes a single depth and head count");
        if (cfg.embed_dim % cfg.heads[0] != 0)
            throw ValidationError("model: heads " + std::to_string(cfg.heads[0]) + " must divide embed_dim " +
                                  std::to_string(cfg.embed_dim));
        if (cfg.depths[0] < 1) throw ValidationError("model: depth must be >= 1");
    } else {
        if (cfg.depths.size() != cfg.heads.size())
            throw ValidationError("model: swin needs one head count per stage");
        if (cfg.window_size < 2) throw ValidationError("model: swin window_size must be >= 2");
        for (size_t s = 0; s < cfg.depths.size(); ++s) {
            if (cfg.depths[s] < 1) throw ValidationError("model: every stage depth must be >= 1");
            const int64_t dim = cfg.embed_dim << s;
            if (dim % cfg.heads[s] != 0)
                throw ValidationError("model: stage " + std::to_string(s) + " heads must divide its dim " +
                                      std::to_string(dim));
        }
        // grid must stay integral and window-tileable at every stage
        int64_t grid = cfg.input_resolution / cfg.patch_size;
        for (size_t s = 0; s < cfg.depths.size(); ++s) {
            if (grid < 1)
                throw ValidationError("model: resolution too small for " + std::to_string(cfg.depths.size()) +
                                      " swin stages");
            const int64_t win = std::min(cfg.window_size, grid);
            if (grid % win != 0)
                throw ValidationError("model: stage " + std::to_string(s) + " grid " + std::to_string(grid) +
                                      " not divisible by window " + std::to_string(win));
            if (s + 1 < cfg.depths.size()) {
                if (grid % 2 != 0)
                    throw ValidationError("model: stage " + std::to_string(s) + " grid " + std::to_string(grid) +
                                          " not divisible by 2 for patch merging");
                grid /= 2;
            }
        }
    }
}

ModelConfig preset_config(const std::string& name) {
    ModelConfig c;
    if (name == "dinov2-small-shape") {
        c.family = Family::vit;
        c.embed_dim = 384;
        c.depths = {12};
        c.heads = {6};
        c.patch_size = 14;
        c.input_resolution = 224;
    } else if (name == "dinov2-base-shape") {
        c.family = Family::vit;
        c.embed_dim = 768;
        c.depths = {12};
        c.heads = {12};
        c.patch_size = 14;
        c.input_resolution = 224;
    } else if (name == "swin-small-shape") {
        c.family = Family::swin;
        c.embed_dim = 96;
        c.depths = {2, 2, 18, 2};
        c.heads = {3, 6, 12, 24};
        c.patch_size = 4;
        c.window_size = 7;
        c.input_resolution = 224;
    } else if (name == "swin-base-shape") {
        c.family = Family::swin;
        c.embed_dim = 128;
        c.depths = {2, 2, 18, 2};
        c.heads = {4, 8, 16, 32};
        c.patch_size = 4;
        c.window_size = 7;
        c.input_resolution = 224;
    } else if (name == "toy-vit") {
        c.family = Family::vit;
        c.embed_dim = 64;
        c.depths = {2};
        c.heads = {4};
        c.patch_size = 8;
        c.input_resolution = 64;
    } else if (name == "toy-swin") {
        c.family = Family::swin;
        c.embed_dim = 32;
        c.depths = {1, 1};
        c.heads = {2, 4};
        c.patch_size = 4;
        c.window_size = 4;
        c.input_resolution = 64;
    } else {
        throw ValidationError("unknown preset '" + name + "'");
    }
    return c;
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"dinov2-small-shape", "dinov2-base-shape", "swin-small-shape",
                                                "swin-base-shape",    "toy-vit",           "toy-swin"};
    return names;
}

namespace {

void plan_linear(std::vector<ParamInfo>& out, const std::string& prefix, int64_t d_in, int64_t d_out,
                 bool bias = true) {
    out.push_back({prefix + ".weight", {d_in, d_out}, Init::trunc_normal, ParamKind::weight_matrix});
    if (bias) out.push_back({prefix + ".bias", {d_out}, Init::zeros, ParamKind::bias});
}

void plan_norm(std::vector<ParamInfo>& out, const std::string& prefix, int64_t dim) {
    out.push_back({prefix + ".gain", {dim}, Init::ones, ParamKind::norm_gain});
    out.push_back({prefix + ".bias", {dim}, Init::zeros, ParamKind::norm_bias});
}

void plan_attn(std::vector<ParamInfo>& out, const std::string& prefix, int64_t dim) {
    for (const char* proj : {"q", "k", "v", "o"}) plan_linear(out, prefix + "." + proj, dim, dim);
}

void plan_mlp(std::vector<ParamInfo>& out, const std::string& prefix, int64_t dim, double ratio) {
    const int64_t hidden = static_cast<int64_t>(static_cast<double>(dim) * ratio);
    plan_linear(out, prefix + ".fc1", dim, hidden);
    plan_linear(out, prefix + ".fc2", hidden, dim);
}

} // namespace

std::vector<SwinStageGeom> swin_geometry(const ModelConfig& cfg) {
    std::vector<SwinStageGeom> geom;
    int64_t grid = cfg.input_resolution / cfg.patch_size;
    for (size_t s = 0; s < cfg.depths.size(); ++s) {
        geom.push_back({grid, std::min(cfg.window_size, grid)});
        if (s + 1 < cfg.depths.size()) grid /= 2;
    }
    return geom;
}

std::vector<ParamInfo> plan_params(const ModelConfig& cfg) {
    validate_config(cfg);
    std::vector<ParamInfo> out;
    const int64_t patch_in = cfg.patch_size * cfg.patch_size * cfg.in_channels;

    if (cfg.family == Family::vit) {
        const int64_t e = cfg.embed_dim;
        const int64_t side = cfg.input_resolution / cfg.patch_size;
        const int64_t tokens = side * side;
        plan_linear(out, "patch_embed", patch_in, e);
        out.push_back({"cls_token", {1, 1, e}, Init::trunc_normal, ParamKind::cls_token});
        out.push_back({"pos_embed", {1, tokens + 1, e}, Init::zeros, ParamKind::pos_embed});
        for (int64_t b = 0; b < cfg.depths[0]; ++b) {
            const std::string p = "blocks." + std::to_string(b);
            plan_norm(out, p + ".norm1", e);
            plan_attn(out, p + ".attn", e);
            plan_norm(out, p + ".norm2", e);
            plan_mlp(out, p + ".mlp", e, cfg.mlp_ratio);
        }
        plan_norm(out, "norm", e);
        plan_linear(out, "head", 2 * e, cfg.num_classes);
    } else {
        plan_linear(out, "patch_embed", patch_in, cfg.embed_dim);
        plan_norm(out, "patch_embed.norm", cfg.embed_dim);
        const auto geom = swin_geometry(cfg);
        for (size_t s = 0; s < cfg.depths.size(); ++s) {
            const int64_t dim = cfg.embed_dim << s;
            const int64_t win = geom[s].window;
            const int64_t table = (2 * win - 1) * (2 * win - 1);
            for (int64_t b = 0; b < cfg.depths[s]; ++b) {
                const std::string p = "stages." + std::to_string(s) + ".blocks." + std::to_string(b);
                plan_norm(out, p + ".norm1", dim);
                plan_attn(out, p + ".attn", dim);
                out.push_back({p + ".attn.rel_bias", {table, cfg.heads[s]}, Init::trunc_normal,
                               ParamKind::bias_table});
                plan_norm(out, p + ".norm2", dim);
                plan_mlp(out, p + ".mlp", dim, cfg.mlp_ratio);
            }
            if (s + 1 < cfg.depths.size()) {
                const std::string p = "stages." + std::to_string(s) + ".downsample";
                plan_norm(out, p + ".norm", 4 * dim);
                plan_linear(out, p + ".reduction", 4 * dim, 2 * dim, /*bias=*/false);
            }
        }
        const int64_t last = cfg.embed_dim << (cfg.depths.size() - 1);
        plan_norm(out, "norm", last);
        plan_linear(out, "head", last, cfg.num_classes);
    }
    return out;
}

int64_t plan_total(const std::vector<ParamInfo>& plan) {
    int64_t total = 0;
    for (const auto& p : plan) total += shape_numel(p.shape);
    return total;
}

std::vector<AttnLayer> attention_layers(const ModelConfig& cfg) {
    validate_config(cfg);
    std::vector<AttnLayer> out;
    if (cfg.family == Family::vit) {
        for (int64_t b = 0; b < cfg.depths[0]; ++b)
            out.push_back({"blocks." + std::to_string(b) + ".attn", cfg.embed_dim});
    } else {
        for (size_t s = 0; s < cfg.depths.size(); ++s)
            for (int64_t b = 0; b < cfg.depths[s]; ++b)
                out.push_back({"stages." + std::to_string(s) + ".blocks." + std::to_string(b) + ".attn",
                               cfg.embed_dim << s});
    }
    return out;
}

std::vector<int64_t> relative_position_index(int64_t window) {
    const int64_t m = window;
    std::vector<int64_t> index;
    index.reserve(static_cast<size_t>(m * m * m * m));
    for (int64_t qh = 0; qh < m; ++qh)
        for (int64_t qw = 0; qw < m; ++qw)
            for (int64_t kh = 0; kh < m; ++kh)
                for (int64_t kw = 0; kw < m; ++kw)
                    index.push_back((qh - kh + m - 1) * (2 * m - 1) + (qw - kw + m - 1));
    return index;
}

std::vector<int> shift_region_ids(int64_t grid, int64_t window, int64_t shift) {
    // Post-shift coordinates fall into three bands per axis: the contiguous
    // interior, the block that slid off the far edge, and the wrapped block.
    auto band = [&](int64_t x) {
        if (x < grid - window) return 0;
        if (x < grid - shift) return 1;
        return 2;
    };
    std::vector<int> ids(static_cast<size_t>(grid * grid));
    for (int64_t h = 0; h < grid; ++h)
        for (int64_t w = 0; w < grid; ++w)
            ids[static_cast<size_t>(h * grid + w)] = band(h) * 3 + band(w);
    return ids;
}

TensorT<float> window_attention_mask(int64_t grid, int64_t window, int64_t shift) {
    if (grid % window != 0)
        throw ValidationError("window mask: grid " + std::to_string(grid) + " not divisible by window " +
                              std::to_string(window));
    const int64_t nw_side = grid / window;
    const int64_t nw = nw_side * nw_side;
    const int64_t wsq = window * window;
    TensorT<float> mask = TensorT<float>::zeros({nw, wsq, wsq});
    if (shift == 0) return mask;

    const auto ids = shift_region_ids(grid, window, shift);
    for (int64_t wy = 0; wy < nw_side; ++wy)
        for (int64_t wx = 0; wx < nw_side; ++wx) {
            const int64_t widx = wy * nw_side + wx;
            for (int64_t i = 0; i < wsq; ++i) {
                const int64_t ih = wy * window + i / window;
                const int64_t iw = wx * window + i % window;
                for (int64_t j = 0; j < wsq; ++j) {
                    const int64_t jh = wy * window + j / window;
                    const int64_t jw = wx * window + j % window;
                    if (ids[static_cast<size_t>(ih * grid + iw)] != ids[static_cast<size_t>(jh * grid + jw)])
                        mask.data[static_cast<size_t>((widx * wsq + i) * wsq + j)] = -1e9f;
                }
            }
        }
    return mask;
}

ParamKind param_kind(const std::vector<ParamInfo>& plan, const std::string& name) {
    for (const auto& p : plan)
        if (p.name == name) return p.kind;
    // adapters and other out-of-plan additions decay like weight matrices
    return ParamKind::weight_matrix;
}

} // namespace rili
