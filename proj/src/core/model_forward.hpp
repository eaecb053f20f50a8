#pragma once

// Builds the classification graph for either model family on top of the
// autodiff ops. The same code path serves training and inference; batches
// are (batch, channels, res, res) and the result is (batch, num_classes).

#include <cmath>
#include <memory>
#include <string>

#include "core/autodiff.hpp"
#include "core/error.hpp"
#include "core/model.hpp"

namespace rili {

namespace detail {

// Linear layer by parameter prefix. When adapters are present for this
// projection the low-rank path is added on top of the frozen base weight.
template <class T>
VarT<T> linear(const ModelT<T>& m, const VarT<T>& x, const std::string& prefix) {
    VarT<T> y = matmul(x, m.at(prefix + ".weight"));
    if (m.has(prefix + ".bias")) y = add_bcast(y, m.at(prefix + ".bias"));
    if (m.has(prefix + ".lora_A")) {
        const double s = m.lora.alpha / static_cast<double>(m.lora.rank);
        VarT<T> delta = matmul(matmul(x, m.at(prefix + ".lora_A")), m.at(prefix + ".lora_B"));
        y = add(y, scale(delta, s));
    }
    return y;
}

template <class T>
VarT<T> layernorm_p(const ModelT<T>& m, const VarT<T>& x, const std::string& prefix) {
    return layernorm(x, m.at(prefix + ".gain"), m.at(prefix + ".bias"));
}

template <class T>
VarT<T> mlp_block(const ModelT<T>& m, const VarT<T>& x, const std::string& prefix) {
    return linear(m, gelu(linear(m, x, prefix + ".fc1")), prefix + ".fc2");
}

// (batch, C, res, res) -> (batch, tokens, C * patch^2), row-major patches.
template <class T>
VarT<T> patchify(const VarT<T>& img, int64_t patch) {
    const Shape& s = img->value.shape;
    if (s.size() != 4) throw ValidationError("forward: input must be (batch, channels, res, res)");
    const int64_t b = s[0], c = s[1], gh = s[2] / patch, gw = s[3] / patch;
    if (gh * patch != s[2] || gw * patch != s[3])
        throw ValidationError("forward: input resolution not divisible by patch size");
    VarT<T> x = reshape(img, {b, c, gh, patch, gw, patch});
    x = permute(x, {0, 2, 4, 1, 3, 5});
    return reshape(x, {b, gh * gw, c * patch * patch});
}

// (batch, tokens, dim) <-> (batch, heads, tokens, head_dim)
template <class T>
VarT<T> split_heads(const VarT<T>& x, int64_t heads) {
    const Shape& s = x->value.shape;
    VarT<T> h = reshape(x, {s[0], s[1], heads, s[2] / heads});
    return permute(h, {0, 2, 1, 3});
}

template <class T>
VarT<T> merge_heads(const VarT<T>& x) {
    const Shape& s = x->value.shape;
    VarT<T> h = permute(x, {0, 2, 1, 3});
    return reshape(h, {s[0], s[2], s[1] * s[3]});
}

} // namespace detail

// Window partition for (batch, grid, grid, C) feature maps: cyclic shift by
// -shift, then tile into non-overlapping windows -> (batch*nw, window^2, C).
// Pure index rearrangement, so unpartition restores the input bit-exactly.
template <class T>
VarT<T> window_partition(const VarT<T>& map, int64_t window, int64_t shift) {
    const Shape& s = map->value.shape;
    if (s.size() != 4 || s[1] != s[2]) throw ValidationError("window_partition: need (batch, grid, grid, C)");
    const int64_t b = s[0], g = s[1], c = s[3];
    if (g % window != 0)
        throw ValidationError("window_partition: grid " + std::to_string(g) + " not divisible by window " +
                              std::to_string(window));
    const int64_t nside = g / window;
    VarT<T> h = shift > 0 ? roll(roll(map, 1, -shift), 2, -shift) : map;
    h = reshape(h, {b, nside, window, nside, window, c});
    h = permute(h, {0, 1, 3, 2, 4, 5});
    return reshape(h, {b * nside * nside, window * window, c});
}

template <class T>
VarT<T> window_unpartition(const VarT<T>& wins, int64_t grid, int64_t window, int64_t shift) {
    const Shape& s = wins->value.shape;
    if (s.size() != 3) throw ValidationError("window_unpartition: need (batch*nw, window^2, C)");
    const int64_t nside = grid / window, c = s[2];
    const int64_t b = s[0] / (nside * nside);
    if (b * nside * nside != s[0] || s[1] != window * window)
        throw ValidationError("window_unpartition: shape does not match grid/window");
    VarT<T> h = reshape(wins, {b, nside, nside, window, window, c});
    h = permute(h, {0, 1, 3, 2, 4, 5});
    h = reshape(h, {b, grid, grid, c});
    return shift > 0 ? roll(roll(h, 1, shift), 2, shift) : h;
}

namespace detail {

template <class T>
VarT<T> vit_forward(const ModelT<T>& m, const VarT<T>& img) {
    const ModelConfig& cfg = m.cfg;
    const int64_t e = cfg.embed_dim, heads = cfg.heads[0];
    VarT<T> x = linear(m, patchify(img, cfg.patch_size), "patch_embed");
    const int64_t b = x->value.shape[0], tokens = x->value.shape[1];

    VarT<T> cls = tile_axis0(reshape(m.at("cls_token"), {1, e}), b); // (batch, dim)
    x = concat(std::vector<VarT<T>>{reshape(cls, {b, 1, e}), x}, 1);
    x = add_bcast(x, m.at("pos_embed"));

    for (int64_t blk = 0; blk < cfg.depths[0]; ++blk) {
        const std::string p = "blocks." + std::to_string(blk);
        VarT<T> h = layernorm_p(m, x, p + ".norm1");
        VarT<T> q = split_heads(linear(m, h, p + ".attn.q"), heads);
        VarT<T> k = split_heads(linear(m, h, p + ".attn.k"), heads);
        VarT<T> v = split_heads(linear(m, h, p + ".attn.v"), heads);
        x = add(x, linear(m, merge_heads(attention(q, k, v)), p + ".attn.o"));
        x = add(x, mlp_block(m, layernorm_p(m, x, p + ".norm2"), p + ".mlp"));
    }

    x = layernorm_p(m, x, "norm");
    VarT<T> pooled = concat(
        std::vector<VarT<T>>{reshape(slice(x, 1, 0, 1), {b, e}), mean_axis(slice(x, 1, 1, tokens), 1)}, 1);
    return linear(m, pooled, "head");
}

template <class T>
VarT<T> swin_forward(const ModelT<T>& m, const VarT<T>& img) {
    const ModelConfig& cfg = m.cfg;
    const auto geom = swin_geometry(cfg);
    VarT<T> x = layernorm_p(m, linear(m, patchify(img, cfg.patch_size), "patch_embed"), "patch_embed.norm");
    const int64_t b = x->value.shape[0];

    for (size_t st = 0; st < cfg.depths.size(); ++st) {
        const int64_t dim = cfg.embed_dim << st;
        const int64_t heads = cfg.heads[st];
        const int64_t hd = dim / heads;
        const int64_t g = geom[st].grid, w = geom[st].window;
        const int64_t nw_side = g / w, nw = nw_side * nw_side, wsq = w * w;
        const std::string sp = "stages." + std::to_string(st);

        for (int64_t blk = 0; blk < cfg.depths[st]; ++blk) {
            const std::string p = sp + ".blocks." + std::to_string(blk);
            const int64_t shift = (blk % 2 == 1 && w < g) ? w / 2 : 0;

            VarT<T> h = layernorm_p(m, x, p + ".norm1");
            h = window_partition(reshape(h, {b, g, g, dim}), w, shift);

            VarT<T> q = split_heads(linear(m, h, p + ".attn.q"), heads);
            VarT<T> k = split_heads(linear(m, h, p + ".attn.k"), heads);
            VarT<T> v = split_heads(linear(m, h, p + ".attn.v"), heads);
            VarT<T> scores = scale(matmul(q, permute(k, {0, 1, 3, 2})), 1.0 / std::sqrt(double(hd)));

            VarT<T> bias = embedding_rows(m.at(p + ".attn.rel_bias"), relative_position_index(w));
            bias = permute(reshape(bias, {wsq, wsq, heads}), {2, 0, 1});
            scores = add_bcast(scores, bias);

            if (shift > 0) {
                TensorT<T> mask = window_attention_mask(g, w, shift).template cast<T>();
                mask.shape = {nw, 1, wsq, wsq};
                scores = reshape(scores, {b, nw, heads, wsq, wsq});
                scores = add_bcast(scores, make_const(mask));
                scores = reshape(scores, {b * nw, heads, wsq, wsq});
            }

            VarT<T> out = merge_heads(matmul(softmax_last(scores), v));
            out = window_unpartition(linear(m, out, p + ".attn.o"), g, w, shift);
            x = add(x, reshape(out, {b, g * g, dim}));
            x = add(x, mlp_block(m, layernorm_p(m, x, p + ".norm2"), p + ".mlp"));
        }

        if (st + 1 < cfg.depths.size()) {
            const int64_t half = g / 2;
            VarT<T> d = reshape(x, {b, half, 2, half, 2, dim});
            d = permute(d, {0, 1, 3, 2, 4, 5});
            d = reshape(d, {b, half * half, 4 * dim});
            d = layernorm_p(m, d, sp + ".downsample.norm");
            x = linear(m, d, sp + ".downsample.reduction");
        }
    }

    x = layernorm_p(m, x, "norm");
    return linear(m, mean_axis(x, 1), "head");
}

} // namespace detail

template <class T>
VarT<T> forward_classify(const ModelT<T>& m, const VarT<T>& img) {
    return m.cfg.family == Family::vit ? detail::vit_forward(m, img) : detail::swin_forward(m, img);
}

} // namespace rili
