#pragma once

// Reverse-mode autodiff on dense tensors. Ops record a dynamic tape as
// shared-pointer nodes; backward() walks the graph once in reverse
// topological order and accumulates adjoints additively across fan-out.
// Adjoints are only propagated toward inputs that (transitively) reach a
// trainable leaf, so frozen subgraphs cost nothing in the backward pass.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace rili {

template <class T>
struct NodeT {
    TensorT<T> value;
    TensorT<T> grad;
    bool requires_grad = false;
    bool grad_ready = false;
    std::vector<std::shared_ptr<NodeT<T>>> inputs;
    std::function<void()> backprop;

    TensorT<T>& ensure_grad() {
        if (!grad_ready) {
            grad = TensorT<T>::zeros(value.shape);
            grad_ready = true;
        }
        return grad;
    }
    void accum(const TensorT<T>& g) {
        auto& dst = ensure_grad();
        const T* s = g.ptr();
        T* d = dst.ptr();
        const int64_t n = dst.numel();
        for (int64_t i = 0; i < n; ++i) d[i] += s[i];
    }
};

template <class T>
using VarT = std::shared_ptr<NodeT<T>>;

using Var = VarT<float>;
using Var64 = VarT<double>;

namespace detail {

inline void debug_check_finite_impl(bool finite, const char* op) {
    if (!finite) throw Error(std::string(op) + ": non-finite values produced from finite inputs");
}

template <class T>
inline void debug_check_finite(const TensorT<T>& t, const char* op) {
#ifndef NDEBUG
    debug_check_finite_impl(t.all_finite(), op);
#else
    (void)t;
    (void)op;
#endif
}

// C(M,N) += A(M,K) * B(K,N)
template <class T>
void mm_acc(const T* A, const T* B, T* C, int64_t M, int64_t K, int64_t N) {
    for (int64_t i = 0; i < M; ++i) {
        const T* a = A + i * K;
        T* c = C + i * N;
        for (int64_t k = 0; k < K; ++k) {
            const T av = a[k];
            const T* b = B + k * N;
            for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// C(M,N) += A(M,K) * B(N,K)^T
template <class T>
void mm_bt_acc(const T* A, const T* B, T* C, int64_t M, int64_t K, int64_t N) {
    for (int64_t i = 0; i < M; ++i) {
        const T* a = A + i * K;
        T* c = C + i * N;
        for (int64_t j = 0; j < N; ++j) {
            const T* b = B + j * K;
            T acc = 0;
            for (int64_t k = 0; k < K; ++k) acc += a[k] * b[k];
            c[j] += acc;
        }
    }
}

// C(K,N) += A(M,K)^T * B(M,N)
template <class T>
void mm_at_acc(const T* A, const T* B, T* C, int64_t M, int64_t K, int64_t N) {
    for (int64_t i = 0; i < M; ++i) {
        const T* a = A + i * K;
        const T* b = B + i * N;
        for (int64_t k = 0; k < K; ++k) {
            const T av = a[k];
            T* c = C + k * N;
            for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

inline std::vector<int64_t> row_strides(const Shape& s) {
    std::vector<int64_t> st(s.size());
    int64_t acc = 1;
    for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
        st[static_cast<size_t>(i)] = acc;
        acc *= s[static_cast<size_t>(i)];
    }
    return st;
}

} // namespace detail

template <class T>
VarT<T> make_var(TensorT<T> value, bool requires_grad) {
    auto n = std::make_shared<NodeT<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

template <class T>
VarT<T> make_const(TensorT<T> value) {
    return make_var(std::move(value), false);
}

// ---------------------------------------------------------------- elementwise

template <class T>
VarT<T> add(const VarT<T>& a, const VarT<T>& b) {
    check_same_shape("add", a->value, b->value);
    auto out = std::make_shared<NodeT<T>>();
    out->value = a->value;
    const T* pb = b->value.ptr();
    T* po = out->value.ptr();
    for (int64_t i = 0; i < out->value.numel(); ++i) po[i] += pb[i];
    detail::debug_check_finite(out->value, "add");
    out->requires_grad = a->requires_grad || b->requires_grad;
    if (out->requires_grad) {
        out->inputs = {a, b};
        NodeT<T>*o = out.get(), *na = a.get(), *nb = b.get();
        out->backprop = [o, na, nb] {
            if (na->requires_grad) na->accum(o->grad);
            if (nb->requires_grad) nb->accum(o->grad);
        };
    }
    return out;
}

template <class T>
VarT<T> sub(const VarT<T>& a, const VarT<T>& b) {
    check_same_shape("sub", a->value, b->value);
    auto out = std::make_shared<NodeT<T>>();
    out->value = a->value;
    const T* pb = b->value.ptr();
    T* po = out->value.ptr();
    for (int64_t i = 0; i < out->value.numel(); ++i) po[i] -= pb[i];
    out->requires_grad = a->requires_grad || b->requires_grad;
    if (out->requires_grad) {
        out->inputs = {a, b};
        NodeT<T>*o = out.get(), *na = a.get(), *nb = b.get();
        out->backprop = [o, na, nb] {
            if (na->requires_grad) na->accum(o->grad);
            if (nb->requires_grad) {
                auto& g = nb->ensure_grad();
                const T* s = o->grad.ptr();
                T* d = g.ptr();
                for (int64_t i = 0; i < g.numel(); ++i) d[i] -= s[i];
            }
        };
    }
    return out;
}

template <class T>
VarT<T> mul(const VarT<T>& a, const VarT<T>& b) {
    check_same_shape("mul", a->value, b->value);
    auto out = std::make_shared<NodeT<T>>();
    out->value = a->value;
    const T* pb = b->value.ptr();
    T* po = out->value.ptr();
    for (int64_t i = 0; i < out->value.numel(); ++i) po[i] *= pb[i];
    detail::debug_check_finite(out->value, "mul");
    out->requires_grad = a->requires_grad || b->requires_grad;
    if (out->requires_grad) {
        out->inputs = {a, b};
        NodeT<T>*o = out.get(), *na = a.get(), *nb = b.get();
        out->backprop = [o, na, nb] {
            const T* g = o->grad.ptr();
            const int64_t n = o->grad.numel();
            if (na->requires_grad) {
                T* d = na->ensure_grad().ptr();
                const T* vb = nb->value.ptr();
                for (int64_t i = 0; i < n; ++i) d[i] += g[i] * vb[i];
            }
            if (nb->requires_grad) {
                T* d = nb->ensure_grad().ptr();
                const T* va = na->value.ptr();
                for (int64_t i = 0; i < n; ++i) d[i] += g[i] * va[i];
            }
        };
    }
    return out;
}

template <class T>
VarT<T> scale(const VarT<T>& a, double c) {
    auto out = std::make_shared<NodeT<T>>();
    out->value = a->value;
    T* po = out->value.ptr();
    const T cv = static_cast<T>(c);
    for (int64_t i = 0; i < out->value.numel(); ++i) po[i] *= cv;
    out->requires_grad = a->requires_grad;
    if (out->requires_grad) {
        out->inputs = {a};
        NodeT<T>*o = out.get(), *na = a.get();
        out->backprop = [o, na, cv] {
            T* d = na->ensure_grad().ptr();
            const T* g = o->grad.ptr();
            for (int64_t i = 0; i < o->grad.numel(); ++i) d[i] += g[i] * cv;
        };
    }
    return out;
}

// out = a + broadcast(b); b's shape is right-aligned against a's, each axis
// equal or 1 (an absent leading axis counts as 1). a is never broadcast.
template <class T>
VarT<T> add_bcast(const VarT<T>& a, const VarT<T>& b) {
    const Shape& sa = a->value.shape;
    const Shape& sb = b->value.shape;
    if (sb.size() > sa.size())
        throw ValidationError("add_bcast: shape mismatch " + shape_str(sa) + " vs " + shape_str(sb));
    const int ra = static_cast<int>(sa.size());
    const int off = ra - static_cast<int>(sb.size());
    std::vector<int64_t> bstride(static_cast<size_t>(ra), 0);
    {
        auto st = detail::row_strides(sb);
        for (int i = 0; i < static_cast<int>(sb.size()); ++i) {
            if (sb[static_cast<size_t>(i)] == sa[static_cast<size_t>(i + off)])
                bstride[static_cast<size_t>(i + off)] = st[static_cast<size_t>(i)];
            else if (sb[static_cast<size_t>(i)] != 1)
                throw ValidationError("add_bcast: shape mismatch " + shape_str(sa) + " vs " + shape_str(sb));
        }
    }
    auto out = std::make_shared<NodeT<T>>();
    out->value = a->value;
    const T* pb = b->value.ptr();
    T* po = out->value.ptr();
    // Iterate a's index space carrying b's (possibly zero-strided) offset.
    const int64_t n = out->value.numel();
    std::vector<int64_t> idx(static_cast<size_t>(ra), 0);
    int64_t boff = 0;
    for (int64_t i = 0; i < n; ++i) {
        po[i] += pb[boff];
        for (int d = ra - 1; d >= 0; --d) {
            boff += bstride[static_cast<size_t>(d)];
            if (++idx[static_cast<size_t>(d)] < sa[static_cast<size_t>(d)]) break;
            boff -= bstride[static_cast<size_t>(d)] * sa[static_cast<size_t>(d)];
            idx[static_cast<size_t>(d)] = 0;
        }
    }
    out->requires_grad = a->requires_grad || b->requires_grad;
    if (out->requires_grad) {
        out->inputs = {a, b};
        NodeT<T>*o = out.get(), *na = a.get(), *nb = b.get();
        const Shape sa_copy = sa;
        out->backprop = [o, na, nb, bstride, sa_copy] {
            if (na->requires_grad) na->accum(o->grad);
            if (nb->requires_grad) {
                T* d = nb->ensure_grad().ptr();
                const T* g = o->grad.ptr();
                const int ra2 = static_cast<int>(sa_copy.size());
                std::vector<int64_t> idx(static_cast<size_t>(ra2), 0);
                int64_t boff = 0;
                const int64_t n2 = o->grad.numel();
                for (int64_t i = 0; i < n2; ++i) {
                    d[boff] += g[i];
                    for (int dd = ra2 - 1; dd >= 0; --dd) {
                        boff += bstride[static_cast<size_t>(dd)];
                        if (++idx[static_cast<size_t>(dd)] < sa_copy[static_cast<size_t>(dd)]) break;
                        boff -= bstride[static_cast<size_t>(dd)] * sa_copy[static_cast<size_t>(dd)];
                        idx[static_cast<size_t>(dd)] = 0;
                    }
                }
            }
        };
    }
    return out;
}

// ------------------------------------------------------------------- matmul

// a: (..., M, K). b: either (K, N) shared across leading dims, or batched
// with leading dims identical to a's.
template <class T>
VarT<T> matmul(const VarT<T>& a, const VarT<T>& b) {
    const Shape& sa = a->value.shape;
    const Shape& sb = b->value.shape;
    if (sa.size() < 2 || sb.size() < 2)
        throw ValidationError("matmul: operands must have rank >= 2, got " + shape_str(sa) + " and " +
                              shape_str(sb));
    const int64_t K = sa[sa.size() - 1];
    const int64_t M = sa[sa.size() - 2];
    const bool shared_b = sb.size() == 2;
    if (!shared_b) {
        if (Shape(sa.begin(), sa.end() - 2) != Shape(sb.begin(), sb.end() - 2))
            throw ValidationError("matmul: batch dims differ, " + shape_str(sa) + " vs " + shape_str(sb));
    }
    if (sb[sb.size() - 2] != K)
        throw ValidationError("matmul: inner dims differ, " + shape_str(sa) + " vs " + shape_str(sb));
    const int64_t N = sb[sb.size() - 1];
    const int64_t batch = shape_numel(sa) / (M * K);

    Shape so(sa.begin(), sa.end() - 1);
    so.push_back(N);
    auto out = std::make_shared<NodeT<T>>();
    out->value = TensorT<T>::zeros(so);

    const T* pa = a->value.ptr();
    const T* pb = b->value.ptr();
    T* po = out->value.ptr();
    if (shared_b) {
        detail::mm_acc(pa, pb, po, batch * M, K, N);
    } else {
        for (int64_t i = 0; i < batch; ++i)
            detail::mm_acc(pa + i * M * K, pb + i * K * N, po + i * M * N, M, K, N);
    }
    detail::debug_check_finite(out->value, "matmul");

    out->requires_grad = a->requires_grad || b->requires_grad;
    if (out->requires_grad) {
        out->inputs = {a, b};
        NodeT<T>*o = out.get(), *na = a.get(), *nb = b.get();
        out->backprop = [o, na, nb, M, K, N, batch, shared_b] {
            const T* g = o->grad.ptr();
            if (na->requires_grad) {
                T* da = na->ensure_grad().ptr();
                const T* vb = nb->value.ptr();
                if (shared_b) {
                    detail::mm_bt_acc(g, vb, da, batch * M, N, K);
                } else {
                    for (int64_t i = 0; i < batch; ++i)
                        detail::mm_bt_acc(g + i * M * N, vb + i * K * N, da + i * M * K, M, N, K);
                }
            }
            if (nb->requires_grad) {
                T* db = nb->ensure_grad().ptr();
                const T* va = na->value.ptr();
                if (shared_b) {
                    detail::mm_at_acc(va, g, db, batch * M, K, N);
                } else {
                    for (int64_t i = 0; i < batch; ++i)
                        detail::mm_at_acc(va + i * M * K, g + i * M * N, db + i * K * N, M, K, N);
                }
            }
        };
    }
    return out;
}

// ------------------------------------------------------------- data movement

template <class T>
VarT<T> permute(const VarT<T>& a, std::vector<int> perm) {
    const Shape& sa = a->value.shape;
    const int r = static_cast<int>(sa.size());
    if (static_cast<int>(perm.size()) != r)
        throw ValidationError("permute: perm rank " + std::to_string(perm.size()) + " vs tensor rank " +
                              std::to_string(r));
    {
        std::vector<int> seen(static_cast<size_t>(r), 0);
        for (int p : perm) {
            if (p < 0 || p >= r || seen[static_cast<size_t>(p)]++)
                throw ValidationError("permute: invalid permutation");
        }
    }
    Shape so(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) so[static_cast<size_t>(i)] = sa[static_cast<size_t>(perm[static_cast<size_t>(i)])];

    auto run = [r](const TensorT<T>& src, const std::vector<int>& pm, const Shape& dst_shape) {
        TensorT<T> dst(dst_shape);
        const auto sst = detail::row_strides(src.shape);
        std::vector<int64_t> stride_for_out(static_cast<size_t>(r));
        for (int i = 0; i < r; ++i)
            stride_for_out[static_cast<size_t>(i)] = sst[static_cast<size_t>(pm[static_cast<size_t>(i)])];
        std::vector<int64_t> idx(static_cast<size_t>(r), 0);
        const int64_t n = dst.numel();
        int64_t soff = 0;
        const T* s = src.ptr();
        T* d = dst.ptr();
        for (int64_t i = 0; i < n; ++i) {
            d[i] = s[soff];
            for (int dd = r - 1; dd >= 0; --dd) {
                soff += stride_for_out[static_cast<size_t>(dd)];
                if (++idx[static_cast<size_t>(dd)] < dst_shape[static_cast<size_t>(dd)]) break;
                soff -= stride_for_out[static_cast<size_t>(dd)] * dst_shape[static_cast<size_t>(dd)];
                idx[static_cast<size_t>(dd)] = 0;
            }
        }
        return dst;
    };

    auto out = std::make_shared<NodeT<T>>();
    out->value = run(a->value, perm, so);
    out->requires_grad = a->requires_grad;
    if (out->requires_grad) {
        out->inputs = {a};
        std::vector<int> inv(static_cast<size_t>(r));
        for (int i = 0; i < r; ++i) inv[static_cast<size_t>(perm[static_cast<size_t>(i)])] = i;
        NodeT<T>*o = out.get(), *na = a.get();
        Shape sa_copy = sa;
        out->backprop = [o, na, run, inv, sa_copy] { na->accum(run(o->grad, inv, sa_copy)); };
    }
    return out;
}

template <class T>
VarT<T> transpose(const VarT<T>& a, int ax0, int ax1) {
    const int r = a->value.rank();
    if (ax0 < 0) ax0 += r;
    if (ax1 < 0) ax1 += r;
    std::vector<int> perm(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) perm[static_cast<size_t>(i)] = i;
    std::swap(perm[static_cast<size_t>(ax0)], perm[static_cast<size_t>(ax1)]);
    return permute(a, perm);
}

template <class T>
VarT<T> reshape(const VarT<T>& a, Shape s) {
    if (shape_numel(s) != a->value.numel())
        throw ValidationError("reshape: cannot reshape " + shape_str(a->value.shape) + " into " + shape_str(s));
    auto out = std::make_shared<NodeT<T>>();
    out->value = TensorT<T>(std::move(s), a->value.data);
    out->requires_grad = a->requires_grad;
    if (out->requires_grad) {
        out->inputs = {a};
        NodeT<T>*o = out.get(), *na = a.get();
        out->backprop = [o, na] { na->accum(TensorT<T>(na->value.shape, o->grad.data)); };
    }
    return out;
}

template <class T>
VarT<T> concat(const std::vector<VarT<T>>& parts, int axis) {
    if (parts.empty()) throw ValidationError("concat: no inputs");
    const int r = parts[0]->value.rank();
    if (axis < 0) axis += r;
    int64_t axis_total = 0;
    for (const auto& p : parts) {
        if (p->value.rank() != r) throw ValidationError("concat: rank mismatch");
        for (int d = 0; d < r; ++d) {
            if (d == axis) continue;
            if (p->value.shape[static_cast<size_t>(d)] != parts[0]->value.shape[static_cast<size_t>(d)])
                throw ValidationError("concat: shape mismatch " + shape_str(parts[0]->value.shape) + " vs " +
                                      shape_str(p->value.shape));
        }
        axis_total += p->value.shape[static_cast<size_t>(axis)];
    }
    Shape so = parts[0]->value.shape;
    so[static_cast<size_t>(axis)] = axis_total;
    auto out = std::make_shared<NodeT<T>>();
    out->value = TensorT<T>::zeros(so);

    const int64_t outer = [&] {
        int64_t v = 1;
        for (int d = 0; d < axis; ++d) v *= so[static_cast<size_t>(d)];
        return v;
    }();
    const int64_t inner = [&] {
        int64_t v = 1;
        for (int d = axis + 1; d < r; ++d) v *= so[static_cast<size_t>(d)];
        return v;
    }();

    // Forward copy + remember each part's block offset for the backward slice.
    std::vector<int64_t> offsets;
    {
        int64_t off = 0;
        T* po = out->value.ptr();
        for (const auto& p : parts) {
            offsets.push_back(off);
            const int64_t pa = p->value.shape[static_cast<size_t>(axis)];
            const T* ps = p->value.ptr();
            for (int64_t ou = 0; ou < outer; ++ou)
                std::memcpy(po + (ou * axis_total + off) * inner, ps + ou * pa * inner,
                            static_cast<size_t>(pa * inner) * sizeof(T));
            off += pa;
        }
    }
    bool any = false;
    for (const auto& p : parts) any = any || p->requires_grad;
    out->requires_grad = any;
    if (any) {
        out->inputs = parts;
        NodeT<T>* o = out.get();
        const int axis_c = axis;
        out->backprop = [o, offsets, outer, inner, axis_total, axis_c] {
            const T* g = o->grad.ptr();
            for (size_t pi = 0; pi < o->inputs.size(); ++pi) {
                NodeT<T>* p = o->inputs[pi].get();
                if (!p->requires_grad) continue;
                const int64_t pa = p->value.shape[static_cast<size_t>(axis_c)];
                T* d = p->ensure_grad().ptr();
                for (int64_t ou = 0; ou < outer; ++ou) {
                    const T* src = g + (ou * axis_total + offsets[pi]) * inner;
                    T* dst = d + ou * pa * inner;
                    for (int64_t i = 0; i < pa * inner; ++i) dst[i] += src[i];
                }
            }
        };
    }
    return out;
}

template <class T>
VarT<T> slice(const VarT<T>& a, int axis, int64_t start, int64_t len) {
    const int r = a->value.rank();
    if (axis < 0) axis += r;
    const int64_t dim = a->value.shape[static_cast<size_t>(axis)];
    if (start < 0 || len <= 0 || start + len > dim)
        throw ValidationError("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                              ") out of bounds for axis size " + std::to_string(dim));
    Shape so = a->value.shape;
    so[static_cast<size_t>(axis)] = len;
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= a->value.shape[static_cast<size_t>(d)];
    for (int d = axis + 1; d < r; ++d) inner *= a->value.shape[static_cast<size_t>(d)];

    auto out = std::make_shared<NodeT<T>>();
    out->value = TensorT<T>::zeros(so);
    {
        const T* s = a->value.ptr();
        T* d = out->value.ptr();
        for (int64_t ou = 0; ou < outer; ++ou)
            std::memcpy(d + ou * len * inner, s + (ou * dim + start) * inner,
                        static_cast<size_t>(len * inner) * sizeof(T));
    }
    out->requires_grad = a->requires_grad;
    if (out->requires_grad) {
        out->inputs = {a};
        NodeT<T>*o = out.get(), *na = a.get();
        out->backprop = [o, na, outer, inner, dim, start, len] {
            const T* g = o->grad.ptr();
            T* d = na->ensure_grad().ptr();
            for (int64_t ou = 0; ou < outer; ++ou) {
                const T* src = g + ou * len * inner;
                T* dst = d + (ou * dim + start) * inner;
                for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
            }
        };
    }
    return out;
}

// Repeats a leading singleton axis n times: (1, ...) -> (n, ...).
template <class T>
VarT<T> tile_axis0(const VarT<T>& a, int64_t n) {
    if (a->value.rank() < 1 || a->value.shape[0] != 1)
        throw ValidationError("tile_axis0: leading axis must be 1, got " + shape_str(a->value.shape));
    Shape so = a->value.shape;
    so[0] = n;
    auto out = std::make_shared<NodeT<T>>();
    out->value = TensorT<T>::zeros(so);
    const int64_t block = a->value.numel();
    for (int64_t i = 0; i < n; ++i)
        std::memcpy(out->value.ptr() + i * block, a->value.ptr(), static_cast<size_t>(block) * sizeof(T));
    out->requires_grad = a->requires_grad;
    if (out->requires_grad) {
        out->inputs = {a};
        NodeT<T>*o = out.get(), *na = a.get();
        out->backprop = [o, na, n, block] {
            T* d = na->ensure_grad().ptr();
            const T* g = o->grad.ptr();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < block; ++j) d[j] += g[i * block + j];
        };
    }
    return out;
}

// Cyclic shift along one axis (positive shift moves content toward higher
// indices, wrapping around).
template <class T>
VarT<T> roll(const VarT<T>& a, int axis, int64_t shift) {
    const int r = a->value.rank();
    if (axis < 0) axis += r;
    const int64_t dim = a->value.shape[static_cast<size_t>(axis)];
    int64_t s = ((shift % dim) + dim) % dim;
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= a->value.shape[static_cast<size_t>(d)];
    for (int d = axis + 1; d < r; ++d) inner *= a->value.shape[static_cast<size_t>(d)];

    auto run = [outer, inner, dim](const TensorT<T>& src, int64_t sh) {
        TensorT<T> dst(src.shape);
        const T* p = src.ptr();
        T* q = dst.ptr();
        for (int64_t ou = 0; ou < outer; ++ou)
            for (int64_t i = 0; i < dim; ++i) {
                const int64_t j = (i + sh) % dim;
                std::memcpy(q + (ou * dim + j) * inner, p + (ou * dim + i) * inner,
                            static_cast<size_t>(inner) * sizeof(T));
            }
        return dst;
    };

    auto out = std::make_shared<NodeT<T>>();
    out->value = run(a->value, s);
    out->requires_grad = a->requires_grad;
    if (out->requires_grad) {
        out->inputs = {a};
        NodeT<T>*o = out.get(), *na = a.get();
        out->backprop = [o, na, run, s, dim] { na->accum(run(o->grad, (dim - s) % dim)); };
    }
    return out;
}

// ---------------------------------------------------------------- reductions

template <class T>
VarT<T> mean_axis(const VarT<T>& a, int axis) {
    const int r = a->value.rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw ValidationError("mean_axis: axis out of range");
    const int64_t dim = a->value.shape[static_cast<size_t>(axis)];
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= a->value.shape[static_cast<size_t>(d)];
    for (int d = axis + 1; d < r; ++d) inner *= a->value.shape[static_cast<size_t>(d)];
    Shape so;
    for (int d = 0; d < r; ++d)
        if (d != axis) so.push_back(a->value.shape[static_cast<size_t>(d)]);
    if (so.empty()) so.push_back(1);

    auto out = std::make_shared<NodeT<T>>();
    out->value = TensorT<T>::zeros(so);
    {
        const T* s = a->value.ptr();
        T* d = out->value.ptr();
        for (int64_t ou = 0; ou < outer; ++ou)
            for (int64_t i = 0; i < dim; ++i) {
                const T* row = s + (ou * dim + i) * inner;
                T* acc = d + ou * inner;
                for (int64_t j = 0; j < inner; ++j) acc[j] += row[j];
            }
        const T invn = static_cast<T>(1.0 / static_cast<double>(dim));
        for (int64_t i = 0; i < out->value.numel(); ++i) d[i] *= invn;
    }
    out->requires_grad = a->requires_grad;
    if (out->requires_grad) {
        out->inputs = {a};
        NodeT<T>*o = out.get(), *na = a.get();
        out->backprop = [o, na, outer, inner, dim] {
            const T invn = static_cast<T>(1.0 / static_cast<double>(dim));
            const T* g = o->grad.ptr();
            T* d = na->ensure_grad().ptr();
            for (int64_t ou = 0; ou < outer; ++ou)
                for (int64_t i = 0; i < dim; ++i) {
                    T* row = d + (ou * dim + i) * inner;
                    const T* gg = g + ou * inner;
                    for (int64_t j = 0; j < inner; ++j) row[j] += gg[j] * invn;
                }
        };
    }
    return out;
}

// --------------------------------------------------------------- activations

template <class T>
VarT<T> softmax_last(const VarT<T>& a) {
    const int64_t dim = a->value.dim(-1);
    const int64_t rows = a->value.numel() / dim;
    auto out = std::make_shared<NodeT<T>>();
    out->value = TensorT<T>::zeros(a->value.shape);
    {
        const T* s = a->value.ptr();
        T* d = out->value.ptr();
        for (int64_t rix = 0; rix < rows; ++rix) {
            const T* x = s + rix * dim;
            T* y = d + rix * dim;
            T m = x[0];
            for (int64_t j = 1; j < dim; ++j) m = std::max(m, x[j]);
            double z = 0;
            for (int64_t j = 0; j < dim; ++j) {
                y[j] = static_cast<T>(std::exp(static_cast<double>(x[j] - m)));
                z += y[j];
            }
            const T invz = static_cast<T>(1.0 / z);
            for (int64_t j = 0; j < dim; ++j) y[j] *= invz;
        }
    }
    out->requires_grad = a->requires_grad;
    if (out->requires_grad) {
        out->inputs = {a};
        NodeT<T>*o = out.get(), *na = a.get();
        out->backprop = [o, na, rows, dim] {
            const T* y = o->value.ptr();
            const T* g = o->grad.ptr();
            T* d = na->ensure_grad().ptr();
            for (int64_t rix = 0; rix < rows; ++rix) {
                const T* yr = y + rix * dim;
                const T* gr = g + rix * dim;
                T* dr = d + rix * dim;
                double dot = 0;
                for (int64_t j = 0; j < dim; ++j) dot += static_cast<double>(gr[j]) * yr[j];
                for (int64_t j = 0; j < dim; ++j) dr[j] += (gr[j] - static_cast<T>(dot)) * yr[j];
            }
        };
    }
    return out;
}

// GELU, tanh approximation.
template <class T>
VarT<T> gelu(const VarT<T>& a) {
    constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double kA = 0.044715;
    auto out = std::make_shared<NodeT<T>>();
    out->value = TensorT<T>::zeros(a->value.shape);
    {
        const T* x = a->value.ptr();
        T* y = out->value.ptr();
        for (int64_t i = 0; i < out->value.numel(); ++i) {
            const double v = x[i];
            y[i] = static_cast<T>(0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v))));
        }
    }
    out->requires_grad = a->requires_grad;
    if (out->requires_grad) {
        out->inputs = {a};
        NodeT<T>*o = out.get(), *na = a.get();
        out->backprop = [o, na] {
            const T* x = na->value.ptr();
            const T* g = o->grad.ptr();
            T* d = na->ensure_grad().ptr();
            for (int64_t i = 0; i < o->grad.numel(); ++i) {
                const double v = x[i];
                const double u = kC * (v + kA * v * v * v);
                const double t = std::tanh(u);
                const double sech2 = 1.0 - t * t;
                const double dv = 0.5 * (1.0 + t) + 0.5 * v * sech2 * kC * (1.0 + 3.0 * kA * v * v);
                d[i] += g[i] * static_cast<T>(dv);
            }
        };
    }
    return out;
}

// Layer normalization over the last axis with learnable gain/bias.
template <class T>
VarT<T> layernorm(const VarT<T>& x, const VarT<T>& gamma, const VarT<T>& beta, double eps = 1e-5) {
    const int64_t dim = x->value.dim(-1);
    if (gamma->value.numel() != dim || beta->value.numel() != dim)
        throw ValidationError("layernorm: gain/bias length " + std::to_string(gamma->value.numel()) + "/" +
                              std::to_string(beta->value.numel()) + " vs feature dim " + std::to_string(dim));
    const int64_t rows = x->value.numel() / dim;
    auto out = std::make_shared<NodeT<T>>();
    out->value = TensorT<T>::zeros(x->value.shape);
    // xhat cached for backward.
    auto xhat = std::make_shared<TensorT<T>>(TensorT<T>::zeros(x->value.shape));
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
    {
        const T* s = x->value.ptr();
        const T* gm = gamma->value.ptr();
        const T* bt = beta->value.ptr();
        T* d = out->value.ptr();
        T* xh = xhat->ptr();
        for (int64_t rix = 0; rix < rows; ++rix) {
            const T* row = s + rix * dim;
            double mu = 0;
            for (int64_t j = 0; j < dim; ++j) mu += row[j];
            mu /= static_cast<double>(dim);
            double var = 0;
            for (int64_t j = 0; j < dim; ++j) {
                const double c = row[j] - mu;
                var += c * c;
            }
            var /= static_cast<double>(dim);
            const double inv = 1.0 / std::sqrt(var + eps);
            (*inv_std)[static_cast<size_t>(rix)] = static_cast<T>(inv);
            for (int64_t j = 0; j < dim; ++j) {
                const T h = static_cast<T>((row[j] - mu) * inv);
                xh[rix * dim + j] = h;
                d[rix * dim + j] = h * gm[j] + bt[j];
            }
        }
    }
    detail::debug_check_finite(out->value, "layernorm");
    out->requires_grad = x->requires_grad || gamma->requires_grad || beta->requires_grad;
    if (out->requires_grad) {
        out->inputs = {x, gamma, beta};
        NodeT<T>*o = out.get(), *nx = x.get(), *ng = gamma.get(), *nb = beta.get();
        out->backprop = [o, nx, ng, nb, xhat, inv_std, rows, dim] {
            const T* g = o->grad.ptr();
            const T* xh = xhat->ptr();
            const T* gm = ng->value.ptr();
            if (ng->requires_grad) {
                T* dg = ng->ensure_grad().ptr();
                for (int64_t rix = 0; rix < rows; ++rix)
                    for (int64_t j = 0; j < dim; ++j) dg[j] += g[rix * dim + j] * xh[rix * dim + j];
            }
            if (nb->requires_grad) {
                T* db = nb->ensure_grad().ptr();
                for (int64_t rix = 0; rix < rows; ++rix)
                    for (int64_t j = 0; j < dim; ++j) db[j] += g[rix * dim + j];
            }
            if (nx->requires_grad) {
                T* dx = nx->ensure_grad().ptr();
                for (int64_t rix = 0; rix < rows; ++rix) {
                    const T inv = (*inv_std)[static_cast<size_t>(rix)];
                    double m1 = 0, m2 = 0;
                    for (int64_t j = 0; j < dim; ++j) {
                        const double dh = static_cast<double>(g[rix * dim + j]) * gm[j];
                        m1 += dh;
                        m2 += dh * xh[rix * dim + j];
                    }
                    m1 /= static_cast<double>(dim);
                    m2 /= static_cast<double>(dim);
                    for (int64_t j = 0; j < dim; ++j) {
                        const double dh = static_cast<double>(g[rix * dim + j]) * gm[j];
                        dx[rix * dim + j] +=
                            static_cast<T>((dh - m1 - static_cast<double>(xh[rix * dim + j]) * m2) * inv);
                    }
                }
            }
        };
    }
    return out;
}

// Inverted dropout. Train mode draws the mask from `rng` (reproducible under a
// fixed seed); eval mode is the identity.
template <class T>
VarT<T> dropout(const VarT<T>& x, double p, Rng& rng, bool training) {
    if (p < 0.0 || p >= 1.0) throw ValidationError("dropout: p must be in [0,1), got " + std::to_string(p));
    if (!training || p == 0.0) return x;
    auto mask = std::make_shared<TensorT<T>>(TensorT<T>::zeros(x->value.shape));
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    {
        T* m = mask->ptr();
        for (int64_t i = 0; i < mask->numel(); ++i) m[i] = rng.bernoulli(p) ? T(0) : keep_scale;
    }
    auto out = std::make_shared<NodeT<T>>();
    out->value = x->value;
    {
        T* d = out->value.ptr();
        const T* m = mask->ptr();
        for (int64_t i = 0; i < out->value.numel(); ++i) d[i] *= m[i];
    }
    out->requires_grad = x->requires_grad;
    if (out->requires_grad) {
        out->inputs = {x};
        NodeT<T>*o = out.get(), *nx = x.get();
        out->backprop = [o, nx, mask] {
            T* d = nx->ensure_grad().ptr();
            const T* g = o->grad.ptr();
            const T* m = mask->ptr();
            for (int64_t i = 0; i < o->grad.numel(); ++i) d[i] += g[i] * m[i];
        };
    }
    return out;
}

// Row gather from a (N, D) table; adjoint scatters back. Serves both token
// embeddings and relative-position-bias lookups.
template <class T>
VarT<T> embedding_rows(const VarT<T>& table, std::vector<int64_t> indices) {
    if (table->value.rank() != 2)
        throw ValidationError("embedding_rows: table must be 2-D, got " + shape_str(table->value.shape));
    const int64_t n = table->value.shape[0];
    const int64_t d = table->value.shape[1];
    for (int64_t ix : indices)
        if (ix < 0 || ix >= n)
            throw ValidationError("embedding_rows: index " + std::to_string(ix) + " out of [0," +
                                  std::to_string(n) + ")");
    auto out = std::make_shared<NodeT<T>>();
    out->value = TensorT<T>::zeros({static_cast<int64_t>(indices.size()), d});
    {
        const T* s = table->value.ptr();
        T* q = out->value.ptr();
        for (size_t i = 0; i < indices.size(); ++i)
            std::memcpy(q + static_cast<int64_t>(i) * d, s + indices[i] * d, static_cast<size_t>(d) * sizeof(T));
    }
    out->requires_grad = table->requires_grad;
    if (out->requires_grad) {
        out->inputs = {table};
        NodeT<T>*o = out.get(), *nt = table.get();
        out->backprop = [o, nt, indices, d] {
            T* dst = nt->ensure_grad().ptr();
            const T* g = o->grad.ptr();
            for (size_t i = 0; i < indices.size(); ++i) {
                const T* row = g + static_cast<int64_t>(i) * d;
                T* acc = dst + indices[i] * d;
                for (int64_t j = 0; j < d; ++j) acc[j] += row[j];
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------- attention

// q/k/v: (batch, heads, tokens, head_dim). Optional additive mask broadcastable
// to the (tokens, tokens) score matrix.
template <class T>
VarT<T> attention(const VarT<T>& q, const VarT<T>& k, const VarT<T>& v, const VarT<T>& mask = nullptr) {
    if (q->value.rank() != 4 || k->value.rank() != 4 || v->value.rank() != 4)
        throw ValidationError("attention: q/k/v must be rank 4");
    if (q->value.dim(-1) != k->value.dim(-1))
        throw ValidationError("attention: head_dim mismatch " + shape_str(q->value.shape) + " vs " +
                              shape_str(k->value.shape));
    if (k->value.dim(2) != v->value.dim(2))
        throw ValidationError("attention: k/v token counts differ");
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q->value.dim(-1)));
    auto scores = scale(matmul(q, transpose(k, 2, 3)), inv_sqrt_d);
    if (mask) scores = add_bcast(scores, mask);
    return matmul(softmax_last(scores), v);
}

// Weighted softmax cross-entropy over class logits, averaged over the batch:
// mean_i w[y_i] * (-log softmax(logits_i)[y_i]).
template <class T>
VarT<T> softmax_ce_loss(const VarT<T>& logits, const std::vector<int>& labels,
                        const std::vector<double>& class_weights) {
    if (logits->value.rank() != 2)
        throw ValidationError("softmax_ce_loss: logits must be (batch, classes), got " +
                              shape_str(logits->value.shape));
    const int64_t batch = logits->value.shape[0];
    const int64_t classes = logits->value.shape[1];
    if (static_cast<int64_t>(labels.size()) != batch)
        throw ValidationError("softmax_ce_loss: batch " + std::to_string(batch) + " vs " +
                              std::to_string(labels.size()) + " labels");
    if (static_cast<int64_t>(class_weights.size()) != classes)
        throw ValidationError("softmax_ce_loss: need one weight per class");
    for (double w : class_weights)
        if (!(w > 0)) throw ValidationError("softmax_ce_loss: class weights must be positive");
    for (int y : labels)
        if (y < 0 || y >= classes)
            throw ValidationError("softmax_ce_loss: label " + std::to_string(y) + " outside [0," +
                                  std::to_string(classes) + ")");

    auto probs = std::make_shared<TensorT<T>>(TensorT<T>::zeros(logits->value.shape));
    double total = 0;
    {
        const T* x = logits->value.ptr();
        T* pr = probs->ptr();
        for (int64_t i = 0; i < batch; ++i) {
            const T* row = x + i * classes;
            T m = row[0];
            for (int64_t j = 1; j < classes; ++j) m = std::max(m, row[j]);
            double z = 0;
            for (int64_t j = 0; j < classes; ++j) z += std::exp(static_cast<double>(row[j] - m));
            const double lse = static_cast<double>(m) + std::log(z);
            for (int64_t j = 0; j < classes; ++j)
                pr[i * classes + j] = static_cast<T>(std::exp(static_cast<double>(row[j]) - lse));
            total += class_weights[static_cast<size_t>(labels[static_cast<size_t>(i)])] *
                     (lse - static_cast<double>(row[labels[static_cast<size_t>(i)]]));
        }
    }
    auto out = std::make_shared<NodeT<T>>();
    out->value = TensorT<T>({1}, {static_cast<T>(total / static_cast<double>(batch))});
    out->requires_grad = logits->requires_grad;
    if (out->requires_grad) {
        out->inputs = {logits};
        NodeT<T>*o = out.get(), *nl = logits.get();
        out->backprop = [o, nl, probs, labels, class_weights, batch, classes] {
            const T gup = o->grad.ptr()[0];
            T* d = nl->ensure_grad().ptr();
            const T* pr = probs->ptr();
            for (int64_t i = 0; i < batch; ++i) {
                const double w = class_weights[static_cast<size_t>(labels[static_cast<size_t>(i)])] /
                                 static_cast<double>(batch);
                for (int64_t j = 0; j < classes; ++j) {
                    double p = pr[i * classes + j];
                    if (j == labels[static_cast<size_t>(i)]) p -= 1.0;
                    d[i * classes + j] += gup * static_cast<T>(w * p);
                }
            }
        };
    }
    return out;
}

// ----------------------------------------------------------------- backward

template <class T>
void backward(const VarT<T>& loss) {
    if (loss->value.numel() != 1)
        throw ValidationError("backward: loss must be scalar, got " + shape_str(loss->value.shape));
    if (!loss->requires_grad) return; // nothing trainable reachable

    // Reverse topological order over the requires_grad subgraph.
    std::vector<NodeT<T>*> order;
    std::unordered_set<NodeT<T>*> seen;
    struct Frame {
        NodeT<T>* node;
        size_t next_child;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.get(), 0});
    seen.insert(loss.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_child < f.node->inputs.size()) {
            NodeT<T>* child = f.node->inputs[f.next_child++].get();
            if (child->requires_grad && !seen.count(child)) {
                seen.insert(child);
                stack.push_back({child, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    loss->ensure_grad().data[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        NodeT<T>* n = *it;
        if (n->backprop && n->grad_ready) n->backprop();
    }
}

} // namespace rili
