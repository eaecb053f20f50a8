#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "core/error.hpp"

namespace rili {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ')';
    return os.str();
}

// Dense row-major tensor (last axis fastest). float for training, double for
// the gradient-check instantiation.
template <class T>
struct TensorT {
    Shape shape;
    std::vector<T> data;

    TensorT() = default;
    explicit TensorT(Shape s) : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), T(0)) {
        for (int64_t d : shape)
            if (d <= 0) throw ValidationError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    TensorT(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        if (static_cast<int64_t>(data.size()) != shape_numel(shape))
            throw ValidationError("tensor data size " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
    }

    static TensorT zeros(Shape s) { return TensorT(std::move(s)); }
    static TensorT full(Shape s, T v) {
        TensorT t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i < 0 ? rank() + i : i)]; }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <class U>
    TensorT<U> cast() const {
        TensorT<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

template <class T>
inline void check_same_shape(const char* op, const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape != b.shape)
        throw ValidationError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                              shape_str(b.shape));
}

} // namespace rili
