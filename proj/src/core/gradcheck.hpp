#pragma once

// Finite-difference verification of reverse-mode gradients. Runs in double
// precision: build the graph through `f`, compare analytic adjoints against
// central differences coordinate by coordinate.

#include <functional>
#include <string>
#include <vector>

#include "core/autodiff.hpp"

namespace rili {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst; // "param[i]" of the worst coordinate
};

// f maps the current leaf values to a scalar loss (rebuilding the graph each
// call). `leaves` are the tensors perturbed and checked.
inline GradCheckResult grad_check(const std::function<Var64(const std::vector<VarT<double>>&)>& f,
                                  std::vector<VarT<double>>& leaves, double h = 1e-5) {
    auto loss = f(leaves);
    if (loss->value.numel() != 1) throw ValidationError("grad_check: loss must be scalar");
    backward(loss);

    std::vector<TensorT<double>> analytic;
    for (auto& l : leaves)
        analytic.push_back(l->grad_ready ? l->grad : TensorT<double>::zeros(l->value.shape));

    GradCheckResult res;
    for (size_t li = 0; li < leaves.size(); ++li) {
        auto& leaf = leaves[li];
        for (int64_t i = 0; i < leaf->value.numel(); ++i) {
            const double orig = leaf->value.data[static_cast<size_t>(i)];
            leaf->value.data[static_cast<size_t>(i)] = orig + h;
            const double fp = f(leaves)->value.data[0];
            leaf->value.data[static_cast<size_t>(i)] = orig - h;
            const double fm = f(leaves)->value.data[0];
            leaf->value.data[static_cast<size_t>(i)] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw Error("grad_check: non-finite loss during perturbation");
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[li].data[static_cast<size_t>(i)];
            const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst = "leaf" + std::to_string(li) + "[" + std::to_string(i) + "]";
            }
        }
    }
    return res;
}

// Same check restricted to a sampled subset of coordinates per leaf — used for
// whole-model checks where exhaustive perturbation is impractical.
inline GradCheckResult grad_check_sampled(const std::function<Var64(const std::vector<VarT<double>>&)>& f,
                                          std::vector<VarT<double>>& leaves, int per_leaf, Rng& rng,
                                          double h = 1e-5) {
    auto loss = f(leaves);
    if (loss->value.numel() != 1) throw ValidationError("grad_check_sampled: loss must be scalar");
    backward(loss);

    std::vector<TensorT<double>> analytic;
    for (auto& l : leaves)
        analytic.push_back(l->grad_ready ? l->grad : TensorT<double>::zeros(l->value.shape));

    GradCheckResult res;
    for (size_t li = 0; li < leaves.size(); ++li) {
        auto& leaf = leaves[li];
        const int64_t n = leaf->value.numel();
        const int takes = static_cast<int>(std::min<int64_t>(per_leaf, n));
        for (int t = 0; t < takes; ++t) {
            const int64_t i = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(n)));
            const double orig = leaf->value.data[static_cast<size_t>(i)];
            leaf->value.data[static_cast<size_t>(i)] = orig + h;
            const double fp = f(leaves)->value.data[0];
            leaf->value.data[static_cast<size_t>(i)] = orig - h;
            const double fm = f(leaves)->value.data[0];
            leaf->value.data[static_cast<size_t>(i)] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw Error("grad_check_sampled: non-finite loss during perturbation");
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[li].data[static_cast<size_t>(i)];
            const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst = "leaf" + std::to_string(li) + "[" + std::to_string(i) + "]";
            }
        }
    }
    return res;
}

} // namespace rili
