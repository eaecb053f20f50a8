#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "core/autodiff.hpp"
#include "core/gradcheck.hpp"

using namespace rili;

namespace {

VarT<double> leaf(Shape s, std::vector<double> v, bool rg = true) {
    return make_var(TensorT<double>(std::move(s), std::move(v)), rg);
}

TensorT<double> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    TensorT<double> t(std::move(s));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

} // namespace

TEST_CASE("softmax of equal logits is uniform") {
    auto x = leaf({1, 4}, {0, 0, 0, 0}, false);
    auto y = softmax_last(x);
    for (double v : y->value.data) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

    auto x2 = leaf({1, 3}, {5, 5, 5}, false);
    auto y2 = softmax_last(x2);
    for (double v : y2->value.data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and shift invariance holds") {
    Rng rng(11);
    auto t = random_tensor({3, 7}, rng, -4, 4);
    auto y = softmax_last(make_const(t));
    for (int r = 0; r < 3; ++r) {
        double s = 0;
        for (int j = 0; j < 7; ++j) s += y->value.data[static_cast<size_t>(r * 7 + j)];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    auto shifted = t;
    for (auto& v : shifted.data) v += 123.0;
    auto y2 = softmax_last(make_const(shifted));
    for (size_t i = 0; i < y->value.data.size(); ++i)
        CHECK(y->value.data[i] == doctest::Approx(y2->value.data[i]).epsilon(1e-9));
}

TEST_CASE("layernorm of a constant row returns the bias") {
    auto x = leaf({2, 4}, {3, 3, 3, 3, -7, -7, -7, -7}, false);
    auto g = leaf({4}, {1.5, 2.0, -1.0, 0.5}, false);
    auto b = leaf({4}, {0.1, 0.2, 0.3, 0.4}, false);
    auto y = layernorm(x, g, b);
    for (int r = 0; r < 2; ++r)
        for (int j = 0; j < 4; ++j)
            CHECK(y->value.data[static_cast<size_t>(r * 4 + j)] ==
                  doctest::Approx(b->value.data[static_cast<size_t>(j)]).epsilon(1e-6));
}

TEST_CASE("layernorm output has zero mean and unit variance under identity affine") {
    Rng rng(3);
    auto x = make_const(random_tensor({5, 16}, rng, -3, 3));
    auto g = leaf({16}, std::vector<double>(16, 1.0), false);
    auto b = leaf({16}, std::vector<double>(16, 0.0), false);
    auto y = layernorm(x, g, b);
    for (int r = 0; r < 5; ++r) {
        double mu = 0, var = 0;
        for (int j = 0; j < 16; ++j) mu += y->value.data[static_cast<size_t>(r * 16 + j)];
        mu /= 16;
        for (int j = 0; j < 16; ++j) {
            double c = y->value.data[static_cast<size_t>(r * 16 + j)] - mu;
            var += c * c;
        }
        var /= 16;
        CHECK(std::abs(mu) < 1e-9);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4)); // eps in denominator shifts it slightly
    }
}

TEST_CASE("matmul against identity and a hand example") {
    auto a = leaf({2, 2}, {1, 2, 3, 4}, false);
    auto eye = leaf({2, 2}, {1, 0, 0, 1}, false);
    auto y = matmul(a, eye);
    for (size_t i = 0; i < 4; ++i) CHECK(y->value.data[i] == a->value.data[i]);

    // [[1,2],[3,4]] x [[5,6],[7,8]] = [[19,22],[43,50]]
    auto b = leaf({2, 2}, {5, 6, 7, 8}, false);
    auto z = matmul(a, b);
    CHECK(z->value.data[0] == 19);
    CHECK(z->value.data[1] == 22);
    CHECK(z->value.data[2] == 43);
    CHECK(z->value.data[3] == 50);
}

TEST_CASE("matmul validates shapes") {
    auto a = leaf({2, 3}, std::vector<double>(6, 1.0), false);
    auto b = leaf({2, 2}, std::vector<double>(4, 1.0), false);
    CHECK_THROWS_AS((void)matmul(a, b), ValidationError);
    auto c = leaf({2, 2, 3}, std::vector<double>(12, 1.0), false);
    auto d = leaf({3, 2, 2}, std::vector<double>(12, 1.0), false);
    CHECK_THROWS_AS((void)matmul(c, d), ValidationError);
}

TEST_CASE("simple derivative: d(x*x)/dx at 3 is 6") {
    auto x = leaf({1}, {3.0});
    auto y = mul(x, x);
    backward(y);
    CHECK(x->grad.data[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("fan-out accumulates: d(x+x)/dx is exactly 2") {
    auto x = leaf({1}, {1.25});
    auto y = add(x, x);
    backward(y);
    CHECK(x->grad.data[0] == 2.0);
}

TEST_CASE("frozen leaves receive no gradient buffer") {
    auto x = leaf({1}, {2.0}, true);
    auto w = leaf({1}, {5.0}, false);
    auto y = mul(x, w);
    backward(y);
    CHECK(x->grad_ready);
    CHECK_FALSE(w->grad_ready);
    CHECK(x->grad.data[0] == 5.0);
}

TEST_CASE("backward rejects non-scalar loss") {
    auto x = leaf({2}, {1.0, 2.0});
    auto y = add(x, x);
    CHECK_THROWS_AS(backward(y), ValidationError);
}

TEST_CASE("add_bcast broadcasts a bias over rows and sums in the adjoint") {
    auto a = leaf({2, 3}, {0, 0, 0, 0, 0, 0}, false);
    auto b = leaf({3}, {1, 2, 3});
    auto y = add_bcast(a, b);
    CHECK(y->value.data == std::vector<double>({1, 2, 3, 1, 2, 3}));

    auto s = mean_axis(mean_axis(y, 0), 0); // scalar mean
    backward(s);
    // d(mean)/db_j = 2 rows * (1/6) = 1/3
    for (int j = 0; j < 3; ++j) CHECK(b->grad.data[static_cast<size_t>(j)] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("add_bcast rejects incompatible shapes") {
    auto a = leaf({2, 3}, std::vector<double>(6, 0.0), false);
    auto b = leaf({2}, {1, 2}, false);
    CHECK_THROWS_AS((void)add_bcast(a, b), ValidationError);
}

TEST_CASE("permute, reshape, roll, slice, concat round-trip") {
    Rng rng(7);
    auto t = random_tensor({2, 3, 4}, rng);

    auto p = permute(make_const(t), {2, 0, 1});
    CHECK(p->value.shape == Shape({4, 2, 3}));
    auto back = permute(p, {1, 2, 0});
    CHECK(back->value.data == t.data);

    auto r = reshape(make_const(t), {6, 4});
    CHECK(r->value.data == t.data);
    CHECK_THROWS_AS((void)reshape(make_const(t), Shape{5, 5}), ValidationError);

    auto rolled = roll(make_const(t), 1, 2);
    auto unrolled = roll(rolled, 1, -2);
    CHECK(unrolled->value.data == t.data);

    auto left = slice(make_const(t), 2, 0, 2);
    auto right = slice(make_const(t), 2, 2, 2);
    auto glued = concat<double>({left, right}, 2);
    CHECK(glued->value.data == t.data);
    CHECK_THROWS_AS((void)slice(make_const(t), 2, 3, 2), ValidationError);
}

TEST_CASE("tile_axis0 repeats and its adjoint sums") {
    auto a = leaf({1, 3}, {1, 2, 3});
    auto y = tile_axis0(a, 4);
    CHECK(y->value.shape == Shape({4, 3}));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(y->value.data[static_cast<size_t>(i * 3 + j)] == a->value.data[static_cast<size_t>(j)]);
    auto s = mean_axis(mean_axis(y, 0), 0);
    backward(s);
    for (int j = 0; j < 3; ++j) CHECK(a->grad.data[static_cast<size_t>(j)] == doctest::Approx(4.0 / 12.0));
}

TEST_CASE("embedding_rows gathers rows and scatters adjoints with repeats") {
    auto table = leaf({4, 2}, {0, 1, 10, 11, 20, 21, 30, 31});
    auto y = embedding_rows(table, {2, 0, 2});
    CHECK(y->value.data == std::vector<double>({20, 21, 0, 1, 20, 21}));
    auto s = mean_axis(mean_axis(y, 0), 0);
    backward(s);
    // each of 6 output entries contributes 1/6; row 2 selected twice
    CHECK(table->grad.data[0] == doctest::Approx(1.0 / 6.0));
    CHECK(table->grad.data[4] == doctest::Approx(2.0 / 6.0));
    CHECK(table->grad.data[6] == 0.0);
    CHECK_THROWS_AS((void)embedding_rows(table, {4}), ValidationError);
}

TEST_CASE("dropout: eval identity, train scaling, seeded reproducibility") {
    Rng rng(42);
    auto x = leaf({1, 100}, std::vector<double>(100, 1.0), false);
    auto eval_y = dropout(x, 0.5, rng, false);
    CHECK(eval_y->value.data == x->value.data);

    Rng r1(9), r2(9), r3(10);
    auto y1 = dropout(x, 0.4, r1, true);
    auto y2 = dropout(x, 0.4, r2, true);
    CHECK(y1->value.data == y2->value.data); // same seed, same mask
    auto y3 = dropout(x, 0.4, r3, true);
    CHECK(y1->value.data != y3->value.data);

    int kept = 0;
    for (double v : y1->value.data) {
        if (v != 0.0) {
            CHECK(v == doctest::Approx(1.0 / 0.6).epsilon(1e-12));
            ++kept;
        }
    }
    CHECK(kept > 30);
    CHECK(kept < 90);
    CHECK_THROWS_AS((void)dropout(x, 1.0, rng, true), ValidationError);
}

TEST_CASE("attention with a single token returns v") {
    auto q = leaf({1, 1, 1, 4}, {0.3, -0.2, 0.9, 0.0}, false);
    auto k = leaf({1, 1, 1, 4}, {1.0, 2.0, 3.0, 4.0}, false);
    auto v = leaf({1, 1, 1, 4}, {5.0, 6.0, 7.0, 8.0}, false);
    auto y = attention(q, k, v);
    for (size_t i = 0; i < 4; ++i) CHECK(y->value.data[i] == doctest::Approx(v->value.data[i]).epsilon(1e-12));
}

TEST_CASE("attention with zero queries averages v uniformly") {
    Rng rng(5);
    auto k = make_const(random_tensor({1, 2, 3, 4}, rng));
    auto v = make_const(random_tensor({1, 2, 3, 4}, rng));
    auto q = leaf({1, 2, 3, 4}, std::vector<double>(24, 0.0), false);
    auto y = attention(q, k, v);
    for (int h = 0; h < 2; ++h)
        for (int t = 0; t < 3; ++t)
            for (int d = 0; d < 4; ++d) {
                double mean = 0;
                for (int s = 0; s < 3; ++s) mean += v->value.data[static_cast<size_t>(((h * 3) + s) * 4 + d)];
                mean /= 3;
                CHECK(y->value.data[static_cast<size_t>(((h * 3) + t) * 4 + d)] ==
                      doctest::Approx(mean).epsilon(1e-9));
            }
}

TEST_CASE("attention matches a hand-computed two-token example") {
    // head_dim=1, scores = q k^T / 1; q=[1,2], k=[0.5,-0.5], v=[10,20]
    auto q = leaf({1, 1, 2, 1}, {1.0, 2.0}, false);
    auto k = leaf({1, 1, 2, 1}, {0.5, -0.5}, false);
    auto v = leaf({1, 1, 2, 1}, {10.0, 20.0}, false);
    auto y = attention(q, k, v);
    auto mix = [](double s0, double s1) {
        double m = std::max(s0, s1);
        double e0 = std::exp(s0 - m), e1 = std::exp(s1 - m);
        return (10.0 * e0 + 20.0 * e1) / (e0 + e1);
    };
    CHECK(y->value.data[0] == doctest::Approx(mix(0.5, -0.5)).epsilon(1e-6));
    CHECK(y->value.data[1] == doctest::Approx(mix(1.0, -1.0)).epsilon(1e-6));
}

TEST_CASE("attention additive mask removes a key from the mix") {
    auto q = leaf({1, 1, 1, 2}, {1.0, 1.0}, false);
    auto k = leaf({1, 1, 2, 2}, {1.0, 0.0, 0.0, 1.0}, false);
    auto v = leaf({1, 1, 2, 2}, {3.0, 4.0, 30.0, 40.0}, false);
    auto mask = leaf({1, 2}, {0.0, -1e9}, false);
    auto y = attention(q, k, v, mask);
    CHECK(y->value.data[0] == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(y->value.data[1] == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("attention validates head_dim") {
    auto q = leaf({1, 1, 2, 3}, std::vector<double>(6, 0.0), false);
    auto k = leaf({1, 1, 2, 4}, std::vector<double>(8, 0.0), false);
    auto v = leaf({1, 1, 2, 4}, std::vector<double>(8, 0.0), false);
    CHECK_THROWS_WITH_AS((void)attention(q, k, v), doctest::Contains("head_dim"), ValidationError);
}

TEST_CASE("cross-entropy of uniform logits is ln(num_classes)") {
    auto logits = leaf({1, 2}, {0.0, 0.0}, false);
    auto l = softmax_ce_loss(logits, {0}, {1.0, 1.0});
    CHECK(l->value.data[0] == doctest::Approx(std::log(2.0)).epsilon(1e-9));

    auto logits4 = leaf({1, 4}, {1.0, 1.0, 1.0, 1.0}, false);
    auto l4 = softmax_ce_loss(logits4, {2}, {1.0, 1.0, 1.0, 1.0});
    CHECK(l4->value.data[0] == doctest::Approx(std::log(4.0)).epsilon(1e-9));
}

TEST_CASE("cross-entropy scales linearly with the class weight") {
    auto logits = leaf({2, 2}, {0.4, -0.1, -0.7, 0.9}, false);
    auto l1 = softmax_ce_loss(logits, {0, 1}, {1.0, 1.0});
    auto l2 = softmax_ce_loss(logits, {0, 1}, {2.0, 2.0});
    CHECK(l2->value.data[0] == doctest::Approx(2.0 * l1->value.data[0]).epsilon(1e-9));
}

TEST_CASE("cross-entropy of a confident correct prediction is near zero") {
    auto logits = leaf({1, 2}, {30.0, -30.0}, false);
    auto l = softmax_ce_loss(logits, {0}, {1.0, 1.0});
    CHECK(l->value.data[0] < 1e-4);
}

TEST_CASE("cross-entropy rejects bad labels and weights") {
    auto logits = leaf({1, 2}, {0.0, 0.0}, false);
    CHECK_THROWS_AS((void)softmax_ce_loss(logits, {2}, {1.0, 1.0}), ValidationError);
    CHECK_THROWS_AS((void)softmax_ce_loss(logits, {-1}, {1.0, 1.0}), ValidationError);
    CHECK_THROWS_AS((void)softmax_ce_loss(logits, {0}, {1.0}), ValidationError);
    CHECK_THROWS_AS((void)softmax_ce_loss(logits, {0}, {1.0, 0.0}), ValidationError);
    CHECK_THROWS_AS((void)softmax_ce_loss(logits, {0, 1}, {1.0, 1.0}), ValidationError);
}

TEST_CASE("cross-entropy gradient is weighted (p - onehot)/batch") {
    auto logits = leaf({1, 2}, {0.0, 0.0});
    auto l = softmax_ce_loss(logits, {1}, {1.0, 3.0});
    backward(l);
    CHECK(logits->grad.data[0] == doctest::Approx(3.0 * 0.5).epsilon(1e-9));
    CHECK(logits->grad.data[1] == doctest::Approx(3.0 * (0.5 - 1.0)).epsilon(1e-9));
}

// ------------------------------------------------------- finite differences

TEST_CASE("finite differences confirm every primitive's gradient") {
    const double tol = 1e-4;
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed);
        CAPTURE(seed);

        { // add / sub / mul / scale chain
            std::vector<VarT<double>> leaves = {make_var(random_tensor({2, 3}, rng), true),
                                                make_var(random_tensor({2, 3}, rng), true)};
            auto f = [](const std::vector<VarT<double>>& l) {
                auto y = mul(add(l[0], l[1]), sub(l[0], scale(l[1], 0.5)));
                return mean_axis(mean_axis(y, 0), 0);
            };
            CHECK(grad_check(f, leaves).max_rel_err < tol);
        }
        { // matmul shared weight + bias broadcast
            std::vector<VarT<double>> leaves = {make_var(random_tensor({2, 3, 4}, rng), true),
                                                make_var(random_tensor({4, 5}, rng), true),
                                                make_var(random_tensor({5}, rng), true)};
            auto f = [](const std::vector<VarT<double>>& l) {
                auto y = add_bcast(matmul(l[0], l[1]), l[2]);
                return mean_axis(mean_axis(mean_axis(y, 0), 0), 0);
            };
            CHECK(grad_check(f, leaves).max_rel_err < tol);
        }
        { // batched matmul
            std::vector<VarT<double>> leaves = {make_var(random_tensor({2, 2, 3}, rng), true),
                                                make_var(random_tensor({2, 3, 2}, rng), true)};
            auto f = [](const std::vector<VarT<double>>& l) {
                auto y = matmul(l[0], l[1]);
                return mean_axis(mean_axis(mean_axis(y, 0), 0), 0);
            };
            CHECK(grad_check(f, leaves).max_rel_err < tol);
        }
        { // softmax + gelu
            std::vector<VarT<double>> leaves = {make_var(random_tensor({3, 5}, rng, -2, 2), true)};
            auto f = [](const std::vector<VarT<double>>& l) {
                auto y = softmax_last(gelu(l[0]));
                return mean_axis(mean_axis(y, 0), 0);
            };
            CHECK(grad_check(f, leaves).max_rel_err < tol);
        }
        { // layernorm (x, gamma, beta)
            std::vector<VarT<double>> leaves = {make_var(random_tensor({3, 6}, rng, -2, 2), true),
                                                make_var(random_tensor({6}, rng, 0.5, 1.5), true),
                                                make_var(random_tensor({6}, rng, -0.5, 0.5), true)};
            auto f = [](const std::vector<VarT<double>>& l) {
                auto y = layernorm(l[0], l[1], l[2]);
                return mean_axis(mean_axis(y, 0), 0);
            };
            CHECK(grad_check(f, leaves).max_rel_err < tol);
        }
        { // data movement: permute/reshape/concat/slice/roll/tile
            std::vector<VarT<double>> leaves = {make_var(random_tensor({1, 2, 4}, rng), true)};
            auto f = [](const std::vector<VarT<double>>& l) {
                auto t = tile_axis0(l[0], 3);         // (3,2,4)
                auto p = permute(t, {1, 0, 2});       // (2,3,4)
                auto r = roll(p, 2, 1);               // cyclic on last axis
                auto s0 = slice(r, 1, 0, 2);          // (2,2,4)
                auto s1 = slice(r, 1, 2, 1);          // (2,1,4)
                auto c = concat<double>({s0, s1}, 1); // (2,3,4)
                auto q = reshape(c, {6, 4});
                return mean_axis(mean_axis(q, 0), 0);
            };
            CHECK(grad_check(f, leaves).max_rel_err < tol);
        }
        { // embedding gather with repeated rows
            std::vector<VarT<double>> leaves = {make_var(random_tensor({5, 3}, rng), true)};
            auto f = [](const std::vector<VarT<double>>& l) {
                auto y = embedding_rows(l[0], {0, 3, 3, 1});
                return mean_axis(mean_axis(y, 0), 0);
            };
            CHECK(grad_check(f, leaves).max_rel_err < tol);
        }
        { // full attention with mask
            std::vector<VarT<double>> leaves = {make_var(random_tensor({1, 2, 3, 4}, rng), true),
                                                make_var(random_tensor({1, 2, 3, 4}, rng), true),
                                                make_var(random_tensor({1, 2, 3, 4}, rng), true)};
            auto mask_t = TensorT<double>({3, 3});
            for (auto& v : mask_t.data) v = 0.0;
            mask_t.data[2] = -1e9; // forbid one pair
            auto mask = make_const(mask_t);
            auto f = [mask](const std::vector<VarT<double>>& l) {
                auto y = attention(l[0], l[1], l[2], mask);
                return mean_axis(mean_axis(mean_axis(mean_axis(y, 0), 0), 0), 0);
            };
            CHECK(grad_check(f, leaves).max_rel_err < tol);
        }
        { // weighted cross-entropy
            std::vector<VarT<double>> leaves = {make_var(random_tensor({4, 2}, rng, -2, 2), true)};
            auto f = [](const std::vector<VarT<double>>& l) {
                return softmax_ce_loss(l[0], {0, 1, 1, 0}, {2.0, 0.6667});
            };
            CHECK(grad_check(f, leaves).max_rel_err < tol);
        }
        { // dropout with a fixed mask (re-seeded each call so FD sees the same mask)
            std::vector<VarT<double>> leaves = {make_var(random_tensor({2, 8}, rng), true)};
            auto f = [seed](const std::vector<VarT<double>>& l) {
                Rng r(seed * 1000 + 7);
                auto y = dropout(l[0], 0.25, r, true);
                return mean_axis(mean_axis(y, 0), 0);
            };
            CHECK(grad_check(f, leaves).max_rel_err < tol);
        }
    }
}
