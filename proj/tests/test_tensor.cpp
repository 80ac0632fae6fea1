#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "uniview/errors.hpp"
#include "uniview/gradcheck.hpp"
#include "uniview/rng.hpp"
#include "uniview/tensor.hpp"

using namespace uniview;

namespace {

TensorPtr rand_param(Rng& rng, std::vector<std::int64_t> shape) {
    return randn(rng, std::move(shape), 0.0, 1.0, true);
}

}  // namespace

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, SubstreamsAreIndependent) {
    Rng a = substream(7, "noise");
    Rng b = substream(7, "data");
    Rng c = substream(7, "noise", 1);
    bool all_equal_ab = true, all_equal_ac = true;
    for (int i = 0; i < 16; ++i) {
        Rng a2 = substream(7, "noise");
        (void)a2;
        if (a.next_u64() != b.next_u64()) all_equal_ab = false;
        if (a.next_u64() != c.next_u64()) all_equal_ac = false;
    }
    EXPECT_FALSE(all_equal_ab);
    EXPECT_FALSE(all_equal_ac);
}

TEST(Rng, UniformRangeAndMoments) {
    Rng r(123);
    double sum = 0.0, sum2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
        sum2 += u * u;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    EXPECT_NEAR(mean, 0.5, 0.01);
    EXPECT_NEAR(var, 1.0 / 12.0, 0.005);
}

TEST(Rng, GaussMoments) {
    Rng r(321);
    double sum = 0.0, sum2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double g = r.gauss();
        sum += g;
        sum2 += g * g;
    }
    const double mean = sum / n;
    EXPECT_NEAR(mean, 0.0, 0.03);
    EXPECT_NEAR(sum2 / n - mean * mean, 1.0, 0.05);
}

TEST(Rng, UniformIntCoversRange) {
    Rng r(9);
    std::vector<int> seen(5, 0);
    for (int i = 0; i < 500; ++i) {
        const auto v = r.uniform_int(0, 5);
        ASSERT_GE(v, 0);
        ASSERT_LT(v, 5);
        ++seen[static_cast<std::size_t>(v)];
    }
    for (int c : seen) EXPECT_GT(c, 0);
}

TEST(Tensor, ShapeValidation) {
    EXPECT_THROW(make_tensor({1.0, 2.0}, {3}), DimensionError);
    EXPECT_NO_THROW(make_tensor({1.0, 2.0, 3.0, 4.0, 5.0, 6.0}, {2, 3}));
    auto s = make_tensor({4.0}, {});
    EXPECT_EQ(s->item(), 4.0);
}

TEST(Tensor, AddSubMulValues) {
    auto a = make_tensor({1.0, 2.0, 3.0}, {3});
    auto b = make_tensor({10.0, 20.0, 30.0}, {3});
    auto sum = add(a, b);
    auto diff = sub(b, a);
    auto prod = mul(a, b);
    EXPECT_EQ(sum->data, (std::vector<double>{11.0, 22.0, 33.0}));
    EXPECT_EQ(diff->data, (std::vector<double>{9.0, 18.0, 27.0}));
    EXPECT_EQ(prod->data, (std::vector<double>{10.0, 40.0, 90.0}));
    EXPECT_THROW(add(a, make_tensor({1.0}, {1})), DimensionError);
}

TEST(Tensor, SoftmaxUniformRows) {
    auto x = full({2, 3}, 5.0);
    auto y = softmax(x, 1);
    for (double v : y->data) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Tensor, SoftmaxKnownTwoElement) {
    auto x = make_tensor({0.0, std::log(3.0)}, {1, 2});
    auto y = softmax(x, 1);
    EXPECT_NEAR(y->data[0], 0.25, 1e-12);
    EXPECT_NEAR(y->data[1], 0.75, 1e-12);
}

TEST(Tensor, SoftmaxRowsSumToOneAndAxis0) {
    Rng rng(5);
    auto x = randn(rng, {4, 7});
    auto y1 = softmax(x, 1);
    for (int r = 0; r < 4; ++r) {
        double s = 0.0;
        for (int c = 0; c < 7; ++c) s += y1->data[r * 7 + c];
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
    auto y0 = softmax(x, 0);
    for (int c = 0; c < 7; ++c) {
        double s = 0.0;
        for (int r = 0; r < 4; ++r) s += y0->data[r * 7 + c];
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Tensor, SoftmaxLargeInputsStable) {
    auto x = make_tensor({1000.0, 1001.0, 999.0}, {1, 3});
    auto y = softmax(x, 1);
    double s = 0.0;
    for (double v : y->data) {
        ASSERT_TRUE(std::isfinite(v));
        s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_GT(y->data[1], y->data[0]);
    EXPECT_GT(y->data[0], y->data[2]);
}

TEST(Tensor, MatmulKnownValues) {
    auto a = make_tensor({1.0, 2.0, 3.0, 4.0, 5.0, 6.0}, {2, 3});
    auto b = make_tensor({7.0, 8.0, 9.0, 10.0, 11.0, 12.0}, {3, 2});
    auto c = matmul(a, b);
    EXPECT_EQ(c->shape, (std::vector<std::int64_t>{2, 2}));
    EXPECT_DOUBLE_EQ(c->data[0], 58.0);
    EXPECT_DOUBLE_EQ(c->data[1], 64.0);
    EXPECT_DOUBLE_EQ(c->data[2], 139.0);
    EXPECT_DOUBLE_EQ(c->data[3], 154.0);
}

TEST(Tensor, MatmulNtMatchesExplicitTranspose) {
    Rng rng(11);
    auto a = randn(rng, {3, 5});
    auto b = randn(rng, {4, 5});
    std::vector<double> bt(5 * 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j) bt[j * 4 + i] = b->data[i * 5 + j];
    auto c1 = matmul_nt(a, b);
    auto c2 = matmul(a, make_tensor(std::move(bt), {5, 4}));
    ASSERT_EQ(c1->shape, c2->shape);
    for (std::size_t i = 0; i < c1->data.size(); ++i)
        EXPECT_NEAR(c1->data[i], c2->data[i], 1e-12);
}

TEST(Tensor, AttentionMatchesNaiveOracle) {
    Rng rng(77);
    const std::int64_t nq = 4, nk = 6, d = 8, dv = 5;
    auto q = randn(rng, {nq, d});
    auto k = randn(rng, {nk, d});
    auto v = randn(rng, {nk, dv});
    auto out = scaled_dot_attention(q, k, v, d);
    ASSERT_EQ(out->shape, (std::vector<std::int64_t>{nq, dv}));

    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::int64_t i = 0; i < nq; ++i) {
        std::vector<double> w(nk);
        double mx = -1e300;
        for (std::int64_t j = 0; j < nk; ++j) {
            double s = 0.0;
            for (std::int64_t t = 0; t < d; ++t) s += q->data[i * d + t] * k->data[j * d + t];
            w[j] = s * scale;
            mx = std::max(mx, w[j]);
        }
        double z = 0.0;
        for (auto& x : w) {
            x = std::exp(x - mx);
            z += x;
        }
        for (auto& x : w) x /= z;
        for (std::int64_t c = 0; c < dv; ++c) {
            double expect = 0.0;
            for (std::int64_t j = 0; j < nk; ++j) expect += w[j] * v->data[j * dv + c];
            EXPECT_NEAR(out->data[i * dv + c], expect, 1e-10);
        }
    }
}

TEST(Tensor, LayerNormMatchesNaiveOracle) {
    Rng rng(13);
    const std::int64_t rows = 3, d = 6;
    auto x = randn(rng, {rows, d});
    auto gain = randn(rng, {d});
    auto shift = randn(rng, {d});
    auto y = layer_norm(x, gain, shift);
    for (std::int64_t r = 0; r < rows; ++r) {
        double mu = 0.0;
        for (std::int64_t i = 0; i < d; ++i) mu += x->data[r * d + i];
        mu /= d;
        double var = 0.0;
        for (std::int64_t i = 0; i < d; ++i) {
            const double c = x->data[r * d + i] - mu;
            var += c * c;
        }
        var /= d;
        for (std::int64_t i = 0; i < d; ++i) {
            const double expect =
                (x->data[r * d + i] - mu) / std::sqrt(var + 1e-5) * gain->data[i] +
                shift->data[i];
            EXPECT_NEAR(y->data[r * d + i], expect, 1e-12);
        }
    }
}

TEST(Tensor, Conv2dMatchesNaiveOracle) {
    Rng rng(17);
    const std::int64_t ci = 2, h = 5, w = 4, co = 3, kh = 3, kw = 3;
    auto x = randn(rng, {ci, h, w});
    auto kern = randn(rng, {co, ci, kh, kw});
    auto bias = randn(rng, {co});
    for (std::int64_t stride : {1, 2}) {
        for (std::int64_t pad : {0, 1}) {
            const std::int64_t ho = (h + 2 * pad - kh) / stride + 1;
            const std::int64_t wo = (w + 2 * pad - kw) / stride + 1;
            if (ho <= 0 || wo <= 0) continue;
            auto y = conv2d(x, kern, bias, stride, pad);
            ASSERT_EQ(y->shape, (std::vector<std::int64_t>{co, ho, wo}));
            for (std::int64_t oc = 0; oc < co; ++oc)
                for (std::int64_t oy = 0; oy < ho; ++oy)
                    for (std::int64_t ox = 0; ox < wo; ++ox) {
                        double acc = bias->data[oc];
                        for (std::int64_t ic = 0; ic < ci; ++ic)
                            for (std::int64_t ky = 0; ky < kh; ++ky)
                                for (std::int64_t kx = 0; kx < kw; ++kx) {
                                    const std::int64_t iy = oy * stride - pad + ky;
                                    const std::int64_t ix = ox * stride - pad + kx;
                                    if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                    acc += x->data[(ic * h + iy) * w + ix] *
                                           kern->data[((oc * ci + ic) * kh + ky) * kw + kx];
                                }
                        EXPECT_NEAR(y->data[(oc * ho + oy) * wo + ox], acc, 1e-12);
                    }
        }
    }
}

TEST(Tensor, Conv1x1TokensMatchesMatmul) {
    Rng rng(19);
    const std::int64_t n = 6, ci = 4, co = 3;
    auto x = randn(rng, {n, ci});
    auto kern = randn(rng, {co, ci, 1, 1});
    auto bias = randn(rng, {co});
    auto y = conv1x1_tokens(x, kern, bias);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t oc = 0; oc < co; ++oc) {
            double expect = bias->data[oc];
            for (std::int64_t c = 0; c < ci; ++c)
                expect += x->data[i * ci + c] * kern->data[oc * ci + c];
            EXPECT_NEAR(y->data[i * co + oc], expect, 1e-12);
        }
}

TEST(Tensor, TokenRoundTrip) {
    Rng rng(23);
    auto x = randn(rng, {3, 4, 5});
    auto t = to_tokens(x);
    ASSERT_EQ(t->shape, (std::vector<std::int64_t>{20, 3}));
    auto back = from_tokens(t, 3, 4, 5);
    EXPECT_EQ(back->data, x->data);
}

TEST(Tensor, UpsampleNearestValues) {
    auto x = make_tensor({1.0, 2.0, 3.0, 4.0}, {1, 2, 2});
    auto y = upsample_nearest2(x);
    ASSERT_EQ(y->shape, (std::vector<std::int64_t>{1, 4, 4}));
    const std::vector<double> expect = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    EXPECT_EQ(y->data, expect);
}

TEST(Tensor, ConcatAndSliceRows) {
    auto a = make_tensor({1.0, 2.0, 3.0, 4.0}, {2, 2});
    auto b = make_tensor({5.0, 6.0}, {1, 2});
    auto c = concat_rows(a, b);
    ASSERT_EQ(c->shape, (std::vector<std::int64_t>{3, 2}));
    auto s = slice_rows(c, 1, 3);
    EXPECT_EQ(s->data, (std::vector<double>{3.0, 4.0, 5.0, 6.0}));
    EXPECT_THROW(slice_rows(c, 2, 2), DimensionError);
}

TEST(Tensor, MeanRowsAndBroadcast) {
    auto x = make_tensor({1.0, 3.0, 5.0, 7.0}, {2, 2});
    auto m = mean_rows(x);
    ASSERT_EQ(m->shape, (std::vector<std::int64_t>{1, 2}));
    EXPECT_DOUBLE_EQ(m->data[0], 3.0);
    EXPECT_DOUBLE_EQ(m->data[1], 5.0);
    auto y = add_row_broadcast(x, m);
    EXPECT_EQ(y->data, (std::vector<double>{4.0, 8.0, 8.0, 12.0}));
}

TEST(Tensor, NoGradGuardSkipsTape) {
    auto a = make_tensor({1.0}, {1}, true);
    auto b = make_tensor({2.0}, {1}, true);
    {
        NoGradGuard ng;
        auto c = add(a, b);
        EXPECT_FALSE(c->requires_grad);
        EXPECT_TRUE(c->parents.empty());
    }
    auto c = add(a, b);
    EXPECT_TRUE(c->requires_grad);
    EXPECT_EQ(c->parents.size(), 2u);
}

TEST(Tensor, BackwardThroughChain) {
    // d/dx mean((x*x + x)) at x = [1,2,3] is (2x+1)/3.
    auto x = make_tensor({1.0, 2.0, 3.0}, {3}, true);
    auto y = mean_all(add(mul(x, x), x));
    y->backward();
    ASSERT_EQ(x->grad.size(), 3u);
    EXPECT_NEAR(x->grad[0], 3.0 / 3.0, 1e-12);
    EXPECT_NEAR(x->grad[1], 5.0 / 3.0, 1e-12);
    EXPECT_NEAR(x->grad[2], 7.0 / 3.0, 1e-12);
}

TEST(Tensor, BackwardReusedNodeAccumulates) {
    auto x = make_tensor({2.0}, {1}, true);
    auto s = add(x, x);  // 2x
    auto y = sum_all(mul(s, s));  // 4x^2, dy/dx = 8x = 16
    y->backward();
    EXPECT_NEAR(x->grad[0], 16.0, 1e-12);
}

TEST(GradCheck, ElementwiseOps) {
    Rng rng(31);
    auto x = rand_param(rng, {2, 3});
    auto y = rand_param(rng, {2, 3});
    auto res = grad_check(
        [&] { return mean_all(mul(silu(x), add(y, mul_scalar(x, 0.5)))); }, {x, y});
    EXPECT_TRUE(res.ok()) << "max rel err " << res.max_rel_err;
}

TEST(GradCheck, MatmulSoftmaxChain) {
    Rng rng(37);
    auto a = rand_param(rng, {3, 4});
    auto b = rand_param(rng, {4, 5});
    auto res = grad_check([&] { return mean_all(softmax(matmul(a, b), 1)); }, {a, b});
    EXPECT_TRUE(res.ok()) << "max rel err " << res.max_rel_err;
    auto res2 = grad_check([&] { return sum_all(mul(softmax(matmul(a, b), 1),
                                                    softmax(matmul(a, b), 1))); },
                           {a, b});
    EXPECT_TRUE(res2.ok()) << "max rel err " << res2.max_rel_err;
}

TEST(GradCheck, Attention) {
    Rng rng(41);
    auto q = rand_param(rng, {3, 4});
    auto k = rand_param(rng, {5, 4});
    auto v = rand_param(rng, {5, 2});
    auto res = grad_check([&] { return mean_all(scaled_dot_attention(q, k, v, 4)); }, {q, k, v});
    EXPECT_TRUE(res.ok()) << "max rel err " << res.max_rel_err;
}

TEST(GradCheck, LayerNorm) {
    Rng rng(43);
    auto x = rand_param(rng, {4, 6});
    auto g = rand_param(rng, {6});
    auto s = rand_param(rng, {6});
    auto res = grad_check([&] { return mse_loss(layer_norm(x, g, s), mul_scalar(x, 0.1)); },
                          {x, g, s});
    EXPECT_TRUE(res.ok()) << "max rel err " << res.max_rel_err;
}

TEST(GradCheck, Conv2dStridePad) {
    Rng rng(47);
    auto x = rand_param(rng, {2, 5, 4});
    auto kern = rand_param(rng, {3, 2, 3, 3});
    auto bias = rand_param(rng, {3});
    auto res = grad_check(
        [&] { return mean_all(silu(conv2d(x, kern, bias, 2, 1))); }, {x, kern, bias});
    EXPECT_TRUE(res.ok()) << "max rel err " << res.max_rel_err;
}

TEST(GradCheck, ImageLayoutOps) {
    Rng rng(53);
    auto x = rand_param(rng, {2, 2, 3});
    auto bias = rand_param(rng, {2});
    auto res = grad_check(
        [&] {
            auto up = upsample_nearest2(add_channel_bias(x, bias));
            auto tok = to_tokens(concat_channels(up, up));
            return mean_all(mul(tok, tok));
        },
        {x, bias});
    EXPECT_TRUE(res.ok()) << "max rel err " << res.max_rel_err;
}

TEST(GradCheck, RowOps) {
    Rng rng(59);
    auto a = rand_param(rng, {3, 4});
    auto b = rand_param(rng, {2, 4});
    auto res = grad_check(
        [&] {
            auto c = concat_rows(a, b);
            auto m = mean_rows(slice_rows(c, 1, 4));
            return sum_all(mul(add_row_broadcast(c, m), c));
        },
        {a, b});
    EXPECT_TRUE(res.ok()) << "max rel err " << res.max_rel_err;
}

TEST(Tensor, CheckFiniteThrows) {
    auto x = make_tensor({1.0, std::nan("")}, {2});
    EXPECT_THROW(check_finite(*x, "probe"), NumericError);
    auto y = make_tensor({1.0, 2.0}, {2});
    EXPECT_NO_THROW(check_finite(*y, "probe"));
}
