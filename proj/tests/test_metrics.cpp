#include "uniview/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "uniview/errors.hpp"
#include "uniview/rng.hpp"

using namespace uniview;

namespace {

Image random_image(int w, int h, Rng& rng) {
    Image img(w, h);
    for (auto& p : img.pixels) p = rng.uniform();
    return img;
}

double naive_psnr(const Image& a, const Image& b) {
    double sq = 0.0;
    std::size_t n = 0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < a.height; ++y)
            for (int x = 0; x < a.width; ++x) {
                const double d = a.at(c, y, x) - b.at(c, y, x);
                sq += d * d;
                ++n;
            }
    const double mse = sq / static_cast<double>(n);
    if (mse < 1e-10) return kPsnrCap;
    return 10.0 * std::log10(1.0 / mse);
}

std::vector<double> luminance(const Image& img) {
    std::vector<double> out(img.plane());
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            out[static_cast<std::size_t>(y) * img.width + x] =
                0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
    return out;
}

// Straight-line reimplementation with explicit window sums.
double naive_ssim(const Image& ia, const Image& ib) {
    const int w = ia.width, h = ia.height, half = 5;
    const auto a = luminance(ia);
    const auto b = luminance(ib);
    std::vector<double> win(11 * 11);
    double wsum = 0.0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            const double dy = i - half, dx = j - half;
            win[i * 11 + j] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
            wsum += win[i * 11 + j];
        }
    for (auto& v : win) v /= wsum;

    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0.0;
    int count = 0;
    for (int cy = half; cy < h - half; ++cy)
        for (int cx = half; cx < w - half; ++cx) {
            double mu_a = 0, mu_b = 0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    const std::size_t idx =
                        static_cast<std::size_t>(cy - half + i) * w + (cx - half + j);
                    mu_a += win[i * 11 + j] * a[idx];
                    mu_b += win[i * 11 + j] * b[idx];
                }
            double var_a = 0, var_b = 0, cov = 0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    const std::size_t idx =
                        static_cast<std::size_t>(cy - half + i) * w + (cx - half + j);
                    var_a += win[i * 11 + j] * (a[idx] - mu_a) * (a[idx] - mu_a);
                    var_b += win[i * 11 + j] * (b[idx] - mu_b) * (b[idx] - mu_b);
                    cov += win[i * 11 + j] * (a[idx] - mu_a) * (b[idx] - mu_b);
                }
            total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                     ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            ++count;
        }
    return total / count;
}

}  // namespace

TEST(Psnr, IdenticalImagesHitTheCap) {
    Rng rng(substream(11, "metrics"));
    const Image a = random_image(16, 12, rng);
    EXPECT_EQ(psnr(a, a), kPsnrCap);
}

TEST(Psnr, KnownUniformErrorGivesTwentyDecibels) {
    const Image a(10, 10, 0.0);
    const Image b(10, 10, 0.1);
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
}

TEST(Psnr, MatchesTwoPassOracle) {
    Rng rng(substream(12, "metrics"));
    for (int k = 0; k < 5; ++k) {
        const Image a = random_image(17, 9, rng);
        const Image b = random_image(17, 9, rng);
        EXPECT_NEAR(psnr(a, b), naive_psnr(a, b), 1e-9);
    }
}

TEST(Psnr, MismatchedShapesThrow) {
    const Image a(8, 8), b(8, 9);
    EXPECT_THROW(psnr(a, b), DimensionError);
}

TEST(PsnrMasked, FullMaskEqualsUnmasked) {
    Rng rng(substream(13, "metrics"));
    const Image a = random_image(14, 10, rng);
    const Image b = random_image(14, 10, rng);
    const std::vector<std::uint8_t> mask(a.plane(), 1);
    EXPECT_DOUBLE_EQ(psnr_masked(a, b, mask), psnr(a, b));
}

TEST(PsnrMasked, IgnoresPixelsOutsideTheMask) {
    Rng rng(substream(14, "metrics"));
    const Image a = random_image(12, 12, rng);
    Image b = a;
    std::vector<std::uint8_t> mask(a.plane(), 0);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 12; ++x) mask[static_cast<std::size_t>(y) * 12 + x] = 1;
    for (int y = 6; y < 12; ++y)
        for (int x = 0; x < 12; ++x)
            for (int c = 0; c < 3; ++c) b.at(c, y, x) = 1.0 - b.at(c, y, x);
    EXPECT_EQ(psnr_masked(a, b, mask), kPsnrCap);
    EXPECT_LT(psnr(a, b), kPsnrCap);
}

TEST(PsnrMasked, MatchesOracleOnRandomMask) {
    Rng rng(substream(15, "metrics"));
    const Image a = random_image(13, 11, rng);
    const Image b = random_image(13, 11, rng);
    std::vector<std::uint8_t> mask(a.plane());
    for (auto& m : mask) m = rng.uniform() < 0.4 ? 1 : 0;

    double sq = 0.0;
    std::size_t n = 0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < a.height; ++y)
            for (int x = 0; x < a.width; ++x) {
                if (!mask[static_cast<std::size_t>(y) * a.width + x]) continue;
                const double d = a.at(c, y, x) - b.at(c, y, x);
                sq += d * d;
                ++n;
            }
    ASSERT_GT(n, 0u);
    EXPECT_NEAR(psnr_masked(a, b, mask), 10.0 * std::log10(static_cast<double>(n) / sq),
                1e-9);
}

TEST(PsnrMasked, EmptyMaskThrows) {
    const Image a(8, 8), b(8, 8);
    const std::vector<std::uint8_t> mask(a.plane(), 0);
    EXPECT_THROW(psnr_masked(a, b, mask), DimensionError);
}

TEST(PsnrMasked, WrongMaskSizeThrows) {
    const Image a(8, 8), b(8, 8);
    const std::vector<std::uint8_t> mask(10, 1);
    EXPECT_THROW(psnr_masked(a, b, mask), DimensionError);
}

TEST(Ssim, SelfSimilarityIsExactlyOne) {
    Rng rng(substream(16, "metrics"));
    const Image a = random_image(20, 15, rng);
    EXPECT_EQ(ssim(a, a), 1.0);
}

TEST(Ssim, Symmetric) {
    Rng rng(substream(17, "metrics"));
    const Image a = random_image(18, 14, rng);
    const Image b = random_image(18, 14, rng);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
}

TEST(Ssim, InvertedImageScoresLow) {
    Rng rng(substream(18, "metrics"));
    const Image a = random_image(24, 24, rng);
    Image b = a;
    for (auto& p : b.pixels) p = 1.0 - p;
    EXPECT_LT(ssim(a, b), 0.5);
}

TEST(Ssim, MatchesWindowedOracle) {
    Rng rng(substream(19, "metrics"));
    for (int k = 0; k < 3; ++k) {
        const Image a = random_image(32, 32, rng);
        const Image b = random_image(32, 32, rng);
        EXPECT_NEAR(ssim(a, b), naive_ssim(a, b), 1e-6);
    }
}

TEST(Ssim, ImagesSmallerThanTheWindowThrow) {
    const Image a(10, 32), b(10, 32);
    EXPECT_THROW(ssim(a, b), ConfigError);
    const Image c(32, 10), d(32, 10);
    EXPECT_THROW(ssim(c, d), ConfigError);
}
