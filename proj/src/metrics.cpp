#include "uniview/metrics.hpp"

#include <cmath>

#include "uniview/errors.hpp"

namespace uniview {

namespace {

void check_same_shape(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw DimensionError("metric inputs differ in shape");
    if (a.width <= 0 || a.height <= 0) throw DimensionError("metric inputs are empty");
}

double mse_to_db(double mse) {
    if (mse < 1e-10) return kPsnrCap;
    return 10.0 * std::log10(1.0 / mse);
}

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussian_window() {
    std::vector<double> w(kWin * kWin);
    const int r = kWin / 2;
    double total = 0.0;
    for (int y = 0; y < kWin; ++y)
        for (int x = 0; x < kWin; ++x) {
            const double dy = y - r, dx = x - r;
            const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
            w[static_cast<std::size_t>(y * kWin + x)] = g;
            total += g;
        }
    for (auto& v : w) v /= total;
    return w;
}

std::vector<double> luminance(const Image& img) {
    std::vector<double> y(static_cast<std::size_t>(img.width) * img.height);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            y[static_cast<std::size_t>(r) * img.width + c] =
                0.299 * img.at(0, r, c) + 0.587 * img.at(1, r, c) + 0.114 * img.at(2, r, c);
    return y;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
    check_same_shape(a, b);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = a.pixels[i] - b.pixels[i];
        sum += d * d;
    }
    return mse_to_db(sum / static_cast<double>(a.pixels.size()));
}

double psnr_masked(const Image& a, const Image& b, const std::vector<std::uint8_t>& mask) {
    check_same_shape(a, b);
    if (mask.size() != static_cast<std::size_t>(a.width) * a.height)
        throw DimensionError("mask size does not match the image");
    double sum = 0.0;
    std::size_t count = 0;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            if (mask[static_cast<std::size_t>(y) * a.width + x] == 0) continue;
            for (int c = 0; c < 3; ++c) {
                const double d = a.at(c, y, x) - b.at(c, y, x);
                sum += d * d;
            }
            ++count;
        }
    if (count == 0) throw DimensionError("psnr_masked: empty mask");
    return mse_to_db(sum / static_cast<double>(3 * count));
}

double ssim(const Image& a, const Image& b) {
    check_same_shape(a, b);
    if (a.width < kWin || a.height < kWin)
        throw ConfigError("ssim: image smaller than the 11x11 window");

    static const std::vector<double> win = gaussian_window();
    const std::vector<double> ya = luminance(a);
    const std::vector<double> yb = luminance(b);

    const int out_h = a.height - kWin + 1;
    const int out_w = a.width - kWin + 1;
    double total = 0.0;
    for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox) {
            double mu_a = 0.0, mu_b = 0.0, aa = 0.0, bb = 0.0, ab = 0.0;
            for (int wy = 0; wy < kWin; ++wy)
                for (int wx = 0; wx < kWin; ++wx) {
                    const double w = win[static_cast<std::size_t>(wy * kWin + wx)];
                    const double pa =
                        ya[static_cast<std::size_t>(oy + wy) * a.width + (ox + wx)];
                    const double pb =
                        yb[static_cast<std::size_t>(oy + wy) * a.width + (ox + wx)];
                    mu_a += w * pa;
                    mu_b += w * pb;
                    aa += w * pa * pa;
                    bb += w * pb * pb;
                    ab += w * pa * pb;
                }
            const double var_a = aa - mu_a * mu_a;
            const double var_b = bb - mu_b * mu_b;
            const double cov = ab - mu_a * mu_b;
            const double num = (2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2);
            const double den = (mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2);
            total += num / den;
        }
    return total / static_cast<double>(out_h * out_w);
}

}  // namespace uniview
