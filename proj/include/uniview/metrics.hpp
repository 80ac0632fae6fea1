#pragma once

#include <cstdint>
#include <vector>

#include "uniview/image.hpp"

namespace uniview {

inline constexpr double kPsnrCap = 99.0;

// 10*log10(1/MSE) over all three channels, pixels in [0,1]; capped at 99 dB
// when MSE < 1e-10.
double psnr(const Image& a, const Image& b);

// Same, restricted to pixels where mask[y*w + x] != 0.
double psnr_masked(const Image& a, const Image& b, const std::vector<std::uint8_t>& mask);

// Mean local SSIM on the luminance channel: Gaussian window 11x11, sigma 1.5,
// C1 = 0.01^2, C2 = 0.03^2, valid padding.
double ssim(const Image& a, const Image& b);

}  // namespace uniview
