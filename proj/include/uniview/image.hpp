#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uniview/tensor.hpp"

namespace uniview {

// RGB raster, planar channel layout, values in [0,1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;  // [3][height][width]

    Image() = default;
    Image(int w, int h, double fill = 0.0);

    double& at(int c, int y, int x);
    double at(int c, int y, int x) const;
    std::size_t plane() const { return static_cast<std::size_t>(width) * height; }
};

TensorPtr tensor_from_image(const Image& img, bool requires_grad = false);
Image image_from_tensor(const Tensor& t);  // expects [3,H,W]

// 8-bit PNG, no interlacing. Writing always emits truecolor; reading accepts
// grayscale, truecolor, and truecolor+alpha (alpha dropped).
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

// Round trip through the 8-bit quantizer used on disk.
Image quantized(const Image& img);

}  // namespace uniview
