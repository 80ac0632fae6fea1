#pragma once

#include <cstdint>

#include "uniview/tensor.hpp"

namespace uniview {

// Affine projection y = x . weight + bias, weight [d_in x d_out].
struct LinearParams {
    TensorPtr weight;
    TensorPtr bias;

    LinearParams() = default;
    LinearParams(std::int64_t d_in, std::int64_t d_out, Rng& rng, double stddev,
                 bool requires_grad = true);

    std::int64_t d_in() const { return weight->shape[0]; }
    std::int64_t d_out() const { return weight->shape[1]; }
};

TensorPtr linear(const TensorPtr& x, const LinearParams& p);

// Convolution whose kernel and bias start at exactly zero, so a freshly built
// layer is guaranteed to contribute nothing until training moves it.
struct ZeroConv {
    TensorPtr kernel;  // [C_out, C_in, kh, kw]
    TensorPtr bias;    // [C_out]
    bool initialized_zero = false;

    ZeroConv() = default;
    ZeroConv(std::int64_t c_in, std::int64_t c_out, std::int64_t ksize,
             bool requires_grad = true);

    bool is_zero() const;
};

// Spatial form: stride 1, same padding, [C,H,W] in and out.
TensorPtr conv2d(const TensorPtr& x, const ZeroConv& zc);
// Token form: per-token map on [n x C_in], requires a 1x1 kernel.
TensorPtr apply_tokens(const TensorPtr& tokens, const ZeroConv& zc);

}  // namespace uniview
