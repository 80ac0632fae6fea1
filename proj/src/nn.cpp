#include "uniview/nn.hpp"

#include "uniview/errors.hpp"

namespace uniview {

LinearParams::LinearParams(std::int64_t d_in, std::int64_t d_out, Rng& rng, double stddev,
                           bool requires_grad) {
    weight = randn(rng, {d_in, d_out}, 0.0, stddev, requires_grad);
    bias = zeros({1, d_out}, requires_grad);
}

TensorPtr linear(const TensorPtr& x, const LinearParams& p) {
    if (x->shape.empty() || x->shape.back() != p.weight->shape[0])
        throw DimensionError("linear: input width does not match weight");
    return add_row_broadcast(matmul(x, p.weight), p.bias);
}

ZeroConv::ZeroConv(std::int64_t c_in, std::int64_t c_out, std::int64_t ksize,
                   bool requires_grad) {
    if (ksize % 2 == 0) throw DimensionError("ZeroConv: kernel size must be odd");
    kernel = zeros({c_out, c_in, ksize, ksize}, requires_grad);
    bias = zeros({c_out}, requires_grad);
    initialized_zero = true;
}

bool ZeroConv::is_zero() const {
    for (double v : kernel->data)
        if (v != 0.0) return false;
    for (double v : bias->data)
        if (v != 0.0) return false;
    return true;
}

TensorPtr conv2d(const TensorPtr& x, const ZeroConv& zc) {
    const std::int64_t k = zc.kernel->shape[2];
    return conv2d(x, zc.kernel, zc.bias, 1, (k - 1) / 2);
}

TensorPtr apply_tokens(const TensorPtr& tokens, const ZeroConv& zc) {
    if (zc.kernel->shape[2] != 1 || zc.kernel->shape[3] != 1)
        throw DimensionError("apply_tokens: token sequences take a 1x1 kernel");
    return conv1x1_tokens(tokens, zc.kernel, zc.bias);
}

}  // namespace uniview
