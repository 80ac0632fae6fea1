#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "uniview/rng.hpp"

namespace uniview {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major tensor with an optional gradient slot. Ops record a reverse-
// mode tape: each result keeps its parents alive and knows how to push its
// output gradient back into them.
struct Tensor : std::enable_shared_from_this<Tensor> {
    std::vector<std::int64_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // same length as data once touched, else empty
    bool requires_grad = false;

    std::vector<TensorPtr> parents;
    std::function<void(const Tensor&)> backprop;

    Tensor(std::vector<double> d, std::vector<std::int64_t> s, bool req_grad);

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    double item() const;

    void zero_grad();
    void accumulate_grad(const double* g, std::size_t n);

    // Reverse pass from a scalar root (grad seeded with 1).
    void backward();

    // Drops tape edges so a parameter tensor never pins its creation graph.
    void detach_() {
        parents.clear();
        backprop = nullptr;
    }
};

// Gradient recording is on by default; wrap inference in a NoGradGuard to skip
// building the tape (values are computed identically either way).
bool grad_enabled();
struct NoGradGuard {
    bool prev;
    NoGradGuard();
    ~NoGradGuard();
};

std::int64_t shape_size(const std::vector<std::int64_t>& shape);

// ---- creation -------------------------------------------------------------

TensorPtr make_tensor(std::vector<double> data, std::vector<std::int64_t> shape,
                      bool requires_grad = false);
TensorPtr zeros(const std::vector<std::int64_t>& shape, bool requires_grad = false);
TensorPtr full(const std::vector<std::int64_t>& shape, double value, bool requires_grad = false);
TensorPtr randn(Rng& rng, const std::vector<std::int64_t>& shape, double mean = 0.0,
                double stddev = 1.0, bool requires_grad = false);

// ---- elementwise ------------------------------------------------------------

TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr add_scalar(const TensorPtr& a, double c);
TensorPtr mul_scalar(const TensorPtr& a, double c);
TensorPtr silu(const TensorPtr& a);

// ---- reductions -------------------------------------------------------------

TensorPtr sum_all(const TensorPtr& a);
TensorPtr mean_all(const TensorPtr& a);
TensorPtr mse_loss(const TensorPtr& a, const TensorPtr& b);

// ---- linear algebra ---------------------------------------------------------

// [m x k] . [k x n] -> [m x n]
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
// [m x k] . [n x k]^T -> [m x n]
TensorPtr matmul_nt(const TensorPtr& a, const TensorPtr& b);

// Numerically stabilized softmax along `axis` (max subtraction per slice).
TensorPtr softmax(const TensorPtr& x, int axis);

// Softmax(Q K^T / sqrt(d)) V. Q:[n_q x d], K:[n_k x d], V:[n_k x d_v].
TensorPtr scaled_dot_attention(const TensorPtr& q, const TensorPtr& k, const TensorPtr& v,
                               std::int64_t d);

// Per-row normalization over the last axis, then gain/shift.
TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gain, const TensorPtr& shift,
                     double eps = 1e-5);

// ---- convolution / image layout ---------------------------------------------

// x:[C_in,H,W], kernel:[C_out,C_in,kh,kw], bias:[C_out].
TensorPtr conv2d(const TensorPtr& x, const TensorPtr& kernel, const TensorPtr& bias,
                 std::int64_t stride, std::int64_t pad);

// 1x1 convolution applied to a token sequence [n x C_in] (treated as a
// 1-wide image). kernel:[C_out,C_in,1,1], bias:[C_out].
TensorPtr conv1x1_tokens(const TensorPtr& x, const TensorPtr& kernel, const TensorPtr& bias);

TensorPtr upsample_nearest2(const TensorPtr& x);             // [C,H,W] -> [C,2H,2W]
TensorPtr concat_channels(const TensorPtr& a, const TensorPtr& b);
TensorPtr add_channel_bias(const TensorPtr& x, const TensorPtr& bias);  // bias:[C]

TensorPtr to_tokens(const TensorPtr& x);                     // [C,H,W] -> [H*W x C]
TensorPtr from_tokens(const TensorPtr& t, std::int64_t c, std::int64_t h, std::int64_t w);

// ---- token-sequence helpers ---------------------------------------------------

TensorPtr concat_rows(const TensorPtr& a, const TensorPtr& b);
TensorPtr slice_rows(const TensorPtr& x, std::int64_t begin, std::int64_t end);
TensorPtr mean_rows(const TensorPtr& x);                     // [n x d] -> [1 x d]
TensorPtr add_row_broadcast(const TensorPtr& x, const TensorPtr& row);  // row:[1 x d]

// ---- misc ---------------------------------------------------------------------

void check_finite(const Tensor& t, const char* what);

}  // namespace uniview
