#pragma once

#include <cstdint>
#include <vector>

#include "uniview/tensor.hpp"

namespace uniview {

// Adam over a fixed parameter list. Stepping a tensor that lost its trainable
// flag is a hard error: frozen parameters must never receive an update.
struct Adam {
    double lr;
    double beta1;
    double beta2;
    double eps;

    explicit Adam(std::vector<TensorPtr> params, double lr = 1e-3, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8);

    void step();
    void zero_grads();
    const std::vector<TensorPtr>& params() const { return params_; }

  private:
    std::vector<TensorPtr> params_;
    std::vector<std::vector<double>> m_, v_;
    std::int64_t t_ = 0;
};

// Scales every gradient so the global L2 norm is at most max_norm; returns
// the norm before scaling. max_norm must be positive.
double clip_grad_norm(const std::vector<TensorPtr>& params, double max_norm);

}  // namespace uniview
