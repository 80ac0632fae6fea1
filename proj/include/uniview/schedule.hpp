#pragma once

#include <cstdint>
#include <vector>

#include "uniview/tensor.hpp"

namespace uniview {

struct NoiseSchedule {
    std::int64_t T = 0;
    std::vector<double> beta;
    std::vector<double> alpha_bar;
};

// Linear beta ramp; alpha_bar[t] is the running product of (1 - beta).
NoiseSchedule make_schedule(std::int64_t T = 200, double beta_start = 1e-4,
                            double beta_end = 0.02);

// sqrt(alpha_bar[t]) * x0 + sqrt(1 - alpha_bar[t]) * eps
TensorPtr forward_noise(const TensorPtr& x0, std::int64_t t, const TensorPtr& eps,
                        const NoiseSchedule& s);

}  // namespace uniview
