#include "uniview/schedule.hpp"

#include <cmath>

#include "uniview/errors.hpp"

namespace uniview {

NoiseSchedule make_schedule(std::int64_t T, double beta_start, double beta_end) {
    if (T < 2) throw ConfigError("noise schedule needs T >= 2");
    if (beta_start <= 0.0 || beta_end < beta_start || beta_end >= 1.0)
        throw ConfigError("noise schedule betas must satisfy 0 < start <= end < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(static_cast<std::size_t>(T));
    s.alpha_bar.resize(static_cast<std::size_t>(T));
    double prod = 1.0;
    for (std::int64_t t = 0; t < T; ++t) {
        const double frac = static_cast<double>(t) / static_cast<double>(T - 1);
        const double b = beta_start + (beta_end - beta_start) * frac;
        s.beta[static_cast<std::size_t>(t)] = b;
        prod *= 1.0 - b;
        s.alpha_bar[static_cast<std::size_t>(t)] = prod;
    }
    return s;
}

TensorPtr forward_noise(const TensorPtr& x0, std::int64_t t, const TensorPtr& eps,
                        const NoiseSchedule& s) {
    if (t < 0 || t >= s.T) throw DimensionError("forward_noise: timestep out of range");
    if (x0->shape != eps->shape)
        throw DimensionError("forward_noise: eps shape must match x0");
    const double ab = s.alpha_bar[static_cast<std::size_t>(t)];
    return add(mul_scalar(x0, std::sqrt(ab)), mul_scalar(eps, std::sqrt(1.0 - ab)));
}

}  // namespace uniview
