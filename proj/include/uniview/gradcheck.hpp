#pragma once

#include <functional>
#include <vector>

#include "uniview/tensor.hpp"

namespace uniview {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::int64_t checked = 0;
    bool ok(double tol = 1e-4) const { return checked > 0 && max_rel_err < tol; }
};

// Central finite differences against the recorded tape. `f` must rebuild its
// graph from the current parameter values on every call and return a scalar.
// `max_entries_per_tensor` < 1 checks every entry; otherwise that many evenly
// spaced entries per tensor are probed.
GradCheckResult grad_check(const std::function<TensorPtr()>& f,
                           const std::vector<TensorPtr>& params, double h = 1e-5,
                           std::int64_t max_entries_per_tensor = -1);

}  // namespace uniview
