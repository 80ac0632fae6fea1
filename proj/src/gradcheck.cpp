#include "uniview/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "uniview/errors.hpp"

namespace uniview {

GradCheckResult grad_check(const std::function<TensorPtr()>& f,
                           const std::vector<TensorPtr>& params, double h,
                           std::int64_t max_entries_per_tensor) {
    for (const auto& p : params) {
        if (!p->requires_grad) throw ContractViolation("grad_check: parameter without grad");
        p->zero_grad();
    }
    auto loss = f();
    loss->backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        if (p->grad.size() != p->data.size())
            p->grad.assign(p->data.size(), 0.0);
        analytic.push_back(p->grad);
    }

    GradCheckResult res;
    NoGradGuard ng;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = *params[pi];
        const std::int64_t n = static_cast<std::int64_t>(p.data.size());
        const std::int64_t probes =
            max_entries_per_tensor < 1 ? n : std::min<std::int64_t>(n, max_entries_per_tensor);
        for (std::int64_t j = 0; j < probes; ++j) {
            const std::size_t i = static_cast<std::size_t>(j * n / probes);
            const double saved = p.data[i];
            p.data[i] = saved + h;
            const double up = f()->item();
            p.data[i] = saved - h;
            const double down = f()->item();
            p.data[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            if (!std::isfinite(numeric))
                throw NumericError("grad_check: non-finite finite-difference probe");
            const double a = analytic[pi][i];
            const double rel = std::fabs(a - numeric) / std::max(1.0, std::fabs(numeric));
            res.max_rel_err = std::max(res.max_rel_err, rel);
            ++res.checked;
        }
    }
    return res;
}

}  // namespace uniview
