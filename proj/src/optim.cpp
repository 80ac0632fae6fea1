#include "uniview/optim.hpp"

#include <cmath>

#include "uniview/errors.hpp"

namespace uniview {

Adam::Adam(std::vector<TensorPtr> params, double lr, double beta1, double beta2, double eps)
    : lr(lr), beta1(beta1), beta2(beta2), eps(eps), params_(std::move(params)) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        if (!p) throw ContractViolation("Adam: null parameter");
        m_.emplace_back(p->data.size(), 0.0);
        v_.emplace_back(p->data.size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        Tensor& p = *params_[pi];
        if (!p.requires_grad)
            throw ContractViolation("Adam: attempted update of a frozen parameter");
        if (p.grad.empty()) continue;
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            const double g = p.grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            const double mh = m[i] / bc1;
            const double vh = v[i] / bc2;
            p.data[i] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
}

void Adam::zero_grads() {
    for (const auto& p : params_) p->zero_grad();
}

double clip_grad_norm(const std::vector<TensorPtr>& params, double max_norm) {
    if (max_norm <= 0.0) throw ConfigError("clip_grad_norm: max_norm must be positive");
    double sq = 0.0;
    for (const auto& p : params) {
        if (!p || p->grad.empty()) continue;
        for (double g : p->grad) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (const auto& p : params) {
            if (!p || p->grad.empty()) continue;
            for (double& g : p->grad) g *= scale;
        }
    }
    return norm;
}

}  // namespace uniview
