#include "uniview/params.hpp"

#include <cstring>

#include "uniview/errors.hpp"
#include "uniview/rng.hpp"

namespace uniview {

void ParamRegistry::add(const std::string& name, const TensorPtr& t) {
    if (!t) throw ContractViolation("registry: null parameter " + name);
    for (const auto& [n, _] : items)
        if (n == name) throw ContractViolation("registry: duplicate parameter " + name);
    items.emplace_back(name, t);
}

void ParamRegistry::add(const std::string& prefix, const LinearParams& p) {
    add(prefix + ".weight", p.weight);
    add(prefix + ".bias", p.bias);
}

void ParamRegistry::add(const std::string& prefix, const ZeroConv& zc) {
    add(prefix + ".kernel", zc.kernel);
    add(prefix + ".bias", zc.bias);
}

std::vector<TensorPtr> ParamRegistry::tensors() const {
    std::vector<TensorPtr> out;
    out.reserve(items.size());
    for (const auto& [_, t] : items) out.push_back(t);
    return out;
}

std::int64_t ParamRegistry::total_scalars() const {
    std::int64_t n = 0;
    for (const auto& [_, t] : items) n += t->size();
    return n;
}

void ParamRegistry::set_requires_grad(bool on) const {
    for (const auto& [_, t] : items) {
        t->requires_grad = on;
        if (!on) t->grad.clear();
    }
}

void ParamRegistry::zero_grads() const {
    for (const auto& [_, t] : items) t->zero_grad();
}

std::vector<float> to_f32(const Tensor& t) {
    std::vector<float> out(t.data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(t.data[i]);
    return out;
}

void from_f32(Tensor& t, const std::vector<float>& v) {
    if (v.size() != t.data.size())
        throw DimensionError("from_f32: parameter block length mismatch");
    for (std::size_t i = 0; i < v.size(); ++i) t.data[i] = static_cast<double>(v[i]);
}

std::uint64_t checksum_f32(const std::vector<std::pair<std::string, TensorPtr>>& items) {
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&h](const unsigned char* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    static_assert(sizeof(float) == 4);
    for (const auto& [_, t] : items) {
        for (double d : t->data) {
            const float f = static_cast<float>(d);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            unsigned char le[4] = {static_cast<unsigned char>(bits & 0xff),
                                   static_cast<unsigned char>((bits >> 8) & 0xff),
                                   static_cast<unsigned char>((bits >> 16) & 0xff),
                                   static_cast<unsigned char>((bits >> 24) & 0xff)};
            mix(le, 4);
        }
    }
    return h;
}

}  // namespace uniview
