#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "uniview/nn.hpp"
#include "uniview/tensor.hpp"

namespace uniview {

// Declaration-ordered named parameter list. Checkpoint layout and the frozen
// checksum both follow this order, so registration order is part of the file
// format.
struct ParamRegistry {
    std::vector<std::pair<std::string, TensorPtr>> items;

    void add(const std::string& name, const TensorPtr& t);
    void add(const std::string& prefix, const LinearParams& p);
    void add(const std::string& prefix, const ZeroConv& zc);

    std::vector<TensorPtr> tensors() const;
    std::int64_t total_scalars() const;
    void set_requires_grad(bool on) const;
    void zero_grads() const;
};

// FNV-1a over the little-endian float32 image of every tensor, in order.
std::uint64_t checksum_f32(const std::vector<std::pair<std::string, TensorPtr>>& items);

std::vector<float> to_f32(const Tensor& t);
void from_f32(Tensor& t, const std::vector<float>& v);

}  // namespace uniview
