#pragma once

#include <cstdint>
#include <string>

#include "uniview/pipeline.hpp"

namespace uniview {

// Text header (magic, seed, schedule length, variant, frozen state, tensor
// shapes) followed by raw little-endian float32 blocks in registry order;
// models with an adapter append a second header+block section.
void save_model(const std::string& path, const Model& m);

Model load_model(const std::string& path);

// Fresh adapter and injection sites with their own seed on top of an existing
// backbone (weights copied, frozen state preserved).
Model upgrade_variant(const Model& backbone, Variant v, std::uint64_t adapter_seed);

}  // namespace uniview
