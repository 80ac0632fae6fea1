#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uniview/adapter.hpp"
#include "uniview/nn.hpp"
#include "uniview/params.hpp"
#include "uniview/unet.hpp"

namespace uniview {

inline constexpr double kSiteInitStd = 0.02;

// One injection point. Frozen projections belong to the backbone block; only
// the four K/V maps against the adapter signals are trainable.
struct AttentionSite {
    std::string site_id;
    const AttnBlock* block = nullptr;
    LinearParams wpk, wpv;    // against y_base
    LinearParams wppk, wppv;  // against y_meta2 (absent without Meta-Controller)
    bool has_meta_branch = false;
};

// Z + Z' + Z''. Shared query from the frozen W_q; null signals drop their
// branch.
TensorPtr triple_attention(const TensorPtr& f_base, const TensorPtr& y_base,
                           const TensorPtr& y_meta2, const AttentionSite& site);

// Builds the five sites (down1..down4, mid). Up blocks are left alone.
std::vector<AttentionSite> install_sites(const UNet& net, std::uint64_t seed, Variant v);

// Trainable site parameters in declaration order.
ParamRegistry sites_registry(const std::vector<AttentionSite>& sites);

// Hook for UNet::forward that swaps the attention feature at the five sites.
AttnFeatureFn make_injector(const std::vector<AttentionSite>& sites,
                            const AdapterSignals& sig);

}  // namespace uniview
