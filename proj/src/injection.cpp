#include "uniview/injection.hpp"

#include "uniview/errors.hpp"
#include "uniview/rng.hpp"

namespace uniview {

TensorPtr triple_attention(const TensorPtr& f_base, const TensorPtr& y_base,
                           const TensorPtr& y_meta2, const AttentionSite& site) {
    if (!site.block) throw ContractViolation("triple_attention: site not installed");
    const AttnBlock& b = *site.block;
    auto q = linear(f_base, b.wq);
    auto z = scaled_dot_attention(q, linear(f_base, b.wk), linear(f_base, b.wv), kAttnDim);
    if (y_base)
        z = add(z, scaled_dot_attention(q, linear(y_base, site.wpk),
                                        linear(y_base, site.wpv), kAttnDim));
    if (y_meta2) {
        if (!site.has_meta_branch)
            throw ContractViolation("triple_attention: site has no meta branch");
        z = add(z, scaled_dot_attention(q, linear(y_meta2, site.wppk),
                                        linear(y_meta2, site.wppv), kAttnDim));
    }
    return z;
}

std::vector<AttentionSite> install_sites(const UNet& net, std::uint64_t seed, Variant v) {
    if (v == Variant::backbone_only)
        throw ConfigError("install_sites: backbone_only has no injection sites");
    const bool meta = v == Variant::complete || v == Variant::plus_meta_controller;
    Rng rng = substream(seed, "site-init");
    std::vector<AttentionSite> sites;
    sites.reserve(5);
    auto add_site = [&](const std::string& id, const AttnBlock& blk) {
        AttentionSite s;
        s.site_id = id;
        s.block = &blk;
        s.wpk = LinearParams(kEncDim, kAttnDim, rng, kSiteInitStd);
        s.wpv = LinearParams(kEncDim, kAttnDim, rng, kSiteInitStd);
        if (meta) {
            s.wppk = LinearParams(kEncDim, kAttnDim, rng, kSiteInitStd);
            s.wppv = LinearParams(kEncDim, kAttnDim, rng, kSiteInitStd);
            s.has_meta_branch = true;
        }
        sites.push_back(std::move(s));
    };
    for (int i = 0; i < 4; ++i) {
        const DownBlock& d = net.down[static_cast<std::size_t>(i)];
        if (d.site_id != "down" + std::to_string(i + 1))
            throw ConfigError("install_sites: backbone down blocks are mislabeled");
        add_site(d.site_id, d.attn);
    }
    add_site("mid", net.mid_attn);
    return sites;
}

ParamRegistry sites_registry(const std::vector<AttentionSite>& sites) {
    ParamRegistry reg;
    for (const auto& s : sites) {
        reg.add("site." + s.site_id + ".wpk", s.wpk);
        reg.add("site." + s.site_id + ".wpv", s.wpv);
        if (s.has_meta_branch) {
            reg.add("site." + s.site_id + ".wppk", s.wppk);
            reg.add("site." + s.site_id + ".wppv", s.wppv);
        }
    }
    return reg;
}

AttnFeatureFn make_injector(const std::vector<AttentionSite>& sites,
                            const AdapterSignals& sig) {
    const std::vector<AttentionSite>* site_list = &sites;
    AdapterSignals signals = sig;
    return [site_list, signals](const std::string& site_id, const TensorPtr& f,
                                const AttnBlock& blk) -> TensorPtr {
        for (const auto& s : *site_list) {
            if (s.site_id != site_id) continue;
            if (s.block != &blk)
                throw ContractViolation("injector: site bound to a different block");
            return triple_attention(f, signals.y_base, signals.y_meta2, s);
        }
        return nullptr;
    };
}

}  // namespace uniview
