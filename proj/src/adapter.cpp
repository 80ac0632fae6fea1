#include "uniview/adapter.hpp"

#include <cmath>

#include "uniview/errors.hpp"
#include "uniview/rng.hpp"

namespace uniview {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::backbone_only: return "backbone_only";
        case Variant::base_adapter_only: return "base_adapter_only";
        case Variant::plus_meta_controller: return "plus_meta_controller";
        case Variant::complete: return "complete";
    }
    throw ConfigError("unknown variant value");
}

Variant variant_from_string(const std::string& s) {
    if (s == "backbone_only") return Variant::backbone_only;
    if (s == "base_adapter_only") return Variant::base_adapter_only;
    if (s == "plus_meta_controller") return Variant::plus_meta_controller;
    if (s == "complete") return Variant::complete;
    throw ConfigError("unknown variant: " + s);
}

FrozenEncoder FrozenEncoder::make() {
    FrozenEncoder enc;
    Rng rng = substream(kEncoderSeed, "frozen-encoder");
    auto kern = [&](std::int64_t co, std::int64_t ci) {
        return randn(rng, {co, ci, 3, 3}, 0.0, std::sqrt(2.0 / static_cast<double>(ci * 9)));
    };
    enc.k1 = kern(16, 3);
    enc.b1 = zeros({16});
    enc.k2 = kern(32, 16);
    enc.b2 = zeros({32});
    enc.k3 = kern(kEncDim, 32);
    enc.b3 = zeros({kEncDim});
    enc.registry.add("enc.conv1.kernel", enc.k1);
    enc.registry.add("enc.conv1.bias", enc.b1);
    enc.registry.add("enc.conv2.kernel", enc.k2);
    enc.registry.add("enc.conv2.bias", enc.b2);
    enc.registry.add("enc.conv3.kernel", enc.k3);
    enc.registry.add("enc.conv3.bias", enc.b3);
    return enc;
}

TensorPtr encode(const Image& img, const FrozenEncoder& enc) {
    if (img.width != 32 || img.height != 32)
        throw DimensionError("encode: expects a 32x32 image");
    auto x = add_scalar(mul_scalar(tensor_from_image(img), 2.0), -1.0);
    auto h = silu(conv2d(x, enc.k1, enc.b1, 2, 1));
    h = silu(conv2d(h, enc.k2, enc.b2, 2, 1));
    h = conv2d(h, enc.k3, enc.b3, 2, 1);  // [64, 4, 4]
    return to_tokens(h);                   // [16, 64]
}

bool AdapterParams::zero_convs_are_zero() const {
    if (!has_zero_convs()) return true;
    return zc_in_base.is_zero() && zc_pre_attn_base.is_zero() && zc_in_meta.is_zero() &&
           zc_bridge.is_zero() && zc_pre_attn_meta.is_zero();
}

AdapterParams AdapterParams::init(std::uint64_t seed, Variant v) {
    if (v == Variant::backbone_only)
        throw ConfigError("backbone_only variant carries no adapter parameters");
    AdapterParams p;
    p.variant = v;
    Rng rng = substream(seed, "adapter-init");
    const double sd = std::sqrt(1.0 / static_cast<double>(kEncDim));

    p.base_fc1 = LinearParams(kEncDim, kEncDim, rng, sd);
    p.base_ln_gain = full({kEncDim}, 1.0, true);
    p.base_ln_shift = zeros({kEncDim}, true);
    p.base_fc2 = LinearParams(kEncDim, kEncDim, rng, sd);
    p.theta.add("base.fc1", p.base_fc1);
    p.theta.add("base.ln.gain", p.base_ln_gain);
    p.theta.add("base.ln.shift", p.base_ln_shift);
    p.theta.add("base.fc2", p.base_fc2);
    if (p.has_zero_convs()) {
        p.zc_in_base = ZeroConv(kEncDim, kEncDim, 1);
        p.zc_pre_attn_base = ZeroConv(kEncDim, kEncDim, 1);
        p.theta.add("base.zc_in", p.zc_in_base);
        p.theta.add("base.zc_pre_attn", p.zc_pre_attn_base);
    }

    if (p.has_meta()) {
        p.stream_emb = randn(rng, {2, kEncDim}, 0.0, sd, true);
        p.meta_fc = LinearParams(kEncDim, kEncDim, rng, sd);
        p.meta_ln_gain = full({kEncDim}, 1.0, true);
        p.meta_ln_shift = zeros({kEncDim}, true);
        p.head1 = LinearParams(kEncDim, kEncDim, rng, sd);
        p.head2 = LinearParams(kEncDim, kEncDim, rng, sd);
        p.theta_prime.add("meta.stream_emb", p.stream_emb);
        p.theta_prime.add("meta.fc", p.meta_fc);
        p.theta_prime.add("meta.ln.gain", p.meta_ln_gain);
        p.theta_prime.add("meta.ln.shift", p.meta_ln_shift);
        p.theta_prime.add("meta.head1", p.head1);
        p.theta_prime.add("meta.head2", p.head2);
        if (p.has_zero_convs()) {
            p.zc_in_meta = ZeroConv(kEncDim, kEncDim, 1);
            p.zc_bridge = ZeroConv(kEncDim, kEncDim, 1);
            p.zc_pre_attn_meta = ZeroConv(kEncDim, kEncDim, 1);
            p.theta_prime.add("meta.zc_in", p.zc_in_meta);
            p.theta_prime.add("meta.zc_bridge", p.zc_bridge);
            p.theta_prime.add("meta.zc_pre_attn", p.zc_pre_attn_meta);
        }
    }

    for (const auto& [name, t] : p.theta.items) p.all.add(name, t);
    for (const auto& [name, t] : p.theta_prime.items) p.all.add(name, t);
    return p;
}

std::pair<TensorPtr, TensorPtr> meta_controller_forward(const Image& I_c, const Image& I_ref,
                                                        const AdapterParams& p,
                                                        const FrozenEncoder& enc) {
    if (!p.has_meta())
        throw ContractViolation("meta_controller_forward: variant has no Meta-Controller");
    auto e_c = encode(I_c, enc);
    auto e_r = encode(I_ref, enc);
    if (p.has_zero_convs()) {
        e_c = apply_tokens(e_c, p.zc_in_meta);
        e_r = apply_tokens(e_r, p.zc_in_meta);
    }
    e_c = add_row_broadcast(e_c, slice_rows(p.stream_emb, 0, 1));
    e_r = add_row_broadcast(e_r, slice_rows(p.stream_emb, 1, 2));
    auto cat = concat_rows(e_c, e_r);  // [32, 64]

    auto h = linear(cat, p.meta_fc);
    h = layer_norm(h, p.meta_ln_gain, p.meta_ln_shift);
    h = silu(h);

    auto y_meta1 = linear(h, p.head1);  // [32, 64]
    auto fused = add(slice_rows(h, 0, kNumTokens), slice_rows(h, kNumTokens, 2 * kNumTokens));
    auto y_meta2 = linear(fused, p.head2);  // [16, 64]
    return {y_meta1, y_meta2};
}

TensorPtr base_adapter_forward(const Image& /*I_c*/, const TensorPtr& y_meta1,
                               const AdapterParams& p, const FrozenEncoder& enc,
                               const Image& I_ref) {
    auto x = encode(I_ref, enc);
    if (p.has_zero_convs()) x = apply_tokens(x, p.zc_in_base);
    if (y_meta1) {
        if (y_meta1->shape != std::vector<std::int64_t>{2 * kNumTokens, kEncDim})
            throw DimensionError("base_adapter_forward: y_meta1 must be [32 x 64]");
        auto pooled = mean_rows(y_meta1);  // [1, 64]
        if (p.has_zero_convs()) pooled = apply_tokens(pooled, p.zc_bridge);
        x = add_row_broadcast(x, pooled);
    }
    auto h = linear(x, p.base_fc1);
    h = layer_norm(h, p.base_ln_gain, p.base_ln_shift);
    h = silu(h);
    return linear(h, p.base_fc2);  // [16, 64]
}

AdapterSignals meta_adapter_forward(const Image& I_c, const Image& I_ref,
                                    const AdapterParams& p, const FrozenEncoder& enc) {
    AdapterSignals sig;
    if (p.has_meta()) {
        auto [y1, y2] = meta_controller_forward(I_c, I_ref, p, enc);
        sig.y_meta1 = y1;
        sig.y_meta2 = y2;
    }
    sig.y_base = base_adapter_forward(I_c, sig.y_meta1, p, enc, I_ref);
    if (p.has_zero_convs()) {
        sig.y_base = apply_tokens(sig.y_base, p.zc_pre_attn_base);
        sig.y_meta2 = apply_tokens(sig.y_meta2, p.zc_pre_attn_meta);
    }
    return sig;
}

}  // namespace uniview
