#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "uniview/image.hpp"
#include "uniview/nn.hpp"
#include "uniview/params.hpp"
#include "uniview/tensor.hpp"

namespace uniview {

inline constexpr std::int64_t kEncDim = 64;   // d_enc
inline constexpr std::int64_t kNumTokens = 16;  // 4x4 spatial tokens
inline constexpr std::uint64_t kEncoderSeed = 0xC0FFEE;

enum class Variant {
    backbone_only,
    base_adapter_only,
    plus_meta_controller,
    complete,
};

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

// Fixed-seed conv stack standing in for a pretrained image encoder. Never
// trained, bit-identical in every process.
struct FrozenEncoder {
    TensorPtr k1, b1;  // 3 -> 16, stride 2
    TensorPtr k2, b2;  // 16 -> 32, stride 2
    TensorPtr k3, b3;  // 32 -> 64, stride 2
    ParamRegistry registry;

    static FrozenEncoder make();
    std::uint64_t checksum() const { return checksum_f32(registry.items); }
};

// 32x32 image -> [16 x 64] tokens.
TensorPtr encode(const Image& img, const FrozenEncoder& enc);

// Both adapter branches plus the five zero-convolution gates. Which pieces
// exist depends on the ablation variant; theta and theta_prime never share a
// tensor.
struct AdapterParams {
    Variant variant = Variant::complete;

    // theta: Base-Adapter
    LinearParams base_fc1, base_fc2;
    TensorPtr base_ln_gain, base_ln_shift;
    ZeroConv zc_in_base, zc_pre_attn_base;

    // theta': Meta-Controller
    TensorPtr stream_emb;  // [2 x d_enc], marks which stream a token came from
    LinearParams meta_fc;
    TensorPtr meta_ln_gain, meta_ln_shift;
    LinearParams head1, head2;
    ZeroConv zc_in_meta, zc_bridge, zc_pre_attn_meta;

    ParamRegistry theta;
    ParamRegistry theta_prime;
    ParamRegistry all;

    static AdapterParams init(std::uint64_t seed, Variant v);

    bool has_meta() const {
        return variant == Variant::complete || variant == Variant::plus_meta_controller;
    }
    bool has_zero_convs() const { return variant == Variant::complete; }
    bool zero_convs_are_zero() const;
};

struct AdapterSignals {
    TensorPtr y_base;   // [16 x 64], gated when zero convs are active
    TensorPtr y_meta2;  // [16 x 64] or null when the Meta-Controller is absent
    TensorPtr y_meta1;  // [32 x 64] internal bridge branch, null without meta
};

// (y_meta1, y_meta2) from the Meta-Controller trunk over both image streams.
std::pair<TensorPtr, TensorPtr> meta_controller_forward(const Image& I_c, const Image& I_ref,
                                                        const AdapterParams& p,
                                                        const FrozenEncoder& enc);

// y_base from the reference stream plus the pooled bridge contribution.
// y_meta1 may be null (no Meta-Controller attached).
TensorPtr base_adapter_forward(const Image& I_c, const TensorPtr& y_meta1,
                               const AdapterParams& p, const FrozenEncoder& enc,
                               const Image& I_ref);

// The signal pair handed to every injection site.
AdapterSignals meta_adapter_forward(const Image& I_c, const Image& I_ref,
                                    const AdapterParams& p, const FrozenEncoder& enc);

}  // namespace uniview
