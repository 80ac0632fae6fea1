#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "uniview/adapter.hpp"
#include "uniview/image.hpp"
#include "uniview/injection.hpp"
#include "uniview/optim.hpp"
#include "uniview/unet.hpp"

namespace uniview {

// One supervised example: condition view, retrieved/assigned reference view,
// and the six ground-truth target views on a single canvas.
struct TrainPair {
    std::string id;
    std::string category;
    Image cond;     // 32x32, view 1
    Image ref;      // 32x32
    Image targets;  // 96x64 canvas, views 2..7 tiled
};

// Backbone plus whatever the variant attaches to it. Sites hold pointers
// into this model's own net, so copies and moves rebind them; parameter
// tensors are shared between copies.
struct Model {
    UNet net;
    FrozenEncoder encoder;
    Variant variant = Variant::backbone_only;
    AdapterParams adapter;             // valid unless backbone_only
    std::vector<AttentionSite> sites;  // empty when backbone_only

    Model() = default;
    Model(const Model& other);
    Model& operator=(const Model& other);
    Model(Model&& other);
    Model& operator=(Model&& other);
    ~Model() = default;

    bool has_adapter() const { return variant != Variant::backbone_only; }

    static Model init(std::uint64_t seed, Variant v, const NoiseSchedule& schedule);

    // Everything the second training stage is allowed to move.
    std::vector<TensorPtr> adapter_trainables() const;
};

// Adapter signals for one (condition, reference) pair; empty signals when the
// model is backbone_only. Timestep-independent, so compute once per sample.
AdapterSignals compute_signals(const Model& m, const Image& I_c, const Image& I_ref);

// Predicted noise for a noisy canvas. `sig` may be null to run the bare
// backbone (or when the model has no adapter).
TensorPtr denoise(const Model& m, const TensorPtr& x_t, std::int64_t t, const Image& I_c,
                  const AdapterSignals* sig = nullptr);

// Ancestral sampling from pure noise, deterministic per seed. `I_ref` must be
// present when the model carries an adapter. Pixels are mapped back to [0,1]
// and clamped only at the very end.
// Same sampler with caller-supplied signals; pass null to run any model
// reference-free.
ViewGrid sample_with_signals(const Model& m, const Image& I_c, const AdapterSignals* sig,
                             std::int64_t steps, std::uint64_t seed);

ViewGrid sample(const Model& m, const Image& I_c, const Image* I_ref, std::int64_t steps,
                std::uint64_t seed);

// One optimization step on a random timestep and noise draw; returns the
// loss. The optimizer's parameter list is the trainable set. A positive
// clip_norm bounds the global gradient norm before the update.
double train_step(Model& m, const TrainPair& pair, Adam& opt, Rng& rng,
                  double clip_norm = 0.0);

}  // namespace uniview
