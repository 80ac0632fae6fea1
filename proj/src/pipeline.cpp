#include "uniview/pipeline.hpp"

#include <algorithm>

#include "uniview/errors.hpp"
#include "uniview/schedule.hpp"

namespace uniview {

namespace {

// Sites carry raw pointers into the owning model's net; after the net has
// been copied or moved they must aim at the destination's blocks.
void rebind_sites(std::vector<AttentionSite>& sites, const UNet& net) {
    for (auto& s : sites) {
        if (s.site_id == "mid") {
            s.block = &net.mid_attn;
            continue;
        }
        const AttnBlock* found = nullptr;
        for (const auto& d : net.down) {
            if (d.site_id == s.site_id) {
                found = &d.attn;
                break;
            }
        }
        if (!found) throw ContractViolation("model: unknown site id " + s.site_id);
        s.block = found;
    }
}

}  // namespace

Model::Model(const Model& other)
    : net(other.net),
      encoder(other.encoder),
      variant(other.variant),
      adapter(other.adapter),
      sites(other.sites) {
    rebind_sites(sites, net);
}

Model& Model::operator=(const Model& other) {
    if (this == &other) return *this;
    net = other.net;
    encoder = other.encoder;
    variant = other.variant;
    adapter = other.adapter;
    sites = other.sites;
    rebind_sites(sites, net);
    return *this;
}

Model::Model(Model&& other)
    : net(std::move(other.net)),
      encoder(std::move(other.encoder)),
      variant(other.variant),
      adapter(std::move(other.adapter)),
      sites(std::move(other.sites)) {
    rebind_sites(sites, net);
}

Model& Model::operator=(Model&& other) {
    if (this == &other) return *this;
    net = std::move(other.net);
    encoder = std::move(other.encoder);
    variant = other.variant;
    adapter = std::move(other.adapter);
    sites = std::move(other.sites);
    rebind_sites(sites, net);
    return *this;
}

Model Model::init(std::uint64_t seed, Variant v, const NoiseSchedule& schedule) {
    Model m;
    m.net = UNet::init(seed, schedule);
    m.encoder = FrozenEncoder::make();
    m.variant = v;
    if (v != Variant::backbone_only) {
        m.adapter = AdapterParams::init(seed, v);
        m.sites = install_sites(m.net, seed, v);
    }
    return m;
}

std::vector<TensorPtr> Model::adapter_trainables() const {
    if (!has_adapter()) return {};
    std::vector<TensorPtr> out;
    for (const auto& [_, t] : adapter.all.items) out.push_back(t);
    for (const auto& [_, t] : sites_registry(sites).items) out.push_back(t);
    return out;
}

AdapterSignals compute_signals(const Model& m, const Image& I_c, const Image& I_ref) {
    if (!m.has_adapter()) return {};
    return meta_adapter_forward(I_c, I_ref, m.adapter, m.encoder);
}

namespace {

TensorPtr to_signed(const TensorPtr& unit) {
    return add_scalar(mul_scalar(unit, 2.0), -1.0);
}

}  // namespace

TensorPtr denoise(const Model& m, const TensorPtr& x_t, std::int64_t t, const Image& I_c,
                  const AdapterSignals* sig) {
    auto cond = to_signed(tile_condition(I_c));
    AttnFeatureFn inject = nullptr;
    if (sig && (sig->y_base || sig->y_meta2)) {
        if (!m.has_adapter())
            throw ContractViolation("denoise: signals supplied without installed sites");
        inject = make_injector(m.sites, *sig);
    }
    return m.net.forward(x_t, t, cond, inject);
}

ViewGrid sample_with_signals(const Model& m, const Image& I_c, const AdapterSignals* sig_ptr,
                             std::int64_t steps, std::uint64_t seed) {
    NoGradGuard ng;
    Rng rng = substream(seed, "sampling");
    auto x = randn(rng, {3, kCanvasH, kCanvasW});
    const auto order = sampling_indices(m.net.schedule.T, steps);
    for (std::size_t i = 0; i < order.size(); ++i) {
        const std::int64_t t_cur = order[i];
        const std::int64_t t_prev = i + 1 < order.size() ? order[i + 1] : -1;
        auto eps_hat = denoise(m, x, t_cur, I_c, sig_ptr);
        TensorPtr z = t_prev >= 0 ? randn(rng, {3, kCanvasH, kCanvasW}) : nullptr;
        x = posterior_step(x, eps_hat, t_cur, t_prev, m.net.schedule, z);
    }
    check_finite(*x, "sample output");

    // Back to [0,1] pixels; the only clamp in the whole chain.
    std::vector<double> out(x->data.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::clamp((x->data[i] + 1.0) * 0.5, 0.0, 1.0);
    return ViewGrid(make_tensor(std::move(out), {3, kCanvasH, kCanvasW}));
}

ViewGrid sample(const Model& m, const Image& I_c, const Image* I_ref, std::int64_t steps,
                std::uint64_t seed) {
    if (m.has_adapter() && !I_ref)
        throw ContractViolation("sample: adapter model needs a reference image");
    AdapterSignals sig;
    if (m.has_adapter()) {
        NoGradGuard ng;
        sig = compute_signals(m, I_c, *I_ref);
    }
    return sample_with_signals(m, I_c, m.has_adapter() ? &sig : nullptr, steps, seed);
}

double train_step(Model& m, const TrainPair& pair, Adam& opt, Rng& rng, double clip_norm) {
    const NoiseSchedule& s = m.net.schedule;
    if (pair.targets.width != kCanvasW || pair.targets.height != kCanvasH)
        throw DimensionError("train_step: target canvas must be 96x64");

    const std::int64_t t = rng.uniform_int(0, s.T);
    auto eps = randn(rng, {3, kCanvasH, kCanvasW});
    auto x0 = to_signed(tensor_from_image(pair.targets));
    auto x_t = forward_noise(x0, t, eps, s);

    opt.zero_grads();
    AdapterSignals sig;
    const AdapterSignals* sig_ptr = nullptr;
    if (m.has_adapter()) {
        sig = compute_signals(m, pair.cond, pair.ref);
        sig_ptr = &sig;
    }
    auto loss = mse_loss(denoise(m, x_t, t, pair.cond, sig_ptr), eps);
    if (!loss->requires_grad)
        throw ContractViolation("train_step: loss has no trainable dependencies");
    loss->backward();
    if (clip_norm > 0.0) clip_grad_norm(opt.params(), clip_norm);
    opt.step();
    return loss->item();
}

}  // namespace uniview
