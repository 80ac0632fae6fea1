#include "uniview/unet.hpp"

#include <cmath>

#include "uniview/errors.hpp"

namespace uniview {

ViewGrid::ViewGrid(TensorPtr t) : canvas(std::move(t)) {
    if (!canvas || canvas->shape != std::vector<std::int64_t>{3, kCanvasH, kCanvasW})
        throw DimensionError("ViewGrid: canvas must be [3,96,64]");
}

Image ViewGrid::tile(int index) const {
    if (index < 0 || index >= kNumViews) throw DimensionError("ViewGrid: tile index out of range");
    const int r0 = (index / kGridCols) * kTile;
    const int c0 = (index % kGridCols) * kTile;
    Image out(kTile, kTile);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < kTile; ++y)
            for (int x = 0; x < kTile; ++x)
                out.at(c, y, x) =
                    canvas->data[(c * kCanvasH + r0 + y) * kCanvasW + c0 + x];
    return out;
}

ViewGrid ViewGrid::assemble(const std::array<Image, kNumViews>& tiles) {
    std::vector<double> data(static_cast<std::size_t>(3) * kCanvasH * kCanvasW);
    for (int i = 0; i < kNumViews; ++i) {
        const Image& im = tiles[static_cast<std::size_t>(i)];
        if (im.width != kTile || im.height != kTile)
            throw DimensionError("ViewGrid: tiles must be 32x32");
        const int r0 = (i / kGridCols) * kTile;
        const int c0 = (i % kGridCols) * kTile;
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < kTile; ++y)
                for (int x = 0; x < kTile; ++x)
                    data[(static_cast<std::size_t>(c) * kCanvasH + r0 + y) * kCanvasW + c0 +
                         x] = im.at(c, y, x);
    }
    return ViewGrid(make_tensor(std::move(data), {3, kCanvasH, kCanvasW}));
}

TensorPtr tile_condition(const Image& cond) {
    if (cond.width != kTile || cond.height != kTile)
        throw DimensionError("tile_condition: condition image must be 32x32");
    std::vector<double> data(static_cast<std::size_t>(3) * kCanvasH * kCanvasW);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < kCanvasH; ++y)
            for (int x = 0; x < kCanvasW; ++x)
                data[(static_cast<std::size_t>(c) * kCanvasH + y) * kCanvasW + x] =
                    cond.at(c, y % kTile, x % kTile);
    return make_tensor(std::move(data), {3, kCanvasH, kCanvasW});
}

TensorPtr timestep_embedding(std::int64_t t, std::int64_t dim) {
    if (dim < 2 || dim % 2 != 0) throw DimensionError("timestep_embedding: even dim >= 2");
    const std::int64_t half = dim / 2;
    std::vector<double> e(static_cast<std::size_t>(dim));
    for (std::int64_t i = 0; i < half; ++i) {
        const double freq =
            std::exp(-std::log(10000.0) * static_cast<double>(i) /
                     static_cast<double>(half - 1));
        e[static_cast<std::size_t>(i)] = std::sin(static_cast<double>(t) * freq);
        e[static_cast<std::size_t>(half + i)] = std::cos(static_cast<double>(t) * freq);
    }
    return make_tensor(std::move(e), {1, dim});
}

namespace {

// Residual branches end in a small-scale projection so every block starts
// near identity and activations stay O(1) through the whole stack.
constexpr double kResidualInitStd = 0.02;

struct Builder {
    Rng& rng;
    ParamRegistry& reg;

    // Default is variance-preserving for a conv with nothing after it; pass
    // the He stddev explicitly when a SiLU follows.
    TensorPtr conv_kernel(const std::string& name, std::int64_t co, std::int64_t ci,
                          std::int64_t k, double stddev = -1.0) {
        if (stddev < 0.0) stddev = std::sqrt(1.0 / static_cast<double>(ci * k * k));
        auto t = randn(rng, {co, ci, k, k}, 0.0, stddev, true);
        reg.add(name + ".kernel", t);
        return t;
    }
    double he(std::int64_t ci, std::int64_t k) const {
        return std::sqrt(2.0 / static_cast<double>(ci * k * k));
    }
    TensorPtr conv_bias(const std::string& name, std::int64_t co) {
        auto t = zeros({co}, true);
        reg.add(name + ".bias", t);
        return t;
    }
    LinearParams lin(const std::string& name, std::int64_t d_in, std::int64_t d_out,
                     double stddev = -1.0) {
        if (stddev < 0.0) stddev = std::sqrt(1.0 / static_cast<double>(d_in));
        LinearParams p(d_in, d_out, rng, stddev);
        reg.add(name, p);
        return p;
    }
    ResBlock res(const std::string& name, std::int64_t c) {
        ResBlock b;
        b.conv1_k = conv_kernel(name + ".conv1", c, c, 3, he(c, 3));
        b.conv1_b = conv_bias(name + ".conv1", c);
        b.t_proj = lin(name + ".temb", kTembHidden, c);
        b.conv2_k = conv_kernel(name + ".conv2", c, c, 3, kResidualInitStd);
        b.conv2_b = conv_bias(name + ".conv2", c);
        return b;
    }
    AttnBlock attn(const std::string& name, std::int64_t c) {
        AttnBlock b;
        b.ln_gain = full({c}, 1.0, true);
        b.ln_shift = zeros({c}, true);
        reg.add(name + ".ln.gain", b.ln_gain);
        reg.add(name + ".ln.shift", b.ln_shift);
        b.proj_in = lin(name + ".proj_in", c, kAttnDim);
        b.wq = lin(name + ".wq", kAttnDim, kAttnDim);
        b.wk = lin(name + ".wk", kAttnDim, kAttnDim);
        b.wv = lin(name + ".wv", kAttnDim, kAttnDim);
        b.proj_out = lin(name + ".proj_out", kAttnDim, c, kResidualInitStd);
        return b;
    }
};

TensorPtr res_forward(const ResBlock& b, const TensorPtr& h, const TensorPtr& temb) {
    auto a = silu(conv2d(h, b.conv1_k, b.conv1_b, 1, 1));
    a = add_channel_bias(a, linear(temb, b.t_proj));
    a = silu(a);
    a = conv2d(a, b.conv2_k, b.conv2_b, 1, 1);
    return add(h, a);
}

TensorPtr attn_forward(const AttnBlock& b, const TensorPtr& h, const std::string& site_id,
                       const AttnFeatureFn& inject) {
    const std::int64_t c = h->shape[0], hh = h->shape[1], ww = h->shape[2];
    auto f = linear(layer_norm(to_tokens(h), b.ln_gain, b.ln_shift), b.proj_in);
    TensorPtr z;
    if (inject && !site_id.empty()) z = inject(site_id, f, b);
    if (!z)
        z = scaled_dot_attention(linear(f, b.wq), linear(f, b.wk), linear(f, b.wv), kAttnDim);
    return add(h, from_tokens(linear(z, b.proj_out), c, hh, ww));
}

}  // namespace

UNet UNet::init(std::uint64_t seed, const NoiseSchedule& schedule) {
    UNet net;
    net.schedule = schedule;
    net.init_seed = seed;
    Rng rng = substream(seed, "backbone-init");
    Builder b{rng, net.registry};

    net.conv_in_k = b.conv_kernel("conv_in", kWidths[0], 6, 3);
    net.conv_in_b = b.conv_bias("conv_in", kWidths[0]);
    net.temb1 = b.lin("temb1", kTembDim, kTembHidden);
    net.temb2 = b.lin("temb2", kTembHidden, kTembHidden);

    std::int64_t prev = kWidths[0];
    for (int i = 0; i < 4; ++i) {
        const std::string name = "down" + std::to_string(i + 1);
        const std::int64_t c = kWidths[static_cast<std::size_t>(i)];
        DownBlock& d = net.down[static_cast<std::size_t>(i)];
        d.down_k = b.conv_kernel(name + ".down", c, prev, 3);
        d.down_b = b.conv_bias(name + ".down", c);
        d.res = b.res(name + ".res", c);
        d.attn = b.attn(name + ".attn", c);
        d.site_id = name;
        prev = c;
    }

    net.mid_res1 = b.res("mid.res1", kWidths[3]);
    net.mid_attn = b.attn("mid.attn", kWidths[3]);
    net.mid_res2 = b.res("mid.res2", kWidths[3]);

    for (int i = 0; i < 4; ++i) {
        const std::string name = "up" + std::to_string(i + 1);
        const std::int64_t c_skip = kWidths[static_cast<std::size_t>(3 - i)];
        const std::int64_t c_out = c_skip;
        const std::int64_t c_in = (i == 0 ? kWidths[3] : kWidths[static_cast<std::size_t>(4 - i)]);
        UpBlock& u = net.up[static_cast<std::size_t>(i)];
        u.merge_k = b.conv_kernel(name + ".merge", c_out, c_in + c_skip, 3);
        u.merge_b = b.conv_bias(name + ".merge", c_out);
        u.res = b.res(name + ".res", c_out);
        u.attn = b.attn(name + ".attn", c_out);
    }

    net.out_merge_k = b.conv_kernel("out_merge", kWidths[0], 2 * kWidths[0], 1,
                                    b.he(2 * kWidths[0], 1));
    net.out_merge_b = b.conv_bias("out_merge", kWidths[0]);
    net.out_k = b.conv_kernel("out", 3, kWidths[0], 3, 0.02);
    net.out_b = b.conv_bias("out", 3);
    return net;
}

TensorPtr UNet::forward(const TensorPtr& x, std::int64_t t, const TensorPtr& cond_canvas,
                        const AttnFeatureFn& inject) const {
    const std::vector<std::int64_t> want{3, kCanvasH, kCanvasW};
    if (x->shape != want || cond_canvas->shape != want)
        throw DimensionError("UNet::forward: inputs must be [3,96,64]");
    if (t < 0 || t >= schedule.T) throw DimensionError("UNet::forward: timestep out of range");

    auto temb = linear(timestep_embedding(t, kTembDim), temb1);
    temb = linear(silu(temb), temb2);

    auto h0 = conv2d(concat_channels(x, cond_canvas), conv_in_k, conv_in_b, 2, 1);

    std::array<TensorPtr, 4> skips;
    TensorPtr h = h0;
    for (int i = 0; i < 4; ++i) {
        const DownBlock& d = down[static_cast<std::size_t>(i)];
        h = conv2d(h, d.down_k, d.down_b, 2, 1);
        h = res_forward(d.res, h, temb);
        h = attn_forward(d.attn, h, d.site_id, inject);
        skips[static_cast<std::size_t>(i)] = h;
    }

    h = res_forward(mid_res1, h, temb);
    h = attn_forward(mid_attn, h, "mid", inject);
    h = res_forward(mid_res2, h, temb);

    for (int i = 0; i < 4; ++i) {
        const UpBlock& u = up[static_cast<std::size_t>(i)];
        h = concat_channels(h, skips[static_cast<std::size_t>(3 - i)]);
        h = conv2d(h, u.merge_k, u.merge_b, 1, 1);
        h = res_forward(u.res, h, temb);
        h = attn_forward(u.attn, h, "", nullptr);
        h = upsample_nearest2(h);
    }

    h = conv2d(concat_channels(h, h0), out_merge_k, out_merge_b, 1, 0);
    h = upsample_nearest2(silu(h));
    return conv2d(h, out_k, out_b, 1, 1);
}

void UNet::freeze() {
    registry.set_requires_grad(false);
    frozen = true;
    frozen_checksum = checksum();
}

void UNet::verify_frozen() const {
    if (!frozen) throw ContractViolation("backbone is not frozen");
    if (checksum() != frozen_checksum)
        throw ContractViolation("frozen backbone parameters changed");
}

std::vector<std::int64_t> sampling_indices(std::int64_t T, std::int64_t steps) {
    if (T < 1) throw ConfigError("sampling_indices: T must be positive");
    if (steps < 1) steps = 1;
    if (steps > T) steps = T;
    std::vector<std::int64_t> out;
    out.reserve(static_cast<std::size_t>(steps));
    if (steps == 1) {
        out.push_back(T - 1);
        return out;
    }
    for (std::int64_t k = 0; k < steps; ++k) {
        const double frac =
            static_cast<double>(steps - 1 - k) / static_cast<double>(steps - 1);
        const auto t = static_cast<std::int64_t>(std::llround(frac * static_cast<double>(T - 1)));
        if (out.empty() || t < out.back()) out.push_back(t);
    }
    return out;
}

TensorPtr posterior_step(const TensorPtr& x_t, const TensorPtr& eps_hat, std::int64_t t_cur,
                         std::int64_t t_prev, const NoiseSchedule& s, const TensorPtr& z) {
    if (t_cur < 0 || t_cur >= s.T || t_prev >= t_cur)
        throw DimensionError("posterior_step: bad timestep pair");
    if (x_t->shape != eps_hat->shape)
        throw DimensionError("posterior_step: eps shape mismatch");
    const double ab_cur = s.alpha_bar[static_cast<std::size_t>(t_cur)];
    const double ab_prev = t_prev < 0 ? 1.0 : s.alpha_bar[static_cast<std::size_t>(t_prev)];

    // x0 estimate from the noise prediction.
    auto x0 = mul_scalar(sub(x_t, mul_scalar(eps_hat, std::sqrt(1.0 - ab_cur))),
                         1.0 / std::sqrt(ab_cur));

    const double var = (1.0 - ab_prev) / (1.0 - ab_cur) * (1.0 - ab_cur / ab_prev);
    const double sigma = std::sqrt(std::max(var, 0.0));
    const double dir = std::sqrt(std::max(1.0 - ab_prev - sigma * sigma, 0.0));

    auto out = add(mul_scalar(x0, std::sqrt(ab_prev)), mul_scalar(eps_hat, dir));
    if (z && sigma > 0.0) {
        if (z->shape != x_t->shape) throw DimensionError("posterior_step: z shape mismatch");
        out = add(out, mul_scalar(z, sigma));
    }
    return out;
}

}  // namespace uniview
