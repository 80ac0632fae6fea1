#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>

#include "uniview/image.hpp"
#include "uniview/nn.hpp"
#include "uniview/params.hpp"
#include "uniview/schedule.hpp"
#include "uniview/tensor.hpp"

namespace uniview {

inline constexpr int kTile = 32;
inline constexpr int kGridRows = 3;
inline constexpr int kGridCols = 2;
inline constexpr int kCanvasH = kTile * kGridRows;  // 96
inline constexpr int kCanvasW = kTile * kGridCols;  // 64
inline constexpr int kNumViews = kGridRows * kGridCols;
inline constexpr std::int64_t kAttnDim = 64;
inline constexpr std::int64_t kTembDim = 64;
inline constexpr std::int64_t kTembHidden = 128;

// Six 32x32 tiles on one canvas, row-major: tile 0 is top-left.
struct ViewGrid {
    TensorPtr canvas;  // [3, 96, 64]

    ViewGrid() = default;
    explicit ViewGrid(TensorPtr t);

    Image tile(int index) const;
    static ViewGrid assemble(const std::array<Image, kNumViews>& tiles);
};

// Condition image replicated across the full canvas.
TensorPtr tile_condition(const Image& cond);

// Sinusoidal embedding of an integer timestep, shape [1, dim].
TensorPtr timestep_embedding(std::int64_t t, std::int64_t dim = kTembDim);

// Self-attention over tokens projected to a fixed inner width; the attention
// feature Z may be replaced by an installed injector, everything around it is
// block-owned.
struct AttnBlock {
    TensorPtr ln_gain, ln_shift;
    LinearParams proj_in;   // c -> kAttnDim
    LinearParams wq, wk, wv;  // kAttnDim -> kAttnDim
    LinearParams proj_out;  // kAttnDim -> c
};

struct ResBlock {
    TensorPtr conv1_k, conv1_b;
    LinearParams t_proj;  // kTembHidden -> c
    TensorPtr conv2_k, conv2_b;
};

struct DownBlock {
    TensorPtr down_k, down_b;  // stride-2 conv c_in -> c_out
    ResBlock res;
    AttnBlock attn;
    std::string site_id;  // "down1".."down4"
};

struct UpBlock {
    TensorPtr merge_k, merge_b;  // 3x3 conv (c_in + c_skip) -> c_out
    ResBlock res;
    AttnBlock attn;  // always pure self-attention
};

// Returns a replacement attention feature for the named site, or nullptr to
// keep the block's own self-attention. `f` is the normalized, projected token
// sequence [n, kAttnDim].
using AttnFeatureFn =
    std::function<TensorPtr(const std::string& site_id, const TensorPtr& f,
                            const AttnBlock& blk)>;

struct UNet {
    static constexpr std::array<std::int64_t, 4> kWidths = {32, 64, 96, 128};

    NoiseSchedule schedule;

    TensorPtr conv_in_k, conv_in_b;  // 6 -> 32, stride 2
    LinearParams temb1, temb2;
    std::array<DownBlock, 4> down;
    ResBlock mid_res1;
    AttnBlock mid_attn;  // site "mid"
    ResBlock mid_res2;
    std::array<UpBlock, 4> up;
    TensorPtr out_merge_k, out_merge_b;  // 1x1 conv 64 -> 32
    TensorPtr out_k, out_b;              // 3x3 conv 32 -> 3

    bool frozen = false;
    std::uint64_t frozen_checksum = 0;
    std::uint64_t init_seed = 0;
    ParamRegistry registry;

    static UNet init(std::uint64_t seed, const NoiseSchedule& schedule);

    // x: [3,96,64] noisy canvas, cond_canvas: [3,96,64]; returns predicted
    // noise of the same shape.
    TensorPtr forward(const TensorPtr& x, std::int64_t t, const TensorPtr& cond_canvas,
                      const AttnFeatureFn& inject = nullptr) const;

    void freeze();
    // Throws ContractViolation if any frozen parameter moved.
    void verify_frozen() const;
    std::uint64_t checksum() const { return checksum_f32(registry.items); }
};

// Descending timestep subsequence visited by the sampler (last entry 0).
std::vector<std::int64_t> sampling_indices(std::int64_t T, std::int64_t steps);

// One strided ancestral update from t_cur to t_prev (t_prev < 0 means the
// final step onto the clean sample). `z` supplies the stochastic term and may
// be null for the posterior mean.
TensorPtr posterior_step(const TensorPtr& x_t, const TensorPtr& eps_hat, std::int64_t t_cur,
                         std::int64_t t_prev, const NoiseSchedule& s, const TensorPtr& z);

}  // namespace uniview
