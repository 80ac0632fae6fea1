#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uniview/checkpoint.hpp"
#include "uniview/synthdata.hpp"

namespace uniview {

struct TrainOptions {
    int steps = 0;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    // Single-pair steps make gradient spikes routine; the global-norm clip
    // keeps Adam from diverging. Zero disables it.
    double clip_norm = 1.0;
};

// Stage one: the whole network trains. Stage two: the backbone must already
// be frozen and only adapter parameters move. Both draw pairs and noise from
// named substreams of the seed, so a run is reproducible from (model, seed).
std::vector<double> train_backbone(Model& m, const std::vector<GeneratedPair>& pairs,
                                   const TrainOptions& opt);

std::vector<double> train_adapter(Model& m, const std::vector<GeneratedPair>& pairs,
                                  const TrainOptions& opt);

// One "step,loss" row per line, full double precision.
void write_loss_csv(const std::string& path, const std::vector<double>& losses);

}  // namespace uniview
