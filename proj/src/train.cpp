#include "uniview/train.hpp"

#include <cstdio>
#include <fstream>

#include "uniview/errors.hpp"
#include "uniview/optim.hpp"

namespace uniview {

namespace {

std::vector<double> run_loop(Model& m, const std::vector<GeneratedPair>& pairs,
                             const TrainOptions& opt, Adam& adam) {
    if (pairs.empty()) throw ConfigError("training needs at least one pair");
    if (opt.steps < 0) throw ConfigError("negative training step count");

    Rng data_rng = substream(opt.seed, "data");
    Rng noise_rng = substream(opt.seed, "noise");
    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(opt.steps));
    for (int step = 0; step < opt.steps; ++step) {
        const auto& gp = pairs[static_cast<std::size_t>(
            data_rng.uniform_int(0, static_cast<std::int64_t>(pairs.size())))];
        losses.push_back(train_step(m, gp.pair, adam, noise_rng, opt.clip_norm));
    }
    return losses;
}

}  // namespace

std::vector<double> train_backbone(Model& m, const std::vector<GeneratedPair>& pairs,
                                   const TrainOptions& opt) {
    if (m.net.frozen) throw ConfigError("train_backbone: the backbone is already frozen");
    Adam adam(m.net.registry.tensors(), opt.lr);
    return run_loop(m, pairs, opt, adam);
}

std::vector<double> train_adapter(Model& m, const std::vector<GeneratedPair>& pairs,
                                  const TrainOptions& opt) {
    if (!m.has_adapter()) throw ConfigError("train_adapter: model has no adapter");
    if (!m.net.frozen) throw ConfigError("train_adapter: backbone must be frozen first");
    Adam adam(m.adapter_trainables(), opt.lr);
    auto losses = run_loop(m, pairs, opt, adam);
    m.net.verify_frozen();
    return losses;
}

void write_loss_csv(const std::string& path, const std::vector<double>& losses) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open loss log for writing: " + path);
    out << "step,loss\n";
    char buf[64];
    for (std::size_t i = 0; i < losses.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, losses[i]);
        out << buf;
    }
    if (!out) throw IoError("loss log write failed: " + path);
}

}  // namespace uniview
