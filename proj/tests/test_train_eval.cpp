#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "uniview/errors.hpp"
#include "uniview/eval.hpp"
#include "uniview/rng.hpp"
#include "uniview/synthdata.hpp"
#include "uniview/train.hpp"

namespace uniview {
namespace {

namespace fs = std::filesystem;

fs::path temp_root() {
    const fs::path p = fs::temp_directory_path() / "uniview-train-eval-tests";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<GeneratedPair> make_pairs(int n, std::uint64_t seed, int n_categories = 2,
                                      int instance_base = kTrainInstanceBase) {
    Rng rng = substream(seed, "test-pairs");
    std::vector<GeneratedPair> out;
    for (int i = 0; i < n; ++i) {
        const std::string cat = category_name(i % n_categories);
        out.push_back(make_pair(cat, 4, rng, "p" + std::to_string(i), instance_base));
    }
    return out;
}

struct DbFixture {
    fs::path root;
    DatabaseIndex index;

    explicit DbFixture(int n_categories, int instances = 2) {
        root = temp_root() / "db";
        fs::create_directories(root);
        index = build_index(build_db_images(root.string(), n_categories, instances, 7));
    }
};

Model small_frozen_backbone(std::uint64_t seed, int train_steps = 0) {
    Model m = Model::init(seed, Variant::backbone_only, make_schedule(20, 1e-4, 0.02));
    if (train_steps > 0) {
        TrainOptions opt;
        opt.steps = train_steps;
        opt.seed = seed;
        train_backbone(m, make_pairs(2, seed), opt);
    }
    m.net.freeze();
    return m;
}

TEST(ModelCopy, RebindsSitePointersToTheCopy) {
    const Model src = Model::init(11, Variant::complete, make_schedule(20, 1e-4, 0.02));
    const Model dup = src;
    ASSERT_EQ(dup.sites.size(), src.sites.size());
    for (std::size_t i = 0; i < dup.sites.size(); ++i) {
        EXPECT_NE(dup.sites[i].block, src.sites[i].block);
        if (dup.sites[i].site_id == "mid") {
            EXPECT_EQ(dup.sites[i].block, &dup.net.mid_attn);
        }
    }
    for (std::size_t k = 0; k < dup.net.down.size(); ++k) {
        const auto& blk = dup.net.down[k];
        for (const auto& s : dup.sites) {
            if (s.site_id == blk.site_id) {
                EXPECT_EQ(s.block, &blk.attn);
            }
        }
    }
}

TEST(ModelCopy, CopySharesParameterTensors) {
    const Model src = Model::init(12, Variant::complete, make_schedule(20, 1e-4, 0.02));
    const Model dup = src;
    ASSERT_FALSE(src.net.registry.items.empty());
    EXPECT_EQ(dup.net.registry.items[0].second.get(), src.net.registry.items[0].second.get());
    EXPECT_EQ(dup.adapter.all.items[0].second.get(), src.adapter.all.items[0].second.get());
}

TEST(ModelMove, SamplingWorksAfterMoveAndMatchesTheOriginal) {
    Model m = Model::init(13, Variant::complete, make_schedule(20, 1e-4, 0.02));
    const Image cond = render(make_object(category_name(0), 100), make_pose(90, 0));
    const Image ref = render(make_object(category_name(0), 101), make_pose(270, 0));
    const ViewGrid before = sample(m, cond, &ref, 2, 5);

    std::vector<Model> bucket;
    bucket.push_back(std::move(m));
    Model moved = std::move(bucket[0]);
    const ViewGrid after = sample(moved, cond, &ref, 2, 5);
    EXPECT_EQ(before.canvas->data, after.canvas->data);
}

TEST(TrainBackbone, RejectsFrozenModel) {
    Model m = small_frozen_backbone(21);
    TrainOptions opt;
    opt.steps = 1;
    EXPECT_THROW(train_backbone(m, make_pairs(1, 21), opt), ConfigError);
}

TEST(TrainBackbone, RejectsEmptyPairsAndBadSteps) {
    Model m = Model::init(22, Variant::backbone_only, make_schedule(20, 1e-4, 0.02));
    TrainOptions opt;
    opt.steps = 1;
    EXPECT_THROW(train_backbone(m, {}, opt), ConfigError);
    opt.steps = -3;
    EXPECT_THROW(train_backbone(m, make_pairs(1, 22), opt), ConfigError);
}

TEST(TrainBackbone, RunIsReproducibleFromModelAndSeed) {
    const auto pairs = make_pairs(2, 31);
    TrainOptions opt;
    opt.steps = 2;
    opt.seed = 31;
    Model a = Model::init(31, Variant::backbone_only, make_schedule(20, 1e-4, 0.02));
    Model b = Model::init(31, Variant::backbone_only, make_schedule(20, 1e-4, 0.02));
    const auto la = train_backbone(a, pairs, opt);
    const auto lb = train_backbone(b, pairs, opt);
    EXPECT_EQ(la, lb);
    EXPECT_EQ(a.net.checksum(), b.net.checksum());
}

TEST(TrainAdapter, RejectsModelsWithoutAdapterOrUnfrozenBackbone) {
    TrainOptions opt;
    opt.steps = 1;
    Model bare = small_frozen_backbone(41);
    EXPECT_THROW(train_adapter(bare, make_pairs(1, 41), opt), ConfigError);

    Model warm = Model::init(41, Variant::complete, make_schedule(20, 1e-4, 0.02));
    EXPECT_THROW(train_adapter(warm, make_pairs(1, 41), opt), ConfigError);
}

TEST(TrainAdapter, LeavesFrozenChecksumUntouched) {
    Model m = upgrade_variant(small_frozen_backbone(42), Variant::complete, 43);
    const std::uint64_t before = m.net.checksum();
    TrainOptions opt;
    opt.steps = 3;
    opt.seed = 44;
    train_adapter(m, make_pairs(2, 42), opt);
    EXPECT_EQ(m.net.checksum(), before);
    EXPECT_NO_THROW(m.net.verify_frozen());
}

TEST(TrainAdapter, MovesAdapterParameters) {
    Model m = upgrade_variant(small_frozen_backbone(45), Variant::complete, 46);
    const std::uint64_t before = checksum_f32(m.adapter.all.items);
    TrainOptions opt;
    opt.steps = 2;
    opt.seed = 47;
    train_adapter(m, make_pairs(1, 45), opt);
    EXPECT_NE(checksum_f32(m.adapter.all.items), before);
}

TEST(ClipGradNorm, ScalesOnlyWhenAboveTheBound) {
    auto a = zeros({2}, true);
    auto b = zeros({1}, true);
    a->grad = {3.0, 0.0};
    b->grad = {4.0};
    EXPECT_DOUBLE_EQ(clip_grad_norm({a, b}, 10.0), 5.0);
    EXPECT_DOUBLE_EQ(a->grad[0], 3.0);
    EXPECT_DOUBLE_EQ(clip_grad_norm({a, b}, 1.0), 5.0);
    EXPECT_DOUBLE_EQ(a->grad[0], 0.6);
    EXPECT_DOUBLE_EQ(b->grad[0], 0.8);
    EXPECT_THROW(clip_grad_norm({a}, 0.0), ConfigError);
}

TEST(LossCsv, OneRowPerStepFullPrecision) {
    const fs::path path = temp_root() / "loss.csv";
    write_loss_csv(path.string(), {1.0, 0.125, 1.0 / 3.0});
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "step,loss");
    std::getline(in, line);
    EXPECT_EQ(line, "0,1");
    std::getline(in, line);
    EXPECT_EQ(line, "1,0.125");
    std::getline(in, line);
    char want[64];
    std::snprintf(want, sizeof(want), "2,%.17g", 1.0 / 3.0);
    EXPECT_EQ(line, want);
    EXPECT_FALSE(std::getline(in, line));
}

TEST(EvalRun, RejectsReferenceModesWithoutAdapter) {
    const DbFixture db(2);
    const Model m = small_frozen_backbone(51);
    EvalOptions opt;
    opt.mode = ReferenceMode::same_category;
    opt.sampling_steps = 1;
    EXPECT_THROW(eval_run(m, make_pairs(1, 51), db.index, db.root.string(), opt),
                 ConfigError);
}

TEST(EvalRun, RejectsEmptyPairsAndBadSteps) {
    const DbFixture db(2);
    const Model m = small_frozen_backbone(52);
    EvalOptions opt;
    opt.mode = ReferenceMode::none;
    opt.sampling_steps = 1;
    EXPECT_THROW(eval_run(m, {}, db.index, db.root.string(), opt), ConfigError);
    opt.sampling_steps = 0;
    EXPECT_THROW(eval_run(m, make_pairs(1, 52), db.index, db.root.string(), opt),
                 ConfigError);
}

TEST(EvalRun, SameReportForSameSeedAndModel) {
    const DbFixture db(2);
    Model m = upgrade_variant(small_frozen_backbone(53), Variant::complete, 54);
    const auto pairs = make_pairs(2, 53);
    EvalOptions opt;
    opt.mode = ReferenceMode::same_category;
    opt.sampling_steps = 2;
    opt.seed = 9;
    const std::string a = report_to_json(eval_run(m, pairs, db.index, db.root.string(), opt));
    const std::string b = report_to_json(eval_run(m, pairs, db.index, db.root.string(), opt));
    EXPECT_EQ(a, b);
}

TEST(EvalRun, NoneModeOnFreshAdapterMatchesBareBackbone) {
    const DbFixture db(2);
    const auto pairs = make_pairs(1, 55);
    const Model bare = Model::init(55, Variant::backbone_only, make_schedule(20, 1e-4, 0.02));
    const Model full = Model::init(55, Variant::complete, make_schedule(20, 1e-4, 0.02));
    EvalOptions opt;
    opt.mode = ReferenceMode::none;
    opt.sampling_steps = 2;
    opt.seed = 3;
    const auto ra = eval_run(bare, pairs, db.index, db.root.string(), opt);
    const auto rb = eval_run(full, pairs, db.index, db.root.string(), opt);
    ASSERT_EQ(ra.per_view.size(), rb.per_view.size());
    for (std::size_t i = 0; i < ra.per_view.size(); ++i) {
        EXPECT_EQ(ra.per_view[i].psnr, rb.per_view[i].psnr);
        EXPECT_EQ(ra.per_view[i].ssim, rb.per_view[i].ssim);
    }
}

TEST(EvalRun, AggregatesAreRecomputableFromPerViewRows) {
    const DbFixture db(2);
    const Model m = small_frozen_backbone(56);
    const auto pairs = make_pairs(2, 56);
    EvalOptions opt;
    opt.mode = ReferenceMode::none;
    opt.sampling_steps = 1;
    opt.seed = 1;
    const auto rep = eval_run(m, pairs, db.index, db.root.string(), opt);

    std::vector<double> psnrs, ssims, occ;
    for (const auto& vm : rep.per_view) {
        psnrs.push_back(vm.psnr);
        ssims.push_back(vm.ssim);
        if (vm.occluded) occ.push_back(vm.occluded_psnr);
    }
    const auto pa = aggregate_of(psnrs);
    const auto sa = aggregate_of(ssims);
    const auto oa = aggregate_of(occ);
    EXPECT_EQ(rep.psnr.mean, pa.mean);
    EXPECT_EQ(rep.psnr.stddev, pa.stddev);
    EXPECT_EQ(rep.psnr.count, pa.count);
    EXPECT_EQ(rep.ssim.mean, sa.mean);
    EXPECT_EQ(rep.occluded_psnr.mean, oa.mean);
    EXPECT_EQ(rep.occluded_psnr.count, oa.count);
}

TEST(EvalRun, OccludedRowsAreExactlyTheRearFacingViews) {
    const DbFixture db(2);
    const Model m = small_frozen_backbone(57);
    const auto pairs = make_pairs(1, 57);
    EvalOptions opt;
    opt.mode = ReferenceMode::none;
    opt.sampling_steps = 1;
    const auto rep = eval_run(m, pairs, db.index, db.root.string(), opt);
    ASSERT_EQ(rep.per_view.size(), 6u);
    for (const auto& vm : rep.per_view) {
        const double rel = kTargetRelAzimuth[static_cast<std::size_t>(vm.view)];
        EXPECT_EQ(vm.occluded, rel >= 90.0 && rel <= 270.0);
    }
    EXPECT_EQ(rep.occluded_psnr.count, 4);
}

TEST(EvalRun, IrrelevantModeNeedsAnotherCategory) {
    const DbFixture db(1);
    Model m = upgrade_variant(small_frozen_backbone(58), Variant::complete, 59);
    EvalOptions opt;
    opt.mode = ReferenceMode::irrelevant;
    opt.sampling_steps = 1;
    EXPECT_THROW(eval_run(m, make_pairs(1, 58, 1), db.index, db.root.string(), opt),
                 RetrievalError);
}

TEST(Report, JsonCarriesConfigFingerprintAndOmittedMetrics) {
    const DbFixture db(2);
    const Model m = small_frozen_backbone(61);
    const auto pairs = make_pairs(2, 61);
    EvalOptions opt;
    opt.mode = ReferenceMode::none;
    opt.sampling_steps = 1;
    opt.seed = 77;
    const auto rep = eval_run(m, pairs, db.index, db.root.string(), opt);
    const auto doc = nlohmann::json::parse(report_to_json(rep));

    EXPECT_EQ(doc.at("format_version").get<int>(), 1);
    EXPECT_EQ(doc.at("metrics_omitted"), nlohmann::json::array({"lpips"}));
    EXPECT_EQ(doc.at("config").at("variant"), "backbone_only");
    EXPECT_EQ(doc.at("config").at("mode"), "none");
    EXPECT_EQ(doc.at("config").at("seed").get<std::uint64_t>(), 77u);
    EXPECT_EQ(doc.at("config").at("n_pairs").get<int>(), 2);
    const std::string fp = doc.at("config_fingerprint").get<std::string>();
    EXPECT_EQ(fp.size(), 16u);
    EXPECT_EQ(fp.find_first_not_of("0123456789abcdef"), std::string::npos);
    EXPECT_EQ(doc.at("per_view").size(), 12u);
}

TEST(Report, FingerprintTracksTheConfig) {
    const DbFixture db(2);
    const Model m = small_frozen_backbone(62);
    const auto pairs = make_pairs(1, 62);
    EvalOptions opt;
    opt.mode = ReferenceMode::none;
    opt.sampling_steps = 1;
    opt.seed = 1;
    const auto r1 = eval_run(m, pairs, db.index, db.root.string(), opt);
    opt.seed = 2;
    const auto r2 = eval_run(m, pairs, db.index, db.root.string(), opt);
    EXPECT_NE(r1.config_fingerprint, r2.config_fingerprint);
}

TEST(Ablation, RejectsMalformedSuites) {
    const DbFixture db(2);
    const auto train_pairs = make_pairs(1, 71);
    const auto eval_pairs = make_pairs(1, 72);
    const Model frozen = small_frozen_backbone(71);

    auto configs = [](int adapter_steps) {
        std::vector<AblationConfig> cs(4);
        cs[0].variant = Variant::backbone_only;
        cs[1].variant = Variant::base_adapter_only;
        cs[2].variant = Variant::plus_meta_controller;
        cs[3].variant = Variant::complete;
        for (auto& c : cs) {
            c.adapter_steps = adapter_steps;
            c.sampling_steps = 1;
        }
        return cs;
    };

    Model warm = Model::init(71, Variant::backbone_only, make_schedule(20, 1e-4, 0.02));
    EXPECT_THROW(
        ablation_suite(warm, configs(1), train_pairs, eval_pairs, db.index, db.root.string()),
        ConfigError);

    Model wrong = upgrade_variant(frozen, Variant::complete, 1);
    EXPECT_THROW(
        ablation_suite(wrong, configs(1), train_pairs, eval_pairs, db.index, db.root.string()),
        ConfigError);

    auto missing = configs(1);
    missing.pop_back();
    EXPECT_THROW(ablation_suite(frozen, missing, train_pairs, eval_pairs, db.index,
                                db.root.string()),
                 ConfigError);

    auto repeated = configs(1);
    repeated[3].variant = Variant::complete;
    repeated[2].variant = Variant::complete;
    EXPECT_THROW(ablation_suite(frozen, repeated, train_pairs, eval_pairs, db.index,
                                db.root.string()),
                 ConfigError);

    auto uneven = configs(1);
    uneven[2].lr = 2e-3;
    EXPECT_THROW(ablation_suite(frozen, uneven, train_pairs, eval_pairs, db.index,
                                db.root.string()),
                 ConfigError);
}

TEST(Ablation, CoversEveryVariantUnderOneBudget) {
    const DbFixture db(2);
    const auto train_pairs = make_pairs(1, 81);
    const auto eval_pairs = make_pairs(1, 82);
    const Model frozen = small_frozen_backbone(81);

    std::vector<AblationConfig> cs(4);
    cs[0].variant = Variant::backbone_only;
    cs[1].variant = Variant::base_adapter_only;
    cs[2].variant = Variant::plus_meta_controller;
    cs[3].variant = Variant::complete;
    for (auto& c : cs) {
        c.adapter_steps = 1;
        c.sampling_steps = 1;
        c.train_seed = 5;
        c.eval_seed = 6;
    }

    const auto results =
        ablation_suite(frozen, cs, train_pairs, eval_pairs, db.index, db.root.string());
    ASSERT_EQ(results.size(), 4u);
    EXPECT_EQ(results[0].report.mode, "none");
    EXPECT_EQ(results[0].report.variant, "backbone_only");
    EXPECT_EQ(results[0].model.net.checksum(), frozen.net.checksum());
    for (std::size_t i = 1; i < 4; ++i) {
        EXPECT_EQ(results[i].report.mode, "same_category");
        EXPECT_EQ(results[i].report.variant, to_string(cs[i].variant));
        EXPECT_NO_THROW(results[i].model.net.verify_frozen());
        EXPECT_EQ(results[i].report.n_pairs, 1);
    }
}

}  // namespace
}  // namespace uniview
