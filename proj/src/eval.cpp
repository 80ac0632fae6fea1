#include "uniview/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "uniview/errors.hpp"

namespace uniview {

namespace {

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

bool is_occluded_view(std::size_t view) {
    const double rel = kTargetRelAzimuth[view];
    return rel >= 90.0 && rel <= 270.0;
}

Image load_record_image(const std::string& db_root, const ImageRecord& rec) {
    return read_png(db_root + "/" + rec.path);
}

Image pick_irrelevant(const GeneratedPair& gp, const DatabaseIndex& db,
                      const std::string& db_root, std::uint64_t seed, std::uint64_t k) {
    std::vector<const ImageRecord*> others;
    for (const auto& r : db.records)
        if (r.category != gp.meta.category) others.push_back(&r);
    if (others.empty())
        throw RetrievalError("irrelevant mode: no different-category record available");
    Rng rng = substream(seed, "irrelevant", k);
    const auto* rec = others[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(others.size())))];
    return load_record_image(db_root, *rec);
}

}  // namespace

std::string to_string(ReferenceMode m) {
    switch (m) {
        case ReferenceMode::same_category: return "same_category";
        case ReferenceMode::identical: return "identical";
        case ReferenceMode::irrelevant: return "irrelevant";
        case ReferenceMode::none: return "none";
    }
    throw ContractViolation("unknown reference mode");
}

ReferenceMode reference_mode_from_string(const std::string& s) {
    if (s == "same_category") return ReferenceMode::same_category;
    if (s == "identical") return ReferenceMode::identical;
    if (s == "irrelevant") return ReferenceMode::irrelevant;
    if (s == "none") return ReferenceMode::none;
    throw ConfigError("unknown reference mode: " + s);
}

Aggregate aggregate_of(const std::vector<double>& values) {
    Aggregate a;
    a.count = static_cast<std::int64_t>(values.size());
    if (values.empty()) return a;
    double sum = 0.0;
    for (double v : values) sum += v;
    a.mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(sq / static_cast<double>(values.size()));
    return a;
}

MetricReport eval_run(const Model& m, const std::vector<GeneratedPair>& pairs,
                      const DatabaseIndex& db, const std::string& db_root,
                      const EvalOptions& opts) {
    if (pairs.empty()) throw ConfigError("eval: empty pair set");
    if (opts.sampling_steps < 1) throw ConfigError("eval: need at least one sampling step");
    if (opts.mode != ReferenceMode::none && !m.has_adapter())
        throw ConfigError("eval: reference mode " + to_string(opts.mode) +
                          " needs an adapter-bearing model");

    MetricReport rep;
    rep.variant = to_string(m.variant);
    rep.mode = to_string(opts.mode);
    rep.seed = opts.seed;
    rep.sampling_steps = opts.sampling_steps;
    rep.n_pairs = static_cast<std::int64_t>(pairs.size());
    rep.db_checksum = db.manifest_checksum;

    const std::string canon = rep.variant + "|" + rep.mode + "|" +
                              std::to_string(rep.seed) + "|" +
                              std::to_string(rep.sampling_steps) + "|" +
                              std::to_string(rep.n_pairs) + "|" +
                              std::to_string(m.net.schedule.T) + "|" +
                              hex64(rep.db_checksum);
    rep.config_fingerprint = hex64(fnv1a64(canon));

    std::vector<double> psnrs, ssims, occluded;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const GeneratedPair& gp = pairs[k];
        const ObjectSpec spec_a = make_object(gp.meta.category, gp.meta.instance_a);

        Image ref;
        bool have_ref = false;
        switch (opts.mode) {
            case ReferenceMode::same_category: {
                const FixedClassifier truth(
                    {gp.meta.category, viewpoint_from_azimuth(gp.meta.view1.azimuth), 1.0});
                const ImageRecord rec = retrieve_reference(gp.pair.cond, db, truth);
                ref = load_record_image(db_root, rec);
                have_ref = true;
                break;
            }
            case ReferenceMode::identical:
                ref = render(spec_a, make_pose(gp.meta.view1.azimuth + 180.0, 0.0));
                have_ref = true;
                break;
            case ReferenceMode::irrelevant:
                ref = pick_irrelevant(gp, db, db_root, opts.seed, k);
                have_ref = true;
                break;
            case ReferenceMode::none: break;
        }

        AdapterSignals sig;
        if (have_ref) {
            NoGradGuard ng;
            sig = compute_signals(m, gp.pair.cond, ref);
        }
        const std::uint64_t pair_seed = substream(opts.seed, "eval-pair", k).next_u64();
        const ViewGrid gen = sample_with_signals(m, gp.pair.cond, have_ref ? &sig : nullptr,
                                                 opts.sampling_steps, pair_seed);
        const ViewGrid truth(tensor_from_image(gp.pair.targets));

        for (int v = 0; v < kNumViews; ++v) {
            const Image got = gen.tile(v);
            const Image want = truth.tile(v);
            ViewMetrics vm;
            vm.pair_id = gp.meta.id;
            vm.view = v;
            vm.psnr = psnr(got, want);
            vm.ssim = ssim(got, want);
            if (is_occluded_view(static_cast<std::size_t>(v))) {
                const auto mask =
                    silhouette_mask(spec_a, gp.meta.target_poses[static_cast<std::size_t>(v)]);
                vm.occluded = true;
                vm.occluded_psnr = psnr_masked(got, want, mask);
                occluded.push_back(vm.occluded_psnr);
            }
            psnrs.push_back(vm.psnr);
            ssims.push_back(vm.ssim);
            rep.per_view.push_back(std::move(vm));
        }
    }

    rep.psnr = aggregate_of(psnrs);
    rep.ssim = aggregate_of(ssims);
    rep.occluded_psnr = aggregate_of(occluded);
    return rep;
}

std::string report_to_json(const MetricReport& r) {
    nlohmann::json per_view = nlohmann::json::array();
    for (const auto& vm : r.per_view) {
        nlohmann::json row = {{"pair", vm.pair_id},
                              {"view", vm.view},
                              {"psnr", vm.psnr},
                              {"ssim", vm.ssim}};
        if (vm.occluded) row["occluded_psnr"] = vm.occluded_psnr;
        per_view.push_back(std::move(row));
    }
    auto agg = [](const Aggregate& a) {
        return nlohmann::json{{"mean", a.mean}, {"stddev", a.stddev}, {"count", a.count}};
    };
    const nlohmann::json doc = {
        {"format_version", 1},
        {"config",
         {{"variant", r.variant},
          {"mode", r.mode},
          {"seed", r.seed},
          {"sampling_steps", r.sampling_steps},
          {"n_pairs", r.n_pairs},
          {"db_checksum", hex64(r.db_checksum)}}},
        {"config_fingerprint", r.config_fingerprint},
        {"metrics_omitted", nlohmann::json::array({"lpips"})},
        {"per_view", per_view},
        {"aggregates",
         {{"psnr", agg(r.psnr)},
          {"ssim", agg(r.ssim)},
          {"occluded_psnr", agg(r.occluded_psnr)}}}};
    return doc.dump(2) + "\n";
}

void write_report(const std::string& path, const MetricReport& r) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open report for writing: " + path);
    out << report_to_json(r);
    if (!out) throw IoError("report write failed: " + path);
}

std::vector<AblationResult> ablation_suite(const Model& frozen_backbone,
                                           const std::vector<AblationConfig>& configs,
                                           const std::vector<GeneratedPair>& train_pairs,
                                           const std::vector<GeneratedPair>& eval_pairs,
                                           const DatabaseIndex& db,
                                           const std::string& db_root) {
    if (frozen_backbone.variant != Variant::backbone_only)
        throw ConfigError("ablation grows every variant from a bare backbone");
    if (!frozen_backbone.net.frozen)
        throw ConfigError("ablation needs a frozen backbone checkpoint");
    if (configs.size() != 4) throw ConfigError("ablation covers exactly the four variants");

    std::vector<bool> seen(4, false);
    for (const auto& c : configs) {
        const auto idx = static_cast<std::size_t>(c.variant);
        if (seen[idx]) throw ConfigError("ablation variant repeated: " + to_string(c.variant));
        seen[idx] = true;
        if (c.adapter_steps != configs[0].adapter_steps || c.lr != configs[0].lr ||
            c.sampling_steps != configs[0].sampling_steps ||
            c.train_seed != configs[0].train_seed || c.eval_seed != configs[0].eval_seed)
            throw ConfigError("ablation variants must share every setting but the variant");
    }

    std::vector<AblationResult> results;
    results.reserve(configs.size());
    for (const auto& cfg : configs) {
        AblationResult res;
        res.config = cfg;
        if (cfg.variant == Variant::backbone_only) {
            res.model = frozen_backbone;
        } else {
            res.model = upgrade_variant(frozen_backbone, cfg.variant, cfg.train_seed);
            TrainOptions topt;
            topt.steps = cfg.adapter_steps;
            topt.lr = cfg.lr;
            topt.seed = cfg.train_seed;
            train_adapter(res.model, train_pairs, topt);
        }

        EvalOptions eopt;
        eopt.mode = cfg.variant == Variant::backbone_only ? ReferenceMode::none
                                                          : ReferenceMode::same_category;
        eopt.sampling_steps = cfg.sampling_steps;
        eopt.seed = cfg.eval_seed;
        res.report = eval_run(res.model, eval_pairs, db, db_root, eopt);
        results.push_back(std::move(res));
    }
    return results;
}

}  // namespace uniview
