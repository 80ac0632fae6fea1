#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uniview/checkpoint.hpp"
#include "uniview/metrics.hpp"
#include "uniview/retrieval.hpp"
#include "uniview/synthdata.hpp"
#include "uniview/train.hpp"

namespace uniview {

// How the reference image is chosen for each evaluation pair. identical uses
// the condition object's own complementary view, irrelevant a seeded random
// record from a different category, none runs the sampler with null signals.
enum class ReferenceMode { same_category, identical, irrelevant, none };

std::string to_string(ReferenceMode m);
ReferenceMode reference_mode_from_string(const std::string& s);

struct EvalOptions {
    ReferenceMode mode = ReferenceMode::same_category;
    std::int64_t sampling_steps = 8;
    std::uint64_t seed = 0;
};

struct ViewMetrics {
    std::string pair_id;
    int view = 0;
    double psnr = 0.0;
    double ssim = 0.0;
    // Views whose relative azimuth lies in [90, 270] look at the side hidden
    // from the condition camera; PSNR over that silhouette is reported extra.
    bool occluded = false;
    double occluded_psnr = 0.0;
};

struct Aggregate {
    double mean = 0.0;
    double stddev = 0.0;
    std::int64_t count = 0;
};

struct MetricReport {
    std::string variant;
    std::string mode;
    std::uint64_t seed = 0;
    std::int64_t sampling_steps = 0;
    std::int64_t n_pairs = 0;
    std::uint64_t db_checksum = 0;
    std::string config_fingerprint;
    std::vector<ViewMetrics> per_view;
    Aggregate psnr;
    Aggregate ssim;
    Aggregate occluded_psnr;
};

Aggregate aggregate_of(const std::vector<double>& values);

// Samples every pair under the chosen reference mode and scores each view
// against ground truth. The database supplies same_category and irrelevant
// references; db_root locates its image files.
MetricReport eval_run(const Model& m, const std::vector<GeneratedPair>& pairs,
                      const DatabaseIndex& db, const std::string& db_root,
                      const EvalOptions& opts);

// Report JSON carries the config fingerprint, the omitted-metric stamp, the
// per-view table, and aggregates recomputable from it.
std::string report_to_json(const MetricReport& r);
void write_report(const std::string& path, const MetricReport& r);

struct AblationConfig {
    Variant variant = Variant::complete;
    int adapter_steps = 0;
    double lr = 1e-3;
    std::int64_t sampling_steps = 8;
    std::uint64_t train_seed = 0;
    std::uint64_t eval_seed = 0;
};

struct AblationResult {
    AblationConfig config;
    Model model;
    MetricReport report;
};

// Grows each variant from the same frozen backbone under one shared budget
// and evaluates all of them on the same held-out set. Configs must differ in
// nothing but the variant.
std::vector<AblationResult> ablation_suite(const Model& frozen_backbone,
                                           const std::vector<AblationConfig>& configs,
                                           const std::vector<GeneratedPair>& train_pairs,
                                           const std::vector<GeneratedPair>& eval_pairs,
                                           const DatabaseIndex& db,
                                           const std::string& db_root);

}  // namespace uniview
