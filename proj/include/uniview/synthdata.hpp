#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "uniview/image.hpp"
#include "uniview/pipeline.hpp"
#include "uniview/retrieval.hpp"
#include "uniview/rng.hpp"

namespace uniview {

inline constexpr int kRenderSize = 32;
inline constexpr double kFovDegrees = 49.13;
// Training objects live at instance >= 100; database objects below it.
inline constexpr int kTrainInstanceBase = 100;

inline constexpr std::array<double, 6> kTargetRelAzimuth = {30, 90, 150, 210, 270, 330};
inline constexpr std::array<double, 6> kTargetRelElevation = {20, -10, 20, -10, 20, -10};

struct CameraPose {
    double azimuth = 0.0;    // degrees in [0, 360)
    double elevation = 0.0;  // degrees in [-90, 90]
    double distance = 1.0;
    double fov = kFovDegrees;
};

CameraPose make_pose(double azimuth_deg, double elevation_deg);

// Appearance parameters: a category-level family plus instance perturbation.
// Back parameters vary little within a category, so same-category backs
// correlate; fronts vary more.
struct ObjectSpec {
    std::string category;
    int instance = 0;
    double sil_exponent = 2.0;
    double sil_half_width = 0.8;
    double sil_half_height = 0.8;
    std::array<double, 7> front_params{};  // r, g, b, freq_u, freq_v, phase, amp
    std::array<double, 7> back_params{};
};

ObjectSpec make_object(const std::string& category, int instance);

// 2.5-D painter: superellipse silhouette on a pure white background, texture
// blended between the front and back fields by azimuth.
Image render(const ObjectSpec& spec, const CameraPose& pose);

// 1 inside the object silhouette, 0 on background; row-major [h][w].
std::vector<std::uint8_t> silhouette_mask(const ObjectSpec& spec, const CameraPose& pose);

// Fraction of the visible surface explained by back_params, in [0,1];
// exactly 0 at azimuth 0 and exactly 1 at azimuth 180.
double back_blend_weight(double azimuth_deg);

bool is_degenerate(const Image& img);

std::string category_name(int index);

struct PairMeta {
    std::string id;
    std::string category;
    int instance_a = 0;
    int instance_b = 0;
    CameraPose view1;
    std::array<CameraPose, 6> target_poses;
    CameraPose ref_pose;
};

struct GeneratedPair {
    TrainPair pair;
    PairMeta meta;
};

// Reference pose relative to view 1: azimuth offset in [90, 270], elevation
// in [-30, 30].
CameraPose sample_ref_pose(double view1_azimuth, Rng& rng);

GeneratedPair make_pair(const std::string& category, int train_instances, Rng& rng,
                        const std::string& id, int instance_base = kTrainInstanceBase);

struct DatasetSummary {
    std::vector<std::string> pair_ids;
    int dropped = 0;
};

// Layout: <root>/pairs/<id>/{cond.png, ref.png, target_0..5.png, meta.json},
// plus stub_key.json and pairs.json at the root. A nonstandard instance_base
// carves out a held-out object range (still above the database instances).
DatasetSummary generate_dataset(const std::string& root, int n_pairs, int n_categories,
                                std::uint64_t seed, int train_instances = 8,
                                int instance_base = kTrainInstanceBase);

std::vector<GeneratedPair> load_dataset(const std::string& root);

// Four canonical views per instance; images under <root>/images, manifest
// written last as the completion marker.
std::vector<ImageRecord> build_db_images(const std::string& root, int n_categories,
                                         int instances_per_cat, std::uint64_t seed);

}  // namespace uniview
