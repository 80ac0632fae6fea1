#include "uniview/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "uniview/errors.hpp"
#include "uniview/unet.hpp"

namespace fs = std::filesystem;

namespace uniview {

namespace {

constexpr double kPi = 3.14159265358979323846;

double radians(double deg) { return deg * kPi / 180.0; }

const std::array<const char*, 20> kCategoryNames = {
    "shoe",  "boot",   "chair",  "table",  "lamp",   "mug",    "bottle",
    "hat",   "clock",  "vase",   "phone",  "camera", "guitar", "drum",
    "kettle", "plate",  "basket", "mirror", "brush",  "radio"};

std::array<double, 7> family_params(Rng& rng) {
    std::array<double, 7> p{};
    for (int c = 0; c < 3; ++c) p[static_cast<std::size_t>(c)] = rng.uniform(0.15, 0.85);
    p[3] = rng.uniform(0.8, 3.2);
    p[4] = rng.uniform(0.8, 3.2);
    p[5] = rng.uniform(0.0, 2.0 * kPi);
    p[6] = rng.uniform(0.18, 0.35);
    return p;
}

double field(const std::array<double, 7>& p, int c, double u, double v) {
    return p[static_cast<std::size_t>(c)] +
           p[6] * std::sin(p[3] * kPi * u + p[5] + 0.7 * c) * std::cos(p[4] * kPi * v);
}

struct Geometry {
    double half_height;
    double u_shift;
    double v_shift;
};

Geometry pose_geometry(const ObjectSpec& spec, const CameraPose& pose) {
    const double el = radians(pose.elevation);
    return {spec.sil_half_height * (1.0 - 0.3 * std::abs(std::sin(el))),
            0.35 * std::sin(radians(pose.azimuth)), 0.45 * std::sin(el)};
}

bool inside_silhouette(const ObjectSpec& spec, const Geometry& g, double u, double v) {
    return std::pow(std::abs(u / spec.sil_half_width), spec.sil_exponent) +
               std::pow(std::abs(v / g.half_height), spec.sil_exponent) <=
           1.0;
}

void throw_io(const fs::filesystem_error& e) { throw IoError(e.what()); }

nlohmann::json pose_json(const CameraPose& p) {
    return {{"azimuth", p.azimuth},
            {"elevation", p.elevation},
            {"distance", p.distance},
            {"fov", p.fov}};
}

CameraPose pose_from_json(const nlohmann::json& j) {
    CameraPose p = make_pose(j.at("azimuth").get<double>(), j.at("elevation").get<double>());
    p.distance = j.at("distance").get<double>();
    p.fov = j.at("fov").get<double>();
    return p;
}

}  // namespace

CameraPose make_pose(double azimuth_deg, double elevation_deg) {
    if (elevation_deg < -90.0 || elevation_deg > 90.0)
        throw ConfigError("elevation outside [-90, 90]: " + std::to_string(elevation_deg));
    double a = std::fmod(azimuth_deg, 360.0);
    if (a < 0.0) a += 360.0;
    CameraPose p;
    p.azimuth = a;
    p.elevation = elevation_deg;
    return p;
}

ObjectSpec make_object(const std::string& category, int instance) {
    ObjectSpec spec;
    spec.category = category;
    spec.instance = instance;

    const std::uint64_t cat_seed = fnv1a64(category);
    Rng sil = substream(cat_seed, "silhouette");
    spec.sil_exponent = sil.uniform(1.3, 4.0);
    spec.sil_half_width = sil.uniform(0.55, 0.92);
    spec.sil_half_height = sil.uniform(0.55, 0.92);

    Rng ffam = substream(cat_seed, "front-family");
    spec.front_params = family_params(ffam);
    Rng bfam = substream(cat_seed, "back-family");
    spec.back_params = family_params(bfam);

    // Fronts vary a lot per instance; backs stay close to the family center
    // so a same-category reference is genuinely informative about the back.
    Rng fi = substream(cat_seed, "front-instance", static_cast<std::uint64_t>(instance));
    for (int c = 0; c < 3; ++c)
        spec.front_params[static_cast<std::size_t>(c)] = std::clamp(
            spec.front_params[static_cast<std::size_t>(c)] + fi.uniform(-0.15, 0.15), 0.05,
            0.95);
    spec.front_params[5] += fi.uniform(-0.6, 0.6);

    Rng bi = substream(cat_seed, "back-instance", static_cast<std::uint64_t>(instance));
    for (int c = 0; c < 3; ++c)
        spec.back_params[static_cast<std::size_t>(c)] = std::clamp(
            spec.back_params[static_cast<std::size_t>(c)] + bi.uniform(-0.04, 0.04), 0.05,
            0.95);
    spec.back_params[5] += bi.uniform(-0.1, 0.1);
    return spec;
}

double back_blend_weight(double azimuth_deg) {
    return (1.0 - std::cos(radians(azimuth_deg))) / 2.0;
}

Image render(const ObjectSpec& spec, const CameraPose& pose) {
    Image img(kRenderSize, kRenderSize, 1.0);
    const Geometry g = pose_geometry(spec, pose);
    const double w = back_blend_weight(pose.azimuth);
    for (int y = 0; y < kRenderSize; ++y) {
        const double v = (y + 0.5) / (kRenderSize / 2.0) - 1.0;
        for (int x = 0; x < kRenderSize; ++x) {
            const double u = (x + 0.5) / (kRenderSize / 2.0) - 1.0;
            if (!inside_silhouette(spec, g, u, v)) continue;
            const double ut = u + g.u_shift;
            const double vt = v + g.v_shift;
            for (int c = 0; c < 3; ++c) {
                const double fc = field(spec.front_params, c, ut, vt);
                const double bc = field(spec.back_params, c, ut, vt);
                img.at(c, y, x) = std::clamp((1.0 - w) * fc + w * bc, 0.0, 1.0);
            }
        }
    }
    return img;
}

std::vector<std::uint8_t> silhouette_mask(const ObjectSpec& spec, const CameraPose& pose) {
    std::vector<std::uint8_t> mask(kRenderSize * kRenderSize, 0);
    const Geometry g = pose_geometry(spec, pose);
    for (int y = 0; y < kRenderSize; ++y) {
        const double v = (y + 0.5) / (kRenderSize / 2.0) - 1.0;
        for (int x = 0; x < kRenderSize; ++x) {
            const double u = (x + 0.5) / (kRenderSize / 2.0) - 1.0;
            if (inside_silhouette(spec, g, u, v))
                mask[static_cast<std::size_t>(y) * kRenderSize + x] = 1;
        }
    }
    return mask;
}

bool is_degenerate(const Image& img) {
    if (img.pixels.empty()) return true;
    const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
    return (*hi - *lo) < 1e-9;
}

std::string category_name(int index) {
    if (index < 0) throw ConfigError("negative category index");
    if (index < static_cast<int>(kCategoryNames.size()))
        return kCategoryNames[static_cast<std::size_t>(index)];
    return "object" + std::to_string(index);
}

CameraPose sample_ref_pose(double view1_azimuth, Rng& rng) {
    const double rel = rng.uniform(90.0, 270.0);
    const double elev = rng.uniform(-30.0, 30.0);
    return make_pose(view1_azimuth + rel, elev);
}

GeneratedPair make_pair(const std::string& category, int train_instances, Rng& rng,
                        const std::string& id, int instance_base) {
    if (train_instances < 2)
        throw ConfigError("make_pair: need at least 2 instances per category");
    if (instance_base < kTrainInstanceBase)
        throw ConfigError("make_pair: instance base overlaps the database range");

    const int ia = instance_base + static_cast<int>(rng.uniform_int(0, train_instances));
    int ib = ia;
    while (ib == ia)
        ib = instance_base + static_cast<int>(rng.uniform_int(0, train_instances));

    GeneratedPair gp;
    gp.meta.id = id;
    gp.meta.category = category;
    gp.meta.instance_a = ia;
    gp.meta.instance_b = ib;

    const double a1 = 90.0 * static_cast<double>(rng.uniform_int(0, 4));
    gp.meta.view1 = make_pose(a1, 0.0);
    for (std::size_t k = 0; k < 6; ++k)
        gp.meta.target_poses[k] =
            make_pose(a1 + kTargetRelAzimuth[k], kTargetRelElevation[k]);
    gp.meta.ref_pose = sample_ref_pose(a1, rng);

    const ObjectSpec a = make_object(category, ia);
    const ObjectSpec b = make_object(category, ib);

    gp.pair.id = id;
    gp.pair.category = category;
    gp.pair.cond = render(a, gp.meta.view1);
    gp.pair.ref = render(b, gp.meta.ref_pose);
    std::array<Image, kNumViews> tiles;
    for (std::size_t k = 0; k < 6; ++k) tiles[k] = render(a, gp.meta.target_poses[k]);
    gp.pair.targets = image_from_tensor(*ViewGrid::assemble(tiles).canvas);
    return gp;
}

namespace {

bool pair_is_degenerate(const GeneratedPair& gp) {
    if (is_degenerate(gp.pair.cond) || is_degenerate(gp.pair.ref)) return true;
    ViewGrid grid(tensor_from_image(gp.pair.targets));
    for (int k = 0; k < kNumViews; ++k)
        if (is_degenerate(grid.tile(k))) return true;
    return false;
}

void write_pair(const fs::path& dir, const GeneratedPair& gp, std::uint64_t seed) {
    fs::create_directories(dir);
    write_png((dir / "cond.png").string(), gp.pair.cond);
    write_png((dir / "ref.png").string(), gp.pair.ref);
    ViewGrid grid(tensor_from_image(gp.pair.targets));
    for (int k = 0; k < kNumViews; ++k)
        write_png((dir / ("target_" + std::to_string(k) + ".png")).string(), grid.tile(k));

    nlohmann::json targets = nlohmann::json::array();
    for (const auto& p : gp.meta.target_poses) targets.push_back(pose_json(p));
    const nlohmann::json meta = {{"format_version", 1},
                                 {"id", gp.meta.id},
                                 {"category", gp.meta.category},
                                 {"instance_a", gp.meta.instance_a},
                                 {"instance_b", gp.meta.instance_b},
                                 {"view1", pose_json(gp.meta.view1)},
                                 {"targets", targets},
                                 {"ref_pose", pose_json(gp.meta.ref_pose)},
                                 {"generator_seed", seed}};
    std::ofstream out(dir / "meta.json", std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / "meta.json").string());
    out << meta.dump(2) << '\n';
    if (!out) throw IoError("meta write failed: " + (dir / "meta.json").string());
}

}  // namespace

DatasetSummary generate_dataset(const std::string& root, int n_pairs, int n_categories,
                                std::uint64_t seed, int train_instances,
                                int instance_base) {
    if (n_categories < 1) throw ConfigError("gen-data: need at least one category");
    if (n_pairs < 0) throw ConfigError("gen-data: negative pair count");
    if (train_instances < 2) throw ConfigError("gen-data: need at least 2 instances");

    const fs::path base(root);
    try {
        fs::create_directories(base / "pairs");
    } catch (const fs::filesystem_error& e) {
        throw_io(e);
    }

    DatasetSummary summary;
    std::map<std::uint64_t, ClassifierVerdict> stub_key;
    for (int k = 0; k < n_pairs; ++k) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "pair-%05d", k);
        const std::string id(buf);

        bool written = false;
        for (int attempt = 0; attempt < 8 && !written; ++attempt) {
            Rng rng = substream(seed, "pair",
                                static_cast<std::uint64_t>(k) * 8 +
                                    static_cast<std::uint64_t>(attempt));
            const std::string cat =
                category_name(static_cast<int>(rng.uniform_int(0, n_categories)));
            GeneratedPair gp = make_pair(cat, train_instances, rng, id, instance_base);
            if (pair_is_degenerate(gp)) {
                ++summary.dropped;
                continue;
            }
            write_pair(base / "pairs" / id, gp, seed);
            stub_key[fingerprint_image(gp.pair.cond)] = {
                cat, viewpoint_from_azimuth(gp.meta.view1.azimuth), 1.0};
            summary.pair_ids.push_back(id);
            written = true;
        }
        if (!written)
            throw ContractViolation("gen-data: degenerate renders persisted across retries");
    }

    save_stub_key((base / "stub_key.json").string(), stub_key);
    const nlohmann::json doc = {{"format_version", 1},
                                {"seed", seed},
                                {"n_categories", n_categories},
                                {"train_instances", train_instances},
                                {"instance_base", instance_base},
                                {"dropped", summary.dropped},
                                {"pair_ids", summary.pair_ids}};
    std::ofstream out(base / "pairs.json", std::ios::binary);
    if (!out) throw IoError("cannot write " + (base / "pairs.json").string());
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("dataset index write failed");
    return summary;
}

std::vector<GeneratedPair> load_dataset(const std::string& root) {
    const fs::path base(root);
    std::ifstream in(base / "pairs.json", std::ios::binary);
    if (!in) throw IoError("cannot open dataset index: " + (base / "pairs.json").string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("dataset index is not valid JSON: ") + e.what());
    }

    std::vector<GeneratedPair> out;
    try {
        for (const auto& id_json : doc.at("pair_ids")) {
            const std::string id = id_json.get<std::string>();
            const fs::path dir = base / "pairs" / id;
            std::ifstream meta_in(dir / "meta.json", std::ios::binary);
            if (!meta_in) throw IoError("missing meta.json for " + id);
            nlohmann::json meta;
            meta_in >> meta;

            GeneratedPair gp;
            gp.meta.id = meta.at("id").get<std::string>();
            gp.meta.category = meta.at("category").get<std::string>();
            gp.meta.instance_a = meta.at("instance_a").get<int>();
            gp.meta.instance_b = meta.at("instance_b").get<int>();
            gp.meta.view1 = pose_from_json(meta.at("view1"));
            const auto& targets = meta.at("targets");
            for (std::size_t k = 0; k < 6; ++k) gp.meta.target_poses[k] = pose_from_json(targets.at(k));
            gp.meta.ref_pose = pose_from_json(meta.at("ref_pose"));

            gp.pair.id = gp.meta.id;
            gp.pair.category = gp.meta.category;
            gp.pair.cond = read_png((dir / "cond.png").string());
            gp.pair.ref = read_png((dir / "ref.png").string());
            std::array<Image, kNumViews> tiles;
            for (int k = 0; k < kNumViews; ++k)
                tiles[static_cast<std::size_t>(k)] =
                    read_png((dir / ("target_" + std::to_string(k) + ".png")).string());
            gp.pair.targets = image_from_tensor(*ViewGrid::assemble(tiles).canvas);
            out.push_back(std::move(gp));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("dataset metadata is malformed: ") + e.what());
    }
    return out;
}

std::vector<ImageRecord> build_db_images(const std::string& root, int n_categories,
                                         int instances_per_cat, std::uint64_t seed) {
    (void)seed;
    if (n_categories < 1) throw ConfigError("build-db: need at least one category");
    if (instances_per_cat < 1) throw ConfigError("build-db: need at least one instance");
    if (instances_per_cat > kTrainInstanceBase)
        throw IntegrityError("build-db: instance range overlaps the training catalog");

    const fs::path base(root);
    try {
        fs::create_directories(base / "images");
    } catch (const fs::filesystem_error& e) {
        throw_io(e);
    }

    const std::array<double, 4> azimuths = {0.0, 90.0, 180.0, 270.0};
    std::vector<ImageRecord> records;
    std::map<std::uint64_t, ClassifierVerdict> stub_key;
    for (int ci = 0; ci < n_categories; ++ci) {
        const std::string cat = category_name(ci);
        for (int j = 0; j < instances_per_cat; ++j) {
            const ObjectSpec spec = make_object(cat, j);
            for (double az : azimuths) {
                const Viewpoint view = viewpoint_from_azimuth(az);
                ImageRecord r;
                r.id = "db-" + cat + "-" + std::to_string(j) + "-" + to_string(view);
                r.category = cat;
                r.viewpoint = view;
                r.instance = j;
                r.path = "images/" + r.id + ".png";
                const Image img = render(spec, make_pose(az, 0.0));
                write_png((base / r.path).string(), img);
                stub_key[fingerprint_image(img)] = {cat, view, 1.0};
                records.push_back(std::move(r));
            }
        }
    }

    save_stub_key((base / "stub_key.json").string(), stub_key);
    write_manifest((base / "manifest.tsv").string(), records);
    return records;
}

}  // namespace uniview
