#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uniview/checkpoint.hpp"
#include "uniview/errors.hpp"
#include "uniview/eval.hpp"
#include "uniview/train.hpp"

namespace fs = std::filesystem;
using namespace uniview;

namespace {

void write_json(const fs::path& path, const nlohmann::json& doc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
    std::vector<std::uint64_t> seeds;
    std::istringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            seeds.push_back(std::stoull(item));
        } catch (const std::exception&) {
            throw ConfigError("bad seed value: " + item);
        }
    }
    if (seeds.empty()) throw ConfigError("empty seed list");
    return seeds;
}

DatabaseIndex load_db(const std::string& db_root) {
    return build_index(read_manifest(db_root + "/manifest.tsv"));
}

struct GenDataArgs {
    std::string out;
    int pairs = 500;
    int categories = 20;
    int instances = 8;
    int instance_base = kTrainInstanceBase;
    std::uint64_t seed = 7;
};

void cmd_gen_data(const GenDataArgs& a) {
    const auto summary =
        generate_dataset(a.out, a.pairs, a.categories, a.seed, a.instances, a.instance_base);
    write_json(fs::path(a.out) / "run_config.json",
               {{"format_version", 1},
                {"command", "gen-data"},
                {"out", a.out},
                {"pairs", a.pairs},
                {"categories", a.categories},
                {"instances", a.instances},
                {"instance_base", a.instance_base},
                {"seed", a.seed}});
    std::cout << "wrote " << summary.pair_ids.size() << " pairs (" << summary.dropped
              << " degenerate renders dropped) to " << a.out << "\n";
}

struct BuildDbArgs {
    std::string out;
    int categories = 20;
    int instances = 10;
    std::uint64_t seed = 7;
    bool force = false;
};

void cmd_build_db(const BuildDbArgs& a) {
    const fs::path base(a.out);
    const bool has_artifacts = fs::exists(base / "images") ||
                               fs::exists(base / "stub_key.json") ||
                               fs::exists(base / "manifest.tsv");
    if (has_artifacts) {
        if (!a.force)
            throw ConfigError("output directory already holds database files; pass --force "
                              "to rebuild: " + a.out);
        fs::remove_all(base / "images");
        fs::remove(base / "stub_key.json");
        fs::remove(base / "manifest.tsv");
    }
    const auto records = build_db_images(a.out, a.categories, a.instances, a.seed);
    write_json(base / "run_config.json", {{"format_version", 1},
                                          {"command", "build-db"},
                                          {"out", a.out},
                                          {"categories", a.categories},
                                          {"instances", a.instances},
                                          {"seed", a.seed}});
    std::cout << "wrote " << records.size() << " records to " << a.out << "\n";
}

struct TrainArgs {
    std::string stage;
    std::string data;
    std::string out;
    std::string backbone;
    std::string variant = "complete";
    std::string loss_csv;
    int steps = 200;
    double lr = 1e-3;
    double clip = 1.0;
    std::uint64_t seed = 7;
};

void cmd_train(const TrainArgs& a) {
    const auto pairs = load_dataset(a.data);
    TrainOptions opt;
    opt.steps = a.steps;
    opt.lr = a.lr;
    opt.seed = a.seed;
    opt.clip_norm = a.clip;

    std::vector<double> losses;
    if (a.stage == "backbone") {
        Model m = Model::init(a.seed, Variant::backbone_only, make_schedule());
        losses = train_backbone(m, pairs, opt);
        m.net.freeze();
        save_model(a.out, m);
    } else if (a.stage == "adapter") {
        if (a.backbone.empty())
            throw ConfigError("adapter stage needs --backbone <frozen checkpoint>");
        const Model bb = load_model(a.backbone);
        Model m = upgrade_variant(bb, variant_from_string(a.variant), a.seed);
        losses = train_adapter(m, pairs, opt);
        save_model(a.out, m);
    } else {
        throw ConfigError("--stage must be backbone or adapter");
    }

    if (!a.loss_csv.empty()) write_loss_csv(a.loss_csv, losses);
    write_json(a.out + ".config.json", {{"format_version", 1},
                                        {"command", "train"},
                                        {"stage", a.stage},
                                        {"data", a.data},
                                        {"out", a.out},
                                        {"backbone", a.backbone},
                                        {"variant", a.stage == "adapter" ? a.variant
                                                                         : "backbone_only"},
                                        {"steps", a.steps},
                                        {"lr", a.lr},
                                        {"clip", a.clip},
                                        {"seed", a.seed}});
    std::cout << "trained " << losses.size() << " steps; final loss "
              << (losses.empty() ? 0.0 : losses.back()) << "; checkpoint " << a.out << "\n";
}

struct InferArgs {
    std::string checkpoint;
    std::string cond;
    std::string out;
    std::string ref;
    std::string db;
    std::string stub_key;
    std::string classifier = "stub";
    std::string category;
    std::string viewpoint;
    std::int64_t steps = 50;
    std::uint64_t seed = 7;
    bool allow_no_ref = false;
    bool random_pick = false;
};

void cmd_infer(const InferArgs& a) {
    const Model m = load_model(a.checkpoint);
    const Image cond = read_png(a.cond);
    fs::create_directories(a.out);

    nlohmann::json provenance = {{"format_version", 1}, {"checkpoint", a.checkpoint}};
    Image ref;
    bool have_ref = false;

    if (!m.has_adapter()) {
        if (!a.ref.empty())
            throw ConfigError("a backbone-only checkpoint cannot consume --ref");
        provenance["reference"] = {{"source", "none"},
                                   {"reason", "backbone-only checkpoint"}};
    } else if (!a.ref.empty()) {
        ref = read_png(a.ref);
        have_ref = true;
        provenance["reference"] = {{"source", "user-supplied"}, {"path", a.ref}};
    } else {
        if (a.db.empty())
            throw ConfigError("retrieval needs --db (or pass --ref explicitly)");
        try {
            const DatabaseIndex idx = load_db(a.db);

            std::unique_ptr<Classifier> client;
            if (a.classifier == "stub") {
                StubClassifier stub = StubClassifier::load(a.db + "/stub_key.json");
                if (!a.stub_key.empty()) {
                    const StubClassifier extra = StubClassifier::load(a.stub_key);
                    for (const auto& [fp, verdict] : extra.key) stub.key[fp] = verdict;
                }
                client = std::make_unique<StubClassifier>(std::move(stub));
            } else if (a.classifier == "remote") {
                client = std::make_unique<RemoteClassifier>(RemoteClassifier::from_environment());
            } else if (a.classifier == "fixed") {
                if (a.category.empty() || a.viewpoint.empty())
                    throw ConfigError("fixed classifier needs --category and --viewpoint");
                client = std::make_unique<FixedClassifier>(ClassifierVerdict{
                    a.category, viewpoint_from_string(a.viewpoint), 1.0});
            } else {
                throw ConfigError("--classifier must be stub, remote, or fixed");
            }

            RetrievalOptions ropt;
            ropt.random_pick = a.random_pick;
            ropt.seed = a.seed;
            const ClassifierVerdict verdict = classify(cond, *client, idx.categories());
            const ImageRecord rec = retrieve_reference(cond, idx, *client, ropt);
            ref = read_png(a.db + "/" + rec.path);
            have_ref = true;
            provenance["reference"] = {{"source", "retrieved"},
                                       {"record", rec.id},
                                       {"path", rec.path},
                                       {"category", verdict.category},
                                       {"viewpoint", to_string(verdict.viewpoint)},
                                       {"confidence", verdict.confidence},
                                       {"random_pick", a.random_pick}};
        } catch (const RetrievalError& e) {
            if (!a.allow_no_ref) throw;
            provenance["reference"] = {{"source", "none"}, {"reason", e.what()}};
        } catch (const ProtocolError& e) {
            if (!a.allow_no_ref) throw;
            provenance["reference"] = {{"source", "none"}, {"reason", e.what()}};
        }
    }

    ViewGrid grid;
    if (have_ref) {
        grid = sample(m, cond, &ref, a.steps, a.seed);
    } else {
        grid = sample_with_signals(m, cond, nullptr, a.steps, a.seed);
    }
    for (int v = 0; v < kNumViews; ++v)
        write_png((fs::path(a.out) / ("view_" + std::to_string(v) + ".png")).string(),
                  grid.tile(v));

    provenance["sampling"] = {{"steps", a.steps}, {"seed", a.seed}};
    write_json(fs::path(a.out) / "provenance.json", provenance);
    write_json(fs::path(a.out) / "run_config.json",
               {{"format_version", 1},
                {"command", "infer"},
                {"checkpoint", a.checkpoint},
                {"cond", a.cond},
                {"ref", a.ref},
                {"db", a.db},
                {"classifier", a.classifier},
                {"steps", a.steps},
                {"seed", a.seed},
                {"allow_no_ref", a.allow_no_ref},
                {"random_pick", a.random_pick}});
    std::cout << "wrote " << kNumViews << " views to " << a.out << "\n";
}

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    std::string db;
    std::string out;
    std::string modes = "same_category";
    std::int64_t steps = 8;
    std::uint64_t seed = 7;
    int limit = 0;
};

void cmd_eval(const EvalArgs& a) {
    const Model m = load_model(a.checkpoint);
    auto pairs = load_dataset(a.data);
    if (a.limit > 0 && static_cast<std::size_t>(a.limit) < pairs.size())
        pairs.resize(static_cast<std::size_t>(a.limit));
    const DatabaseIndex idx = load_db(a.db);
    fs::create_directories(a.out);

    std::vector<std::string> written;
    std::istringstream ss(a.modes);
    std::string mode_name;
    while (std::getline(ss, mode_name, ',')) {
        if (mode_name.empty()) continue;
        EvalOptions opt;
        opt.mode = reference_mode_from_string(mode_name);
        opt.sampling_steps = a.steps;
        opt.seed = a.seed;
        const MetricReport rep = eval_run(m, pairs, idx, a.db, opt);
        const std::string path =
            (fs::path(a.out) / ("report_" + mode_name + ".json")).string();
        write_report(path, rep);
        written.push_back(path);
        std::cout << mode_name << ": psnr " << rep.psnr.mean << " ssim " << rep.ssim.mean
                  << " -> " << path << "\n";
    }
    if (written.empty()) throw ConfigError("--mode selected nothing");

    write_json(fs::path(a.out) / "run_config.json", {{"format_version", 1},
                                                     {"command", "eval"},
                                                     {"checkpoint", a.checkpoint},
                                                     {"data", a.data},
                                                     {"db", a.db},
                                                     {"modes", a.modes},
                                                     {"steps", a.steps},
                                                     {"seed", a.seed},
                                                     {"limit", a.limit},
                                                     {"reports", written}});
}

struct AblateArgs {
    std::string backbone;
    std::string data;
    std::string eval_data;
    std::string db;
    std::string out;
    std::string seeds = "7";
    int adapter_steps = 200;
    double lr = 1e-3;
    std::int64_t steps = 8;
    int limit = 0;
};

void cmd_ablate(const AblateArgs& a) {
    const Model bb = load_model(a.backbone);
    const auto train_pairs = load_dataset(a.data);
    auto eval_pairs = load_dataset(a.eval_data);
    if (a.limit > 0 && static_cast<std::size_t>(a.limit) < eval_pairs.size())
        eval_pairs.resize(static_cast<std::size_t>(a.limit));
    const DatabaseIndex idx = load_db(a.db);
    fs::create_directories(a.out);

    const std::vector<Variant> variants = {Variant::backbone_only, Variant::base_adapter_only,
                                           Variant::plus_meta_controller, Variant::complete};
    std::vector<std::string> written;
    for (const std::uint64_t seed : parse_seed_list(a.seeds)) {
        std::vector<AblationConfig> configs;
        for (Variant v : variants) {
            AblationConfig cfg;
            cfg.variant = v;
            cfg.adapter_steps = a.adapter_steps;
            cfg.lr = a.lr;
            cfg.sampling_steps = a.steps;
            cfg.train_seed = seed;
            cfg.eval_seed = seed;
            configs.push_back(cfg);
        }
        const auto results = ablation_suite(bb, configs, train_pairs, eval_pairs, idx, a.db);
        for (const auto& res : results) {
            const std::string path =
                (fs::path(a.out) /
                 ("report_seed" + std::to_string(seed) + "_" + res.report.variant + ".json"))
                    .string();
            write_report(path, res.report);
            written.push_back(path);
            std::cout << "seed " << seed << " " << res.report.variant << ": psnr "
                      << res.report.psnr.mean << "\n";
        }
    }

    write_json(fs::path(a.out) / "run_config.json", {{"format_version", 1},
                                                     {"command", "ablate"},
                                                     {"backbone", a.backbone},
                                                     {"data", a.data},
                                                     {"eval_data", a.eval_data},
                                                     {"db", a.db},
                                                     {"seeds", a.seeds},
                                                     {"adapter_steps", a.adapter_steps},
                                                     {"lr", a.lr},
                                                     {"steps", a.steps},
                                                     {"limit", a.limit},
                                                     {"reports", written}});
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reference-guided novel-view synthesis pipeline"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* sc_gen = app.add_subcommand("gen-data", "Generate a paired multi-view dataset");
    sc_gen->add_option("--out", gen.out, "Dataset directory")->required();
    sc_gen->add_option("--pairs", gen.pairs, "Number of training pairs");
    sc_gen->add_option("--categories", gen.categories, "Number of categories");
    sc_gen->add_option("--instances", gen.instances, "Instances per category");
    sc_gen->add_option("--instance-base", gen.instance_base, "First object instance index");
    sc_gen->add_option("--seed", gen.seed, "Generator seed");

    BuildDbArgs db;
    auto* sc_db = app.add_subcommand("build-db", "Render the reference image database");
    sc_db->add_option("--out", db.out, "Database directory")->required();
    sc_db->add_option("--categories", db.categories, "Number of categories");
    sc_db->add_option("--instances", db.instances, "Instances per category");
    sc_db->add_option("--seed", db.seed, "Recorded seed");
    sc_db->add_flag("--force", db.force, "Rebuild over an existing or stale directory");

    TrainArgs tr;
    auto* sc_tr = app.add_subcommand("train", "Train the backbone or the adapter stage");
    sc_tr->add_option("--stage", tr.stage, "backbone or adapter")->required();
    sc_tr->add_option("--data", tr.data, "Training dataset directory")->required();
    sc_tr->add_option("--out", tr.out, "Checkpoint path")->required();
    sc_tr->add_option("--backbone", tr.backbone, "Frozen backbone checkpoint (adapter stage)");
    sc_tr->add_option("--variant", tr.variant,
                      "complete, base_adapter_only, or plus_meta_controller");
    sc_tr->add_option("--steps", tr.steps, "Optimization steps");
    sc_tr->add_option("--lr", tr.lr, "Learning rate");
    sc_tr->add_option("--clip", tr.clip, "Gradient norm clip, 0 disables");
    sc_tr->add_option("--seed", tr.seed, "Training seed");
    sc_tr->add_option("--loss-csv", tr.loss_csv, "Write per-step losses to this CSV");

    InferArgs inf;
    auto* sc_inf = app.add_subcommand("infer", "Generate six views for a condition image");
    sc_inf->add_option("--checkpoint", inf.checkpoint, "Model checkpoint")->required();
    sc_inf->add_option("--cond", inf.cond, "Condition image (PNG)")->required();
    sc_inf->add_option("--out", inf.out, "Output directory")->required();
    sc_inf->add_option("--ref", inf.ref, "Reference image; skips retrieval");
    sc_inf->add_option("--db", inf.db, "Reference database directory");
    sc_inf->add_option("--stub-key", inf.stub_key, "Extra stub-classifier key table");
    sc_inf->add_option("--classifier", inf.classifier, "stub, remote, or fixed");
    sc_inf->add_option("--category", inf.category, "Fixed-classifier category");
    sc_inf->add_option("--viewpoint", inf.viewpoint, "Fixed-classifier viewpoint");
    sc_inf->add_option("--steps", inf.steps, "Sampling steps");
    sc_inf->add_option("--seed", inf.seed, "Sampling seed");
    sc_inf->add_flag("--allow-no-ref", inf.allow_no_ref,
                     "Fall back to reference-free generation when retrieval fails");
    sc_inf->add_flag("--random-pick", inf.random_pick, "Seeded random pick from the bucket");

    EvalArgs ev;
    auto* sc_ev = app.add_subcommand("eval", "Score a checkpoint on a dataset");
    sc_ev->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required();
    sc_ev->add_option("--data", ev.data, "Evaluation dataset directory")->required();
    sc_ev->add_option("--db", ev.db, "Reference database directory")->required();
    sc_ev->add_option("--out", ev.out, "Report directory")->required();
    sc_ev->add_option("--mode", ev.modes,
                      "Comma list of same_category, identical, irrelevant, none");
    sc_ev->add_option("--steps", ev.steps, "Sampling steps");
    sc_ev->add_option("--seed", ev.seed, "Evaluation seed");
    sc_ev->add_option("--limit", ev.limit, "Evaluate only the first N pairs");

    AblateArgs ab;
    auto* sc_ab = app.add_subcommand("ablate", "Train and score all four variants");
    sc_ab->add_option("--backbone", ab.backbone, "Frozen backbone checkpoint")->required();
    sc_ab->add_option("--data", ab.data, "Training dataset directory")->required();
    sc_ab->add_option("--eval-data", ab.eval_data, "Held-out dataset directory")->required();
    sc_ab->add_option("--db", ab.db, "Reference database directory")->required();
    sc_ab->add_option("--out", ab.out, "Report directory")->required();
    sc_ab->add_option("--seeds", ab.seeds, "Comma list of seeds");
    sc_ab->add_option("--adapter-steps", ab.adapter_steps, "Adapter steps per variant");
    sc_ab->add_option("--lr", ab.lr, "Learning rate");
    sc_ab->add_option("--steps", ab.steps, "Sampling steps");
    sc_ab->add_option("--limit", ab.limit, "Evaluate only the first N pairs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sc_gen->parsed()) cmd_gen_data(gen);
        if (sc_db->parsed()) cmd_build_db(db);
        if (sc_tr->parsed()) cmd_train(tr);
        if (sc_inf->parsed()) cmd_infer(inf);
        if (sc_ev->parsed()) cmd_eval(ev);
        if (sc_ab->parsed()) cmd_ablate(ab);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return 0;
}
