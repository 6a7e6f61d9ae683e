// Command-line frontend for the LCZ mapping toolkit.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lcz/lcz.hpp"

namespace {

/// Shared flags registered on every subcommand. Presence is queried through
/// CLI11 so file-supplied values survive unless the flag was actually given.
struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    bool deterministic = false;
    int threads = 1;
};

void add_common_flags(CLI::App* sub, CommonOpts& c) {
    sub->add_option("--config", c.config_path, "JSON run-config file");
    sub->add_option("--seed", c.seed, "global RNG seed (overrides the config file)");
    sub->add_flag("--deterministic", c.deterministic, "pin the sequential reference execution path");
    sub->add_option("--threads", c.threads,
                    "worker thread budget; the reference implementation always runs sequentially");
}

/// Precedence: command line > config file > built-in defaults.
lcz::RunConfig resolve_config(const CLI::App* sub, const CommonOpts& c) {
    lcz::RunConfig cfg;
    if (sub->count("--config") > 0) cfg = lcz::load_run_config(c.config_path);
    if (sub->count("--seed") > 0) cfg.seed = c.seed;
    if (sub->count("--deterministic") > 0) cfg.deterministic = true;
    if (sub->count("--threads") > 0) cfg.threads = c.threads;
    lcz::require(cfg.threads >= 1, lcz::ErrorKind::invalid_argument, "threads must be at least 1");
    std::cout << "config " << lcz::run_config_to_json(cfg).dump() << "\n";
    return cfg;
}

std::string json_text(const lcz::json& j) { return j.dump(2) + "\n"; }

/// Dataset subsets for training: tagged sets yield their train/val splits,
/// an untagged set trains on everything (train-rf only).
bool has_tags(const lcz::SampleSet& set) {
    for (lcz::SplitTag t : set.split_tags)
        if (t != lcz::SplitTag::unset) return true;
    return false;
}

lcz::SplitTag parse_split(const std::string& name) {
    if (name == "train") return lcz::SplitTag::train;
    if (name == "val") return lcz::SplitTag::val;
    if (name == "test") return lcz::SplitTag::test;
    lcz::fail(lcz::ErrorKind::invalid_argument, "unknown split name: " + name);
}

/// A forest file is a JSON document; a network file starts with the LCZNN
/// magic. Dispatch on the leading bytes.
bool is_network_file(const std::string& path) {
    const std::vector<std::uint8_t> bytes = lcz::read_file_bytes(path);
    const std::string magic = "LCZNN";
    if (bytes.size() < magic.size()) return false;
    return std::equal(magic.begin(), magic.end(), bytes.begin());
}

struct AnyModel {
    bool forest = false;
    lcz::RandomForest rf;
    lcz::LoadedModel net;
};

AnyModel load_any_model(const std::string& path) {
    AnyModel m;
    if (is_network_file(path)) {
        m.net = lcz::load_model(path);
    } else {
        m.forest = true;
        m.rf = lcz::load_forest(path);
    }
    return m;
}

lcz::BatchPredictor any_predictor(AnyModel& m) {
    if (m.forest) return lcz::make_predictor(m.rf);
    return lcz::make_predictor(m.net);
}

void print_epoch(const lcz::EpochStats& s) {
    std::printf("epoch %d train_loss %.6f train_acc %.4f val_loss %.6f val_acc %.4f\n", s.epoch,
                s.train_loss, s.train_accuracy, s.val_loss, s.val_accuracy);
    std::fflush(stdout);
}

void register_synth(CLI::App& app) {
    auto common = std::make_shared<CommonOpts>();
    auto out = std::make_shared<std::string>();
    CLI::App* sub = app.add_subcommand("synth", "generate a synthetic labeled scene");
    add_common_flags(sub, *common);
    sub->add_option("--out", *out, "output directory for the scene rasters and points")->required();
    sub->callback([sub, common, out]() {
        lcz::RunConfig cfg = resolve_config(sub, *common);
        lcz::ScenarioSpec spec = cfg.resolved_scenario();
        lcz::SceneData scene = lcz::generate_scene(spec);
        lcz::save_scene(scene, *out);
        std::printf("synth wrote %s (%dx%d px, %zu points)\n", out->c_str(), spec.scene_size,
                    spec.scene_size, scene.points.size());
    });
}

void register_ndvi(CLI::App& app) {
    auto common = std::make_shared<CommonOpts>();
    auto in = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto nir = std::make_shared<int>(0);
    auto red = std::make_shared<int>(0);
    CLI::App* sub = app.add_subcommand("ndvi", "compute an NDVI raster from a multispectral grid");
    add_common_flags(sub, *common);
    sub->add_option("--in", *in, "input raster header (.rawg)")->required();
    sub->add_option("--out", *out, "output raster header (.rawg)")->required();
    sub->add_option("--nir-band", *nir, "near-infrared band index (0-based)");
    sub->add_option("--red-band", *red, "red band index (0-based)");
    sub->callback([sub, common, in, out, nir, red]() {
        lcz::RunConfig cfg = resolve_config(sub, *common);
        const int a = sub->count("--nir-band") ? *nir : cfg.nir_band;
        const int b = sub->count("--red-band") ? *red : cfg.red_band;
        lcz::RasterGrid grid = lcz::load_raster(*in);
        lcz::RasterGrid ndvi = lcz::compute_ndvi(grid, a, b);
        lcz::save_raster(ndvi, *out);
        std::printf("ndvi wrote %s (nir %d, red %d)\n", out->c_str(), a, b);
    });
}

struct LabelAssistOpts {
    std::string basemap, ndvi, height, building_fraction, impervious, water, tree;
    std::string points, out;
    int size = 0;
};

void register_label_assist(CLI::App& app) {
    auto common = std::make_shared<CommonOpts>();
    auto o = std::make_shared<LabelAssistOpts>();
    CLI::App* sub = app.add_subcommand("label-assist", "label points with the decision rules");
    add_common_flags(sub, *common);
    sub->add_option("--basemap", o->basemap, "multispectral raster header")->required();
    sub->add_option("--ndvi", o->ndvi, "NDVI raster header")->required();
    sub->add_option("--height", o->height, "building height raster header")->required();
    sub->add_option("--building-fraction", o->building_fraction, "building fraction raster header")
        ->required();
    sub->add_option("--impervious", o->impervious, "impervious fraction raster header")->required();
    sub->add_option("--water", o->water, "water mask raster header")->required();
    sub->add_option("--tree", o->tree, "tree fraction raster header (optional)");
    sub->add_option("--points", o->points, "input points CSV (labels ignored)")->required();
    sub->add_option("--out", o->out, "output labeled points CSV")->required();
    sub->add_option("--size", o->size, "square window edge length in pixels");
    sub->callback([sub, common, o]() {
        lcz::RunConfig cfg = resolve_config(sub, *common);
        const int size = sub->count("--size") ? o->size : cfg.patch_size;
        lcz::RasterGrid basemap = lcz::load_raster(o->basemap);
        lcz::RasterGrid ndvi = lcz::load_raster(o->ndvi);
        lcz::RasterGrid height = lcz::load_raster(o->height);
        lcz::RasterGrid bf = lcz::load_raster(o->building_fraction);
        lcz::RasterGrid imp = lcz::load_raster(o->impervious);
        lcz::RasterGrid water = lcz::load_raster(o->water);
        lcz::RasterGrid tree;
        const bool with_tree = sub->count("--tree") > 0;
        if (with_tree) tree = lcz::load_raster(o->tree);
        std::vector<lcz::LabeledPoint> in_points = lcz::load_points(o->points);
        std::vector<lcz::LabeledPoint> out_points;
        std::size_t skipped = 0;
        for (const lcz::LabeledPoint& p : in_points) {
            try {
                const auto center = lcz::map_point_to_pixel(basemap, p.x, p.y);
                lcz::SiteSummary site =
                    lcz::summarize_site(basemap, ndvi, height, bf, imp, water, center, size,
                                        with_tree ? &tree : nullptr);
                lcz::RuleResult r = lcz::rule_assist_label(site, cfg.rules);
                out_points.push_back({p.x, p.y, r.label, "rule:" + r.fired_rule});
            } catch (const lcz::Error& e) {
                if (e.kind() != lcz::ErrorKind::out_of_bounds && e.kind() != lcz::ErrorKind::nodata)
                    throw;
                ++skipped;
                std::fprintf(stderr, "skip point (%g, %g): %s\n", p.x, p.y, e.what());
            }
        }
        lcz::save_points(out_points, o->out);
        std::printf("label-assist labeled %zu points (%zu skipped)\n", out_points.size(), skipped);
    });
}

void register_sample(CLI::App& app) {
    auto common = std::make_shared<CommonOpts>();
    auto grid_path = std::make_shared<std::string>();
    auto points_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto size = std::make_shared<int>(0);
    CLI::App* sub = app.add_subcommand("sample", "cut labeled patches out of a raster");
    add_common_flags(sub, *common);
    sub->add_option("--grid", *grid_path, "input raster header")->required();
    sub->add_option("--points", *points_path, "labeled points CSV")->required();
    sub->add_option("--out", *out, "output dataset file")->required();
    sub->add_option("--size", *size, "patch edge length in pixels");
    sub->callback([sub, common, grid_path, points_path, out, size]() {
        lcz::RunConfig cfg = resolve_config(sub, *common);
        const int patch_size = sub->count("--size") ? *size : cfg.patch_size;
        lcz::RasterGrid grid = lcz::load_raster(*grid_path);
        std::vector<lcz::LabeledPoint> points = lcz::load_points(*points_path);
        lcz::BuildResult built = lcz::build_dataset(grid, points, patch_size);
        for (const lcz::SkippedPoint& s : built.skipped) {
            const lcz::LabeledPoint& p = points[s.point_index];
            std::fprintf(stderr, "skip point (%g, %g): %s\n", p.x, p.y, s.reason.c_str());
        }
        lcz::save_dataset(built.set, *out);
        std::printf("sample wrote %zu patches (%zu skipped)\n", built.set.size(), built.skipped.size());
    });
}

void register_augment(CLI::App& app) {
    auto common = std::make_shared<CommonOpts>();
    auto in = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto target = std::make_shared<int>(0);
    CLI::App* sub = app.add_subcommand("augment", "rebalance classes with dihedral transforms");
    add_common_flags(sub, *common);
    sub->add_option("--in", *in, "input dataset file")->required();
    sub->add_option("--out", *out, "output dataset file")->required();
    sub->add_option("--target", *target, "samples per class (0 grows to the largest class)");
    sub->callback([sub, common, in, out, target]() {
        lcz::RunConfig cfg = resolve_config(sub, *common);
        int t = sub->count("--target") ? *target : cfg.augment_target;
        lcz::SampleSet set = lcz::load_dataset(*in);
        if (t == 0) {
            const auto hist = set.histogram();
            for (int c = 0; c < static_cast<int>(lcz::kNumClasses); ++c) t = std::max(t, hist[c]);
        }
        lcz::require(t >= 1, lcz::ErrorKind::invalid_argument, "augment target must be at least 1");
        lcz::SampleSet aug = lcz::augment_rebalance(set, t, cfg.seed);
        lcz::save_dataset(aug, *out);
        std::printf("augment wrote %zu samples (target %d per class)\n", aug.size(), t);
    });
}

void register_split(CLI::App& app) {
    auto common = std::make_shared<CommonOpts>();
    auto in = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto ratios = std::make_shared<std::vector<double>>();
    CLI::App* sub = app.add_subcommand("split", "assign stratified train/val/test tags");
    add_common_flags(sub, *common);
    sub->add_option("--in", *in, "input dataset file")->required();
    sub->add_option("--out", *out, "output dataset file")->required();
    sub->add_option("--ratios", *ratios, "train,val,test fractions")->delimiter(',')->expected(3);
    sub->callback([sub, common, in, out, ratios]() {
        lcz::RunConfig cfg = resolve_config(sub, *common);
        std::array<double, 3> r = cfg.split_ratios;
        if (sub->count("--ratios")) r = {(*ratios)[0], (*ratios)[1], (*ratios)[2]};
        lcz::SampleSet set = lcz::load_dataset(*in);
        lcz::SampleSet tagged = lcz::stratified_split(set, r, cfg.seed);
        lcz::save_dataset(tagged, *out);
        const auto count = [&](lcz::SplitTag t) {
            std::size_t n = 0;
            for (lcz::SplitTag tag : tagged.split_tags)
                if (tag == t) ++n;
            return n;
        };
        std::printf("split wrote %zu samples (train %zu, val %zu, test %zu)\n", tagged.size(),
                    count(lcz::SplitTag::train), count(lcz::SplitTag::val),
                    count(lcz::SplitTag::test));
    });
}

void register_train_rf(CLI::App& app) {
    auto common = std::make_shared<CommonOpts>();
    auto data = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    CLI::App* sub = app.add_subcommand("train-rf", "train the random forest");
    add_common_flags(sub, *common);
    sub->add_option("--data", *data, "input dataset file")->required();
    sub->add_option("--out", *out, "output forest file")->required();
    sub->callback([sub, common, data, out]() {
        lcz::RunConfig cfg = resolve_config(sub, *common);
        lcz::SampleSet set = lcz::load_dataset(*data);
        lcz::SampleSet train = has_tags(set) ? set.subset(lcz::SplitTag::train) : set;
        lcz::require(!train.empty(), lcz::ErrorKind::invalid_argument,
                     "dataset has no training samples");
        lcz::RandomForest forest = lcz::train_rf(train, cfg.rf, cfg.seed);
        lcz::save_forest(forest, *out);
        std::printf("train-rf wrote %s (%d trees, %zu samples)\n", out->c_str(), cfg.rf.n_trees,
                    train.size());
    });
}

void train_network(const CLI::App* sub, const CommonOpts& common, const std::string& data,
                   const std::string& out, const char* verb) {
    lcz::RunConfig cfg = resolve_config(sub, common);
    lcz::SampleSet set = lcz::load_dataset(data);
    lcz::SampleSet train = set.subset(lcz::SplitTag::train);
    lcz::SampleSet val = set.subset(lcz::SplitTag::val);
    lcz::require(!train.empty() && !val.empty(), lcz::ErrorKind::invalid_argument,
                 "dataset needs train and val tags; run split first");
    lcz::MscnnConfig mc = cfg.model;
    mc.in_channels = set.n_channels;
    mc.input_size = set.patch_size;
    lcz::MscnnModel<float> model;
    model.init(mc, cfg.seed);
    lcz::TrainResult result = lcz::train_mscnn<float>(
        model, train, val, cfg.resolved_train(),
        [](const lcz::EpochStats& s, lcz::MscnnModel<float>&) {
            print_epoch(s);
            return false;
        });
    lcz::save_mscnn(out, model);
    std::printf("%s wrote %s (best epoch %d of %zu%s)\n", verb, out.c_str(), result.best_epoch,
                result.history.size(), result.early_stopped ? ", early stop" : "");
}

void register_train_cnn(CLI::App& app, const char* name, const char* help) {
    auto common = std::make_shared<CommonOpts>();
    auto data = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    CLI::App* sub = app.add_subcommand(name, help);
    add_common_flags(sub, *common);
    sub->add_option("--data", *data, "input dataset file (train and val tags required)")->required();
    sub->add_option("--out", *out, "output model file")->required();
    std::string verb = name;
    sub->callback([sub, common, data, out, verb]() {
        train_network(sub, *common, *data, *out, verb.c_str());
    });
}

void register_transfer(CLI::App& app) {
    auto common = std::make_shared<CommonOpts>();
    auto backbone_path = std::make_shared<std::string>();
    auto data = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto freeze = std::make_shared<int>(0);
    auto hidden = std::make_shared<int>(0);
    CLI::App* sub = app.add_subcommand("transfer", "fine-tune new heads on a pretrained backbone");
    add_common_flags(sub, *common);
    sub->add_option("--backbone", *backbone_path, "pretrained network file")->required();
    sub->add_option("--data", *data, "target dataset file (train and val tags required)")->required();
    sub->add_option("--out", *out, "output model file")->required();
    sub->add_option("--freeze-through", *freeze,
                    "-1 trains everything, 0 freezes the multi-scale stage, k freezes through block k");
    sub->add_option("--hidden", *hidden, "width of the new hidden head");
    sub->callback([sub, common, backbone_path, data, out, freeze, hidden]() {
        lcz::RunConfig cfg = resolve_config(sub, *common);
        lcz::MscnnModel<float> backbone = lcz::load_mscnn(*backbone_path);
        const int ft = sub->count("--freeze-through")
                           ? *freeze
                           : (cfg.freeze_through == -2 ? backbone.cfg.n_blocks()
                                                       : cfg.freeze_through);
        const int hid = sub->count("--hidden") ? *hidden : cfg.transfer_hidden;
        lcz::SampleSet set = lcz::load_dataset(*data);
        lcz::SampleSet train = set.subset(lcz::SplitTag::train);
        lcz::SampleSet val = set.subset(lcz::SplitTag::val);
        lcz::require(!train.empty() && !val.empty(), lcz::ErrorKind::invalid_argument,
                     "dataset needs train and val tags; run split first");
        lcz::TransferModel<float> tm = lcz::attach_heads(backbone, ft, hid);
        lcz::TrainResult result = lcz::train_transfer<float>(
            tm, train, val, cfg.resolved_train(),
            [](const lcz::EpochStats& s, lcz::TransferModel<float>&) {
                print_epoch(s);
                return false;
            });
        lcz::save_transfer(*out, tm);
        std::printf("transfer wrote %s (freeze_through %d, best epoch %d of %zu%s)\n", out->c_str(),
                    ft, result.best_epoch, result.history.size(),
                    result.early_stopped ? ", early stop" : "");
    });
}

void register_eval(CLI::App& app) {
    auto common = std::make_shared<CommonOpts>();
    auto model_path = std::make_shared<std::string>();
    auto data = std::make_shared<std::string>();
    auto split = std::make_shared<std::string>("test");
    auto out = std::make_shared<std::string>();
    CLI::App* sub = app.add_subcommand("eval", "score a model on a tagged dataset split");
    add_common_flags(sub, *common);
    sub->add_option("--model", *model_path, "forest or network file")->required();
    sub->add_option("--data", *data, "input dataset file")->required();
    sub->add_option("--split", *split, "train, val, test, or all")
        ->check(CLI::IsMember({"train", "val", "test", "all"}));
    sub->add_option("--out", *out, "write the metrics report JSON here");
    sub->callback([sub, common, model_path, data, split, out]() {
        resolve_config(sub, *common);
        lcz::SampleSet set = lcz::load_dataset(*data);
        lcz::SampleSet chosen = (*split == "all") ? set : set.subset(parse_split(*split));
        lcz::require(!chosen.empty(), lcz::ErrorKind::invalid_argument,
                     "selected split has no samples: " + *split);
        AnyModel m = load_any_model(*model_path);
        std::vector<int> pred_codes = lcz::predict_set(any_predictor(m), chosen);
        std::vector<lcz::LczClass> preds;
        preds.reserve(pred_codes.size());
        for (int code : pred_codes) preds.push_back(lcz::LczClass::from_code(code));
        lcz::MetricsReport report = lcz::compute_report(preds, chosen.labels);
        std::printf("eval %s split=%s n=%zu oa=%.4f kappa=%.4f macro_f1=%.4f\n",
                    model_path->c_str(), split->c_str(), chosen.size(), report.overall_accuracy,
                    report.kappa, report.f1.macro_f1);
        if (sub->count("--out")) lcz::write_file_atomic(*out, json_text(lcz::metrics_to_json(report)));
    });
}

void register_map(CLI::App& app) {
    auto common = std::make_shared<CommonOpts>();
    auto model_path = std::make_shared<std::string>();
    auto grid_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto cell = std::make_shared<double>(100.0);
    auto size = std::make_shared<int>(0);
    CLI::App* sub = app.add_subcommand("map", "classify a raster into an LCZ map");
    add_common_flags(sub, *common);
    sub->add_option("--model", *model_path, "forest or network file")->required();
    sub->add_option("--grid", *grid_path, "input raster header")->required();
    sub->add_option("--out", *out, "output map raster header (.rawg)")->required();
    sub->add_option("--cell", *cell, "output cell size in meters");
    sub->add_option("--size", *size, "patch edge length in pixels");
    sub->callback([sub, common, model_path, grid_path, out, cell, size]() {
        lcz::RunConfig cfg = resolve_config(sub, *common);
        const int patch_size = sub->count("--size") ? *size : cfg.patch_size;
        lcz::RasterGrid grid = lcz::load_raster(*grid_path);
        AnyModel m = load_any_model(*model_path);
        lcz::RasterGrid map = lcz::classify_map(any_predictor(m), grid, *cell, patch_size);
        lcz::save_raster(map, *out);
        std::filesystem::path palette_path(*out);
        palette_path.replace_extension(".palette.json");
        lcz::write_file_atomic(palette_path.string(), json_text(lcz::map_palette_json()));
        std::printf("map wrote %s (%dx%d cells at %g m)\n", out->c_str(), map.width, map.height,
                    *cell);
    });
}

void register_gradcheck(CLI::App& app) {
    auto common = std::make_shared<CommonOpts>();
    auto component = std::make_shared<std::string>("all");
    CLI::App* sub = app.add_subcommand("gradcheck", "finite-difference checks of every layer");
    add_common_flags(sub, *common);
    sub->add_option("--component", *component, "single component name, or all")
        ->check(CLI::IsMember({"all", "conv", "batchnorm_train", "batchnorm_eval", "dense", "relu",
                               "dropout", "pool", "softmax", "mscnn"}));
    sub->callback([sub, common, component]() {
        lcz::RunConfig cfg = resolve_config(sub, *common);
        const std::uint64_t seed = sub->count("--seed") ? cfg.seed : 42;
        std::vector<lcz::GradCheckCase> cases = lcz::run_gradient_checks(seed);
        bool all_pass = true;
        bool matched = false;
        for (const lcz::GradCheckCase& c : cases) {
            if (*component != "all" && c.component != *component) continue;
            matched = true;
            std::printf("gradcheck %-15s max_rel_err %.3e tol %.0e %s\n", c.component.c_str(),
                        c.max_rel_err, c.tolerance, c.pass ? "PASS" : "FAIL");
            all_pass = all_pass && c.pass;
        }
        lcz::require(matched, lcz::ErrorKind::invalid_argument,
                     "no gradient check named " + *component);
        lcz::require(all_pass, lcz::ErrorKind::diverged, "gradient check failed");
    });
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Local Climate Zone mapping toolkit"};
    app.require_subcommand(1);
    register_synth(app);
    register_ndvi(app);
    register_label_assist(app);
    register_sample(app);
    register_augment(app);
    register_split(app);
    register_train_rf(app);
    register_train_cnn(app, "train-cnn", "train the multi-scale CNN from scratch");
    register_train_cnn(app, "pretrain", "train a source-domain backbone for transfer");
    register_transfer(app);
    register_eval(app);
    register_map(app);
    register_gradcheck(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const lcz::Error& e) {
        std::cerr << "error " << lcz::error_kind_name(e.kind()) << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
