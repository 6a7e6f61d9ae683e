#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "lcz/adam.hpp"
#include "lcz/forest.hpp"
#include "lcz/io.hpp"
#include "lcz/model_io.hpp"
#include "lcz/rules.hpp"
#include "lcz/synth.hpp"
#include "lcz/train.hpp"

namespace lcz {

inline json train_config_to_json(const TrainConfig& cfg) {
    return json{{"batch_size", cfg.batch_size},
                {"max_epochs", cfg.max_epochs},
                {"early_stop", cfg.early_stop},
                {"patience", cfg.patience},
                {"lr", cfg.adam.lr},
                {"beta1", cfg.adam.beta1},
                {"beta2", cfg.adam.beta2},
                {"eps", cfg.adam.eps},
                {"decay_mode", cfg.adam.mode == DecayMode::lr_decay ? "lr_decay" : "weight_decay"},
                {"lr_decay", cfg.adam.lr_decay},
                {"weight_decay", cfg.adam.weight_decay}};
}

inline TrainConfig train_config_from_json(const json& j) {
    reject_unknown_keys(j,
                        {"batch_size", "max_epochs", "early_stop", "patience", "lr", "beta1", "beta2",
                         "eps", "decay_mode", "lr_decay", "weight_decay"},
                        "train config");
    TrainConfig cfg;
    if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<int>();
    if (j.contains("max_epochs")) cfg.max_epochs = j.at("max_epochs").get<int>();
    if (j.contains("early_stop")) cfg.early_stop = j.at("early_stop").get<bool>();
    if (j.contains("patience")) cfg.patience = j.at("patience").get<int>();
    if (j.contains("lr")) cfg.adam.lr = j.at("lr").get<double>();
    if (j.contains("beta1")) cfg.adam.beta1 = j.at("beta1").get<double>();
    if (j.contains("beta2")) cfg.adam.beta2 = j.at("beta2").get<double>();
    if (j.contains("eps")) cfg.adam.eps = j.at("eps").get<double>();
    if (j.contains("decay_mode")) {
        const std::string mode = j.at("decay_mode").get<std::string>();
        require(mode == "lr_decay" || mode == "weight_decay", ErrorKind::malformed,
                "decay_mode must be lr_decay or weight_decay");
        cfg.adam.mode = mode == "lr_decay" ? DecayMode::lr_decay : DecayMode::weight_decay;
    }
    if (j.contains("lr_decay")) cfg.adam.lr_decay = j.at("lr_decay").get<double>();
    if (j.contains("weight_decay")) cfg.adam.weight_decay = j.at("weight_decay").get<double>();
    cfg.validate();
    return cfg;
}

inline json rf_to_json(const RfHyperparams& hp) {
    return json{{"n_trees", hp.n_trees}, {"max_depth", hp.max_depth}, {"min_leaf", hp.min_leaf},
                {"mtry", hp.mtry}};
}

inline RfHyperparams rf_from_json(const json& j) {
    reject_unknown_keys(j, {"n_trees", "max_depth", "min_leaf", "mtry"}, "rf config");
    RfHyperparams hp;
    if (j.contains("n_trees")) hp.n_trees = j.at("n_trees").get<int>();
    if (j.contains("max_depth")) hp.max_depth = j.at("max_depth").get<int>();
    if (j.contains("min_leaf")) hp.min_leaf = j.at("min_leaf").get<int>();
    if (j.contains("mtry")) hp.mtry = j.at("mtry").get<int>();
    hp.validate();
    return hp;
}

/// Union of the module configs plus the global seed. Loaded from one JSON
/// file; command-line flags override file values, file values override
/// defaults. The scenario block inherits the global seed unless it pins its
/// own.
struct RunConfig {
    std::uint64_t seed = 0;
    bool deterministic = false;
    int threads = 1;
    int patch_size = 32;
    std::array<double, 3> split_ratios{0.7, 0.15, 0.15};
    int augment_target = 0; // 0 = grow every class to the largest class count
    int nir_band = ScenarioSpec::kNirBand;
    int red_band = ScenarioSpec::kRedBand;
    int freeze_through = -2; // -2 = freeze the whole backbone (n_blocks)
    int transfer_hidden = 128;
    RuleConfig rules;
    ScenarioSpec scenario;
    bool scenario_seed_pinned = false;
    TrainConfig train;
    MscnnConfig model;
    RfHyperparams rf;

    /// Scenario seed resolution: explicit block seed wins, else global seed.
    ScenarioSpec resolved_scenario() const {
        ScenarioSpec s = scenario;
        if (!scenario_seed_pinned) s.seed = seed;
        return s;
    }

    TrainConfig resolved_train() const {
        TrainConfig t = train;
        t.seed = seed;
        return t;
    }

    int resolved_freeze_through() const {
        return freeze_through == -2 ? model.n_blocks() : freeze_through;
    }
};

inline RunConfig run_config_from_json(const json& j) {
    reject_unknown_keys(j,
                        {"seed", "deterministic", "threads", "patch_size", "split", "augment_target",
                         "nir_band", "red_band", "freeze_through", "transfer_hidden", "rules",
                         "scenario", "train", "model", "rf"},
                        "run config");
    RunConfig cfg;
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("deterministic")) cfg.deterministic = j.at("deterministic").get<bool>();
    if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
    if (j.contains("patch_size")) cfg.patch_size = j.at("patch_size").get<int>();
    if (j.contains("split")) {
        auto v = j.at("split").get<std::vector<double>>();
        require(v.size() == 3, ErrorKind::malformed, "split must list three ratios");
        for (int i = 0; i < 3; ++i) cfg.split_ratios[i] = v[i];
    }
    if (j.contains("augment_target")) cfg.augment_target = j.at("augment_target").get<int>();
    if (j.contains("nir_band")) cfg.nir_band = j.at("nir_band").get<int>();
    if (j.contains("red_band")) cfg.red_band = j.at("red_band").get<int>();
    if (j.contains("freeze_through")) cfg.freeze_through = j.at("freeze_through").get<int>();
    if (j.contains("transfer_hidden")) cfg.transfer_hidden = j.at("transfer_hidden").get<int>();
    if (j.contains("rules")) cfg.rules = RuleConfig::from_json(j.at("rules"));
    if (j.contains("scenario")) {
        cfg.scenario = scenario_from_json(j.at("scenario"));
        cfg.scenario_seed_pinned = j.at("scenario").contains("seed");
    }
    if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"));
    if (j.contains("model")) cfg.model = mscnn_config_from_json(j.at("model"));
    if (j.contains("rf")) cfg.rf = rf_from_json(j.at("rf"));
    require(cfg.threads >= 1, ErrorKind::invalid_argument, "threads must be at least 1");
    require(cfg.patch_size >= 2 && cfg.patch_size % 2 == 0, ErrorKind::invalid_argument,
            "patch_size must be even and at least 2");
    require(cfg.augment_target >= 0, ErrorKind::invalid_argument, "augment_target must be non-negative");
    return cfg;
}

inline json run_config_to_json(const RunConfig& cfg) {
    return json{{"seed", cfg.seed},
                {"deterministic", cfg.deterministic},
                {"threads", cfg.threads},
                {"patch_size", cfg.patch_size},
                {"split", cfg.split_ratios},
                {"augment_target", cfg.augment_target},
                {"nir_band", cfg.nir_band},
                {"red_band", cfg.red_band},
                {"freeze_through", cfg.freeze_through},
                {"transfer_hidden", cfg.transfer_hidden},
                {"rules", cfg.rules.to_json()},
                {"scenario", scenario_to_json(cfg.resolved_scenario())},
                {"train", train_config_to_json(cfg.train)},
                {"model", mscnn_config_to_json(cfg.model)},
                {"rf", rf_to_json(cfg.rf)}};
}

inline RunConfig load_run_config(const std::string& path) {
    return run_config_from_json(load_json_file(path));
}

} // namespace lcz
