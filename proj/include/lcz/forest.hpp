#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "lcz/common.hpp"
#include "lcz/dataset.hpp"
#include "lcz/io.hpp"
#include "lcz/lcz_class.hpp"
#include "lcz/rng.hpp"

namespace lcz {

using FeatureVector = std::vector<float>;

/// Channel-wise mean and population standard deviation, interleaved per
/// channel: [mean_0, std_0, mean_1, std_1, ...].
inline FeatureVector patch_features(const Patch& patch) {
    FeatureVector features;
    features.reserve(static_cast<std::size_t>(patch.n_channels) * 2);
    const std::size_t per_channel = static_cast<std::size_t>(patch.size) * patch.size;
    for (int ch = 0; ch < patch.n_channels; ++ch) {
        const float* begin = patch.data.data() + static_cast<std::size_t>(ch) * per_channel;
        double sum = 0.0;
        for (std::size_t i = 0; i < per_channel; ++i) sum += begin[i];
        const double mean = sum / static_cast<double>(per_channel);
        double sq = 0.0;
        for (std::size_t i = 0; i < per_channel; ++i) {
            const double d = begin[i] - mean;
            sq += d * d;
        }
        features.push_back(static_cast<float>(mean));
        features.push_back(static_cast<float>(std::sqrt(sq / static_cast<double>(per_channel))));
    }
    return features;
}

using ClassCounts = std::array<std::int64_t, kNumClasses>;

/// CART Gini impurity, 1 - sum p_i^2.
inline double gini(const ClassCounts& counts) {
    std::int64_t total = 0;
    for (std::int64_t c : counts) total += c;
    require(total >= 1, ErrorKind::invalid_argument, "gini of all-zero counts");
    double sum_sq = 0.0;
    for (std::int64_t c : counts) {
        const double p = static_cast<double>(c) / static_cast<double>(total);
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

/// Either an internal test (feature < threshold goes left) or a leaf holding
/// the class counts of the bootstrap samples that reached it.
struct TreeNode {
    int feature_index = -1; // -1 marks a leaf
    float threshold = 0.0f;
    int left = -1;
    int right = -1;
    ClassCounts class_counts{};

    bool is_leaf() const { return feature_index < 0; }
};

struct RfHyperparams {
    int n_trees = 100;
    int max_depth = 20;
    int min_leaf = 1;
    int mtry = 0; // 0 = floor(sqrt(n_features))

    void validate() const {
        require(n_trees >= 1, ErrorKind::invalid_argument, "n_trees must be at least 1");
        require(max_depth >= 1, ErrorKind::invalid_argument, "max_depth must be at least 1");
        require(min_leaf >= 1, ErrorKind::invalid_argument, "min_leaf must be at least 1");
        require(mtry >= 0, ErrorKind::invalid_argument, "mtry must be non-negative");
    }
};

struct RandomForest {
    std::vector<std::vector<TreeNode>> trees;
    int n_features = 0;
    RfHyperparams hp;
    std::uint64_t seed = 0;
};

struct SplitChoice {
    int feature_index = 0;
    float threshold = 0.0f;
    double impurity_decrease = 0.0;
};

namespace detail {

struct SampleView {
    const std::vector<FeatureVector>* features;
    const std::vector<int>* labels; // class codes
};

inline ClassCounts count_classes(const SampleView& data, const std::vector<std::size_t>& indices) {
    ClassCounts counts{};
    for (std::size_t i : indices) ++counts[static_cast<std::size_t>((*data.labels)[i])];
    return counts;
}

} // namespace detail

/// Exhaustive scan over the candidate features and the midpoints between
/// consecutive distinct sorted values, maximizing the weighted Gini decrease.
/// Ties break to the lower feature index, then the lower threshold. Returns
/// nothing when no split improves impurity while keeping both children at
/// least `min_leaf` strong.
inline std::optional<SplitChoice> best_split(const std::vector<FeatureVector>& features,
                                             const std::vector<int>& labels,
                                             const std::vector<std::size_t>& indices,
                                             const std::vector<int>& candidate_features,
                                             int min_leaf) {
    const std::size_t n = indices.size();
    if (n < 2) return std::nullopt;

    detail::SampleView data{&features, &labels};
    const ClassCounts parent_counts = detail::count_classes(data, indices);
    const double parent_gini = gini(parent_counts);
    const double nd = static_cast<double>(n);

    std::optional<SplitChoice> best;
    std::vector<std::pair<float, int>> ordered; // (value, label) sorted by value
    ordered.reserve(n);

    std::vector<int> candidates = candidate_features;
    std::sort(candidates.begin(), candidates.end());

    for (int f : candidates) {
        ordered.clear();
        for (std::size_t i : indices)
            ordered.emplace_back(features[i][static_cast<std::size_t>(f)], labels[i]);
        std::sort(ordered.begin(), ordered.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });

        ClassCounts left{};
        ClassCounts right = parent_counts;
        for (std::size_t k = 0; k + 1 < n; ++k) {
            ++left[static_cast<std::size_t>(ordered[k].second)];
            --right[static_cast<std::size_t>(ordered[k].second)];
            const float a = ordered[k].first;
            const float b = ordered[k + 1].first;
            if (a == b) continue;
            const float threshold = a + (b - a) / 2.0f;
            if (!(threshold > a) || !(threshold < b)) continue; // midpoint collapsed in float
            const auto n_left = static_cast<double>(k + 1);
            const double n_right = nd - n_left;
            if (n_left < min_leaf || n_right < min_leaf) continue;
            const double decrease =
                parent_gini - (n_left / nd) * gini(left) - (n_right / nd) * gini(right);
            if (decrease <= 0.0) continue;
            const bool better =
                !best || decrease > best->impurity_decrease ||
                (decrease == best->impurity_decrease &&
                 (f < best->feature_index ||
                  (f == best->feature_index && threshold < best->threshold)));
            if (better) best = SplitChoice{f, threshold, decrease};
        }
    }
    return best;
}

namespace detail {

inline int grow_tree(std::vector<TreeNode>& nodes, const std::vector<FeatureVector>& features,
                     const std::vector<int>& labels, std::vector<std::size_t>& indices,
                     const RfHyperparams& hp, int mtry, int depth, Rng& rng) {
    SampleView data{&features, &labels};
    const ClassCounts counts = count_classes(data, indices);

    const auto make_leaf = [&]() {
        TreeNode leaf;
        leaf.class_counts = counts;
        nodes.push_back(leaf);
        return static_cast<int>(nodes.size()) - 1;
    };

    if (depth >= hp.max_depth || static_cast<int>(indices.size()) <= hp.min_leaf ||
        gini(counts) == 0.0)
        return make_leaf();

    // mtry features drawn without replacement (partial Fisher-Yates).
    const int n_features = static_cast<int>(features.front().size());
    std::vector<int> pool(static_cast<std::size_t>(n_features));
    std::iota(pool.begin(), pool.end(), 0);
    std::vector<int> candidates;
    candidates.reserve(static_cast<std::size_t>(mtry));
    for (int k = 0; k < mtry && k < n_features; ++k) {
        const auto j = static_cast<std::size_t>(k) + rng.bounded(static_cast<std::uint64_t>(n_features - k));
        std::swap(pool[static_cast<std::size_t>(k)], pool[j]);
        candidates.push_back(pool[static_cast<std::size_t>(k)]);
    }

    const auto split = best_split(features, labels, indices, candidates, hp.min_leaf);
    if (!split) return make_leaf();

    std::vector<std::size_t> left_idx, right_idx;
    for (std::size_t i : indices) {
        if (features[i][static_cast<std::size_t>(split->feature_index)] < split->threshold)
            left_idx.push_back(i);
        else
            right_idx.push_back(i);
    }
    indices.clear();
    indices.shrink_to_fit();

    TreeNode node;
    node.feature_index = split->feature_index;
    node.threshold = split->threshold;
    nodes.push_back(node);
    const auto node_id = static_cast<int>(nodes.size()) - 1;
    nodes[static_cast<std::size_t>(node_id)].left =
        grow_tree(nodes, features, labels, left_idx, hp, mtry, depth + 1, rng);
    nodes[static_cast<std::size_t>(node_id)].right =
        grow_tree(nodes, features, labels, right_idx, hp, mtry, depth + 1, rng);
    return node_id;
}

} // namespace detail

/// Trains on per-patch band statistics. Each tree sees a bootstrap sample and
/// its own RNG stream (seed ^ splitmix64(tree_index)), so the forest is a
/// pure function of (data, hyperparameters, seed).
inline RandomForest train_rf(const SampleSet& train, RfHyperparams hp, std::uint64_t seed) {
    require(!train.empty(), ErrorKind::invalid_argument, "empty training set");
    train.validate();

    std::vector<FeatureVector> features;
    features.reserve(train.size());
    std::vector<int> labels;
    labels.reserve(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        features.push_back(patch_features(train.patches[i]));
        labels.push_back(train.labels[i].code());
    }

    RandomForest forest;
    forest.n_features = static_cast<int>(features.front().size());
    if (hp.mtry <= 0)
        hp.mtry = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(forest.n_features))));
    forest.hp = hp;
    forest.seed = seed;

    const std::size_t n = features.size();
    for (int t = 0; t < hp.n_trees; ++t) {
        Rng rng(seed ^ splitmix64(static_cast<std::uint64_t>(t)));
        std::vector<std::size_t> bootstrap(n);
        for (std::size_t i = 0; i < n; ++i) bootstrap[i] = rng.bounded(n);
        std::vector<TreeNode> nodes;
        detail::grow_tree(nodes, features, labels, bootstrap, hp, hp.mtry, 0, rng);
        forest.trees.push_back(std::move(nodes));
    }
    return forest;
}

struct RfPrediction {
    LczClass label;
    std::array<double, kNumClasses> probabilities{};
};

/// Mean of per-tree leaf class frequencies; argmax with ties to the lower code.
inline RfPrediction predict_rf(const RandomForest& forest, const FeatureVector& features) {
    require(static_cast<int>(features.size()) == forest.n_features, ErrorKind::dimension,
            "feature vector length mismatch: expected " + std::to_string(forest.n_features) +
                ", got " + std::to_string(features.size()));
    require(!forest.trees.empty(), ErrorKind::invalid_argument, "empty forest");

    RfPrediction out;
    for (const auto& nodes : forest.trees) {
        int node_id = 0;
        while (!nodes[static_cast<std::size_t>(node_id)].is_leaf()) {
            const TreeNode& node = nodes[static_cast<std::size_t>(node_id)];
            node_id = features[static_cast<std::size_t>(node.feature_index)] < node.threshold
                          ? node.left
                          : node.right;
        }
        const ClassCounts& counts = nodes[static_cast<std::size_t>(node_id)].class_counts;
        std::int64_t total = 0;
        for (std::int64_t c : counts) total += c;
        for (int c = 0; c < kNumClasses; ++c)
            out.probabilities[static_cast<std::size_t>(c)] +=
                static_cast<double>(counts[static_cast<std::size_t>(c)]) / static_cast<double>(total);
    }
    int best = 0;
    for (int c = 0; c < kNumClasses; ++c) {
        auto& p = out.probabilities[static_cast<std::size_t>(c)];
        p /= static_cast<double>(forest.trees.size());
        if (p > out.probabilities[static_cast<std::size_t>(best)]) best = c;
    }
    out.label = LczClass::from_code(best);
    return out;
}

inline RfPrediction predict_rf(const RandomForest& forest, const Patch& patch) {
    return predict_rf(forest, patch_features(patch));
}

// ---------------------------------------------------------------------------
// Serialization (JSON, magic "LCZRF")
// ---------------------------------------------------------------------------

inline json forest_to_json(const RandomForest& forest) {
    json trees = json::array();
    for (const auto& nodes : forest.trees) {
        json tree = json::array();
        for (const TreeNode& node : nodes) {
            if (node.is_leaf()) {
                json counts = json::array();
                for (std::int64_t c : node.class_counts) counts.push_back(c);
                tree.push_back(json{{"counts", std::move(counts)}});
            } else {
                tree.push_back(json{{"f", node.feature_index},
                                    {"t", node.threshold},
                                    {"l", node.left},
                                    {"r", node.right}});
            }
        }
        trees.push_back(std::move(tree));
    }
    return json{{"magic", "LCZRF"},
                {"version", 1},
                {"n_features", forest.n_features},
                {"hyperparameters",
                 {{"n_trees", forest.hp.n_trees},
                  {"max_depth", forest.hp.max_depth},
                  {"min_leaf", forest.hp.min_leaf},
                  {"mtry", forest.hp.mtry}}},
                {"seed", forest.seed},
                {"trees", std::move(trees)}};
}

inline RandomForest forest_from_json(const json& j) {
    require(j.value("magic", "") == "LCZRF", ErrorKind::malformed, "bad forest magic");
    require(j.value("version", 0) == 1, ErrorKind::malformed, "unsupported forest version");
    RandomForest forest;
    forest.n_features = j.at("n_features").get<int>();
    const json& hp = j.at("hyperparameters");
    forest.hp.n_trees = hp.at("n_trees").get<int>();
    forest.hp.max_depth = hp.at("max_depth").get<int>();
    forest.hp.min_leaf = hp.at("min_leaf").get<int>();
    forest.hp.mtry = hp.at("mtry").get<int>();
    forest.seed = j.at("seed").get<std::uint64_t>();
    for (const json& tree : j.at("trees")) {
        std::vector<TreeNode> nodes;
        for (const json& entry : tree) {
            TreeNode node;
            if (entry.contains("counts")) {
                const json& counts = entry.at("counts");
                require(counts.size() == kNumClasses, ErrorKind::malformed, "bad leaf counts");
                for (int c = 0; c < kNumClasses; ++c)
                    node.class_counts[static_cast<std::size_t>(c)] = counts.at(static_cast<std::size_t>(c)).get<std::int64_t>();
            } else {
                node.feature_index = entry.at("f").get<int>();
                node.threshold = entry.at("t").get<float>();
                node.left = entry.at("l").get<int>();
                node.right = entry.at("r").get<int>();
            }
            nodes.push_back(node);
        }
        forest.trees.push_back(std::move(nodes));
    }
    return forest;
}

inline void save_forest(const RandomForest& forest, const std::string& path) {
    write_file_atomic(path, forest_to_json(forest).dump() + "\n");
}

inline RandomForest load_forest(const std::string& path) {
    return forest_from_json(load_json_file(path));
}

} // namespace lcz
