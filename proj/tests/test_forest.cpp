#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "lcz/forest.hpp"
#include "test_util.hpp"

using lcz::best_split;
using lcz::ClassCounts;
using lcz::Error;
using lcz::ErrorKind;
using lcz::FeatureVector;
using lcz::forest_from_json;
using lcz::forest_to_json;
using lcz::gini;
using lcz::kNumClasses;
using lcz::LczClass;
using lcz::load_forest;
using lcz::Patch;
using lcz::patch_features;
using lcz::predict_rf;
using lcz::RandomForest;
using lcz::RfHyperparams;
using lcz::Rng;
using lcz::SampleSet;
using lcz::save_forest;
using lcz::SplitChoice;
using lcz::train_rf;

namespace {

Patch constant_patch(int size, int channels, float value, float jitter, Rng& rng) {
    Patch p;
    p.size = size;
    p.n_channels = channels;
    p.data.resize(static_cast<std::size_t>(size) * size * channels);
    for (float& v : p.data) v = value + jitter * (rng.uniform_f() - 0.5f);
    return p;
}

// Independent re-derivation of the split search: enumerate every candidate
// feature and every distinct-neighbor midpoint, partition the samples from
// scratch, and score with a locally written Gini.
std::optional<SplitChoice> oracle_split(const std::vector<FeatureVector>& features,
                                        const std::vector<int>& labels,
                                        const std::vector<std::size_t>& indices,
                                        std::vector<int> candidates, int min_leaf) {
    const auto gini_of = [](const std::vector<std::int64_t>& counts) {
        std::int64_t total = 0;
        for (std::int64_t c : counts) total += c;
        double s = 0.0;
        for (std::int64_t c : counts) {
            const double p = static_cast<double>(c) / static_cast<double>(total);
            s += p * p;
        }
        return 1.0 - s;
    };

    const double nd = static_cast<double>(indices.size());
    std::vector<std::int64_t> parent(kNumClasses, 0);
    for (std::size_t i : indices) ++parent[static_cast<std::size_t>(labels[i])];
    const double parent_gini = gini_of(parent);

    std::sort(candidates.begin(), candidates.end());
    std::optional<SplitChoice> best;
    for (int f : candidates) {
        std::vector<float> values;
        for (std::size_t i : indices) values.push_back(features[i][static_cast<std::size_t>(f)]);
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (std::size_t k = 0; k + 1 < values.size(); ++k) {
            const float a = values[k];
            const float b = values[k + 1];
            const float threshold = a + (b - a) / 2.0f;
            if (!(threshold > a) || !(threshold < b)) continue;
            std::vector<std::int64_t> left(kNumClasses, 0), right(kNumClasses, 0);
            double n_left = 0.0, n_right = 0.0;
            for (std::size_t i : indices) {
                if (features[i][static_cast<std::size_t>(f)] < threshold) {
                    ++left[static_cast<std::size_t>(labels[i])];
                    n_left += 1.0;
                } else {
                    ++right[static_cast<std::size_t>(labels[i])];
                    n_right += 1.0;
                }
            }
            if (n_left < min_leaf || n_right < min_leaf) continue;
            const double decrease =
                parent_gini - (n_left / nd) * gini_of(left) - (n_right / nd) * gini_of(right);
            if (decrease <= 0.0) continue;
            if (!best || decrease > best->impurity_decrease) best = SplitChoice{f, threshold, decrease};
        }
    }
    return best;
}

// Decrease achieved by one concrete (feature, threshold) split, recomputed
// from scratch.
double oracle_decrease(const std::vector<FeatureVector>& features, const std::vector<int>& labels,
                       const std::vector<std::size_t>& indices, int f, float threshold) {
    const auto gini_of = [](const std::vector<std::int64_t>& counts) {
        std::int64_t total = 0;
        for (std::int64_t c : counts) total += c;
        double s = 0.0;
        for (std::int64_t c : counts) {
            const double p = static_cast<double>(c) / static_cast<double>(total);
            s += p * p;
        }
        return 1.0 - s;
    };
    std::vector<std::int64_t> parent(kNumClasses, 0), left(kNumClasses, 0), right(kNumClasses, 0);
    double n_left = 0.0, n_right = 0.0;
    for (std::size_t i : indices) {
        ++parent[static_cast<std::size_t>(labels[i])];
        if (features[i][static_cast<std::size_t>(f)] < threshold) {
            ++left[static_cast<std::size_t>(labels[i])];
            n_left += 1.0;
        } else {
            ++right[static_cast<std::size_t>(labels[i])];
            n_right += 1.0;
        }
    }
    const double nd = n_left + n_right;
    return gini_of(parent) - (n_left / nd) * gini_of(left) - (n_right / nd) * gini_of(right);
}

} // namespace

TEST(PatchFeatures, HandValues) {
    Patch p;
    p.size = 2;
    p.n_channels = 2;
    p.data = {1.0f, 2.0f, 3.0f, 4.0f, 5.0f, 5.0f, 5.0f, 5.0f};
    const FeatureVector f = patch_features(p);
    ASSERT_EQ(f.size(), 4u);
    EXPECT_NEAR(f[0], 2.5f, 1e-6f);
    EXPECT_NEAR(f[1], std::sqrt(1.25f), 1e-6f);
    EXPECT_NEAR(f[2], 5.0f, 1e-6f);
    EXPECT_NEAR(f[3], 0.0f, 1e-6f);
}

TEST(Gini, HandValues) {
    ClassCounts pure{};
    pure[3] = 10;
    EXPECT_EQ(gini(pure), 0.0);

    ClassCounts even{};
    even[0] = 5;
    even[1] = 5;
    EXPECT_NEAR(gini(even), 0.5, 1e-12);

    ClassCounts mixed{};
    mixed[0] = 2;
    mixed[1] = 2;
    mixed[2] = 4;
    EXPECT_NEAR(gini(mixed), 0.625, 1e-12);

    ClassCounts empty{};
    EXPECT_THROW(gini(empty), Error);
}

TEST(BestSplit, MatchesBruteForceOnRandomData) {
    Rng rng(515);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(rng.bounded(15));
        const int n_features = 3;
        const int min_leaf = 1 + static_cast<int>(rng.bounded(3));
        std::vector<FeatureVector> features;
        std::vector<int> labels;
        std::vector<std::size_t> indices;
        for (int i = 0; i < n; ++i) {
            FeatureVector f;
            // a small discrete value set forces duplicate feature values
            for (int k = 0; k < n_features; ++k)
                f.push_back(static_cast<float>(rng.bounded(8)) / 4.0f);
            features.push_back(f);
            labels.push_back(static_cast<int>(rng.bounded(4)));
            indices.push_back(static_cast<std::size_t>(i));
        }
        const std::vector<int> candidates = {0, 1, 2};
        const auto got = best_split(features, labels, indices, candidates, min_leaf);
        const auto want = oracle_split(features, labels, indices, candidates, min_leaf);
        ASSERT_EQ(got.has_value(), want.has_value()) << "trial " << trial;
        if (!got) continue;
        EXPECT_NEAR(got->impurity_decrease, want->impurity_decrease, 1e-12) << "trial " << trial;
        // the returned split must actually achieve the optimum
        const double achieved =
            oracle_decrease(features, labels, indices, got->feature_index, got->threshold);
        EXPECT_NEAR(achieved, want->impurity_decrease, 1e-12) << "trial " << trial;
    }
}

TEST(BestSplit, TiesBreakToLowerFeatureThenLowerThreshold) {
    // features 0 and 1 are identical columns, so their best decreases tie
    const std::vector<FeatureVector> features = {
        {0.0f, 0.0f}, {1.0f, 1.0f}, {2.0f, 2.0f}, {3.0f, 3.0f}};
    const std::vector<int> labels = {0, 0, 1, 1};
    const std::vector<std::size_t> indices = {0, 1, 2, 3};
    const auto split = best_split(features, labels, indices, {1, 0}, 1);
    ASSERT_TRUE(split.has_value());
    EXPECT_EQ(split->feature_index, 0);
    EXPECT_FLOAT_EQ(split->threshold, 1.5f);

    // alternating labels: thresholds 0.5 and 2.5 tie, lower one wins
    const std::vector<int> alternating = {0, 1, 0, 1};
    const auto tie = best_split(features, alternating, indices, {0}, 1);
    ASSERT_TRUE(tie.has_value());
    EXPECT_FLOAT_EQ(tie->threshold, 0.5f);
}

TEST(BestSplit, DegenerateCasesReturnNothing) {
    const std::vector<FeatureVector> features = {{1.0f}, {1.0f}, {1.0f}};
    const std::vector<int> labels = {0, 1, 2};
    const std::vector<std::size_t> indices = {0, 1, 2};
    EXPECT_FALSE(best_split(features, labels, indices, {0}, 1).has_value());

    const std::vector<FeatureVector> spread = {{1.0f}, {2.0f}, {3.0f}};
    const std::vector<int> pure = {4, 4, 4};
    EXPECT_FALSE(best_split(spread, pure, indices, {0}, 1).has_value());

    EXPECT_FALSE(best_split(spread, labels, {0}, {0}, 1).has_value());

    // min_leaf too large for any cut
    EXPECT_FALSE(best_split(spread, labels, indices, {0}, 2).has_value());
}

namespace {

SampleSet separable_set(int per_class, std::uint64_t seed) {
    Rng rng(seed);
    SampleSet set;
    const struct {
        const char* cls;
        float level;
    } spec[] = {{"2", 0.2f}, {"8", 0.5f}, {"D", 0.8f}};
    for (const auto& s : spec)
        for (int i = 0; i < per_class; ++i)
            set.add(constant_patch(8, 3, s.level, 0.05f, rng), LczClass::parse(s.cls));
    return set;
}

} // namespace

TEST(Forest, LearnsSeparableMeans) {
    const SampleSet train = separable_set(20, 1);
    const SampleSet test = separable_set(10, 2);
    RfHyperparams hp;
    hp.n_trees = 15;
    const RandomForest forest = train_rf(train, hp, 77);
    int correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto pred = predict_rf(forest, test.patches[i]);
        if (pred.label == test.labels[i]) ++correct;
        double sum = 0.0;
        for (double p : pred.probabilities) sum += p;
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
    EXPECT_EQ(correct, static_cast<int>(test.size()));
}

TEST(Forest, DeterministicPerSeed) {
    const SampleSet train = separable_set(12, 3);
    RfHyperparams hp;
    hp.n_trees = 10;
    const RandomForest a = train_rf(train, hp, 5);
    const RandomForest b = train_rf(train, hp, 5);
    EXPECT_EQ(forest_to_json(a).dump(), forest_to_json(b).dump());
    const RandomForest c = train_rf(train, hp, 6);
    EXPECT_NE(forest_to_json(a).dump(), forest_to_json(c).dump());
}

TEST(Forest, MtryDefaultsToSqrtFeatures) {
    const SampleSet train = separable_set(5, 4);
    RfHyperparams hp;
    hp.n_trees = 1;
    const RandomForest forest = train_rf(train, hp, 1);
    // 3 channels -> 6 features -> floor(sqrt(6)) = 2
    EXPECT_EQ(forest.n_features, 6);
    EXPECT_EQ(forest.hp.mtry, 2);
}

TEST(Forest, JsonRoundTrip) {
    const std::string dir = lcz_test::scratch_dir("forest_rt");
    const SampleSet train = separable_set(12, 9);
    RfHyperparams hp;
    hp.n_trees = 7;
    hp.max_depth = 6;
    hp.min_leaf = 2;
    const RandomForest forest = train_rf(train, hp, 1234);
    const std::string path = dir + "/model.rf";
    save_forest(forest, path);
    const RandomForest back = load_forest(path);
    EXPECT_EQ(forest_to_json(back).dump(), forest_to_json(forest).dump());
    EXPECT_EQ(back.seed, forest.seed);
    EXPECT_EQ(back.hp.n_trees, 7);
    EXPECT_EQ(back.hp.max_depth, 6);
    EXPECT_EQ(back.hp.min_leaf, 2);

    const SampleSet probe = separable_set(4, 10);
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const auto pa = predict_rf(forest, probe.patches[i]);
        const auto pb = predict_rf(back, probe.patches[i]);
        EXPECT_EQ(pa.label, pb.label);
        for (int c = 0; c < kNumClasses; ++c)
            EXPECT_EQ(pa.probabilities[c], pb.probabilities[c]);
    }
}

TEST(Forest, BadInputsRejected) {
    lcz::json j = {{"magic", "WRONG"}, {"version", 1}};
    EXPECT_THROW(forest_from_json(j), Error);

    SampleSet empty;
    EXPECT_THROW(train_rf(empty, RfHyperparams{}, 1), Error);

    RfHyperparams bad;
    bad.n_trees = 0;
    EXPECT_THROW(bad.validate(), Error);

    const SampleSet train = separable_set(4, 11);
    RfHyperparams hp;
    hp.n_trees = 2;
    const RandomForest forest = train_rf(train, hp, 1);
    FeatureVector wrong_len(5, 0.0f);
    try {
        predict_rf(forest, wrong_len);
        FAIL() << "expected dimension error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::dimension);
    }
}
