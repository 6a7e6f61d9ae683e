#include <gtest/gtest.h>

#include <cstring>
#include <vector>

#include "lcz/transfer.hpp"

using lcz::attach_heads;
using lcz::Error;
using lcz::evaluate_transfer;
using lcz::LczClass;
using lcz::MscnnConfig;
using lcz::MscnnModel;
using lcz::Patch;
using lcz::Rng;
using lcz::SampleSet;
using lcz::TrainConfig;
using lcz::train_transfer;
using lcz::TransferModel;

namespace {

MscnnConfig tiny_config() {
    MscnnConfig cfg;
    cfg.in_channels = 2;
    cfg.input_size = 8;
    cfg.branch_channels = 2;
    cfg.block_channels = {4, 4};
    cfg.dense_units = 8;
    cfg.n_classes = 3;
    cfg.dropout = 0.0;
    return cfg;
}

SampleSet level_set(int per_class, std::uint64_t seed) {
    Rng rng(seed);
    SampleSet set;
    const struct {
        const char* cls;
        float level;
    } spec[] = {{"1", 0.1f}, {"2", 0.5f}, {"3", 0.9f}};
    for (const auto& s : spec) {
        for (int i = 0; i < per_class; ++i) {
            Patch p;
            p.size = 8;
            p.n_channels = 2;
            p.data.resize(8 * 8 * 2);
            for (float& v : p.data) v = s.level + 0.05f * (rng.uniform_f() - 0.5f);
            set.add(p, LczClass::parse(s.cls));
        }
    }
    return set;
}

TrainConfig quick_train() {
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.max_epochs = 2;
    cfg.early_stop = false;
    cfg.seed = 17;
    return cfg;
}

std::vector<std::vector<float>> snapshot(const std::vector<std::vector<float>*>& arrays) {
    std::vector<std::vector<float>> out;
    for (const auto* a : arrays) out.push_back(*a);
    return out;
}

bool same(const std::vector<std::vector<float>>& snap,
          const std::vector<std::vector<float>*>& arrays) {
    for (std::size_t i = 0; i < arrays.size(); ++i) {
        if (snap[i].size() != arrays[i]->size()) return false;
        if (std::memcmp(snap[i].data(), arrays[i]->data(), snap[i].size() * 4) != 0) return false;
    }
    return true;
}

} // namespace

TEST(Transfer, HeadShapesAndDeterministicInit) {
    MscnnModel<float> backbone;
    backbone.init(tiny_config(), 5);
    TransferModel<float> a = attach_heads(backbone, 2, 6);
    EXPECT_EQ(a.head1.in_dim, backbone.cfg.flatten_dim());
    EXPECT_EQ(a.head1.out_dim, 6);
    EXPECT_EQ(a.head2.in_dim, 6);
    EXPECT_EQ(a.head2.out_dim, 3);

    TransferModel<float> b = attach_heads(backbone, 2, 6);
    EXPECT_EQ(a.head1.weight, b.head1.weight);
    EXPECT_EQ(a.head2.weight, b.head2.weight);

    EXPECT_THROW(attach_heads(backbone, -2, 6), Error);
    EXPECT_THROW(attach_heads(backbone, 3, 6), Error);
    EXPECT_THROW(attach_heads(backbone, 0, 0), Error);
}

TEST(Transfer, TrainableCountWithFrozenBackbone) {
    MscnnModel<float> backbone;
    backbone.init(tiny_config(), 5);
    TransferModel<float> tm = attach_heads(backbone, backbone.cfg.n_blocks(), 6);
    const std::size_t flatten = static_cast<std::size_t>(backbone.cfg.flatten_dim());
    EXPECT_EQ(tm.num_trainable_params(), 6 * (flatten + 1) + 3 * (6 + 1));
}

TEST(Transfer, FullFreezeKeepsBackboneBitwise) {
    MscnnModel<float> backbone;
    backbone.init(tiny_config(), 5);
    TransferModel<float> tm = attach_heads(backbone, backbone.cfg.n_blocks(), 6);
    const auto before = snapshot(tm.backbone.state_arrays());
    const auto heads_before = snapshot({&tm.head1.weight, &tm.head2.weight});
    const SampleSet train = level_set(8, 1);
    const SampleSet val = level_set(3, 2);
    train_transfer(tm, train, val, quick_train());
    EXPECT_TRUE(same(before, tm.backbone.state_arrays()));
    EXPECT_FALSE(same(heads_before, {&tm.head1.weight, &tm.head2.weight}));
}

TEST(Transfer, PartialFreezeStopsAtBoundary) {
    MscnnModel<float> backbone;
    backbone.init(tiny_config(), 5);
    TransferModel<float> tm = attach_heads(backbone, 1, 6);
    auto& blk0 = tm.backbone.blocks[0];
    auto& blk1 = tm.backbone.blocks[1];
    const auto branches_before = snapshot({&tm.backbone.branches[0].kernel,
                                           &tm.backbone.branches[1].kernel,
                                           &tm.backbone.branches[2].kernel});
    const auto blk0_before =
        snapshot({&blk0.conv.kernel, &blk0.bn.gamma, &blk0.bn.running_mean, &blk0.bn.running_var});
    const auto blk1_before = snapshot({&blk1.conv.kernel});
    const SampleSet train = level_set(8, 1);
    const SampleSet val = level_set(3, 2);
    train_transfer(tm, train, val, quick_train());

    EXPECT_TRUE(same(branches_before, {&tm.backbone.branches[0].kernel,
                                       &tm.backbone.branches[1].kernel,
                                       &tm.backbone.branches[2].kernel}));
    EXPECT_TRUE(same(blk0_before, {&blk0.conv.kernel, &blk0.bn.gamma, &blk0.bn.running_mean,
                                   &blk0.bn.running_var}));
    EXPECT_FALSE(same(blk1_before, {&blk1.conv.kernel}));
}

TEST(Transfer, FreezeNothingTrainsEverything) {
    MscnnModel<float> backbone;
    backbone.init(tiny_config(), 5);
    TransferModel<float> tm = attach_heads(backbone, -1, 6);
    const auto branch_before = snapshot({&tm.backbone.branches[0].kernel});
    const auto blk0_before = snapshot({&tm.backbone.blocks[0].conv.kernel});
    const SampleSet train = level_set(8, 1);
    const SampleSet val = level_set(3, 2);
    train_transfer(tm, train, val, quick_train());
    EXPECT_FALSE(same(branch_before, {&tm.backbone.branches[0].kernel}));
    EXPECT_FALSE(same(blk0_before, {&tm.backbone.blocks[0].conv.kernel}));
}

TEST(Transfer, DetachedOriginalHeadNeverTrains) {
    MscnnModel<float> backbone;
    backbone.init(tiny_config(), 5);
    TransferModel<float> tm = attach_heads(backbone, -1, 6);
    const auto fc_before = snapshot({&tm.backbone.fc1.weight, &tm.backbone.fc1.bias,
                                     &tm.backbone.fc2.weight, &tm.backbone.fc2.bias});
    const SampleSet train = level_set(8, 1);
    const SampleSet val = level_set(3, 2);
    train_transfer(tm, train, val, quick_train());
    EXPECT_TRUE(same(fc_before, {&tm.backbone.fc1.weight, &tm.backbone.fc1.bias,
                                 &tm.backbone.fc2.weight, &tm.backbone.fc2.bias}));
}

TEST(Transfer, EverythingFrozenIsInert) {
    MscnnModel<float> backbone;
    backbone.init(tiny_config(), 5);
    TransferModel<float> tm = attach_heads(backbone, backbone.cfg.n_blocks(), 6);
    tm.freeze_heads = true;
    EXPECT_TRUE(tm.trainable_arrays().empty());
    const auto before = snapshot(tm.state_arrays());
    const SampleSet train = level_set(8, 1);
    const SampleSet val = level_set(3, 2);
    const lcz::TrainResult result = train_transfer(tm, train, val, quick_train());
    EXPECT_TRUE(same(before, tm.state_arrays()));
    ASSERT_EQ(result.history.size(), 2u);
    EXPECT_EQ(result.history[0].val_loss, result.history[1].val_loss);
}

TEST(Transfer, LearnsWithFrozenBackbone) {
    MscnnModel<float> backbone;
    backbone.init(tiny_config(), 5);
    const SampleSet source_train = level_set(12, 50);
    const SampleSet source_val = level_set(4, 51);
    TrainConfig pre = quick_train();
    pre.max_epochs = 30;
    train_mscnn(backbone, source_train, source_val, pre);

    TransferModel<float> tm = attach_heads(backbone, backbone.cfg.n_blocks(), 8);
    const SampleSet train = level_set(12, 1);
    const SampleSet val = level_set(4, 2);
    TrainConfig cfg = quick_train();
    cfg.max_epochs = 40;
    train_transfer(tm, train, val, cfg);
    EXPECT_GE(evaluate_transfer(tm, train).accuracy, 0.9);
}
