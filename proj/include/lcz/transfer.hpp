#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lcz/train.hpp"

namespace lcz {

/// A pretrained backbone with a fresh two-layer classification head. The
/// original dense head of the backbone is dropped; features are taken at the
/// flatten boundary. freeze_through picks how much of the backbone stays
/// frozen: -1 nothing, 0 the multi-scale layer, k (1-based) through block k.
template <typename T>
struct TransferModel {
    MscnnModel<T> backbone;
    int freeze_through = 0;
    int hidden = 128;
    bool freeze_heads = false;
    DenseLayer<T> head1, head2;

    int n_blocks() const { return backbone.cfg.n_blocks(); }

    bool branches_frozen() const { return freeze_through >= 0; }
    bool block_frozen(int i) const { return i < freeze_through; }
    bool fully_frozen_backbone() const { return freeze_through >= n_blocks(); }

    /// Arrays the optimizer may update.
    std::vector<std::vector<T>*> trainable_arrays() {
        std::vector<std::vector<T>*> out;
        if (!branches_frozen()) {
            for (auto& b : backbone.branches) {
                out.push_back(&b.kernel);
                out.push_back(&b.bias);
            }
        }
        for (int i = 0; i < n_blocks(); ++i) {
            if (block_frozen(i)) continue;
            auto& blk = backbone.blocks[i];
            out.push_back(&blk.conv.kernel);
            out.push_back(&blk.conv.bias);
            out.push_back(&blk.bn.gamma);
            out.push_back(&blk.bn.beta);
        }
        if (!freeze_heads) {
            out.push_back(&head1.weight);
            out.push_back(&head1.bias);
            out.push_back(&head2.weight);
            out.push_back(&head2.bias);
        }
        return out;
    }

    /// Every parameter array that must stay bitwise identical under training.
    std::vector<std::vector<T>*> frozen_arrays() {
        std::vector<std::vector<T>*> out;
        if (branches_frozen()) {
            for (auto& b : backbone.branches) {
                out.push_back(&b.kernel);
                out.push_back(&b.bias);
            }
        }
        for (int i = 0; i < n_blocks(); ++i) {
            if (!block_frozen(i)) continue;
            auto& blk = backbone.blocks[i];
            out.push_back(&blk.conv.kernel);
            out.push_back(&blk.conv.bias);
            out.push_back(&blk.bn.gamma);
            out.push_back(&blk.bn.beta);
            out.push_back(&blk.bn.running_mean);
            out.push_back(&blk.bn.running_var);
        }
        // the detached original head never trains
        out.push_back(&backbone.fc1.weight);
        out.push_back(&backbone.fc1.bias);
        out.push_back(&backbone.fc2.weight);
        out.push_back(&backbone.fc2.bias);
        if (freeze_heads) {
            out.push_back(&head1.weight);
            out.push_back(&head1.bias);
            out.push_back(&head2.weight);
            out.push_back(&head2.bias);
        }
        return out;
    }

    /// Full state in declaration order: backbone state, then the heads.
    std::vector<std::vector<T>*> state_arrays() {
        std::vector<std::vector<T>*> out = backbone.state_arrays();
        out.push_back(&head1.weight);
        out.push_back(&head1.bias);
        out.push_back(&head2.weight);
        out.push_back(&head2.bias);
        return out;
    }

    std::size_t num_trainable_params() {
        std::size_t n = 0;
        for (auto* p : trainable_arrays()) n += p->size();
        return n;
    }
};

/// Attaches a fresh head (flatten -> hidden -> ReLU -> n_classes) to a copy
/// of the backbone. Head weights are He-initialized from the backbone's
/// model seed (streams seed ^ splitmix64(0x30000 + i)).
template <typename T>
TransferModel<T> attach_heads(const MscnnModel<T>& backbone, int freeze_through, int hidden = 128) {
    require(freeze_through >= -1 && freeze_through <= backbone.cfg.n_blocks(), ErrorKind::invalid_argument,
            "freeze_through must be between -1 and the number of blocks");
    require(hidden >= 1, ErrorKind::invalid_argument, "transfer hidden width must be at least 1");
    TransferModel<T> tm;
    tm.backbone = backbone;
    tm.freeze_through = freeze_through;
    tm.hidden = hidden;
    tm.head1 = DenseLayer<T>(backbone.cfg.flatten_dim(), hidden);
    tm.head2 = DenseLayer<T>(hidden, backbone.cfg.n_classes);
    {
        Rng rng(backbone.seed ^ splitmix64(0x30000u));
        const double sd = std::sqrt(2.0 / static_cast<double>(tm.head1.in_dim));
        for (T& w : tm.head1.weight) w = static_cast<T>(rng.normal() * sd);
    }
    {
        Rng rng(backbone.seed ^ splitmix64(0x30001u));
        const double sd = std::sqrt(2.0 / static_cast<double>(tm.head2.in_dim));
        for (T& w : tm.head2.weight) w = static_cast<T>(rng.normal() * sd);
    }
    return tm;
}

template <typename T>
struct TransferCache {
    MscnnCache<T> features;
    Matrix<T> head1_relu;
    Matrix<T> logits;
};

/// Frozen blocks run their batch norm in eval mode with frozen running
/// statistics, train mode or not.
template <typename T>
Matrix<T> transfer_forward(TransferModel<T>& tm, const Tensor4<T>& x, bool train, TransferCache<T>& cache) {
    const int bn_eval_through = std::max(tm.freeze_through, 0);
    mscnn_features(tm.backbone, x, train, cache.features, bn_eval_through);
    Matrix<T> h = dense_forward(cache.features.flat, tm.head1);
    relu_inplace(h.data);
    cache.head1_relu = std::move(h);
    cache.logits = dense_forward(cache.head1_relu, tm.head2);
    return cache.logits;
}

template <typename T>
struct TransferGrads {
    MscnnGrads<T> backbone;
    DenseGrads<T> head1, head2;

    void init_like(TransferModel<T>& tm) {
        backbone.init_like(tm.backbone);
        head1.init_like(tm.head1);
        head2.init_like(tm.head2);
    }

    /// Must mirror TransferModel::trainable_arrays.
    std::vector<const std::vector<T>*> trainable_grad_arrays(const TransferModel<T>& tm) const {
        std::vector<const std::vector<T>*> out;
        if (!tm.branches_frozen()) {
            for (const auto& b : backbone.branches) {
                out.push_back(&b.kernel);
                out.push_back(&b.bias);
            }
        }
        for (int i = 0; i < tm.backbone.cfg.n_blocks(); ++i) {
            if (tm.block_frozen(i)) continue;
            const auto& blk = backbone.blocks[i];
            out.push_back(&blk.conv.kernel);
            out.push_back(&blk.conv.bias);
            out.push_back(&blk.bn.gamma);
            out.push_back(&blk.bn.beta);
        }
        if (!tm.freeze_heads) {
            out.push_back(&head1.weight);
            out.push_back(&head1.bias);
            out.push_back(&head2.weight);
            out.push_back(&head2.bias);
        }
        return out;
    }
};

/// Gradients for frozen layers are never computed, so no update can reach
/// them even indirectly.
template <typename T>
void transfer_backward(TransferModel<T>& tm, const TransferCache<T>& cache, const Matrix<T>& grad_logits,
                       TransferGrads<T>& grads) {
    Matrix<T> gh = dense_backward(cache.head1_relu, tm.head2, grad_logits, grads.head2);
    for (std::size_t i = 0; i < gh.data.size(); ++i)
        if (!(cache.head1_relu.data[i] > T(0))) gh.data[i] = T(0);
    Matrix<T> gflat = dense_backward(cache.features.flat, tm.head1, gh, grads.head1);
    mscnn_features_backward(tm.backbone, cache.features, gflat, grads.backbone, tm.freeze_through);
}

/// Deterministic eval-mode pass over a sample set.
template <typename T>
EvalResult evaluate_transfer(TransferModel<T>& tm, const SampleSet& set, int batch_size = 96) {
    require(!set.empty(), ErrorKind::invalid_argument, "cannot evaluate on an empty set");
    std::vector<int> order(set.size());
    std::iota(order.begin(), order.end(), 0);
    EvalResult out;
    out.predictions.resize(set.size());
    double loss_sum = 0.0;
    std::int64_t correct = 0;
    TransferCache<T> cache;
    for (int from = 0; from < static_cast<int>(set.size()); from += batch_size) {
        const int count = std::min<int>(batch_size, static_cast<int>(set.size()) - from);
        Tensor4<T> x = batch_tensor<T>(set, order, from, count);
        std::vector<int> labels(count);
        for (int i = 0; i < count; ++i) labels[i] = set.labels[from + i].code();
        Matrix<T> logits = transfer_forward(tm, x, false, cache);
        SoftmaxResult<T> sm = softmax_cross_entropy(logits, labels);
        loss_sum += sm.loss * count;
        std::vector<int> preds = argmax_rows(logits);
        for (int i = 0; i < count; ++i) {
            out.predictions[from + i] = preds[i];
            if (preds[i] == labels[i]) ++correct;
        }
    }
    out.loss = loss_sum / static_cast<double>(set.size());
    out.accuracy = static_cast<double>(correct) / static_cast<double>(set.size());
    return out;
}

template <typename T>
using TransferEpochCallback = std::function<bool(const EpochStats&, TransferModel<T>&)>;

/// Fine-tunes the unfrozen part of a transfer model. Same schedule, shuffle
/// streams, and early-stop semantics as train_mscnn; optimizer state covers
/// the trainable arrays only.
template <typename T>
TrainResult train_transfer(TransferModel<T>& tm, const SampleSet& train, const SampleSet& val,
                           const TrainConfig& cfg, const TransferEpochCallback<T>& callback = {}) {
    cfg.validate();
    require(!train.empty(), ErrorKind::invalid_argument, "training set is empty");
    require(!val.empty(), ErrorKind::invalid_argument, "validation set is empty");
    require(train.patch_size == tm.backbone.cfg.input_size && train.n_channels == tm.backbone.cfg.in_channels,
            ErrorKind::dimension, "training set does not match model input shape");

    auto params = tm.trainable_arrays();
    AdamState<T> adam;
    adam.init(params);
    TransferGrads<T> grads;
    EarlyStopper stopper(cfg.patience);

    TrainResult result;
    std::vector<std::vector<T>> best_state;
    int best_epoch = 0;
    double best_val = std::numeric_limits<double>::infinity();
    bool callback_stop = false;

    const int n = static_cast<int>(train.size());
    std::vector<int> order(n);
    TransferCache<T> cache;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(cfg.seed ^ splitmix64(static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        std::int64_t correct = 0;
        for (int from = 0; from < n; from += cfg.batch_size) {
            const int count = std::min(cfg.batch_size, n - from);
            Tensor4<T> x = batch_tensor<T>(train, order, from, count);
            std::vector<int> labels(count);
            for (int i = 0; i < count; ++i) labels[i] = train.labels[order[from + i]].code();
            Matrix<T> logits = transfer_forward(tm, x, true, cache);
            SoftmaxResult<T> sm = softmax_cross_entropy(logits, labels);
            require(std::isfinite(sm.loss), ErrorKind::diverged, "training loss is not finite");
            loss_sum += sm.loss * count;
            std::vector<int> preds = argmax_rows(logits);
            for (int i = 0; i < count; ++i)
                if (preds[i] == labels[i]) ++correct;
            if (params.empty()) continue; // everything frozen: nothing to update
            grads.init_like(tm);
            transfer_backward(tm, cache, sm.grad_logits, grads);
            adam.step(cfg.adam, params, grads.trainable_grad_arrays(tm));
        }

        EvalResult val_eval = evaluate_transfer(tm, val, cfg.batch_size);
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / n;
        stats.train_accuracy = static_cast<double>(correct) / n;
        stats.val_loss = val_eval.loss;
        stats.val_accuracy = val_eval.accuracy;
        result.history.push_back(stats);

        if (val_eval.loss < best_val) {
            best_val = val_eval.loss;
            best_epoch = epoch;
            best_state = detail::snapshot_arrays(tm.state_arrays());
        }
        if (callback && callback(stats, tm)) {
            callback_stop = true;
            break;
        }
        if (cfg.early_stop && stopper.observe(val_eval.loss)) {
            result.early_stopped = true;
            break;
        }
    }

    result.best_epoch = best_epoch;
    if (cfg.early_stop && !callback_stop && !best_state.empty())
        detail::restore_arrays(tm.state_arrays(), best_state);
    return result;
}

} // namespace lcz
