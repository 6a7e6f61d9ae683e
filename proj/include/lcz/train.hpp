#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "lcz/mscnn.hpp"

namespace lcz {

struct TrainConfig {
    int batch_size = 96;
    int max_epochs = 500;
    bool early_stop = true;
    int patience = 15;
    AdamConfig adam;
    std::uint64_t seed = 0;

    void validate() const {
        require(batch_size >= 1, ErrorKind::invalid_argument, "batch_size must be at least 1");
        require(max_epochs >= 1, ErrorKind::invalid_argument, "max_epochs must be at least 1");
        require(patience >= 1, ErrorKind::invalid_argument, "patience must be at least 1");
        adam.validate();
    }
};

/// Stops after `patience` consecutive epochs without a strict improvement in
/// validation loss.
class EarlyStopper {
  public:
    explicit EarlyStopper(int patience) : patience_(patience) {
        require(patience >= 1, ErrorKind::invalid_argument, "patience must be at least 1");
    }

    /// Returns true when training should stop after this observation.
    bool observe(double val_loss) {
        ++epoch_;
        if (val_loss < best_loss_) {
            best_loss_ = val_loss;
            best_epoch_ = epoch_;
            stale_ = 0;
        } else {
            ++stale_;
        }
        return stale_ >= patience_;
    }

    int best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_loss_; }

  private:
    int patience_;
    int epoch_ = 0;
    int stale_ = 0;
    int best_epoch_ = 0;
    double best_loss_ = std::numeric_limits<double>::infinity();
};

struct EpochStats {
    int epoch = 0; // 1-based
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    int best_epoch = 0;
    bool early_stopped = false;
};

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
    std::vector<int> predictions;
};

/// Deterministic eval-mode pass over a whole sample set.
template <typename T>
EvalResult evaluate_mscnn(MscnnModel<T>& model, const SampleSet& set, int batch_size = 96) {
    require(!set.empty(), ErrorKind::invalid_argument, "cannot evaluate on an empty set");
    std::vector<int> order(set.size());
    std::iota(order.begin(), order.end(), 0);
    EvalResult out;
    out.predictions.resize(set.size());
    double loss_sum = 0.0;
    std::int64_t correct = 0;
    MscnnCache<T> cache;
    for (int from = 0; from < static_cast<int>(set.size()); from += batch_size) {
        const int count = std::min<int>(batch_size, static_cast<int>(set.size()) - from);
        Tensor4<T> x = batch_tensor<T>(set, order, from, count);
        std::vector<int> labels(count);
        for (int i = 0; i < count; ++i) labels[i] = set.labels[from + i].code();
        Matrix<T> logits = mscnn_forward(model, x, false, nullptr, cache);
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

namespace detail {

template <typename T>
std::vector<std::vector<T>> snapshot_arrays(const std::vector<std::vector<T>*>& arrays) {
    std::vector<std::vector<T>> out;
    out.reserve(arrays.size());
    for (auto* a : arrays) out.push_back(*a);
    return out;
}

template <typename T>
void restore_arrays(const std::vector<std::vector<T>*>& arrays, const std::vector<std::vector<T>>& snap) {
    for (std::size_t i = 0; i < arrays.size(); ++i) *arrays[i] = snap[i];
}

} // namespace detail

/// Called after each epoch's validation pass; return true to stop training
/// immediately (current weights are kept).
template <typename T>
using EpochCallback = std::function<bool(const EpochStats&, MscnnModel<T>&)>;

/// Mini-batch Adam training with per-epoch reshuffling and early stopping.
/// Batch order for epoch e (1-based) comes from Rng(seed ^ splitmix64(e));
/// the dropout stream is Rng(seed ^ splitmix64(0x20000)). When early
/// stopping triggers (or max_epochs is reached with early_stop enabled),
/// the best-validation-epoch state is restored bitwise. With early_stop
/// disabled or a callback-requested stop, the final weights are kept.
template <typename T>
TrainResult train_mscnn(MscnnModel<T>& model, const SampleSet& train, const SampleSet& val,
                        const TrainConfig& cfg, const EpochCallback<T>& callback = {}) {
    cfg.validate();
    require(!train.empty(), ErrorKind::invalid_argument, "training set is empty");
    require(!val.empty(), ErrorKind::invalid_argument, "validation set is empty");
    require(train.patch_size == model.cfg.input_size && train.n_channels == model.cfg.in_channels,
            ErrorKind::dimension, "training set does not match model input shape");

    auto params = model.param_arrays();
    AdamState<T> adam;
    adam.init(params);
    MscnnGrads<T> grads;
    Rng dropout_rng(cfg.seed ^ splitmix64(0x20000u));
    EarlyStopper stopper(cfg.patience);

    TrainResult result;
    std::vector<std::vector<T>> best_state;
    int best_epoch = 0;
    double best_val = std::numeric_limits<double>::infinity();
    bool callback_stop = false;

    const int n = static_cast<int>(train.size());
    std::vector<int> order(n);
    MscnnCache<T> cache;
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
            Matrix<T> logits = mscnn_forward(model, x, true, &dropout_rng, cache);
            SoftmaxResult<T> sm = softmax_cross_entropy(logits, labels);
            require(std::isfinite(sm.loss), ErrorKind::diverged, "training loss is not finite");
            loss_sum += sm.loss * count;
            std::vector<int> preds = argmax_rows(logits);
            for (int i = 0; i < count; ++i)
                if (preds[i] == labels[i]) ++correct;
            grads.init_like(model);
            mscnn_backward(model, cache, sm.grad_logits, grads);
            adam.step(cfg.adam, params, grads.grad_arrays());
        }

        EvalResult val_eval = evaluate_mscnn(model, val, cfg.batch_size);
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
            best_state = detail::snapshot_arrays(model.state_arrays());
        }
        if (callback && callback(stats, model)) {
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
        detail::restore_arrays(model.state_arrays(), best_state);
    return result;
}

} // namespace lcz
