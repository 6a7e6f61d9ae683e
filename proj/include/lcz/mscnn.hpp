#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "lcz/adam.hpp"
#include "lcz/dataset.hpp"
#include "lcz/layers.hpp"
#include "lcz/rng.hpp"

namespace lcz {

/// Multi-scale CNN: three parallel same-padded convolutions (one per kernel
/// size) concatenated along channels, then a stack of conv/BN/ReLU/maxpool
/// blocks, then dense -> ReLU -> dropout -> dense logits.
struct MscnnConfig {
    int in_channels = 10;
    int input_size = 32;
    int branch_channels = 32;
    std::array<int, 3> branch_kernels{3, 5, 7};
    std::vector<int> block_channels{64, 128, 128, 256, 256};
    int block_kernel = 3;
    int dense_units = 256;
    int n_classes = static_cast<int>(kNumClasses);
    double dropout = 0.25;

    int n_blocks() const { return static_cast<int>(block_channels.size()); }

    int final_spatial() const {
        int s = input_size;
        for (int i = 0; i < n_blocks(); ++i) s /= 2;
        return s;
    }

    int concat_channels() const { return 3 * branch_channels; }

    int flatten_dim() const {
        const int s = final_spatial();
        return block_channels.back() * s * s;
    }

    void validate() const {
        require(in_channels >= 1, ErrorKind::invalid_argument, "in_channels must be at least 1");
        require(branch_channels >= 1, ErrorKind::invalid_argument, "branch_channels must be at least 1");
        for (int k : branch_kernels)
            require(k >= 1 && k % 2 == 1, ErrorKind::invalid_argument, "branch kernels must be odd");
        require(!block_channels.empty(), ErrorKind::invalid_argument, "at least one block is required");
        for (int c : block_channels)
            require(c >= 1, ErrorKind::invalid_argument, "block channels must be positive");
        require(block_kernel >= 1 && block_kernel % 2 == 1, ErrorKind::invalid_argument,
                "block kernel must be odd");
        require(dense_units >= 1, ErrorKind::invalid_argument, "dense_units must be at least 1");
        require(n_classes >= 2, ErrorKind::invalid_argument, "n_classes must be at least 2");
        require(dropout >= 0.0 && dropout < 1.0, ErrorKind::invalid_argument, "dropout must be in [0, 1)");
        int s = input_size;
        for (int i = 0; i < n_blocks(); ++i) {
            require(s >= 2 && s % 2 == 0, ErrorKind::invalid_argument,
                    "input_size must halve cleanly through every block");
            s /= 2;
        }
    }
};

template <typename T>
struct MscnnModel {
    MscnnConfig cfg;
    std::uint64_t seed = 0;
    std::array<ConvLayer<T>, 3> branches;
    struct Block {
        ConvLayer<T> conv;
        BatchNormLayer<T> bn;
    };
    std::vector<Block> blocks;
    DenseLayer<T> fc1, fc2;

    /// He-normal weights, zero biases, identity batch norm. Each layer draws
    /// from its own stream: seed ^ splitmix64(0x10000 + layer_index).
    void init(const MscnnConfig& config, std::uint64_t seed_) {
        config.validate();
        cfg = config;
        seed = seed_;
        int layer = 0;
        for (int b = 0; b < 3; ++b) {
            branches[b] = ConvLayer<T>(cfg.in_channels, cfg.branch_channels, cfg.branch_kernels[b]);
            init_conv(branches[b], layer++);
        }
        blocks.clear();
        int in_ch = cfg.concat_channels();
        for (int i = 0; i < cfg.n_blocks(); ++i) {
            Block blk;
            blk.conv = ConvLayer<T>(in_ch, cfg.block_channels[i], cfg.block_kernel);
            init_conv(blk.conv, layer++);
            blk.bn = BatchNormLayer<T>(cfg.block_channels[i]);
            blocks.push_back(std::move(blk));
            in_ch = cfg.block_channels[i];
        }
        fc1 = DenseLayer<T>(cfg.flatten_dim(), cfg.dense_units);
        init_dense(fc1, layer++);
        fc2 = DenseLayer<T>(cfg.dense_units, cfg.n_classes);
        init_dense(fc2, layer++);
    }

    /// Trainable parameter arrays in declaration order.
    std::vector<std::vector<T>*> param_arrays() {
        std::vector<std::vector<T>*> out;
        for (auto& b : branches) {
            out.push_back(&b.kernel);
            out.push_back(&b.bias);
        }
        for (auto& blk : blocks) {
            out.push_back(&blk.conv.kernel);
            out.push_back(&blk.conv.bias);
            out.push_back(&blk.bn.gamma);
            out.push_back(&blk.bn.beta);
        }
        out.push_back(&fc1.weight);
        out.push_back(&fc1.bias);
        out.push_back(&fc2.weight);
        out.push_back(&fc2.bias);
        return out;
    }

    /// Parameters plus batch-norm running statistics; the full serialized
    /// state, in declaration order.
    std::vector<std::vector<T>*> state_arrays() {
        std::vector<std::vector<T>*> out;
        for (auto& b : branches) {
            out.push_back(&b.kernel);
            out.push_back(&b.bias);
        }
        for (auto& blk : blocks) {
            out.push_back(&blk.conv.kernel);
            out.push_back(&blk.conv.bias);
            out.push_back(&blk.bn.gamma);
            out.push_back(&blk.bn.beta);
            out.push_back(&blk.bn.running_mean);
            out.push_back(&blk.bn.running_var);
        }
        out.push_back(&fc1.weight);
        out.push_back(&fc1.bias);
        out.push_back(&fc2.weight);
        out.push_back(&fc2.bias);
        return out;
    }

    std::size_t num_params() {
        std::size_t n = 0;
        for (auto* p : param_arrays()) n += p->size();
        return n;
    }

  private:
    void init_conv(ConvLayer<T>& l, int layer) {
        Rng rng(seed ^ splitmix64(0x10000u + static_cast<std::uint64_t>(layer)));
        const double stddev = std::sqrt(2.0 / (static_cast<double>(l.in_ch) * l.ksize * l.ksize));
        for (T& w : l.kernel) w = static_cast<T>(rng.normal() * stddev);
    }

    void init_dense(DenseLayer<T>& l, int layer) {
        Rng rng(seed ^ splitmix64(0x10000u + static_cast<std::uint64_t>(layer)));
        const double stddev = std::sqrt(2.0 / static_cast<double>(l.in_dim));
        for (T& w : l.weight) w = static_cast<T>(rng.normal() * stddev);
    }
};

template <typename T>
struct MscnnGrads {
    std::array<ConvGrads<T>, 3> branches;
    struct Block {
        ConvGrads<T> conv;
        BatchNormGrads<T> bn;
    };
    std::vector<Block> blocks;
    DenseGrads<T> fc1, fc2;

    void init_like(MscnnModel<T>& model) {
        for (int b = 0; b < 3; ++b) branches[b].init_like(model.branches[b]);
        blocks.resize(model.blocks.size());
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            blocks[i].conv.init_like(model.blocks[i].conv);
            blocks[i].bn.init_like(model.blocks[i].bn);
        }
        fc1.init_like(model.fc1);
        fc2.init_like(model.fc2);
    }

    /// Same order as MscnnModel::param_arrays.
    std::vector<const std::vector<T>*> grad_arrays() const {
        std::vector<const std::vector<T>*> out;
        for (const auto& b : branches) {
            out.push_back(&b.kernel);
            out.push_back(&b.bias);
        }
        for (const auto& blk : blocks) {
            out.push_back(&blk.conv.kernel);
            out.push_back(&blk.conv.bias);
            out.push_back(&blk.bn.gamma);
            out.push_back(&blk.bn.beta);
        }
        out.push_back(&fc1.weight);
        out.push_back(&fc1.bias);
        out.push_back(&fc2.weight);
        out.push_back(&fc2.bias);
        return out;
    }
};

template <typename T>
struct MscnnCache {
    bool train = false;
    Tensor4<T> input;
    Tensor4<T> concat;
    std::vector<BnCache<T>> bn;
    std::vector<Tensor4<T>> relu_out;
    std::vector<PoolCache<T>> pool;
    std::vector<Tensor4<T>> pool_out;
    Matrix<T> flat;
    Matrix<T> fc1_relu;
    DropoutCache<T> drop;
    Matrix<T> fc2_in;
    Matrix<T> logits;
};

namespace detail {

template <typename T>
Matrix<T> flatten(const Tensor4<T>& x) {
    Matrix<T> out(x.n, x.c * x.h * x.w);
    std::copy(x.data.begin(), x.data.end(), out.data.begin());
    return out;
}

template <typename T>
Tensor4<T> unflatten(const Matrix<T>& m, int c, int h, int w) {
    Tensor4<T> out(m.rows, c, h, w);
    std::copy(m.data.begin(), m.data.end(), out.data.begin());
    return out;
}

} // namespace detail

/// Convolutional feature pass: branches, concat, blocks, flatten. Train mode
/// uses batch statistics; blocks with index < bn_eval_through run their BN in
/// eval mode even when train is true and leave running statistics untouched
/// (used when a frozen prefix is trained under transfer learning).
template <typename T>
const Matrix<T>& mscnn_features(MscnnModel<T>& model, const Tensor4<T>& x, bool train,
                                MscnnCache<T>& cache, int bn_eval_through = 0) {
    const MscnnConfig& cfg = model.cfg;
    require(x.c == cfg.in_channels && x.h == cfg.input_size && x.w == cfg.input_size,
            ErrorKind::dimension, "model input shape mismatch");
    cache.train = train;
    cache.input = x;
    cache.concat = Tensor4<T>(x.n, cfg.concat_channels(), x.h, x.w);
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    for (int b = 0; b < 3; ++b) {
        Tensor4<T> bo = conv2d_forward(x, model.branches[b]);
        for (int in = 0; in < x.n; ++in) {
            T* dst = cache.concat.item(in) + static_cast<std::size_t>(b) * cfg.branch_channels * plane;
            std::copy(bo.item(in), bo.item(in) + static_cast<std::size_t>(cfg.branch_channels) * plane, dst);
        }
    }
    const int nb = cfg.n_blocks();
    cache.bn.assign(nb, BnCache<T>{});
    cache.relu_out.assign(nb, Tensor4<T>{});
    cache.pool.assign(nb, PoolCache<T>{});
    cache.pool_out.assign(nb, Tensor4<T>{});
    const Tensor4<T>* cur = &cache.concat;
    for (int i = 0; i < nb; ++i) {
        Tensor4<T> c = conv2d_forward(*cur, model.blocks[i].conv);
        const bool bn_train = train && i >= bn_eval_through;
        Tensor4<T> n = batchnorm_forward(c, model.blocks[i].bn, bn_train, cache.bn[i]);
        cache.relu_out[i] = relu_forward(n);
        cache.pool_out[i] = maxpool2_forward(cache.relu_out[i], cache.pool[i]);
        cur = &cache.pool_out[i];
    }
    cache.flat = detail::flatten(*cur);
    return cache.flat;
}

/// Backward through blocks and branches from d(loss)/d(flatten).
/// Accumulates parameter gradients into grads. grad_through is a freeze
/// boundary: layers at or below it are frozen and skipped entirely (-1 none,
/// 0 the multi-scale layer, k blocks 1..k). Gradients for frozen layers are
/// never computed.
template <typename T>
void mscnn_features_backward(MscnnModel<T>& model, const MscnnCache<T>& cache, const Matrix<T>& grad_flat,
                             MscnnGrads<T>& grads, int grad_through = -1) {
    const MscnnConfig& cfg = model.cfg;
    const int nb = cfg.n_blocks();
    if (grad_through >= nb) return;
    const int lowest_block = std::max(grad_through, 0); // lowest unfrozen block (0-based)
    const Tensor4<T>& last = cache.pool_out[nb - 1];
    Tensor4<T> gcur = detail::unflatten(grad_flat, last.c, last.h, last.w);
    for (int i = nb - 1; i >= lowest_block; --i) {
        const Tensor4<T>& block_in = i == 0 ? cache.concat : cache.pool_out[i - 1];
        Tensor4<T> gr = maxpool2_backward(cache.relu_out[i], gcur, cache.pool[i]);
        gr = relu_backward(cache.relu_out[i], gr);
        Tensor4<T> gc = batchnorm_backward(model.blocks[i].bn, gr, cache.bn[i], grads.blocks[i].bn);
        gcur = conv2d_backward(block_in, model.blocks[i].conv, gc, grads.blocks[i].conv);
    }
    if (grad_through >= 0) return;
    const std::size_t plane = static_cast<std::size_t>(cache.input.h) * cache.input.w;
    for (int b = 0; b < 3; ++b) {
        Tensor4<T> gb(cache.input.n, cfg.branch_channels, cache.input.h, cache.input.w);
        for (int in = 0; in < cache.input.n; ++in) {
            const T* src = gcur.item(in) + static_cast<std::size_t>(b) * cfg.branch_channels * plane;
            std::copy(src, src + static_cast<std::size_t>(cfg.branch_channels) * plane, gb.item(in));
        }
        conv2d_backward(cache.input, model.branches[b], gb, grads.branches[b]);
    }
}

/// Forward pass. Train mode applies dropout (rng required) and batch-norm
/// batch statistics; eval mode is deterministic and uses running statistics.
template <typename T>
Matrix<T> mscnn_forward(MscnnModel<T>& model, const Tensor4<T>& x, bool train, Rng* rng,
                        MscnnCache<T>& cache) {
    require(!train || rng != nullptr, ErrorKind::invalid_argument, "train-mode forward needs an rng");
    mscnn_features(model, x, train, cache);
    Matrix<T> f1 = dense_forward(cache.flat, model.fc1);
    relu_inplace(f1.data);
    cache.fc1_relu = std::move(f1);
    if (train && model.cfg.dropout > 0.0) {
        cache.fc2_in = dropout_forward(cache.fc1_relu, model.cfg.dropout, *rng, cache.drop);
    } else {
        cache.fc2_in = cache.fc1_relu;
        cache.drop.scale.assign(cache.fc1_relu.data.size(), T(1));
    }
    cache.logits = dense_forward(cache.fc2_in, model.fc2);
    return cache.logits;
}

/// Backward pass from d(loss)/d(logits). Accumulates into grads.
template <typename T>
void mscnn_backward(MscnnModel<T>& model, const MscnnCache<T>& cache, const Matrix<T>& grad_logits,
                    MscnnGrads<T>& grads) {
    Matrix<T> g2 = dense_backward(cache.fc2_in, model.fc2, grad_logits, grads.fc2);
    Matrix<T> gd = dropout_backward(g2, cache.drop);
    for (std::size_t i = 0; i < gd.data.size(); ++i)
        if (!(cache.fc1_relu.data[i] > T(0))) gd.data[i] = T(0);
    Matrix<T> gflat = dense_backward(cache.flat, model.fc1, gd, grads.fc1);
    mscnn_features_backward(model, cache, gflat, grads);
}

/// Argmax per row; ties resolve to the lower class code.
template <typename T>
std::vector<int> argmax_rows(const Matrix<T>& m) {
    std::vector<int> out(m.rows);
    for (int r = 0; r < m.rows; ++r) {
        const T* row = m.row(r);
        int best = 0;
        for (int j = 1; j < m.cols; ++j)
            if (row[j] > row[best]) best = j;
        out[r] = best;
    }
    return out;
}

/// Copies a batch of patches (given by indices) into an input tensor.
template <typename T>
Tensor4<T> batch_tensor(const SampleSet& set, const std::vector<int>& indices, int from, int count) {
    const int size = set.patch_size, ch = set.n_channels;
    Tensor4<T> x(count, ch, size, size);
    for (int i = 0; i < count; ++i) {
        const Patch& p = set.patches[indices[from + i]];
        T* dst = x.item(i);
        for (std::size_t j = 0; j < p.data.size(); ++j) dst[j] = static_cast<T>(p.data[j]);
    }
    return x;
}

} // namespace lcz
