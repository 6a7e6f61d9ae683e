#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lcz/mscnn.hpp"

namespace lcz {

/// Centered finite-difference gradient verification, run entirely in double
/// precision. Relative error is |a - n| / max(|a|, |n|, 1e-8).

inline double gradcheck_rel_err(double a, double n) {
    const double denom = std::max({std::abs(a), std::abs(n), 1e-8});
    return std::abs(a - n) / denom;
}

namespace detail {

/// Max relative error between analytic[i] and the centered difference of
/// loss_fn over values[i].
template <typename F>
double fd_max_err(std::vector<double>& values, const std::vector<double>& analytic, F&& loss_fn, double h) {
    require(values.size() == analytic.size(), ErrorKind::dimension, "gradient size mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double orig = values[i];
        values[i] = orig + h;
        const double lp = loss_fn();
        values[i] = orig - h;
        const double lm = loss_fn();
        values[i] = orig;
        const double numeric = (lp - lm) / (2.0 * h);
        worst = std::max(worst, gradcheck_rel_err(analytic[i], numeric));
    }
    return worst;
}

inline std::vector<double> random_vec(std::size_t n, Rng& rng, double scale = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal() * scale;
    return v;
}

inline Tensor4<double> random_tensor(int n, int c, int h, int w, Rng& rng) {
    Tensor4<double> t(n, c, h, w);
    for (double& x : t.data) x = rng.normal();
    return t;
}

inline double weighted_sum(const std::vector<double>& y, const std::vector<double>& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
}

} // namespace detail

inline double gradcheck_conv(std::uint64_t seed, double h) {
    Rng rng(seed ^ splitmix64(1));
    Tensor4<double> x = detail::random_tensor(2, 3, 5, 5, rng);
    ConvLayer<double> l(3, 4, 3);
    for (double& w : l.kernel) w = rng.normal() * 0.5;
    for (double& b : l.bias) b = rng.normal() * 0.1;
    Tensor4<double> y0 = conv2d_forward(x, l);
    const std::vector<double> r = detail::random_vec(y0.size(), rng);

    auto loss = [&]() {
        Tensor4<double> y = conv2d_forward(x, l);
        return detail::weighted_sum(y.data, r);
    };
    ConvGrads<double> g;
    g.init_like(l);
    Tensor4<double> gy = y0;
    gy.data = r;
    Tensor4<double> gx = conv2d_backward(x, l, gy, g);

    double worst = detail::fd_max_err(l.kernel, g.kernel, loss, h);
    worst = std::max(worst, detail::fd_max_err(l.bias, g.bias, loss, h));
    worst = std::max(worst, detail::fd_max_err(x.data, gx.data, loss, h));
    return worst;
}

inline double gradcheck_batchnorm(std::uint64_t seed, double h, bool train) {
    Rng rng(seed ^ splitmix64(train ? 2 : 3));
    Tensor4<double> x = detail::random_tensor(3, 2, 4, 4, rng);
    BatchNormLayer<double> l(2);
    for (double& g : l.gamma) g = 1.0 + rng.normal() * 0.2;
    for (double& b : l.beta) b = rng.normal() * 0.2;
    for (double& m : l.running_mean) m = rng.normal() * 0.3;
    for (double& v : l.running_var) v = 0.5 + rng.uniform();
    const std::vector<double> r = detail::random_vec(x.size(), rng);

    auto loss = [&]() {
        BatchNormLayer<double> lc = l; // running-stat updates stay local
        BnCache<double> cache;
        Tensor4<double> y = batchnorm_forward(x, lc, train, cache);
        return detail::weighted_sum(y.data, r);
    };
    BatchNormLayer<double> lc = l;
    BnCache<double> cache;
    Tensor4<double> y0 = batchnorm_forward(x, lc, train, cache);
    BatchNormGrads<double> g;
    g.init_like(l);
    Tensor4<double> gy = y0;
    gy.data = r;
    Tensor4<double> gx = batchnorm_backward(l, gy, cache, g);

    double worst = detail::fd_max_err(l.gamma, g.gamma, loss, h);
    worst = std::max(worst, detail::fd_max_err(l.beta, g.beta, loss, h));
    worst = std::max(worst, detail::fd_max_err(x.data, gx.data, loss, h));
    return worst;
}

inline double gradcheck_dense(std::uint64_t seed, double h) {
    Rng rng(seed ^ splitmix64(4));
    Matrix<double> x(3, 6);
    for (double& v : x.data) v = rng.normal();
    DenseLayer<double> l(6, 4);
    for (double& w : l.weight) w = rng.normal() * 0.5;
    for (double& b : l.bias) b = rng.normal() * 0.1;
    Matrix<double> y0 = dense_forward(x, l);
    const std::vector<double> r = detail::random_vec(y0.data.size(), rng);

    auto loss = [&]() {
        Matrix<double> y = dense_forward(x, l);
        return detail::weighted_sum(y.data, r);
    };
    DenseGrads<double> g;
    g.init_like(l);
    Matrix<double> gy = y0;
    gy.data = r;
    Matrix<double> gx = dense_backward(x, l, gy, g);

    double worst = detail::fd_max_err(l.weight, g.weight, loss, h);
    worst = std::max(worst, detail::fd_max_err(l.bias, g.bias, loss, h));
    worst = std::max(worst, detail::fd_max_err(x.data, gx.data, loss, h));
    return worst;
}

inline double gradcheck_relu(std::uint64_t seed, double h) {
    Rng rng(seed ^ splitmix64(5));
    Tensor4<double> x = detail::random_tensor(2, 2, 3, 3, rng);
    const std::vector<double> r = detail::random_vec(x.size(), rng);
    auto loss = [&]() {
        Tensor4<double> y = relu_forward(x);
        return detail::weighted_sum(y.data, r);
    };
    Tensor4<double> y0 = relu_forward(x);
    Tensor4<double> gy = y0;
    gy.data = r;
    Tensor4<double> gx = relu_backward(y0, gy);
    return detail::fd_max_err(x.data, gx.data, loss, h);
}

inline double gradcheck_dropout(std::uint64_t seed, double h) {
    Rng rng(seed ^ splitmix64(6));
    Matrix<double> x(4, 8);
    for (double& v : x.data) v = rng.normal();
    const std::vector<double> r = detail::random_vec(x.data.size(), rng);
    const std::uint64_t mask_seed = seed ^ splitmix64(7);

    auto loss = [&]() {
        Rng mask_rng(mask_seed); // same mask on every evaluation
        DropoutCache<double> cache;
        Matrix<double> y = dropout_forward(x, 0.25, mask_rng, cache);
        return detail::weighted_sum(y.data, r);
    };
    Rng mask_rng(mask_seed);
    DropoutCache<double> cache;
    Matrix<double> y0 = dropout_forward(x, 0.25, mask_rng, cache);
    Matrix<double> gy = y0;
    gy.data = r;
    Matrix<double> gx = dropout_backward(gy, cache);
    return detail::fd_max_err(x.data, gx.data, loss, h);
}

/// Pool gradients verify the tie-free routing case; explicit tie handling is
/// covered by direct unit tests.
inline double gradcheck_pool(std::uint64_t seed, double h) {
    Rng rng(seed ^ splitmix64(8));
    Tensor4<double> x = detail::random_tensor(2, 3, 6, 6, rng);
    const std::vector<double> r = detail::random_vec(x.size() / 4, rng);
    auto loss = [&]() {
        PoolCache<double> cache;
        Tensor4<double> y = maxpool2_forward(x, cache);
        return detail::weighted_sum(y.data, r);
    };
    PoolCache<double> cache;
    Tensor4<double> y0 = maxpool2_forward(x, cache);
    Tensor4<double> gy = y0;
    gy.data = r;
    Tensor4<double> gx = maxpool2_backward(x, gy, cache);
    return detail::fd_max_err(x.data, gx.data, loss, h);
}

inline double gradcheck_softmax(std::uint64_t seed, double h) {
    Rng rng(seed ^ splitmix64(9));
    Matrix<double> logits(3, 7);
    for (double& v : logits.data) v = rng.normal();
    const std::vector<int> labels = {2, 0, 6};
    auto loss = [&]() { return softmax_cross_entropy(logits, labels).loss; };
    SoftmaxResult<double> sm = softmax_cross_entropy(logits, labels);
    return detail::fd_max_err(logits.data, sm.grad_logits.data, loss, h);
}

/// Composed end-to-end check: a tiny two-block model with 4-channel branches
/// on 8x8 input, softmax cross-entropy loss, dropout active with a fixed
/// mask, batch norm in train mode. Verifies every parameter gradient.
inline double gradcheck_mscnn(std::uint64_t seed, double h) {
    MscnnConfig cfg;
    cfg.in_channels = 3;
    cfg.input_size = 8;
    cfg.branch_channels = 4;
    cfg.block_channels = {8, 8};
    cfg.dense_units = 12;
    cfg.n_classes = 6;
    cfg.dropout = 0.25;
    MscnnModel<double> model;
    model.init(cfg, seed);

    Rng rng(seed ^ splitmix64(10));
    Tensor4<double> x = detail::random_tensor(2, cfg.in_channels, cfg.input_size, cfg.input_size, rng);
    const std::vector<int> labels = {1, 4};
    const std::uint64_t mask_seed = seed ^ splitmix64(11);

    auto loss = [&]() {
        Rng mask_rng(mask_seed);
        MscnnCache<double> cache;
        Matrix<double> logits = mscnn_forward(model, x, true, &mask_rng, cache);
        return softmax_cross_entropy(logits, labels).loss;
    };

    Rng mask_rng(mask_seed);
    MscnnCache<double> cache;
    Matrix<double> logits = mscnn_forward(model, x, true, &mask_rng, cache);
    SoftmaxResult<double> sm = softmax_cross_entropy(logits, labels);
    MscnnGrads<double> grads;
    grads.init_like(model);
    mscnn_backward(model, cache, sm.grad_logits, grads);

    // A constant bias ahead of train-mode batch norm is cancelled exactly by
    // the mean subtraction, so the block conv biases have an identically-zero
    // gradient. Finite differences only measure rounding noise there; the
    // meaningful check is that the analytic gradient vanishes.
    std::vector<const std::vector<double>*> invariant;
    for (std::size_t b = 0; b < model.blocks.size(); ++b)
        invariant.push_back(&grads.blocks[b].conv.bias);

    auto params = model.param_arrays();
    auto analytic = grads.grad_arrays();
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const bool is_invariant =
            std::find(invariant.begin(), invariant.end(), analytic[i]) != invariant.end();
        if (is_invariant) {
            for (double a : *analytic[i]) worst = std::max(worst, std::abs(a) / 1e-8);
            continue;
        }
        worst = std::max(worst, detail::fd_max_err(*params[i], *analytic[i], loss, h));
    }
    return worst;
}

struct GradCheckCase {
    std::string component;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

/// Runs every component check. Per-layer tolerance 1e-6, composed model 1e-5.
inline std::vector<GradCheckCase> run_gradient_checks(std::uint64_t seed = 42, double h = 1e-5) {
    std::vector<GradCheckCase> out;
    auto add = [&](const std::string& name, double err, double tol) {
        out.push_back({name, err, tol, err < tol});
    };
    add("conv", gradcheck_conv(seed, h), 1e-6);
    add("batchnorm_train", gradcheck_batchnorm(seed, h, true), 1e-6);
    add("batchnorm_eval", gradcheck_batchnorm(seed, h, false), 1e-6);
    add("dense", gradcheck_dense(seed, h), 1e-6);
    add("relu", gradcheck_relu(seed, h), 1e-6);
    add("dropout", gradcheck_dropout(seed, h), 1e-6);
    add("pool", gradcheck_pool(seed, h), 1e-6);
    add("softmax", gradcheck_softmax(seed, h), 1e-6);
    add("mscnn", gradcheck_mscnn(seed, h), 1e-5);
    return out;
}

} // namespace lcz
