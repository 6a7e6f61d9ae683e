#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "lcz/common.hpp"

namespace lcz {

/// Dense (batch, channels, height, width) tensor. Float for training,
/// double for gradient-check mode.
template <typename T>
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> data;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_, T fill = T(0))
        : n(n_), c(c_), h(h_), w(w_),
          data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

    std::size_t size() const { return data.size(); }

    std::size_t index(int in, int ic, int ih, int iw) const {
        return ((static_cast<std::size_t>(in) * c + ic) * h + ih) * w + iw;
    }

    T at(int in, int ic, int ih, int iw) const { return data[index(in, ic, ih, iw)]; }
    T& at(int in, int ic, int ih, int iw) { return data[index(in, ic, ih, iw)]; }

    /// Pointer to one item's (channels, h, w) block.
    T* item(int in) { return data.data() + static_cast<std::size_t>(in) * c * h * w; }
    const T* item(int in) const { return data.data() + static_cast<std::size_t>(in) * c * h * w; }

    bool same_shape(const Tensor4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

/// Row-major (rows, cols) matrix for the dense head and logits.
template <typename T>
struct Matrix {
    int rows = 0, cols = 0;
    std::vector<T> data;

    Matrix() = default;
    Matrix(int r, int c, T fill = T(0)) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

    T at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    T& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }

    T* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
    const T* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
};

} // namespace lcz
