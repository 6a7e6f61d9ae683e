#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "lcz/forest.hpp"
#include "lcz/io.hpp"
#include "lcz/model_io.hpp"

namespace lcz {

/// Batched patch classifier closure, shared by map rendering and evaluation.
using BatchPredictor = std::function<std::vector<int>(const std::vector<Patch>&)>;

inline BatchPredictor make_predictor(const RandomForest& forest) {
    return [&forest](const std::vector<Patch>& patches) {
        std::vector<int> out;
        out.reserve(patches.size());
        for (const Patch& p : patches) out.push_back(predict_rf(forest, p).label.code());
        return out;
    };
}

namespace detail {

template <typename T>
Tensor4<T> patches_tensor(const std::vector<Patch>& patches, int from, int count) {
    const Patch& first = patches[from];
    Tensor4<T> x(count, first.n_channels, first.size, first.size);
    for (int i = 0; i < count; ++i) {
        const Patch& p = patches[from + i];
        require(p.size == first.size && p.n_channels == first.n_channels, ErrorKind::dimension,
                "patches in one batch must share shape");
        T* dst = x.item(i);
        for (std::size_t j = 0; j < p.data.size(); ++j) dst[j] = static_cast<T>(p.data[j]);
    }
    return x;
}

} // namespace detail

inline BatchPredictor make_predictor(MscnnModel<float>& model, int batch_size = 96) {
    return [&model, batch_size](const std::vector<Patch>& patches) {
        std::vector<int> out;
        out.reserve(patches.size());
        MscnnCache<float> cache;
        for (int from = 0; from < static_cast<int>(patches.size()); from += batch_size) {
            const int count = std::min<int>(batch_size, static_cast<int>(patches.size()) - from);
            Tensor4<float> x = detail::patches_tensor<float>(patches, from, count);
            Matrix<float> logits = mscnn_forward(model, x, false, nullptr, cache);
            for (int p : argmax_rows(logits)) out.push_back(p);
        }
        return out;
    };
}

inline BatchPredictor make_predictor(TransferModel<float>& tm, int batch_size = 96) {
    return [&tm, batch_size](const std::vector<Patch>& patches) {
        std::vector<int> out;
        out.reserve(patches.size());
        TransferCache<float> cache;
        for (int from = 0; from < static_cast<int>(patches.size()); from += batch_size) {
            const int count = std::min<int>(batch_size, static_cast<int>(patches.size()) - from);
            Tensor4<float> x = detail::patches_tensor<float>(patches, from, count);
            Matrix<float> logits = transfer_forward(tm, x, false, cache);
            for (int p : argmax_rows(logits)) out.push_back(p);
        }
        return out;
    };
}

inline BatchPredictor make_predictor(LoadedModel& model, int batch_size = 96) {
    return model.kind == ModelKind::mscnn ? make_predictor(model.mscnn, batch_size)
                                          : make_predictor(model.transfer, batch_size);
}

/// Predictions for a whole sample set, batch order preserved.
inline std::vector<int> predict_set(const BatchPredictor& predictor, const SampleSet& set) {
    return predictor(set.patches);
}

/// Classifies a grid into coarse cells. Each output cell covers
/// cell_size_m / pixel_size input pixels; the patch_size window centered on
/// the cell's center pixel is classified and its class code written as
/// float. Cells whose window leaves the grid or touches nodata become
/// nodata, which puts a nodata band (patch_size/2 px worth of cells) around
/// the border. Output width/height = floor(grid_extent / cell_size).
inline RasterGrid classify_map(const BatchPredictor& predictor, const RasterGrid& grid,
                               double cell_size_m = 100.0, int patch_size = 32, int batch_size = 256) {
    require(grid.n_bands >= 1, ErrorKind::geometry, "map input grid has no bands");
    const double ratio = cell_size_m / grid.pixel_size_m;
    const int k = static_cast<int>(std::llround(ratio));
    require(k >= 1 && std::abs(ratio - k) < 1e-9, ErrorKind::geometry,
            "cell size must be an integer multiple of the pixel size");
    const int out_w = grid.width / k;
    const int out_h = grid.height / k;
    require(out_w >= 1 && out_h >= 1, ErrorKind::geometry, "grid smaller than one output cell");

    RasterGrid out(out_w, out_h, 1, cell_size_m, grid.origin_x, grid.origin_y, grid.nodata,
                   static_cast<float>(grid.nodata));

    std::vector<Patch> batch;
    std::vector<std::pair<int, int>> cells;
    batch.reserve(batch_size);
    cells.reserve(batch_size);
    auto flush = [&]() {
        if (batch.empty()) return;
        const std::vector<int> preds = predictor(batch);
        require(preds.size() == batch.size(), ErrorKind::dimension, "predictor returned wrong count");
        for (std::size_t i = 0; i < preds.size(); ++i) {
            require(preds[i] >= 0 && preds[i] < static_cast<int>(kNumClasses), ErrorKind::invalid_argument,
                    "predictor returned an invalid class code");
            out.at(0, cells[i].first, cells[i].second) = static_cast<float>(preds[i]);
        }
        batch.clear();
        cells.clear();
    };

    for (int ci = 0; ci < out_h; ++ci) {
        for (int cj = 0; cj < out_w; ++cj) {
            const int center_row = ci * k + k / 2;
            const int center_col = cj * k + k / 2;
            try {
                batch.push_back(extract_patch(grid, center_row, center_col, patch_size));
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::out_of_bounds || e.kind() == ErrorKind::nodata) continue;
                throw;
            }
            cells.emplace_back(ci, cj);
            if (static_cast<int>(batch.size()) >= batch_size) flush();
        }
    }
    flush();
    return out;
}

/// Class-code palette sidecar for map rasters (standard LCZ colors).
inline json map_palette_json() {
    static const char* kColors[kNumClasses] = {
        "#8c0000", "#d10000", "#ff0000", "#bf4d00", "#ff6600", "#ff9955", "#faee05", "#bcbcbc",
        "#ffccaa", "#555555", "#006a00", "#00aa00", "#648525", "#b9db79", "#000000", "#fbf7ae",
        "#6a6aff"};
    json classes = json::array();
    for (int code = 0; code < static_cast<int>(kNumClasses); ++code) {
        const LczClass c = LczClass::from_code(code);
        classes.push_back(json{{"code", code}, {"name", c.name()}, {"short", c.short_name()},
                               {"color", kColors[code]}});
    }
    return json{{"classes", classes}, {"nodata", kDefaultNodata}};
}

} // namespace lcz
