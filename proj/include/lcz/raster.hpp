#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lcz/common.hpp"
#include "lcz/io.hpp"
#include "lcz/lcz_class.hpp"

namespace lcz {

inline constexpr float kDefaultNodata = -9999.0f;

/// Georeferenced multi-band raster. Band-sequential storage, each band
/// row-major. (origin_x, origin_y) are the map coordinates of the top-left
/// corner of pixel (0, 0); y decreases downward.
struct RasterGrid {
    int width = 0;
    int height = 0;
    int n_bands = 0;
    double pixel_size_m = 1.0;
    double origin_x = 0.0;
    double origin_y = 0.0;
    float nodata = kDefaultNodata;
    std::vector<float> data;

    RasterGrid() = default;
    RasterGrid(int w, int h, int bands, double pixel_size, double ox = 0.0, double oy = 0.0,
               float nodata_value = kDefaultNodata, float fill = 0.0f)
        : width(w), height(h), n_bands(bands), pixel_size_m(pixel_size), origin_x(ox),
          origin_y(oy), nodata(nodata_value),
          data(static_cast<std::size_t>(w) * h * bands, fill) {
        require(w >= 1 && h >= 1 && bands >= 1, ErrorKind::invalid_argument, "raster dims must be >= 1");
        require(pixel_size > 0.0, ErrorKind::invalid_argument, "pixel size must be positive");
    }

    std::size_t index(int band, int row, int col) const {
        return (static_cast<std::size_t>(band) * height + row) * width + col;
    }

    float at(int band, int row, int col) const { return data[index(band, row, col)]; }
    float& at(int band, int row, int col) { return data[index(band, row, col)]; }

    bool is_nodata(float v) const { return v == nodata; }

    bool same_geometry(const RasterGrid& other) const {
        return width == other.width && height == other.height &&
               pixel_size_m == other.pixel_size_m && origin_x == other.origin_x &&
               origin_y == other.origin_y;
    }
};

/// A size x size x channels window cut around a labeled point.
/// Channel-major storage, each channel row-major. Never contains nodata.
struct Patch {
    int size = 0;
    int n_channels = 0;
    std::vector<float> data;
    int center_row = 0;
    int center_col = 0;
    std::optional<LczClass> label;

    std::size_t index(int channel, int row, int col) const {
        return (static_cast<std::size_t>(channel) * size + row) * size + col;
    }

    float at(int channel, int row, int col) const { return data[index(channel, row, col)]; }
    float& at(int channel, int row, int col) { return data[index(channel, row, col)]; }
};

namespace detail {

inline std::string payload_path_for(const std::string& header_path) {
    std::filesystem::path p(header_path);
    p.replace_extension(".bin");
    return p.string();
}

} // namespace detail

/// Loads a RAWG v1 raster (JSON header + sibling .bin payload of f32le,
/// band-sequential, row-major).
inline RasterGrid load_raster(const std::string& header_path) {
    const json header = load_json_file(header_path);
    require(header.is_object(), ErrorKind::malformed, "raster header is not a JSON object");
    require(header.value("magic", "") == "RAWG", ErrorKind::malformed,
            "bad raster magic in " + header_path);
    require(header.value("version", 0) == 1, ErrorKind::malformed,
            "unsupported raster version in " + header_path);
    require(header.value("dtype", "") == "f32le", ErrorKind::malformed,
            "unsupported raster dtype in " + header_path);
    require(header.value("interleave", "") == "bsq", ErrorKind::malformed,
            "unsupported raster interleave in " + header_path);

    RasterGrid grid;
    grid.width = header.at("width").get<int>();
    grid.height = header.at("height").get<int>();
    grid.n_bands = header.at("bands").get<int>();
    grid.pixel_size_m = header.at("pixel_size_m").get<double>();
    grid.origin_x = header.at("origin_x").get<double>();
    grid.origin_y = header.at("origin_y").get<double>();
    grid.nodata = header.at("nodata").get<float>();
    require(grid.width >= 1 && grid.height >= 1 && grid.n_bands >= 1, ErrorKind::malformed,
            "raster dims must be >= 1 in " + header_path);
    require(grid.pixel_size_m > 0.0, ErrorKind::malformed, "pixel size must be positive");

    const std::string payload_path = detail::payload_path_for(header_path);
    const std::vector<std::uint8_t> payload = read_file_bytes(payload_path);
    const std::size_t n_values =
        static_cast<std::size_t>(grid.width) * grid.height * grid.n_bands;
    require(payload.size() == n_values * 4, ErrorKind::malformed,
            "payload size mismatch for " + header_path + ": expected " +
                std::to_string(n_values * 4) + " bytes, got " + std::to_string(payload.size()));

    grid.data.resize(n_values);
    for (std::size_t i = 0; i < n_values; ++i) {
        const float v = get_le<float>(payload.data() + i * 4);
        require(std::isfinite(v) || v == grid.nodata, ErrorKind::malformed,
                "non-finite value at cell " + std::to_string(i) + " in " + payload_path);
        grid.data[i] = v;
    }
    return grid;
}

/// Writes header + payload; load_raster inverts it bit-exactly.
inline void save_raster(const RasterGrid& grid, const std::string& header_path) {
    json header = {
        {"magic", "RAWG"},       {"version", 1},
        {"width", grid.width},   {"height", grid.height},
        {"bands", grid.n_bands}, {"pixel_size_m", grid.pixel_size_m},
        {"origin_x", grid.origin_x}, {"origin_y", grid.origin_y},
        {"nodata", grid.nodata}, {"dtype", "f32le"},
        {"interleave", "bsq"},
    };
    std::vector<std::uint8_t> payload;
    payload.reserve(grid.data.size() * 4);
    for (float v : grid.data) put_le(payload, v);
    write_file_atomic(header_path, header.dump(2) + "\n");
    write_file_atomic(detail::payload_path_for(header_path), payload);
}

/// NDVI = (NIR - Red) / (NIR + Red), nodata where the denominator is zero or
/// either input is nodata. Output carries the source geometry and nodata.
inline RasterGrid compute_ndvi(const RasterGrid& grid, int nir_band, int red_band) {
    require(nir_band >= 0 && nir_band < grid.n_bands, ErrorKind::invalid_argument,
            "NIR band index out of range: " + std::to_string(nir_band));
    require(red_band >= 0 && red_band < grid.n_bands, ErrorKind::invalid_argument,
            "red band index out of range: " + std::to_string(red_band));

    RasterGrid out(grid.width, grid.height, 1, grid.pixel_size_m, grid.origin_x, grid.origin_y,
                   grid.nodata);
    for (int r = 0; r < grid.height; ++r) {
        for (int c = 0; c < grid.width; ++c) {
            const float nir = grid.at(nir_band, r, c);
            const float red = grid.at(red_band, r, c);
            float& dst = out.at(0, r, c);
            if (grid.is_nodata(nir) || grid.is_nodata(red) || nir + red == 0.0f) {
                dst = out.nodata;
            } else {
                dst = (nir - red) / (nir + red);
            }
        }
    }
    return out;
}

/// Block-mean downsampling to a coarser pixel size (integer ratio k).
/// Nodata cells are excluded from each k x k mean; all-nodata blocks stay nodata.
inline RasterGrid resample_mean(const RasterGrid& grid, double target_pixel_size_m) {
    require(target_pixel_size_m > 0.0, ErrorKind::invalid_argument, "target pixel size must be positive");
    const double ratio = target_pixel_size_m / grid.pixel_size_m;
    const auto k = static_cast<int>(std::llround(ratio));
    require(k >= 1 && std::abs(ratio - k) < 1e-9, ErrorKind::invalid_argument,
            "target pixel size is not an integer multiple of the source pixel size");

    const int out_w = grid.width / k;
    const int out_h = grid.height / k;
    require(out_w >= 1 && out_h >= 1, ErrorKind::invalid_argument,
            "grid smaller than one output cell");

    RasterGrid out(out_w, out_h, grid.n_bands, target_pixel_size_m, grid.origin_x, grid.origin_y,
                   grid.nodata);
    for (int b = 0; b < grid.n_bands; ++b) {
        for (int orow = 0; orow < out_h; ++orow) {
            for (int ocol = 0; ocol < out_w; ++ocol) {
                double sum = 0.0;
                int count = 0;
                for (int dr = 0; dr < k; ++dr) {
                    for (int dc = 0; dc < k; ++dc) {
                        const float v = grid.at(b, orow * k + dr, ocol * k + dc);
                        if (!grid.is_nodata(v)) {
                            sum += v;
                            ++count;
                        }
                    }
                }
                out.at(b, orow, ocol) =
                    count == 0 ? out.nodata : static_cast<float>(sum / count);
            }
        }
    }
    return out;
}

/// Cuts the half-open window [center - size/2, center + size/2) in both axes.
/// Throws out_of_bounds if the window exits the grid and nodata if any cell
/// inside it is nodata.
inline Patch extract_patch(const RasterGrid& grid, int center_row, int center_col, int size) {
    require(size >= 2 && size % 2 == 0, ErrorKind::invalid_argument,
            "patch size must be even and >= 2");
    const int half = size / 2;
    const int row0 = center_row - half;
    const int col0 = center_col - half;
    require(row0 >= 0 && col0 >= 0 && row0 + size <= grid.height && col0 + size <= grid.width,
            ErrorKind::out_of_bounds,
            "patch window [" + std::to_string(row0) + "," + std::to_string(col0) + ")+" +
                std::to_string(size) + " exits the grid");

    Patch patch;
    patch.size = size;
    patch.n_channels = grid.n_bands;
    patch.center_row = center_row;
    patch.center_col = center_col;
    patch.data.resize(static_cast<std::size_t>(size) * size * grid.n_bands);
    for (int b = 0; b < grid.n_bands; ++b) {
        for (int r = 0; r < size; ++r) {
            for (int c = 0; c < size; ++c) {
                const float v = grid.at(b, row0 + r, col0 + c);
                require(!grid.is_nodata(v), ErrorKind::nodata,
                        "patch window contains nodata at (" + std::to_string(row0 + r) + "," +
                            std::to_string(col0 + c) + ")");
                patch.at(b, r, c) = v;
            }
        }
    }
    return patch;
}

/// Map coordinates -> pixel indices; throws out_of_bounds outside the extent.
inline std::pair<int, int> map_point_to_pixel(const RasterGrid& grid, double x, double y) {
    const int col = static_cast<int>(std::floor((x - grid.origin_x) / grid.pixel_size_m));
    const int row = static_cast<int>(std::floor((grid.origin_y - y) / grid.pixel_size_m));
    require(col >= 0 && col < grid.width && row >= 0 && row < grid.height, ErrorKind::out_of_bounds,
            "point (" + std::to_string(x) + "," + std::to_string(y) + ") outside grid extent");
    return {row, col};
}

} // namespace lcz
