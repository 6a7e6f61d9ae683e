#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "lcz/dataset.hpp"
#include "lcz/io.hpp"
#include "lcz/raster.hpp"

namespace lcz {

/// Seeded synthetic scene generator. Three scenarios:
///   "means"   class identity lives in per-band mean levels (separable by
///             patch statistics, so the random forest thrives);
///   "texture" every class shares the same band means and variance while
///             class identity lives in the spatial pattern (stripes and
///             checkers at periods 2/4/8 px), so patch mean/std features are
///             identical across classes by construction and only spatial
///             filters can separate them;
///   "shifted" the means scenario pushed through a fixed affine band
///             distortion (x -> 0.85 - 0.7x), the source domain for
///             transfer-learning runs.
///
/// Auxiliary layers (height, building fraction, impervious, water, tree) are
/// exact class constants, so rule-assisted labeling recovers the generated
/// class on noise-free sites for every class whose rule branch needs no
/// external flag. The flagged classes (LCZ7 lightweight, LCZ10 industrial,
/// LCZC shrub) can be generated for classification work but are off the
/// default class list because their flags are inputs the rasters cannot
/// carry.
struct ScenarioSpec {
    std::string scenario = "means";
    std::vector<LczClass> classes = default_classes();
    int scene_size = 512;
    int blob_count = 64;
    int blob_size_min = 64;
    int blob_size_max = 64;
    double noise_sigma = 0.0;
    double pixel_size_m = 10.0;
    std::uint64_t seed = 0;

    static constexpr int kBands = 10;
    static constexpr int kMinBlob = 32; // patch edge length
    static constexpr int kNirBand = 3;
    static constexpr int kRedBand = 2;

    /// The 14 classes whose rule branch fires without external flags.
    static std::vector<LczClass> default_classes() {
        std::vector<LczClass> out;
        for (int code : {0, 1, 2, 3, 4, 5, 7, 8, 10, 11, 13, 14, 15, 16})
            out.push_back(LczClass::from_code(code));
        return out;
    }

    void validate() const {
        require(scenario == "means" || scenario == "texture" || scenario == "shifted",
                ErrorKind::invalid_argument, "scenario must be one of means, texture, shifted");
        require(!classes.empty(), ErrorKind::invalid_argument, "scenario class list is empty");
        require(blob_size_min >= kMinBlob, ErrorKind::invalid_argument,
                "blob size must be at least the patch size (32 px)");
        require(blob_size_max >= blob_size_min, ErrorKind::invalid_argument,
                "blob_size_max must be >= blob_size_min");
        require(scene_size >= blob_size_min, ErrorKind::invalid_argument,
                "scene_size must fit at least one blob");
        require(blob_count >= 1, ErrorKind::invalid_argument, "blob_count must be at least 1");
        require(noise_sigma >= 0.0, ErrorKind::invalid_argument, "noise_sigma must be non-negative");
        require(pixel_size_m > 0.0, ErrorKind::invalid_argument, "pixel_size_m must be positive");
    }
};

inline ScenarioSpec scenario_from_json(const json& j) {
    reject_unknown_keys(j,
                        {"scenario", "classes", "scene_size", "blob_count", "blob_size_min",
                         "blob_size_max", "noise_sigma", "pixel_size_m", "seed"},
                        "scenario spec");
    ScenarioSpec spec;
    if (j.contains("scenario")) spec.scenario = j.at("scenario").get<std::string>();
    if (j.contains("classes")) {
        spec.classes.clear();
        for (const auto& c : j.at("classes")) spec.classes.push_back(LczClass::parse(c.get<std::string>()));
    }
    if (j.contains("scene_size")) spec.scene_size = j.at("scene_size").get<int>();
    if (j.contains("blob_count")) spec.blob_count = j.at("blob_count").get<int>();
    if (j.contains("blob_size_min")) spec.blob_size_min = j.at("blob_size_min").get<int>();
    if (j.contains("blob_size_max")) spec.blob_size_max = j.at("blob_size_max").get<int>();
    if (j.contains("noise_sigma")) spec.noise_sigma = j.at("noise_sigma").get<double>();
    if (j.contains("pixel_size_m")) spec.pixel_size_m = j.at("pixel_size_m").get<double>();
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    spec.validate();
    return spec;
}

inline json scenario_to_json(const ScenarioSpec& spec) {
    json classes = json::array();
    for (const LczClass& c : spec.classes) classes.push_back(c.short_name());
    return json{{"scenario", spec.scenario},
                {"classes", classes},
                {"scene_size", spec.scene_size},
                {"blob_count", spec.blob_count},
                {"blob_size_min", spec.blob_size_min},
                {"blob_size_max", spec.blob_size_max},
                {"noise_sigma", spec.noise_sigma},
                {"pixel_size_m", spec.pixel_size_m},
                {"seed", spec.seed}};
}

/// Per-class constants for the auxiliary layers, consistent with the default
/// RuleConfig thresholds.
struct ClassBlueprint {
    double height = 0.0;
    double building_fraction = 0.0;
    double impervious = 0.0;
    double water = 0.0;
    double tree = 0.0;
    double ndvi = 0.1;
    bool rule_recoverable = true; // false when the rule branch needs a flag
};

inline const ClassBlueprint& class_blueprint(int code) {
    static const ClassBlueprint table[kNumClasses] = {
        /* LCZ1  */ {30.0, 0.50, 0.80, 0.0, 0.00, 0.10, true},
        /* LCZ2  */ {15.0, 0.50, 0.80, 0.0, 0.00, 0.10, true},
        /* LCZ3  */ {6.0, 0.50, 0.80, 0.0, 0.00, 0.10, true},
        /* LCZ4  */ {30.0, 0.25, 0.40, 0.0, 0.00, 0.10, true},
        /* LCZ5  */ {15.0, 0.25, 0.40, 0.0, 0.00, 0.10, true},
        /* LCZ6  */ {6.0, 0.25, 0.30, 0.0, 0.00, 0.10, true},
        /* LCZ7  */ {4.0, 0.30, 0.20, 0.0, 0.00, 0.10, false},
        /* LCZ8  */ {6.0, 0.30, 0.80, 0.0, 0.00, 0.10, true},
        /* LCZ9  */ {5.0, 0.12, 0.10, 0.0, 0.00, 0.15, true},
        /* LCZ10 */ {8.0, 0.30, 0.70, 0.0, 0.00, 0.10, false},
        /* LCZA  */ {0.0, 0.00, 0.00, 0.0, 0.90, 0.80, true},
        /* LCZB  */ {0.0, 0.00, 0.00, 0.0, 0.20, 0.80, true},
        /* LCZC  */ {0.0, 0.00, 0.00, 0.0, 0.10, 0.40, false},
        /* LCZD  */ {0.0, 0.00, 0.00, 0.0, 0.10, 0.40, true},
        /* LCZE  */ {0.0, 0.00, 0.90, 0.0, 0.00, 0.10, true},
        /* LCZF  */ {0.0, 0.00, 0.20, 0.0, 0.00, 0.10, true},
        /* LCZG  */ {0.0, 0.00, 0.00, 1.0, 0.00, -0.20, true},
    };
    require(code >= 0 && code < static_cast<int>(kNumClasses), ErrorKind::invalid_argument,
            "class code out of range");
    return table[code];
}

namespace detail {

constexpr double kShiftA = 0.85;
constexpr double kShiftB = -0.7;
constexpr double kNdviBandSum = 0.8; // nir + red for the NDVI pair
constexpr double kTextureAmp = 0.2;

/// Class- and band-specific mean level for the "means" scenario. Values lie
/// in [0.2, 0.8] and any two classes differ by at least 0.6/16 in every band
/// (code*5 mod 17 is a bijection). The NDVI band pair instead encodes the
/// blueprint NDVI exactly: nir = s(1+v)/2, red = s(1-v)/2.
inline double band_mean(int code, int band) {
    if (band == ScenarioSpec::kNirBand) return kNdviBandSum * (1.0 + class_blueprint(code).ndvi) / 2.0;
    if (band == ScenarioSpec::kRedBand) return kNdviBandSum * (1.0 - class_blueprint(code).ndvi) / 2.0;
    return 0.2 + 0.6 * static_cast<double>((code * 5 + band * 3) % 17) / 16.0;
}

/// Shared band profile for the "texture" scenario (the built-class NDVI pair
/// plus flat 0.5 elsewhere).
inline double texture_band_mean(int band) {
    if (band == ScenarioSpec::kNirBand) return kNdviBandSum * 1.1 / 2.0;
    if (band == ScenarioSpec::kRedBand) return kNdviBandSum * 0.9 / 2.0;
    return 0.5;
}

/// +1/-1 spatial pattern. Pattern kind cycles stripes-h, stripes-v, checker;
/// period cycles 2, 4, 8 px. Periods divide 32, so every 32x32 window holds
/// an exactly balanced pattern: patch mean and std are class-independent.
inline double texture_pattern(int code, int row, int col) {
    const int kind = code % 3;
    const int half = 1 << ((code / 3) % 3); // period/2 in {1,2,4}
    int phase = 0;
    if (kind == 0) phase = row / half;
    else if (kind == 1) phase = col / half;
    else phase = row / half + col / half;
    return phase % 2 == 0 ? 1.0 : -1.0;
}

} // namespace detail

/// One generated scene: a 10-band basemap, co-registered auxiliary layers,
/// a ground-truth class grid, and labeled blob-center points.
struct SceneData {
    RasterGrid basemap;
    RasterGrid height;
    RasterGrid building_fraction;
    RasterGrid impervious;
    RasterGrid water;
    RasterGrid tree;
    RasterGrid gt;
    std::vector<LabeledPoint> points;
};

/// Pure function of its ScenarioSpec. The scene is tiled with square class
/// blobs of a seeded side length (edge tiles are clipped); classes go to
/// blobs in balanced seeded-shuffled rounds; labeled points sit at blob
/// centers, at least 16 px from every blob edge. Band noise (seeded
/// separately, so the layout is noise-invariant) perturbs the basemap only;
/// auxiliary layers stay exact.
inline SceneData generate_scene(const ScenarioSpec& spec) {
    spec.validate();
    const int sz = spec.scene_size;
    const double px = spec.pixel_size_m;
    auto grid1 = [&](float fill) { return RasterGrid(sz, sz, 1, px, 0.0, 0.0, kDefaultNodata, fill); };

    SceneData scene{RasterGrid(sz, sz, ScenarioSpec::kBands, px, 0.0, 0.0, kDefaultNodata, 0.0f),
                    grid1(0.0f), grid1(0.0f), grid1(0.0f), grid1(0.0f), grid1(0.0f), grid1(0.0f),
                    {}};

    Rng layout_rng(spec.seed ^ splitmix64(0x41));
    const int side = spec.blob_size_min +
                     (spec.blob_size_max > spec.blob_size_min
                          ? static_cast<int>(layout_rng.bounded(
                                static_cast<std::uint64_t>(spec.blob_size_max - spec.blob_size_min + 1)))
                          : 0);
    const int tiles_y = (sz + side - 1) / side;
    const int tiles_x = (sz + side - 1) / side;
    const int n_tiles = tiles_y * tiles_x;

    std::vector<int> tile_class(n_tiles);
    {
        std::vector<int> pool;
        while (static_cast<int>(pool.size()) < n_tiles) {
            std::vector<int> round;
            for (const LczClass& c : spec.classes) round.push_back(c.code());
            layout_rng.shuffle(round);
            pool.insert(pool.end(), round.begin(), round.end());
        }
        std::copy(pool.begin(), pool.begin() + n_tiles, tile_class.begin());
    }

    const bool texture = spec.scenario == "texture";
    const bool shifted = spec.scenario == "shifted";
    for (int ti = 0; ti < tiles_y; ++ti) {
        for (int tj = 0; tj < tiles_x; ++tj) {
            const int code = tile_class[ti * tiles_x + tj];
            const ClassBlueprint& bp = class_blueprint(code);
            const int r0 = ti * side, r1 = std::min((ti + 1) * side, sz);
            const int c0 = tj * side, c1 = std::min((tj + 1) * side, sz);
            for (int r = r0; r < r1; ++r) {
                for (int c = c0; c < c1; ++c) {
                    scene.gt.at(0, r, c) = static_cast<float>(code);
                    scene.height.at(0, r, c) = static_cast<float>(bp.height);
                    scene.building_fraction.at(0, r, c) = static_cast<float>(bp.building_fraction);
                    scene.impervious.at(0, r, c) = static_cast<float>(bp.impervious);
                    scene.water.at(0, r, c) = static_cast<float>(bp.water);
                    scene.tree.at(0, r, c) = static_cast<float>(bp.tree);
                }
            }
            for (int b = 0; b < ScenarioSpec::kBands; ++b) {
                for (int r = r0; r < r1; ++r) {
                    for (int c = c0; c < c1; ++c) {
                        double v;
                        if (texture) {
                            v = detail::texture_band_mean(b) +
                                detail::kTextureAmp * detail::texture_pattern(code, r, c);
                        } else {
                            v = detail::band_mean(code, b);
                            if (shifted) v = detail::kShiftA + detail::kShiftB * v;
                        }
                        scene.basemap.at(b, r, c) = static_cast<float>(v);
                    }
                }
            }
        }
    }

    if (spec.noise_sigma > 0.0) {
        Rng noise_rng(spec.seed ^ splitmix64(0x42));
        for (float& v : scene.basemap.data) v += static_cast<float>(noise_rng.normal() * spec.noise_sigma);
    }

    std::vector<int> full_tiles;
    for (int ti = 0; ti < tiles_y; ++ti)
        for (int tj = 0; tj < tiles_x; ++tj)
            if ((ti + 1) * side <= sz && (tj + 1) * side <= sz) full_tiles.push_back(ti * tiles_x + tj);
    layout_rng.shuffle(full_tiles);
    const int n_points = std::min<int>(spec.blob_count, static_cast<int>(full_tiles.size()));
    for (int i = 0; i < n_points; ++i) {
        const int t = full_tiles[i];
        const int ti = t / tiles_x, tj = t % tiles_x;
        const int row = ti * side + side / 2;
        const int col = tj * side + side / 2;
        LabeledPoint p;
        p.x = scene.basemap.origin_x + (col + 0.5) * px;
        p.y = scene.basemap.origin_y - (row + 0.5) * px;
        p.label = LczClass::from_code(tile_class[t]);
        p.source = "synth";
        scene.points.push_back(p);
    }
    return scene;
}

/// Builds scenes (seeded seed ^ splitmix64(0x40000 + scene_index)) until
/// every requested class has n_per_class patches, then assembles them in
/// class-code order. Deterministic per spec.
inline SampleSet generate_dataset(const ScenarioSpec& spec, int n_per_class, int patch_size = 32) {
    spec.validate();
    require(n_per_class >= 1, ErrorKind::invalid_argument, "n_per_class must be at least 1");
    require(patch_size >= 2 && patch_size % 2 == 0, ErrorKind::invalid_argument,
            "patch_size must be even and at least 2");
    require(patch_size <= spec.blob_size_min, ErrorKind::invalid_argument,
            "patch_size cannot exceed the blob size");

    std::vector<std::vector<Patch>> pools(kNumClasses);
    auto filled = [&]() {
        for (const LczClass& c : spec.classes)
            if (static_cast<int>(pools[c.code()].size()) < n_per_class) return false;
        return true;
    };

    constexpr int kMaxScenes = 100000;
    for (int scene_index = 0; scene_index < kMaxScenes && !filled(); ++scene_index) {
        ScenarioSpec sub = spec;
        sub.seed = spec.seed ^ splitmix64(0x40000u + static_cast<std::uint64_t>(scene_index));
        sub.blob_count = std::numeric_limits<int>::max();
        SceneData scene = generate_scene(sub);
        for (const LabeledPoint& p : scene.points) {
            auto& pool = pools[p.label.code()];
            if (static_cast<int>(pool.size()) >= n_per_class) continue;
            const auto [row, col] = map_point_to_pixel(scene.basemap, p.x, p.y);
            Patch patch = extract_patch(scene.basemap, row, col, patch_size);
            patch.label = p.label;
            pool.push_back(std::move(patch));
        }
    }
    require(filled(), ErrorKind::invalid_argument, "could not generate enough samples per class");

    SampleSet set;
    for (int code = 0; code < static_cast<int>(kNumClasses); ++code)
        for (Patch& p : pools[code]) set.add(std::move(p), LczClass::from_code(code), SplitTag::unset);
    return set;
}

/// Writes a scene to a directory as RAWG rasters plus a points CSV.
inline void save_scene(const SceneData& scene, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    save_raster(scene.basemap, dir + "/basemap.rawg");
    save_raster(scene.height, dir + "/height.rawg");
    save_raster(scene.building_fraction, dir + "/building_fraction.rawg");
    save_raster(scene.impervious, dir + "/impervious.rawg");
    save_raster(scene.water, dir + "/water.rawg");
    save_raster(scene.tree, dir + "/tree.rawg");
    save_raster(scene.gt, dir + "/gt.rawg");
    save_points(scene.points, dir + "/points.csv");
}

} // namespace lcz
