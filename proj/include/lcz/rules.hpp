#pragma once

#include <cmath>
#include <string>

#include "lcz/common.hpp"
#include "lcz/io.hpp"
#include "lcz/lcz_class.hpp"
#include "lcz/raster.hpp"

namespace lcz {

/// Window statistics feeding the labeling rule engine. Fractions are in
/// [0, 1]; the lightweight/industrial/shrub flags are caller-supplied context
/// that cannot be read off the raster layers.
struct SiteSummary {
    double mean_building_height_m = 0.0;
    double building_fraction = 0.0;
    double mean_ndvi = 0.0;
    double impervious_fraction = 0.0;
    double water_fraction = 0.0;
    double tree_fraction = 0.0;
    bool lightweight = false;
    bool industrial = false;
    bool shrub = false;
};

/// Thresholds of the labeling decision workflow. Defaults are placeholders
/// chosen from the class definitions; any of them can be overridden from a
/// JSON config so calibrated figures drop in without code changes.
struct RuleConfig {
    double water_min = 0.5;
    double built_min_fraction = 0.1;
    double highrise_min_m = 25.0;
    double midrise_min_m = 10.0;
    double compact_min_fraction = 0.4;
    double open_min_fraction = 0.2;
    double dense_veg_ndvi = 0.6;
    double low_plants_ndvi = 0.3;
    double paved_impervious_min = 0.5;
    double dense_tree_fraction = 0.7;

    void validate() const {
        require(midrise_min_m < highrise_min_m, ErrorKind::invalid_argument,
                "midrise_min_m must be below highrise_min_m");
        require(low_plants_ndvi < dense_veg_ndvi, ErrorKind::invalid_argument,
                "low_plants_ndvi must be below dense_veg_ndvi");
        require(open_min_fraction < compact_min_fraction, ErrorKind::invalid_argument,
                "open_min_fraction must be below compact_min_fraction");
    }

    static RuleConfig from_json(const json& j) {
        reject_unknown_keys(j,
                            {"water_min", "built_min_fraction", "highrise_min_m", "midrise_min_m",
                             "compact_min_fraction", "open_min_fraction", "dense_veg_ndvi",
                             "low_plants_ndvi", "paved_impervious_min", "dense_tree_fraction"},
                            "rule config");
        RuleConfig cfg;
        cfg.water_min = j.value("water_min", cfg.water_min);
        cfg.built_min_fraction = j.value("built_min_fraction", cfg.built_min_fraction);
        cfg.highrise_min_m = j.value("highrise_min_m", cfg.highrise_min_m);
        cfg.midrise_min_m = j.value("midrise_min_m", cfg.midrise_min_m);
        cfg.compact_min_fraction = j.value("compact_min_fraction", cfg.compact_min_fraction);
        cfg.open_min_fraction = j.value("open_min_fraction", cfg.open_min_fraction);
        cfg.dense_veg_ndvi = j.value("dense_veg_ndvi", cfg.dense_veg_ndvi);
        cfg.low_plants_ndvi = j.value("low_plants_ndvi", cfg.low_plants_ndvi);
        cfg.paved_impervious_min = j.value("paved_impervious_min", cfg.paved_impervious_min);
        cfg.dense_tree_fraction = j.value("dense_tree_fraction", cfg.dense_tree_fraction);
        cfg.validate();
        return cfg;
    }

    json to_json() const {
        return json{{"water_min", water_min},
                    {"built_min_fraction", built_min_fraction},
                    {"highrise_min_m", highrise_min_m},
                    {"midrise_min_m", midrise_min_m},
                    {"compact_min_fraction", compact_min_fraction},
                    {"open_min_fraction", open_min_fraction},
                    {"dense_veg_ndvi", dense_veg_ndvi},
                    {"low_plants_ndvi", low_plants_ndvi},
                    {"paved_impervious_min", paved_impervious_min},
                    {"dense_tree_fraction", dense_tree_fraction}};
    }
};

struct RuleResult {
    LczClass label;
    std::string fired_rule;
};

namespace detail {

inline void check_fraction(double v, const char* name) {
    require(std::isfinite(v) && v >= 0.0 && v <= 1.0, ErrorKind::invalid_argument,
            std::string(name) + " must be a fraction in [0,1]");
}

} // namespace detail

/// First-match evaluation of the ordered labeling rules: water, then the
/// built branch (gated on building fraction), then the natural branch.
/// Deterministic: equal inputs always fire the same rule.
inline RuleResult rule_assist_label(const SiteSummary& site, const RuleConfig& rules) {
    rules.validate();
    detail::check_fraction(site.building_fraction, "building_fraction");
    detail::check_fraction(site.impervious_fraction, "impervious_fraction");
    detail::check_fraction(site.water_fraction, "water_fraction");
    detail::check_fraction(site.tree_fraction, "tree_fraction");
    require(std::isfinite(site.mean_building_height_m) && site.mean_building_height_m >= 0.0,
            ErrorKind::invalid_argument, "mean_building_height_m must be finite and >= 0");
    require(std::isfinite(site.mean_ndvi), ErrorKind::invalid_argument, "mean_ndvi must be finite");

    const auto result = [](const char* cls, const char* rule) {
        return RuleResult{LczClass::parse(cls), rule};
    };

    if (site.water_fraction >= rules.water_min) return result("G", "water");

    if (site.building_fraction >= rules.built_min_fraction) {
        if (site.industrial) return result("10", "built.industrial");
        if (site.lightweight) return result("7", "built.lightweight");
        if (site.mean_building_height_m >= rules.highrise_min_m) {
            return site.building_fraction >= rules.compact_min_fraction
                       ? result("1", "built.highrise.compact")
                       : result("4", "built.highrise.open");
        }
        if (site.mean_building_height_m >= rules.midrise_min_m) {
            return site.building_fraction >= rules.compact_min_fraction
                       ? result("2", "built.midrise.compact")
                       : result("5", "built.midrise.open");
        }
        if (site.building_fraction >= rules.compact_min_fraction)
            return result("3", "built.lowrise.compact");
        if (site.building_fraction >= rules.open_min_fraction) {
            return site.impervious_fraction >= rules.paved_impervious_min
                       ? result("8", "built.lowrise.paved")
                       : result("6", "built.lowrise.open");
        }
        return result("9", "built.sparse");
    }

    if (site.mean_ndvi >= rules.dense_veg_ndvi) {
        return site.tree_fraction >= rules.dense_tree_fraction ? result("A", "natural.trees")
                                                               : result("B", "natural.scattered");
    }
    if (site.mean_ndvi >= rules.low_plants_ndvi) {
        return site.shrub ? result("C", "natural.shrub") : result("D", "natural.low_plants");
    }
    return site.impervious_fraction >= rules.paved_impervious_min ? result("E", "natural.paved")
                                                                  : result("F", "natural.bare");
}

/// Per-layer nodata-ignoring window means over the half-open window
/// [center - size/2, center + size/2). The tree layer is optional; without it
/// tree_fraction stays 0. Flags stay unset (they are inputs, not inferred).
inline SiteSummary summarize_site(const RasterGrid& basemap, const RasterGrid& ndvi,
                                  const RasterGrid& height, const RasterGrid& building_fraction,
                                  const RasterGrid& impervious, const RasterGrid& water,
                                  std::pair<int, int> center, int size,
                                  const RasterGrid* tree = nullptr) {
    const RasterGrid* layers[] = {&ndvi, &height, &building_fraction, &impervious, &water, tree};
    for (const RasterGrid* layer : layers) {
        if (layer != nullptr)
            require(basemap.same_geometry(*layer), ErrorKind::geometry,
                    "site layers are not co-registered");
    }
    require(size >= 2 && size % 2 == 0, ErrorKind::invalid_argument, "window size must be even");
    const int half = size / 2;
    const int row0 = center.first - half;
    const int col0 = center.second - half;
    require(row0 >= 0 && col0 >= 0 && row0 + size <= basemap.height && col0 + size <= basemap.width,
            ErrorKind::out_of_bounds, "site window exits the grid");

    const auto window_mean = [&](const RasterGrid& layer, const char* name) {
        double sum = 0.0;
        long count = 0;
        for (int r = row0; r < row0 + size; ++r) {
            for (int c = col0; c < col0 + size; ++c) {
                const float v = layer.at(0, r, c);
                if (!layer.is_nodata(v)) {
                    sum += v;
                    ++count;
                }
            }
        }
        require(count > 0, ErrorKind::nodata, std::string("site window is all-nodata in ") + name);
        return sum / count;
    };

    SiteSummary site;
    site.mean_ndvi = window_mean(ndvi, "ndvi");
    site.mean_building_height_m = window_mean(height, "height");
    site.building_fraction = window_mean(building_fraction, "building_fraction");
    site.impervious_fraction = window_mean(impervious, "impervious");
    site.water_fraction = window_mean(water, "water");
    if (tree != nullptr) site.tree_fraction = window_mean(*tree, "tree");
    return site;
}

} // namespace lcz
