#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lcz/common.hpp"
#include "lcz/io.hpp"
#include "lcz/lcz_class.hpp"
#include "lcz/raster.hpp"
#include "lcz/rng.hpp"

namespace lcz {

/// A point label in map coordinates.
struct LabeledPoint {
    double x = 0.0;
    double y = 0.0;
    LczClass label;
    std::string source;
};

enum class SplitTag : std::uint8_t { train = 0, val = 1, test = 2, unset = 255 };

/// Parallel lists of patches and labels, optionally tagged with a
/// train/val/test split. All patches share one size and channel count.
struct SampleSet {
    int patch_size = 0;
    int n_channels = 0;
    std::vector<Patch> patches;
    std::vector<LczClass> labels;
    std::vector<SplitTag> split_tags;

    std::size_t size() const { return patches.size(); }
    bool empty() const { return patches.empty(); }

    void add(Patch patch, LczClass label, SplitTag tag = SplitTag::unset) {
        if (patches.empty() && patch_size == 0) {
            patch_size = patch.size;
            n_channels = patch.n_channels;
        }
        require(patch.size == patch_size && patch.n_channels == n_channels, ErrorKind::dimension,
                "patch dimensions differ from the set's");
        patch.label = label;
        patches.push_back(std::move(patch));
        labels.push_back(label);
        split_tags.push_back(tag);
    }

    std::array<int, kNumClasses> histogram() const {
        std::array<int, kNumClasses> h{};
        for (const LczClass& l : labels) ++h[static_cast<std::size_t>(l.code())];
        return h;
    }

    /// Samples carrying the given tag, as a standalone set (tags preserved).
    SampleSet subset(SplitTag tag) const {
        SampleSet out;
        out.patch_size = patch_size;
        out.n_channels = n_channels;
        for (std::size_t i = 0; i < size(); ++i)
            if (split_tags[i] == tag) out.add(patches[i], labels[i], tag);
        return out;
    }

    void validate() const {
        require(labels.size() == patches.size() && split_tags.size() == patches.size(),
                ErrorKind::dimension, "sample set parallel lists differ in length");
        for (const Patch& p : patches)
            require(p.size == patch_size && p.n_channels == n_channels, ErrorKind::dimension,
                    "sample set contains mixed patch dimensions");
    }
};

// ---------------------------------------------------------------------------
// Points CSV (header: x,y,lcz,source)
// ---------------------------------------------------------------------------

inline std::vector<LabeledPoint> load_points(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::io, "cannot open points file: " + path);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::malformed, "empty points file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    require(line == "x,y,lcz,source", ErrorKind::malformed,
            "points header must be \"x,y,lcz,source\", got \"" + line + "\"");

    std::vector<LabeledPoint> points;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string x_str, y_str, lcz_str, source;
        std::getline(ss, x_str, ',');
        std::getline(ss, y_str, ',');
        std::getline(ss, lcz_str, ',');
        std::getline(ss, source);
        try {
            points.push_back({std::stod(x_str), std::stod(y_str), LczClass::parse(lcz_str), source});
        } catch (const std::exception& e) {
            fail(ErrorKind::malformed,
                 "bad points row at line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return points;
}

inline void save_points(const std::vector<LabeledPoint>& points, const std::string& path) {
    std::string out = "x,y,lcz,source\n";
    for (const LabeledPoint& p : points) {
        std::ostringstream row;
        row.precision(17);
        row << p.x << ',' << p.y << ',' << p.label.short_name() << ',' << p.source << '\n';
        out += row.str();
    }
    write_file_atomic(path, out);
}

// ---------------------------------------------------------------------------
// Dataset construction
// ---------------------------------------------------------------------------

struct SkippedPoint {
    std::size_t point_index;
    std::string reason; // "out_of_bounds" or "nodata"
};

struct BuildResult {
    SampleSet set;
    std::vector<SkippedPoint> skipped;
};

/// One patch per in-bounds, nodata-free point; everything else is reported in
/// `skipped` with a reason. Duplicate points yield duplicate patches.
inline BuildResult build_dataset(const RasterGrid& grid, const std::vector<LabeledPoint>& points,
                                 int size) {
    BuildResult result;
    for (std::size_t i = 0; i < points.size(); ++i) {
        try {
            const auto [row, col] = map_point_to_pixel(grid, points[i].x, points[i].y);
            result.set.add(extract_patch(grid, row, col, size), points[i].label);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::out_of_bounds) {
                result.skipped.push_back({i, "out_of_bounds"});
            } else if (e.kind() == ErrorKind::nodata) {
                result.skipped.push_back({i, "nodata"});
            } else {
                throw;
            }
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Dihedral transforms (the 8 symmetries of the square)
// ---------------------------------------------------------------------------

enum class Dihedral : int {
    identity = 0,
    rot90 = 1,  // clockwise
    rot180 = 2,
    rot270 = 3,
    flip_h = 4, // mirror left-right
    flip_v = 5, // mirror top-bottom
    transpose = 6,
    anti_transpose = 7,
};

inline constexpr int kNumDihedral = 8;

/// Applies the symmetry identically across channels.
inline Patch dihedral_apply(const Patch& patch, Dihedral t) {
    const int n = patch.size;
    const int m = n - 1;
    Patch out = patch;
    const auto src = [&](int r, int c) -> std::pair<int, int> {
        switch (t) {
            case Dihedral::identity: return {r, c};
            case Dihedral::rot90: return {m - c, r};
            case Dihedral::rot180: return {m - r, m - c};
            case Dihedral::rot270: return {c, m - r};
            case Dihedral::flip_h: return {r, m - c};
            case Dihedral::flip_v: return {m - r, c};
            case Dihedral::transpose: return {c, r};
            case Dihedral::anti_transpose: return {m - c, m - r};
        }
        fail(ErrorKind::invalid_argument, "invalid dihedral transform");
    };
    for (int ch = 0; ch < patch.n_channels; ++ch)
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) {
                const auto [sr, sc] = src(r, c);
                out.at(ch, r, c) = patch.at(ch, sr, sc);
            }
    return out;
}

// ---------------------------------------------------------------------------
// Class rebalancing by dihedral oversampling
// ---------------------------------------------------------------------------

/// For each class below `target_per_class`, appends dihedral-transformed
/// copies of seeded-uniformly chosen original members until the class reaches
/// the target. Originals are never touched; over-represented classes are left
/// alone; absent classes stay absent. Deterministic given the seed (each
/// class draws from its own derived stream).
inline SampleSet augment_rebalance(const SampleSet& set, int target_per_class,
                                   std::uint64_t seed) {
    require(target_per_class >= 1, ErrorKind::invalid_argument, "target_per_class must be >= 1");
    set.validate();

    std::array<std::vector<std::size_t>, kNumClasses> by_class;
    for (std::size_t i = 0; i < set.size(); ++i)
        by_class[static_cast<std::size_t>(set.labels[i].code())].push_back(i);

    SampleSet out = set;
    for (int code = 0; code < kNumClasses; ++code) {
        const auto& members = by_class[static_cast<std::size_t>(code)];
        if (members.empty()) continue; // never synthesized from nothing
        Rng rng(seed ^ splitmix64(static_cast<std::uint64_t>(code)));
        for (std::size_t have = members.size(); have < static_cast<std::size_t>(target_per_class);
             ++have) {
            const std::size_t pick = members[rng.bounded(members.size())];
            const auto t = static_cast<Dihedral>(rng.bounded(kNumDihedral));
            out.add(dihedral_apply(set.patches[pick], t), set.labels[pick], set.split_tags[pick]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stratified splitting
// ---------------------------------------------------------------------------

/// Per-class seeded shuffle, then a contiguous cut at the largest-remainder
/// counts, so each class's split sizes differ from the exact proportion by
/// less than one sample. Classes with fewer samples than splits go entirely
/// to train.
inline SampleSet stratified_split(const SampleSet& set, std::array<double, 3> ratios,
                                  std::uint64_t seed) {
    double total = 0.0;
    for (double r : ratios) {
        require(r >= 0.0, ErrorKind::invalid_argument, "split ratios must be non-negative");
        total += r;
    }
    require(std::abs(total - 1.0) < 1e-9, ErrorKind::invalid_argument, "split ratios must sum to 1");
    set.validate();

    SampleSet out = set;
    std::array<std::vector<std::size_t>, kNumClasses> by_class;
    for (std::size_t i = 0; i < set.size(); ++i)
        by_class[static_cast<std::size_t>(set.labels[i].code())].push_back(i);

    for (int code = 0; code < kNumClasses; ++code) {
        auto& members = by_class[static_cast<std::size_t>(code)];
        if (members.empty()) continue;
        if (members.size() < 3) {
            for (std::size_t idx : members) out.split_tags[idx] = SplitTag::train;
            continue;
        }
        Rng rng(seed ^ splitmix64(static_cast<std::uint64_t>(code)));
        rng.shuffle(members);

        const auto n = members.size();
        std::array<std::size_t, 3> counts{};
        std::array<double, 3> remainders{};
        std::size_t assigned = 0;
        for (int s = 0; s < 3; ++s) {
            const double exact = static_cast<double>(n) * ratios[s];
            counts[s] = static_cast<std::size_t>(exact);
            remainders[s] = exact - static_cast<double>(counts[s]);
            assigned += counts[s];
        }
        while (assigned < n) {
            int best = 0;
            for (int s = 1; s < 3; ++s)
                if (remainders[s] > remainders[best]) best = s;
            ++counts[best];
            remainders[best] = -1.0;
            ++assigned;
        }

        std::size_t cursor = 0;
        for (int s = 0; s < 3; ++s)
            for (std::size_t k = 0; k < counts[s]; ++k)
                out.split_tags[members[cursor++]] = static_cast<SplitTag>(s);
    }
    return out;
}

// ---------------------------------------------------------------------------
// LCZ1 dataset format
// ---------------------------------------------------------------------------

/// Bytes 0-3 "LCZ1"; u32le version=1, n_samples, patch_size, n_channels;
/// per sample: u8 label code, u8 split tag (255 = unset), then
/// patch_size^2 * n_channels f32le values channel-major row-major.
inline void save_dataset(const SampleSet& set, const std::string& path) {
    set.validate();
    std::vector<std::uint8_t> out;
    const std::size_t values_per_patch =
        static_cast<std::size_t>(set.patch_size) * set.patch_size * set.n_channels;
    out.reserve(20 + set.size() * (2 + values_per_patch * 4));
    out.insert(out.end(), {'L', 'C', 'Z', '1'});
    put_le<std::uint32_t>(out, 1);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(set.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(set.patch_size));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(set.n_channels));
    for (std::size_t i = 0; i < set.size(); ++i) {
        out.push_back(static_cast<std::uint8_t>(set.labels[i].code()));
        out.push_back(static_cast<std::uint8_t>(set.split_tags[i]));
        for (float v : set.patches[i].data) put_le(out, v);
    }
    write_file_atomic(path, out);
}

inline SampleSet load_dataset(const std::string& path) {
    const std::vector<std::uint8_t> bytes = read_file_bytes(path);
    require(bytes.size() >= 20, ErrorKind::malformed, "dataset file too short: " + path);
    require(bytes[0] == 'L' && bytes[1] == 'C' && bytes[2] == 'Z' && bytes[3] == '1',
            ErrorKind::malformed, "bad dataset magic in " + path);
    require(get_le<std::uint32_t>(bytes.data() + 4) == 1, ErrorKind::malformed,
            "unsupported dataset version in " + path);
    const auto n_samples = get_le<std::uint32_t>(bytes.data() + 8);
    const auto patch_size = get_le<std::uint32_t>(bytes.data() + 12);
    const auto n_channels = get_le<std::uint32_t>(bytes.data() + 16);

    const std::size_t values_per_patch =
        static_cast<std::size_t>(patch_size) * patch_size * n_channels;
    const std::size_t expected = 20 + n_samples * (2 + values_per_patch * 4);
    require(bytes.size() == expected, ErrorKind::malformed,
            "truncated dataset " + path + ": expected " + std::to_string(expected) +
                " bytes, got " + std::to_string(bytes.size()));

    SampleSet set;
    set.patch_size = static_cast<int>(patch_size);
    set.n_channels = static_cast<int>(n_channels);
    std::size_t offset = 20;
    for (std::uint32_t i = 0; i < n_samples; ++i) {
        const int label_code = bytes[offset];
        const std::uint8_t tag = bytes[offset + 1];
        require(tag == 0 || tag == 1 || tag == 2 || tag == 255, ErrorKind::malformed,
                "bad split tag in " + path);
        offset += 2;
        Patch patch;
        patch.size = static_cast<int>(patch_size);
        patch.n_channels = static_cast<int>(n_channels);
        patch.data.resize(values_per_patch);
        for (std::size_t k = 0; k < values_per_patch; ++k) {
            patch.data[k] = get_le<float>(bytes.data() + offset);
            offset += 4;
        }
        set.add(std::move(patch), LczClass::from_code(label_code), static_cast<SplitTag>(tag));
    }
    return set;
}

} // namespace lcz
