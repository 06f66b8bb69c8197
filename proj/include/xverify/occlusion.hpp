/**
 * @file occlusion.hpp
 * @brief Systematic image occluding over a stride grid.
 *
 * A sweep places one patch per grid position (x, y) = (i*s, j*s) with
 * i, j in [0, floor((112 - p) / s)), row-major (y outer, x inner), yielding
 * N = floor((112 - p) / s)^2 occluded images and their masks.
 */
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xverify/imaging.hpp"

namespace xverify {

enum class PatchShape { Rect, Round };
enum class PatchFill { Black, Gray, White, Noise };

struct EdgeBlur {
    int kernel = 7;
    double sigma = 7.0;

    friend bool operator==(const EdgeBlur&, const EdgeBlur&) = default;
};

struct PatchSpec {
    int size = 7;
    int stride = 5;
    PatchShape shape = PatchShape::Rect;
    PatchFill fill = PatchFill::Black;
    std::optional<EdgeBlur> edge_blur;
    std::uint64_t noise_seed = 0;

    /// Throws InvalidParameter when size/stride are out of range.
    void validate() const;

    friend bool operator==(const PatchSpec&, const PatchSpec&) = default;
};

/// p in {7, 14, 28}, s = 5, black, rectangular, sharp edges.
std::vector<PatchSpec> default_patch_specs();

const char* to_string(PatchShape shape);
const char* to_string(PatchFill fill);
PatchShape parse_patch_shape(const std::string& s);
PatchFill parse_patch_fill(const std::string& s);

/// Occlusion mask stored as its non-zero window; everything outside the
/// window is zero.
struct PatchMask {
    int x0 = 0;
    int y0 = 0;
    int width = 0;
    int height = 0;
    std::vector<double> weights;  // row-major, width * height

    double at(int x, int y) const;
    double local(int dx, int dy) const { return weights[static_cast<std::size_t>(dy) * width + dx]; }
    double sum() const;
    ScalarMap dense() const;
};

struct GridPosition {
    int x = 0;
    int y = 0;
};

struct OcclusionSet {
    PatchSpec spec;
    std::vector<GridPosition> positions;
    std::vector<Image> occluded;
    std::vector<PatchMask> masks;

    std::size_t count() const { return masks.size(); }
};

/// Positions per axis, floor((112 - p) / s).
int positions_per_axis(int size, int stride);
/// N = positions_per_axis^2.
std::size_t occlusion_count(int size, int stride);
std::vector<GridPosition> sweep_positions(const PatchSpec& spec);

/// Patch mask (before edge blur) centered in its p x p square; round shapes
/// keep pixels whose centers lie within p/2 of the square's center.
PatchMask patch_mask(const PatchSpec& spec, int x, int y);

struct PatchResult {
    Image image;
    PatchMask mask;
};

/// Composites out = (1 - m) * img + m * fill. Throws InvalidParameter when the
/// patch does not fit inside the image.
PatchResult apply_patch(const Image& img, int x, int y, const PatchSpec& spec);

/// Throws InvalidParameter for p > 112 or N = 0.
OcclusionSet occlude_sweep(const Image& img, const PatchSpec& spec);

}  // namespace xverify
