#include "xverify/occlusion.hpp"

#include <algorithm>

#include "xverify/error.hpp"

namespace xverify {

void PatchSpec::validate() const {
    if (size < 1 || size > kImageSide)
        fail(ErrorKind::InvalidParameter, "patch size must be in [1, 112], got " + std::to_string(size));
    if (stride < 1) fail(ErrorKind::InvalidParameter, "stride must be >= 1, got " + std::to_string(stride));
    if (edge_blur) gaussian_kernel(edge_blur->kernel, edge_blur->sigma);
}

std::vector<PatchSpec> default_patch_specs() {
    std::vector<PatchSpec> specs;
    for (int p : {7, 14, 28}) {
        PatchSpec s;
        s.size = p;
        s.stride = 5;
        specs.push_back(s);
    }
    return specs;
}

const char* to_string(PatchShape shape) { return shape == PatchShape::Rect ? "rect" : "round"; }

const char* to_string(PatchFill fill) {
    switch (fill) {
        case PatchFill::Black: return "black";
        case PatchFill::Gray: return "gray";
        case PatchFill::White: return "white";
        case PatchFill::Noise: return "noise";
    }
    return "black";
}

PatchShape parse_patch_shape(const std::string& s) {
    if (s == "rect" || s == "rectangular") return PatchShape::Rect;
    if (s == "round") return PatchShape::Round;
    fail(ErrorKind::InvalidParameter, "unknown patch shape '" + s + "'");
}

PatchFill parse_patch_fill(const std::string& s) {
    if (s == "black") return PatchFill::Black;
    if (s == "gray" || s == "grey") return PatchFill::Gray;
    if (s == "white") return PatchFill::White;
    if (s == "noise") return PatchFill::Noise;
    fail(ErrorKind::InvalidParameter, "unknown patch fill '" + s + "'");
}

double PatchMask::at(int x, int y) const {
    if (x < x0 || y < y0 || x >= x0 + width || y >= y0 + height) return 0.0;
    return local(x - x0, y - y0);
}

double PatchMask::sum() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
}

ScalarMap PatchMask::dense() const {
    ScalarMap m;
    for (int dy = 0; dy < height; ++dy)
        for (int dx = 0; dx < width; ++dx) m.at(x0 + dx, y0 + dy) = local(dx, dy);
    return m;
}

int positions_per_axis(int size, int stride) {
    if (size > kImageSide || size < 1 || stride < 1) return 0;
    return (kImageSide - size) / stride;
}

std::size_t occlusion_count(int size, int stride) {
    const auto n = static_cast<std::size_t>(positions_per_axis(size, stride));
    return n * n;
}

std::vector<GridPosition> sweep_positions(const PatchSpec& spec) {
    const int n = positions_per_axis(spec.size, spec.stride);
    std::vector<GridPosition> out;
    out.reserve(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) out.push_back({i * spec.stride, j * spec.stride});
    return out;
}

PatchMask patch_mask(const PatchSpec& spec, int x, int y) {
    const int p = spec.size;
    PatchMask m{x, y, p, p, std::vector<double>(static_cast<std::size_t>(p) * p, 1.0)};
    if (spec.shape == PatchShape::Round) {
        const double c = (p - 1) / 2.0;
        const double r2 = (p / 2.0) * (p / 2.0);
        for (int v = 0; v < p; ++v)
            for (int u = 0; u < p; ++u)
                if ((u - c) * (u - c) + (v - c) * (v - c) > r2) m.weights[static_cast<std::size_t>(v) * p + u] = 0.0;
    }
    return m;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

PatchMask blur_mask(const PatchMask& sharp, const EdgeBlur& blur) {
    const auto blurred = gaussian_blur(sharp.dense(), blur.kernel, blur.sigma);
    int x_lo = kImageSide, y_lo = kImageSide, x_hi = -1, y_hi = -1;
    for (int y = 0; y < kImageSide; ++y) {
        for (int x = 0; x < kImageSide; ++x) {
            if (blurred.at(x, y) != 0.0) {
                x_lo = std::min(x_lo, x);
                x_hi = std::max(x_hi, x);
                y_lo = std::min(y_lo, y);
                y_hi = std::max(y_hi, y);
            }
        }
    }
    if (x_hi < 0) return PatchMask{sharp.x0, sharp.y0, 0, 0, {}};
    PatchMask out{x_lo, y_lo, x_hi - x_lo + 1, y_hi - y_lo + 1, {}};
    out.weights.resize(static_cast<std::size_t>(out.width) * out.height);
    for (int dy = 0; dy < out.height; ++dy)
        for (int dx = 0; dx < out.width; ++dx)
            out.weights[static_cast<std::size_t>(dy) * out.width + dx] = blurred.at(x_lo + dx, y_lo + dy);
    return out;
}

}  // namespace

PatchResult apply_patch(const Image& img, int x, int y, const PatchSpec& spec) {
    spec.validate();
    if (x < 0 || y < 0 || x + spec.size > kImageSide || y + spec.size > kImageSide)
        fail(ErrorKind::InvalidParameter, "patch at (" + std::to_string(x) + "," + std::to_string(y) +
                                              ") of size " + std::to_string(spec.size) + " leaves the image");

    PatchMask mask = patch_mask(spec, x, y);
    if (spec.edge_blur) mask = blur_mask(mask, *spec.edge_blur);

    Rgb solid{0, 0, 0};
    if (spec.fill == PatchFill::Gray) solid = {128, 128, 128};
    if (spec.fill == PatchFill::White) solid = {255, 255, 255};
    std::uint64_t noise_state = spec.noise_seed ^ (static_cast<std::uint64_t>(x) << 40) ^
                                (static_cast<std::uint64_t>(y) << 20);

    PatchResult out{img, std::move(mask)};
    const auto& m = out.mask;
    for (int dy = 0; dy < m.height; ++dy) {
        for (int dx = 0; dx < m.width; ++dx) {
            Rgb fill = solid;
            if (spec.fill == PatchFill::Noise) {
                const auto bits = splitmix64(noise_state);
                fill = {static_cast<std::uint8_t>(bits), static_cast<std::uint8_t>(bits >> 8),
                        static_cast<std::uint8_t>(bits >> 16)};
            }
            const double w = m.local(dx, dy);
            if (w == 0.0) continue;
            const int px = m.x0 + dx, py = m.y0 + dy;
            if (w == 1.0) {
                out.image.set(px, py, fill);
                continue;
            }
            const Rgb src = img.at(px, py);
            out.image.set(px, py,
                          {to_u8((1.0 - w) * src.r + w * fill.r), to_u8((1.0 - w) * src.g + w * fill.g),
                           to_u8((1.0 - w) * src.b + w * fill.b)});
        }
    }
    return out;
}

OcclusionSet occlude_sweep(const Image& img, const PatchSpec& spec) {
    spec.validate();
    if (occlusion_count(spec.size, spec.stride) == 0)
        fail(ErrorKind::InvalidParameter, "patch size " + std::to_string(spec.size) + " with stride " +
                                              std::to_string(spec.stride) + " yields no occlusions");
    OcclusionSet set;
    set.spec = spec;
    set.positions = sweep_positions(spec);
    set.occluded.reserve(set.positions.size());
    set.masks.reserve(set.positions.size());
    for (const auto& pos : set.positions) {
        auto r = apply_patch(img, pos.x, pos.y, spec);
        set.occluded.push_back(std::move(r.image));
        set.masks.push_back(std::move(r.mask));
    }
    return set;
}

}  // namespace xverify
