#include "xverify/imaging.hpp"

#include <algorithm>
#include <cmath>

#include "xverify/error.hpp"

namespace xverify {

Image::Image(Rgb fill) : data_(kPixelCount * 3) {
    for (std::size_t i = 0; i < data_.size(); i += 3) {
        data_[i] = fill.r;
        data_[i + 1] = fill.g;
        data_[i + 2] = fill.b;
    }
}

double ScalarMap::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

double ScalarMap::sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
}

bool ScalarMap::is_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

ScalarMap& ScalarMap::operator+=(const ScalarMap& other) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

ScalarMap& ScalarMap::operator*=(double factor) {
    for (double& v : data_) v *= factor;
    return *this;
}

ScalarMap operator+(ScalarMap a, const ScalarMap& b) { return a += b; }
ScalarMap operator*(double factor, ScalarMap m) { return m *= factor; }

double luminance(Rgb c) { return 0.299 * c.r + 0.587 * c.g + 0.114 * c.b; }

ScalarMap to_grayscale(const Image& img) {
    ScalarMap out;
    for (int y = 0; y < kImageSide; ++y)
        for (int x = 0; x < kImageSide; ++x) out.at(x, y) = luminance(img.at(x, y));
    return out;
}

int effective_kernel_size(int requested) { return requested % 2 == 0 ? requested + 1 : requested; }

std::vector<double> gaussian_kernel(int kernel, double sigma) {
    if (kernel < 1) fail(ErrorKind::InvalidParameter, "blur kernel size must be >= 1");
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        fail(ErrorKind::InvalidParameter, "blur sigma must be a positive finite number");
    const int size = effective_kernel_size(kernel);
    const int radius = size / 2;
    std::vector<double> w(static_cast<std::size_t>(size));
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-(i * i) / (2.0 * sigma * sigma));
        w[static_cast<std::size_t>(i + radius)] = v;
        total += v;
    }
    for (double& v : w) v /= total;
    return w;
}

ScalarMap gaussian_blur(const ScalarMap& map, int kernel, double sigma) {
    const auto w = gaussian_kernel(kernel, sigma);
    const int radius = static_cast<int>(w.size()) / 2;
    auto clamp = [](int i) { return std::clamp(i, 0, kImageSide - 1); };

    ScalarMap horizontal;
    for (int y = 0; y < kImageSide; ++y) {
        for (int x = 0; x < kImageSide; ++x) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k)
                acc += w[static_cast<std::size_t>(k + radius)] * map.at(clamp(x + k), y);
            horizontal.at(x, y) = acc;
        }
    }
    ScalarMap out;
    for (int y = 0; y < kImageSide; ++y) {
        for (int x = 0; x < kImageSide; ++x) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k)
                acc += w[static_cast<std::size_t>(k + radius)] * horizontal.at(x, clamp(y + k));
            out.at(x, y) = acc;
        }
    }
    return out;
}

ScalarMap normalize_signed(const ScalarMap& map) {
    const double m = map.max_abs();
    if (m == 0.0) return ScalarMap{};
    ScalarMap out = map;
    for (double& v : out.values()) v /= m;
    return out;
}

std::uint8_t to_u8(double v) {
    const double r = std::floor(v + 0.5);
    return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

Rgb colormap_value(double v) {
    v = std::clamp(v, -1.0, 1.0);
    if (v >= 0.0) {
        const auto fade = to_u8(255.0 * (1.0 - v));
        return {fade, 255, fade};
    }
    const auto fade = to_u8(255.0 * (1.0 + v));
    return {255, fade, fade};
}

Image colormap_diverging(const ScalarMap& map) {
    Image out;
    for (int y = 0; y < kImageSide; ++y)
        for (int x = 0; x < kImageSide; ++x) out.set(x, y, colormap_value(map.at(x, y)));
    return out;
}

namespace {

double hue_of(double r, double g, double b, double maxc, double range) {
    const double rc = (maxc - r) / range;
    const double gc = (maxc - g) / range;
    const double bc = (maxc - b) / range;
    double h;
    if (r == maxc)
        h = bc - gc;
    else if (g == maxc)
        h = 2.0 + rc - bc;
    else
        h = 4.0 + gc - rc;
    h /= 6.0;
    h -= std::floor(h);
    return h >= 1.0 ? 0.0 : h;
}

double hls_component(double m1, double m2, double hue) {
    hue -= std::floor(hue);
    if (hue < 1.0 / 6.0) return m1 + (m2 - m1) * hue * 6.0;
    if (hue < 0.5) return m2;
    if (hue < 2.0 / 3.0) return m1 + (m2 - m1) * (2.0 / 3.0 - hue) * 6.0;
    return m1;
}

}  // namespace

Hls rgb_to_hls(double r, double g, double b) {
    const double maxc = std::max({r, g, b});
    const double minc = std::min({r, g, b});
    const double sum = maxc + minc;
    const double range = maxc - minc;
    const double l = sum / 2.0;
    if (range == 0.0) return {0.0, l, 0.0};
    const double s = std::min(1.0, l <= 0.5 ? range / sum : range / (2.0 - sum));
    return {hue_of(r, g, b, maxc, range), l, s};
}

Hsv rgb_to_hsv(double r, double g, double b) {
    const double maxc = std::max({r, g, b});
    const double minc = std::min({r, g, b});
    const double range = maxc - minc;
    if (maxc == 0.0 || range == 0.0) return {0.0, 0.0, maxc};
    return {hue_of(r, g, b, maxc, range), range / maxc, maxc};
}

std::array<double, 3> hls_to_rgb(const Hls& c) {
    if (c.s == 0.0) return {c.l, c.l, c.l};
    const double m2 = c.l <= 0.5 ? c.l * (1.0 + c.s) : c.l + c.s - c.l * c.s;
    const double m1 = 2.0 * c.l - m2;
    return {hls_component(m1, m2, c.h + 1.0 / 3.0), hls_component(m1, m2, c.h),
            hls_component(m1, m2, c.h - 1.0 / 3.0)};
}

std::array<double, 3> hsv_to_rgb(const Hsv& c) {
    if (c.s == 0.0) return {c.v, c.v, c.v};
    const double h6 = (c.h - std::floor(c.h)) * 6.0;
    const int sector = static_cast<int>(h6) % 6;
    const double f = h6 - std::floor(h6);
    const double p = c.v * (1.0 - c.s);
    const double q = c.v * (1.0 - c.s * f);
    const double t = c.v * (1.0 - c.s * (1.0 - f));
    switch (sector) {
        case 0: return {c.v, t, p};
        case 1: return {q, c.v, p};
        case 2: return {p, c.v, t};
        case 3: return {p, q, c.v};
        case 4: return {t, p, c.v};
        default: return {c.v, p, q};
    }
}

Hls rgb_to_hls(Rgb c) { return rgb_to_hls(c.r / 255.0, c.g / 255.0, c.b / 255.0); }
Hsv rgb_to_hsv(Rgb c) { return rgb_to_hsv(c.r / 255.0, c.g / 255.0, c.b / 255.0); }

Rgb hls_to_rgb8(const Hls& c) {
    const auto v = hls_to_rgb(c);
    return {to_u8(v[0] * 255.0), to_u8(v[1] * 255.0), to_u8(v[2] * 255.0)};
}

Rgb hsv_to_rgb8(const Hsv& c) {
    const auto v = hsv_to_rgb(c);
    return {to_u8(v[0] * 255.0), to_u8(v[1] * 255.0), to_u8(v[2] * 255.0)};
}

}  // namespace xverify
