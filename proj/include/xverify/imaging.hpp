/**
 * @file imaging.hpp
 * @brief Pixel-level primitives for aligned face crops.
 *
 * Contains:
 * - Image / ScalarMap value types (fixed 112x112 extent)
 * - luminance, Gaussian blur, signed normalization
 * - diverging red/white/green colormap
 * - HLS / HSV conversions
 * - PNG read/write
 */
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace xverify {

inline constexpr int kImageSide = 112;
inline constexpr int kPixelCount = kImageSide * kImageSide;

struct Rgb {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// 112x112 8-bit RGB image, row-major, interleaved channels.
class Image {
public:
    Image() : data_(kPixelCount * 3, 0) {}
    explicit Image(Rgb fill);

    Rgb at(int x, int y) const {
        const auto i = index(x, y);
        return {data_[i], data_[i + 1], data_[i + 2]};
    }
    void set(int x, int y, Rgb c) {
        const auto i = index(x, y);
        data_[i] = c.r;
        data_[i + 1] = c.g;
        data_[i + 2] = c.b;
    }

    std::span<const std::uint8_t> bytes() const { return data_; }
    std::span<std::uint8_t> bytes() { return data_; }

    friend bool operator==(const Image&, const Image&) = default;

private:
    static std::size_t index(int x, int y) {
        return (static_cast<std::size_t>(y) * kImageSide + static_cast<std::size_t>(x)) * 3;
    }

    std::vector<std::uint8_t> data_;
};

/// 112x112 real-valued field (luminance, masks, similarity maps).
class ScalarMap {
public:
    ScalarMap() : data_(kPixelCount, 0.0) {}
    explicit ScalarMap(double fill) : data_(kPixelCount, fill) {}

    double at(int x, int y) const { return data_[static_cast<std::size_t>(y) * kImageSide + x]; }
    double& at(int x, int y) { return data_[static_cast<std::size_t>(y) * kImageSide + x]; }

    std::span<const double> values() const { return data_; }
    std::span<double> values() { return data_; }

    double max_abs() const;
    double sum() const;
    bool is_finite() const;

    ScalarMap& operator+=(const ScalarMap& other);
    ScalarMap& operator*=(double factor);

    friend bool operator==(const ScalarMap&, const ScalarMap&) = default;

private:
    std::vector<double> data_;
};

ScalarMap operator+(ScalarMap a, const ScalarMap& b);
ScalarMap operator*(double factor, ScalarMap m);

// BT.601 luma, values in [0, 255].
double luminance(Rgb c);
ScalarMap to_grayscale(const Image& img);

/// Odd kernel size actually used for a requested size (even sizes round up).
int effective_kernel_size(int requested);

/// Normalized 1-D Gaussian weights of length effective_kernel_size(kernel).
std::vector<double> gaussian_kernel(int kernel, double sigma);

/// Separable Gaussian blur with clamp-to-edge borders.
/// Throws InvalidParameter for sigma <= 0 or kernel < 1.
ScalarMap gaussian_blur(const ScalarMap& map, int kernel, double sigma);

/// Divides by max|value|; the zero map stays zero.
ScalarMap normalize_signed(const ScalarMap& map);

/// -1 -> red, 0 -> white, +1 -> green, linear in between; inputs clamped.
Rgb colormap_value(double v);
Image colormap_diverging(const ScalarMap& map);

struct Hls {
    double h = 0;  // [0, 1)
    double l = 0;  // [0, 1]
    double s = 0;  // [0, 1]
};

struct Hsv {
    double h = 0;
    double s = 0;
    double v = 0;
};

// Hexcone conversions on channel values scaled to [0, 1].
Hls rgb_to_hls(double r, double g, double b);
Hsv rgb_to_hsv(double r, double g, double b);
std::array<double, 3> hls_to_rgb(const Hls& c);
std::array<double, 3> hsv_to_rgb(const Hsv& c);

Hls rgb_to_hls(Rgb c);
Hsv rgb_to_hsv(Rgb c);
Rgb hls_to_rgb8(const Hls& c);
Rgb hsv_to_rgb8(const Hsv& c);

/// Rounds half-up and clamps to [0, 255].
std::uint8_t to_u8(double v);

/// Reads an 8-bit-or-deeper PNG; gray, palette and alpha are converted to RGB.
/// Throws Io on unreadable files, Parse on malformed PNG data and
/// InvalidArgument on a non-112x112 extent.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);
std::string encode_png(const Image& img);
Image decode_png(std::span<const std::uint8_t> bytes);

}  // namespace xverify
