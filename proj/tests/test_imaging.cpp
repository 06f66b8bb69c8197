#include <gtest/gtest.h>
#include <png.h>

#include <cmath>
#include <cstring>
#include <random>

#include "synthetic.hpp"
#include "xverify/error.hpp"
#include "xverify/imaging.hpp"

namespace xverify {
namespace {

using testing::random_map;

TEST(Grayscale, BlackAndWhite) {
    const auto black = to_grayscale(Image(Rgb{0, 0, 0}));
    EXPECT_EQ(black.max_abs(), 0.0);
    const auto white = to_grayscale(Image(Rgb{255, 255, 255}));
    for (double v : white.values()) EXPECT_NEAR(v, 255.0, 1e-9);
}

TEST(Grayscale, WeightedSum) {
    // 0.299 * 200 + 0.587 * 100 + 0.114 * 50
    EXPECT_NEAR(luminance({200, 100, 50}), 124.2, 0.01);
    Image img;
    img.set(3, 4, {200, 100, 50});
    EXPECT_NEAR(to_grayscale(img).at(3, 4), 124.2, 0.01);
}

TEST(GaussianBlur, PreservesConstants) {
    const auto out = gaussian_blur(ScalarMap(3.25), 7, 2.0);
    for (double v : out.values()) EXPECT_NEAR(v, 3.25, 1e-12);
}

TEST(GaussianBlur, ImpulseMassIsOne) {
    for (int k : {1, 3, 5, 14, 56}) {
        ScalarMap impulse;
        impulse.at(56, 56) = 1.0;
        EXPECT_NEAR(gaussian_blur(impulse, k, k).sum(), 1.0, 1e-9) << "kernel " << k;
    }
}

TEST(GaussianBlur, ImpulseCenterMatchesDirect2dWeight) {
    // Oracle: normalized 2-D Gaussian over the 5x5 support, evaluated directly.
    double total = 0.0;
    for (int i = -2; i <= 2; ++i)
        for (int j = -2; j <= 2; ++j) total += std::exp(-(i * i + j * j) / (2.0 * 25.0));
    const double expected_center = 1.0 / total;

    ScalarMap impulse;
    impulse.at(50, 60) = 1.0;
    const auto out = gaussian_blur(impulse, 5, 5.0);
    EXPECT_NEAR(out.at(50, 60), expected_center, 1e-14);
    EXPECT_NEAR(out.at(52, 62), std::exp(-8.0 / 50.0) / total, 1e-14);
    EXPECT_EQ(out.at(53, 60), 0.0);
}

TEST(GaussianBlur, EvenKernelRoundsUp) {
    EXPECT_EQ(effective_kernel_size(14), 15);
    EXPECT_EQ(effective_kernel_size(56), 57);
    EXPECT_EQ(effective_kernel_size(5), 5);
    EXPECT_EQ(gaussian_kernel(14, 14.0).size(), 15u);
}

TEST(GaussianBlur, EdgeReplicationKeepsBorderLevel) {
    ScalarMap m;
    for (int y = 0; y < kImageSide; ++y) m.at(0, y) = 1.0;
    for (int y = 0; y < kImageSide; ++y)
        for (int x = 1; x < kImageSide; ++x) m.at(x, y) = 1.0;
    const auto out = gaussian_blur(m, 9, 3.0);
    EXPECT_NEAR(out.at(0, 0), 1.0, 1e-12);
}

TEST(GaussianBlur, RejectsNonPositiveSigma) {
    ScalarMap m;
    try {
        gaussian_blur(m, 5, 0.0);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidParameter);
    }
    EXPECT_THROW(gaussian_blur(m, 5, -1.0), Error);
}

TEST(GaussianBlur, IsLinear) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        const auto m1 = random_map(rng, -1, 1);
        const auto m2 = random_map(rng, -5, 5);
        const double a = 0.7 + trial, b = -1.3;
        const auto lhs = gaussian_blur(a * m1 + b * m2, 5, 5.0);
        const auto rhs = a * gaussian_blur(m1, 5, 5.0) + b * gaussian_blur(m2, 5, 5.0);
        for (std::size_t i = 0; i < lhs.values().size(); ++i)
            ASSERT_NEAR(lhs.values()[i], rhs.values()[i], 1e-9);
    }
}

TEST(NormalizeSigned, DividesByMaxMagnitude) {
    ScalarMap m;
    m.at(0, 0) = -2.0;
    m.at(1, 0) = 1.0;
    const auto n = normalize_signed(m);
    EXPECT_EQ(n.at(0, 0), -1.0);
    EXPECT_EQ(n.at(1, 0), 0.5);
    EXPECT_EQ(n.at(2, 0), 0.0);
}

TEST(NormalizeSigned, ZeroMapStaysZero) { EXPECT_EQ(normalize_signed(ScalarMap{}), ScalarMap{}); }

TEST(NormalizeSigned, IdempotentAndSignPreserving) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const auto m = random_map(rng, -3, 2);
        const auto n = normalize_signed(m);
        EXPECT_EQ(normalize_signed(n), n);
        std::size_t argmax_m = 0, argmax_n = 0;
        for (std::size_t i = 0; i < m.values().size(); ++i) {
            EXPECT_EQ(std::signbit(m.values()[i]), std::signbit(n.values()[i]));
            if (std::abs(m.values()[i]) > std::abs(m.values()[argmax_m])) argmax_m = i;
            if (std::abs(n.values()[i]) > std::abs(n.values()[argmax_n])) argmax_n = i;
        }
        EXPECT_EQ(argmax_m, argmax_n);
        EXPECT_EQ(n.max_abs(), 1.0);
    }
}

TEST(Colormap, Endpoints) {
    EXPECT_EQ(colormap_value(0.0), (Rgb{255, 255, 255}));
    EXPECT_EQ(colormap_value(1.0), (Rgb{0, 255, 0}));
    EXPECT_EQ(colormap_value(-1.0), (Rgb{255, 0, 0}));
    // 255 * (1 - 0.5) = 127.5, rounded half-up.
    EXPECT_EQ(colormap_value(0.5), (Rgb{128, 255, 128}));
    EXPECT_EQ(colormap_value(-0.5), (Rgb{255, 128, 128}));
}

TEST(Colormap, ClampsOutOfRange) {
    EXPECT_EQ(colormap_value(3.0), colormap_value(1.0));
    EXPECT_EQ(colormap_value(-7.0), colormap_value(-1.0));
}

TEST(Colormap, ZeroIsAchromatic) {
    EXPECT_EQ(rgb_to_hsv(colormap_value(0.0)).s, 0.0);
    const auto img = colormap_diverging(ScalarMap{});
    EXPECT_EQ(img, Image(Rgb{255, 255, 255}));
}

TEST(ColorSpaces, PrimaryRedHls) {
    const auto c = rgb_to_hls(Rgb{255, 0, 0});
    EXPECT_EQ(c.h, 0.0);
    EXPECT_EQ(c.l, 0.5);
    EXPECT_EQ(c.s, 1.0);
}

TEST(ColorSpaces, GrayHasNoSaturation) {
    EXPECT_EQ(rgb_to_hls(Rgb{128, 128, 128}).s, 0.0);
    EXPECT_EQ(rgb_to_hsv(Rgb{128, 128, 128}).s, 0.0);
}

TEST(ColorSpaces, PrimaryGreenHsv) {
    const auto c = rgb_to_hsv(Rgb{0, 255, 0});
    EXPECT_NEAR(c.h, 1.0 / 3.0, 1e-15);
    EXPECT_EQ(c.s, 1.0);
    EXPECT_EQ(c.v, 1.0);
}

TEST(ColorSpaces, HueRangeIsHalfOpen) {
    for (int r = 0; r < 256; r += 15)
        for (int g = 0; g < 256; g += 15)
            for (int b = 0; b < 256; b += 15) {
                const Rgb c{static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
                const auto hls = rgb_to_hls(c);
                ASSERT_GE(hls.h, 0.0);
                ASSERT_LT(hls.h, 1.0);
                ASSERT_GE(hls.s, 0.0);
                ASSERT_LE(hls.s, 1.0);
            }
}

TEST(ColorSpaces, RoundTripsOnLattice) {
    auto level = [](int i) { return static_cast<std::uint8_t>(std::min(255, i * 16)); };
    for (int i = 0; i <= 16; ++i)
        for (int j = 0; j <= 16; ++j)
            for (int k = 0; k <= 16; ++k) {
                const Rgb c{level(i), level(j), level(k)};
                const auto via_hls = hls_to_rgb8(rgb_to_hls(c));
                const auto via_hsv = hsv_to_rgb8(rgb_to_hsv(c));
                for (const auto& back : {via_hls, via_hsv}) {
                    ASSERT_LE(std::abs(back.r - c.r), 1);
                    ASSERT_LE(std::abs(back.g - c.g), 1);
                    ASSERT_LE(std::abs(back.b - c.b), 1);
                }
            }
}

TEST(Png, RoundTrip) {
    std::mt19937_64 rng(3);
    const auto img = testing::random_image(rng);
    testing::TempDir dir;
    write_png(dir.path() / "a.png", img);
    EXPECT_EQ(read_png(dir.path() / "a.png"), img);
}

TEST(Png, DropsAlpha) {
    std::vector<std::uint8_t> rgba(kPixelCount * 4);
    for (std::size_t i = 0; i < static_cast<std::size_t>(kPixelCount); ++i) {
        rgba[i * 4] = 10;
        rgba[i * 4 + 1] = 20;
        rgba[i * 4 + 2] = 30;
        rgba[i * 4 + 3] = static_cast<std::uint8_t>(i % 256);
    }
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    png.width = kImageSide;
    png.height = kImageSide;
    png.format = PNG_FORMAT_RGBA;
    testing::TempDir dir;
    const auto path = dir.path() / "alpha.png";
    ASSERT_TRUE(png_image_write_to_file(&png, path.c_str(), 0, rgba.data(), 0, nullptr));
    EXPECT_EQ(read_png(path), Image(Rgb{10, 20, 30}));
}

TEST(Png, RejectsWrongSize) {
    std::vector<std::uint8_t> rgb(10 * 10 * 3, 0);
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    png.width = 10;
    png.height = 10;
    png.format = PNG_FORMAT_RGB;
    testing::TempDir dir;
    const auto path = dir.path() / "small.png";
    ASSERT_TRUE(png_image_write_to_file(&png, path.c_str(), 0, rgb.data(), 0, nullptr));
    try {
        read_png(path);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
    }
    EXPECT_THROW(read_png(dir.path() / "missing.png"), Error);
}

}  // namespace
}  // namespace xverify
