#include <png.h>

#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>

#include "xverify/error.hpp"
#include "xverify/imaging.hpp"

namespace xverify {

namespace {

struct PngImageGuard {
    png_image* image;
    ~PngImageGuard() { png_image_free(image); }
};

}  // namespace

Image decode_png(std::span<const std::uint8_t> bytes) {
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    PngImageGuard guard{&png};
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size()))
        fail(ErrorKind::Parse, std::string("cannot decode PNG: ") + png.message);
    if (png.width != kImageSide || png.height != kImageSide)
        fail(ErrorKind::InvalidArgument, "image must be 112x112, got " + std::to_string(png.width) +
                                             "x" + std::to_string(png.height));
    // RGBA keeps the stored color samples untouched; alpha is discarded below.
    png.format = PNG_FORMAT_RGBA;
    std::vector<std::uint8_t> rgba(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, rgba.data(), 0, nullptr))
        fail(ErrorKind::Parse, std::string("cannot decode PNG: ") + png.message);

    Image img;
    auto out = img.bytes();
    for (std::size_t p = 0; p < static_cast<std::size_t>(kPixelCount); ++p) {
        out[p * 3] = rgba[p * 4];
        out[p * 3 + 1] = rgba[p * 4 + 1];
        out[p * 3 + 2] = rgba[p * 4 + 2];
    }
    return img;
}

Image read_png(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open image " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_png(bytes);
    } catch (const Error& e) {
        fail(e.kind(), path.string() + ": " + e.what());
    }
}

std::string encode_png(const Image& img) {
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    png.width = kImageSide;
    png.height = kImageSide;
    png.format = PNG_FORMAT_RGB;

    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png, nullptr, &size, 0, img.bytes().data(), 0, nullptr))
        fail(ErrorKind::Io, std::string("cannot encode PNG: ") + png.message);
    std::string out(size, '\0');
    if (!png_image_write_to_memory(&png, out.data(), &size, 0, img.bytes().data(), 0, nullptr))
        fail(ErrorKind::Io, std::string("cannot encode PNG: ") + png.message);
    out.resize(size);
    png_image_free(&png);
    return out;
}

void write_png(const std::filesystem::path& path, const Image& img) {
    const auto bytes = encode_png(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write image " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::Io, "cannot write image " + path.string());
}

}  // namespace xverify
