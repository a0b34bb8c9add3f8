#include "seqfake/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <limits>
#include <memory>

#include <jpeglib.h>
#include <png.h>

#include "seqfake/error.hpp"

namespace seqfake {

void Image::clamp01() {
    for (auto& v : data_) v = std::clamp(v, 0.0f, 1.0f);
}

std::vector<std::uint8_t> to_rgb8(const Image& image) {
    const int w = image.width(), h = image.height();
    std::vector<std::uint8_t> out(static_cast<std::size_t>(3 * w * h));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
                out[static_cast<std::size_t>((y * w + x) * 3 + c)] =
                    static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
        }
    }
    return out;
}

Image from_rgb8(std::span<const std::uint8_t> rgb, int width, int height) {
    if (rgb.size() != static_cast<std::size_t>(3 * width * height)) {
        throw ShapeError("rgb buffer size does not match image dimensions");
    }
    Image image(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < 3; ++c) {
                image.at(c, y, x) = static_cast<float>(rgb[static_cast<std::size_t>((y * width + x) * 3 + c)]) / 255.0f;
            }
        }
    }
    return image;
}

Image quantize8(const Image& image) {
    return from_rgb8(to_rgb8(image), image.width(), image.height());
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw IoError("cannot open " + path.string());
    return f;
}

void write_png_rows(const std::filesystem::path& path, int width, int height, int color_type,
                    const std::vector<std::uint8_t>& pixels, int channels) {
    auto file = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed writing " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    // No timestamps or text chunks: identical pixels give identical files.
    png_write_info(png, info);
    for (int y = 0; y < height; ++y) {
        png_write_row(png, pixels.data() + static_cast<std::size_t>(y * width * channels));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png(const Image& image, const std::filesystem::path& path) {
    write_png_rows(path, image.width(), image.height(), PNG_COLOR_TYPE_RGB, to_rgb8(image), 3);
}

void write_gray_png(std::span<const float> values, int width, int height,
                    const std::filesystem::path& path) {
    if (values.size() != static_cast<std::size_t>(width * height)) {
        throw ShapeError("gray map size does not match dimensions");
    }
    std::vector<std::uint8_t> px(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        px[i] = static_cast<std::uint8_t>(std::lround(std::clamp(values[i], 0.0f, 1.0f) * 255.0f));
    }
    write_png_rows(path, width, height, PNG_COLOR_TYPE_GRAY, px, 1);
}

Image read_png(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("missing image file: " + path.string());
    auto file = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("failed reading " + path.string());
    }
    png_init_io(png, file.get());
    png_read_info(png, info);
    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const auto color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(3 * width * height));
    for (int y = 0; y < height; ++y) {
        png_read_row(png, pixels.data() + static_cast<std::size_t>(y * width * 3), nullptr);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return from_rgb8(pixels, width, height);
}

namespace {

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    std::longjmp(mgr->jump, 1);
}

}  // namespace

std::vector<std::uint8_t> encode_jpeg(const Image& image, int quality) {
    auto rgb = to_rgb8(image);
    jpeg_compress_struct cinfo{};
    JpegErrorManager err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    unsigned char* buffer = nullptr;
    unsigned long size = 0;
    if (setjmp(err.jump)) {
        jpeg_destroy_compress(&cinfo);
        std::free(buffer);
        throw IoError("jpeg encoding failed");
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &buffer, &size);
    cinfo.image_width = static_cast<JDIMENSION>(image.width());
    cinfo.image_height = static_cast<JDIMENSION>(image.height());
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = rgb.data() + static_cast<std::size_t>(cinfo.next_scanline) * 3 * static_cast<std::size_t>(image.width());
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    std::vector<std::uint8_t> out(buffer, buffer + size);
    jpeg_destroy_compress(&cinfo);
    std::free(buffer);
    return out;
}

Image decode_jpeg(std::span<const std::uint8_t> bytes) {
    jpeg_decompress_struct cinfo{};
    JpegErrorManager err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw IoError("jpeg decoding failed");
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    const int width = static_cast<int>(cinfo.output_width);
    const int height = static_cast<int>(cinfo.output_height);
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(3 * width * height));
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * 3 * static_cast<std::size_t>(width);
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return from_rgb8(rgb, width, height);
}

double psnr(const Image& a, const Image& b) {
    if (a.width() != b.width() || a.height() != b.height()) throw ShapeError("psnr: size mismatch");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        const double d = static_cast<double>(a.data()[i]) - b.data()[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data().size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

}  // namespace seqfake
