#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace seqfake {

// Planar RGB image, channel-major (c, y, x), values nominally in [0, 1].
class Image {
public:
    Image() = default;
    Image(int width, int height, float fill = 0.0f)
        : width_(width), height_(height), data_(static_cast<std::size_t>(3 * width * height), fill) {}

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t plane_size() const { return static_cast<std::size_t>(width_ * height_); }

    float& at(int c, int y, int x) { return data_[index(c, y, x)]; }
    float at(int c, int y, int x) const { return data_[index(c, y, x)]; }

    std::span<float> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
    std::span<const float> plane(int c) const { return {data_.data() + c * plane_size(), plane_size()}; }

    std::vector<float>& data() { return data_; }
    const std::vector<float>& data() const { return data_; }

    void clamp01();

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t index(int c, int y, int x) const {
        return static_cast<std::size_t>((c * height_ + y) * width_ + x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<float> data_;
};

// Interleaved 8-bit RGB round trip; values are clamped and rounded.
std::vector<std::uint8_t> to_rgb8(const Image& image);
Image from_rgb8(std::span<const std::uint8_t> rgb, int width, int height);

// Snap to the 8-bit grid a PNG write/read would produce.
Image quantize8(const Image& image);

void write_png(const Image& image, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

// Single-channel 8-bit PNG of a row-major map with values in [0, 1].
void write_gray_png(std::span<const float> values, int width, int height,
                    const std::filesystem::path& path);

std::vector<std::uint8_t> encode_jpeg(const Image& image, int quality);
Image decode_jpeg(std::span<const std::uint8_t> bytes);

double psnr(const Image& a, const Image& b);

}  // namespace seqfake
