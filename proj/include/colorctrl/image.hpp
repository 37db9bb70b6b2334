#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace colorctrl {

// 8-bit image, row-major, interleaved channels (1 = gray, 3 = RGB).
struct ImageBuffer {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 0;
    std::vector<std::uint8_t> data;

    ImageBuffer() = default;
    ImageBuffer(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill = 0);

    std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c = 0) { return data[(y * width + x) * channels + c]; }
    std::uint8_t at(std::size_t x, std::size_t y, std::size_t c = 0) const {
        return data[(y * width + x) * channels + c];
    }
    std::size_t pixel_count() const { return width * height; }
    bool same_shape(const ImageBuffer& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
    bool operator==(const ImageBuffer&) const = default;
};

// Binary raster; every cell is 0 or 1.
struct BinaryRaster {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> data;

    BinaryRaster() = default;
    BinaryRaster(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), data(w * h, fill) {}

    std::uint8_t& at(std::size_t x, std::size_t y) { return data[y * width + x]; }
    std::uint8_t at(std::size_t x, std::size_t y) const { return data[y * width + x]; }
    std::size_t count() const;
    BinaryRaster complement() const;
    bool operator==(const BinaryRaster&) const = default;
};

// ITU-R BT.601 luma in [0, 255] as doubles; gray input passes through.
std::vector<double> to_luma(const ImageBuffer& img);

// Gray image holding 0 or 255 per cell, for export and for edge-map SSIM.
ImageBuffer raster_to_image(const BinaryRaster& raster);
// Any nonzero sample (first channel) becomes 1.
BinaryRaster image_to_raster(const ImageBuffer& img);

ImageBuffer rotate180(const ImageBuffer& img);

}  // namespace colorctrl
