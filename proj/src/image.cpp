#include "colorctrl/image.hpp"

#include <algorithm>

namespace colorctrl {

ImageBuffer::ImageBuffer(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill)
    : width(w), height(h), channels(c), data(w * h * c, fill) {}

std::size_t BinaryRaster::count() const {
    return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](auto v) { return v != 0; }));
}

BinaryRaster BinaryRaster::complement() const {
    BinaryRaster out(width, height);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = data[i] ? 0 : 1;
    return out;
}

std::vector<double> to_luma(const ImageBuffer& img) {
    std::vector<double> out(img.pixel_count());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::uint8_t* px = img.data.data() + i * img.channels;
        if (img.channels >= 3) {
            out[i] = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
        } else {
            out[i] = px[0];
        }
    }
    return out;
}

ImageBuffer raster_to_image(const BinaryRaster& raster) {
    ImageBuffer out(raster.width, raster.height, 1);
    for (std::size_t i = 0; i < raster.data.size(); ++i) out.data[i] = raster.data[i] ? 255 : 0;
    return out;
}

BinaryRaster image_to_raster(const ImageBuffer& img) {
    BinaryRaster out(img.width, img.height);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = img.data[i * img.channels] != 0 ? 1 : 0;
    return out;
}

ImageBuffer rotate180(const ImageBuffer& img) {
    ImageBuffer out(img.width, img.height, img.channels);
    const std::size_t n = img.pixel_count();
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(img.data.begin() + static_cast<std::ptrdiff_t>(i * img.channels), img.channels,
                    out.data.begin() + static_cast<std::ptrdiff_t>((n - 1 - i) * img.channels));
    }
    return out;
}

}  // namespace colorctrl
