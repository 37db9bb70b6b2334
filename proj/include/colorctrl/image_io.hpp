#pragma once

#include <filesystem>

#include "colorctrl/image.hpp"

namespace colorctrl {

enum class ImageFormat { png, pnm };

// Reads 8-bit PNG (gray, gray+alpha, RGB, RGBA; alpha dropped) or binary
// PGM (P5) / PPM (P6). The format is sniffed from the file's magic bytes.
ImageBuffer read_image(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const ImageBuffer& img);
// P5 for one channel, P6 for three.
void write_pnm(const std::filesystem::path& path, const ImageBuffer& img);
void write_image(const std::filesystem::path& path, const ImageBuffer& img, ImageFormat format);

// File extension including the dot: .png, or .pgm/.ppm by channel count.
const char* image_extension(ImageFormat format, std::size_t channels);

}  // namespace colorctrl
