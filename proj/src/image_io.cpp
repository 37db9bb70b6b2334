#include "colorctrl/image_io.hpp"

#include <png.h>

#include <array>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include "colorctrl/errors.hpp"

namespace colorctrl {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    return f;
}

ImageBuffer read_png(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw IoError("'" + path.string() + "': " + image.message);
    }
    const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
    image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    ImageBuffer out(image.width, image.height, gray ? 1 : 3);
    if (!png_image_finish_read(&image, nullptr, out.data.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw IoError("'" + path.string() + "': " + msg);
    }
    return out;
}

// Reads one whitespace/comment-delimited header token from a PNM stream.
std::string pnm_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

ImageBuffer read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    const std::string magic = pnm_token(in);
    const std::size_t channels = magic == "P5" ? 1 : magic == "P6" ? 3 : 0;
    if (channels == 0) throw IoError("'" + path.string() + "': unsupported PNM type " + magic);
    std::size_t w = 0, h = 0, maxval = 0;
    try {
        w = std::stoul(pnm_token(in));
        h = std::stoul(pnm_token(in));
        maxval = std::stoul(pnm_token(in));
    } catch (const std::exception&) {
        throw IoError("'" + path.string() + "': malformed PNM header");
    }
    if (maxval != 255) throw IoError("'" + path.string() + "': only 8-bit PNM is supported");
    ImageBuffer out(w, h, channels);
    in.read(reinterpret_cast<char*>(out.data.data()), static_cast<std::streamsize>(out.data.size()));
    if (in.gcount() != static_cast<std::streamsize>(out.data.size())) {
        throw IoError("'" + path.string() + "': truncated PNM payload");
    }
    return out;
}

}  // namespace

ImageBuffer read_image(const std::filesystem::path& path) {
    std::array<unsigned char, 8> magic{};
    {
        auto f = open_file(path, "rb");
        if (std::fread(magic.data(), 1, magic.size(), f.get()) < 2) {
            throw IoError("'" + path.string() + "': file too short");
        }
    }
    if (png_sig_cmp(magic.data(), 0, 8) == 0) return read_png(path);
    if (magic[0] == 'P' && (magic[1] == '5' || magic[1] == '6')) return read_pnm(path);
    throw IoError("'" + path.string() + "': unrecognised image format");
}

void write_png(const std::filesystem::path& path, const ImageBuffer& img) {
    if (img.channels != 1 && img.channels != 3) throw IoError("write_png: need 1 or 3 channels");
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, img.data.data(), 0, nullptr)) {
        throw IoError("'" + path.string() + "': " + image.message);
    }
}

void write_pnm(const std::filesystem::path& path, const ImageBuffer& img) {
    if (img.channels != 1 && img.channels != 3) throw IoError("write_pnm: need 1 or 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << (img.channels == 1 ? "P5" : "P6") << "\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_image(const std::filesystem::path& path, const ImageBuffer& img, ImageFormat format) {
    if (format == ImageFormat::png) {
        write_png(path, img);
    } else {
        write_pnm(path, img);
    }
}

const char* image_extension(ImageFormat format, std::size_t channels) {
    if (format == ImageFormat::png) return ".png";
    return channels == 1 ? ".pgm" : ".ppm";
}

}  // namespace colorctrl
