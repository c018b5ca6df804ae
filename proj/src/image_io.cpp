#include "diffisp/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <vector>

namespace diffisp {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

ImageF load_png(const std::string& path, std::FILE* fp) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError(IoErrorKind::UnreadableFile, path + ": libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError(IoErrorKind::UnreadableFile, path + ": libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(IoErrorKind::UnreadableFile, path + ": corrupt or truncated PNG");
    }
    png_init_io(png, fp);
    png_read_info(png, info);

    const png_byte bit_depth = png_get_bit_depth(png, info);
    const png_byte color_type = png_get_color_type(png, info);
    if (bit_depth != 8 || color_type != PNG_COLOR_TYPE_RGB) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(IoErrorKind::UnsupportedFormat,
                      path + ": only 8-bit RGB PNG is supported (got bit depth " +
                          std::to_string(static_cast<int>(bit_depth)) + ", color type " +
                          std::to_string(static_cast<int>(color_type)) + ")");
    }

    const int h = static_cast<int>(png_get_image_height(png, info));
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int passes = png_set_interlace_handling(png);
    png_read_update_info(png, info);

    std::vector<png_byte> bytes(static_cast<size_t>(h) * w * 3);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) rows[y] = bytes.data() + static_cast<size_t>(y) * w * 3;
    for (int p = 0; p < passes; ++p) png_read_rows(png, rows.data(), nullptr, h);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    ImageF img(h, w);
    for (size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
    return img;
}

ImageF load_ppm(const std::string& path, std::ifstream& in) {
    auto next_token = [&in]() -> std::string {
        std::string tok;
        for (;;) {
            int ch = in.get();
            if (ch == EOF) return tok;
            if (ch == '#') {  // comment runs to end of line
                while (ch != EOF && ch != '\n') ch = in.get();
                continue;
            }
            if (std::isspace(ch)) {
                if (!tok.empty()) return tok;
                continue;
            }
            tok.push_back(static_cast<char>(ch));
        }
    };

    const std::string magic = next_token();
    if (magic != "P6") throw IoError(IoErrorKind::UnsupportedFormat, path + ": not a binary PPM (P6)");
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(next_token());
        h = std::stoi(next_token());
        maxval = std::stoi(next_token());
    } catch (const std::exception&) {
        throw IoError(IoErrorKind::UnreadableFile, path + ": malformed PPM header");
    }
    if (w < 1 || h < 1) throw IoError(IoErrorKind::UnreadableFile, path + ": bad PPM dimensions");
    if (maxval != 255)
        throw IoError(IoErrorKind::UnsupportedFormat,
                      path + ": only 8-bit PPM (maxval 255) is supported, got maxval " + std::to_string(maxval));

    std::vector<unsigned char> bytes(static_cast<size_t>(h) * w * 3);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<size_t>(in.gcount()) != bytes.size())
        throw IoError(IoErrorKind::UnreadableFile, path + ": truncated PPM pixel data");

    ImageF img(h, w);
    for (size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
    return img;
}

}  // namespace

ImageF load_image(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError(IoErrorKind::UnreadableFile, path + ": cannot open file");
    unsigned char sig[8] = {};
    probe.read(reinterpret_cast<char*>(sig), 8);
    const std::streamsize got = probe.gcount();

    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
    if (got >= 8 && std::memcmp(sig, png_sig, 8) == 0) {
        FilePtr fp(std::fopen(path.c_str(), "rb"));
        if (!fp) throw IoError(IoErrorKind::UnreadableFile, path + ": cannot open file");
        return load_png(path, fp.get());
    }
    if (got >= 2 && sig[0] == 'P' && sig[1] == '6') {
        probe.seekg(0);
        return load_ppm(path, probe);
    }
    throw IoError(IoErrorKind::UnsupportedFormat, path + ": not a PNG or binary PPM file");
}

void save_image(const ImageF& img, const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError(IoErrorKind::WriteFailure, path + ": cannot open file for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError(IoErrorKind::WriteFailure, path + ": libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError(IoErrorKind::WriteFailure, path + ": libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError(IoErrorKind::WriteFailure, path + ": PNG write failed");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(static_cast<size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double v = clamp01(img.at(y, x, c));
                row[static_cast<size_t>(x) * 3 + c] = static_cast<png_byte>(std::floor(v * 255.0 + 0.5));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void save_image_atomic(const ImageF& img, const std::string& path) {
    const std::string tmp = path + ".tmp";
    save_image(img, tmp);
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw IoError(IoErrorKind::WriteFailure, path + ": rename failed: " + ec.message());
    }
}

}  // namespace diffisp
