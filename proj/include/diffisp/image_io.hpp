#pragma once

#include <stdexcept>
#include <string>

#include "diffisp/image.hpp"

namespace diffisp {

enum class IoErrorKind {
    UnreadableFile,     // missing file, permission problem, truncated/corrupt stream
    UnsupportedFormat,  // wrong bit depth or color model, or not PNG/PPM at all
    WriteFailure,
};

class IoError : public std::runtime_error {
public:
    IoError(IoErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    IoErrorKind kind() const { return kind_; }

private:
    IoErrorKind kind_;
};

// Reads an 8-bit RGB PNG or a binary PPM (P6, maxval 255). Channel bytes
// are mapped to [0,1] by v/255. Anything else (16-bit, palette, gray,
// alpha) raises IoError{UnsupportedFormat}.
ImageF load_image(const std::string& path);

// Writes an 8-bit RGB PNG. Channels are clamped to [0,1] and quantized by
// round-half-up: byte = floor(v*255 + 0.5).
void save_image(const ImageF& img, const std::string& path);

// save_image through a temp file in the same directory, then rename.
void save_image_atomic(const ImageF& img, const std::string& path);

}  // namespace diffisp
