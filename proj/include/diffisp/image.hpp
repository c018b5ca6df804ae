#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace diffisp {

// RGB image, row-major, interleaved channels, values kept in [0,1].
// All internal arithmetic is double; 8-bit quantization happens only at
// file boundaries (image_io).
struct ImageF {
    int height = 0;
    int width = 0;
    std::vector<double> data;  // size height*width*3, (r,g,b) per pixel

    ImageF() = default;
    ImageF(int h, int w, double fill = 0.0) : height(h), width(w) {
        if (h < 1 || w < 1) throw std::invalid_argument("ImageF: dimensions must be >= 1");
        data.assign(static_cast<size_t>(h) * w * 3, fill);
    }

    double& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    double at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }

    size_t pixel_count() const { return static_cast<size_t>(height) * width; }
    bool same_shape(const ImageF& o) const { return height == o.height && width == o.width; }
};

// Single-channel image, same layout conventions as ImageF.
struct GrayF {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    GrayF() = default;
    GrayF(int h, int w, double fill = 0.0) : height(h), width(w) {
        if (h < 1 || w < 1) throw std::invalid_argument("GrayF: dimensions must be >= 1");
        data.assign(static_cast<size_t>(h) * w, fill);
    }

    double& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    double at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
};

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// Clamp every channel to [0,1] in place.
void clamp_image(ImageF& img);

// Lum(P) = 0.27 r + 0.67 g + 0.06 b
GrayF luminance(const ImageF& img);

// Minimum over the (2*radius+1)^2 window centered at each pixel, window
// clipped at image borders (no padding value is injected).
GrayF patch_min(const GrayF& gray, int radius);

// Separable Gaussian convolution. Kernel truncated at +-ceil(3*sigma) and
// renormalized to sum 1; borders handled by symmetric reflection (edge
// pixel repeated: index -1 maps to 0).
ImageF gaussian_blur(const ImageF& img, double sigma);

// Adjoint of gaussian_blur as a linear operator on images (same sigma,
// same reflection rule). Needed for exact input gradients of filters that
// blur: near borders reflection makes the operator non-symmetric.
ImageF gaussian_blur_adjoint(const ImageF& img, double sigma);

// Standard bilinear resampling with half-pixel centers and edge clamping.
// Resizing to the source dimensions is the exact identity.
ImageF bilinear_resize(const ImageF& img, int out_h, int out_w);

// Mean of squared channel differences; images must have equal shape.
double mean_squared_error(const ImageF& a, const ImageF& b);

}  // namespace diffisp
