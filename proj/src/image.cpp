#include "diffisp/image.hpp"

#include <algorithm>
#include <cmath>

namespace diffisp {

void clamp_image(ImageF& img) {
    for (double& v : img.data) v = clamp01(v);
}

GrayF luminance(const ImageF& img) {
    GrayF out(img.height, img.width);
    const size_t n = img.pixel_count();
    for (size_t i = 0; i < n; ++i) {
        const double* p = &img.data[i * 3];
        out.data[i] = 0.27 * p[0] + 0.67 * p[1] + 0.06 * p[2];
    }
    return out;
}

namespace {

// 1-D sliding min along one axis; window clipped at the ends.
void min_pass_rows(const GrayF& src, GrayF& dst, int radius) {
    for (int y = 0; y < src.height; ++y) {
        for (int x = 0; x < src.width; ++x) {
            const int x0 = std::max(0, x - radius);
            const int x1 = std::min(src.width - 1, x + radius);
            double m = src.at(y, x0);
            for (int xx = x0 + 1; xx <= x1; ++xx) m = std::min(m, src.at(y, xx));
            dst.at(y, x) = m;
        }
    }
}

void min_pass_cols(const GrayF& src, GrayF& dst, int radius) {
    for (int y = 0; y < src.height; ++y) {
        const int y0 = std::max(0, y - radius);
        const int y1 = std::min(src.height - 1, y + radius);
        for (int x = 0; x < src.width; ++x) {
            double m = src.at(y0, x);
            for (int yy = y0 + 1; yy <= y1; ++yy) m = std::min(m, src.at(yy, x));
            dst.at(y, x) = m;
        }
    }
}

// Symmetric reflection with the edge pixel repeated: -1 -> 0, n -> n-1.
// Folds until the index lands in [0, n); handles kernels wider than the image.
int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_blur: sigma must be > 0");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        sum += k[i + radius];
    }
    for (double& w : k) w /= sum;
    return k;
}

}  // namespace

GrayF patch_min(const GrayF& gray, int radius) {
    if (radius < 0) throw std::invalid_argument("patch_min: radius must be >= 0");
    if (radius == 0) return gray;
    GrayF tmp(gray.height, gray.width);
    GrayF out(gray.height, gray.width);
    min_pass_rows(gray, tmp, radius);
    min_pass_cols(tmp, out, radius);
    return out;
}

ImageF gaussian_blur(const ImageF& img, double sigma) {
    const std::vector<double> k = gaussian_kernel(sigma);
    const int radius = (static_cast<int>(k.size()) - 1) / 2;
    const int h = img.height, w = img.width;

    ImageF tmp(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc[3] = {0.0, 0.0, 0.0};
            for (int t = -radius; t <= radius; ++t) {
                const int xs = reflect_index(x + t, w);
                const double wk = k[t + radius];
                for (int c = 0; c < 3; ++c) acc[c] += wk * img.at(y, xs, c);
            }
            for (int c = 0; c < 3; ++c) tmp.at(y, x, c) = acc[c];
        }
    }
    ImageF out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc[3] = {0.0, 0.0, 0.0};
            for (int t = -radius; t <= radius; ++t) {
                const int ys = reflect_index(y + t, h);
                const double wk = k[t + radius];
                for (int c = 0; c < 3; ++c) acc[c] += wk * tmp.at(ys, x, c);
            }
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = acc[c];
        }
    }
    return out;
}

ImageF gaussian_blur_adjoint(const ImageF& img, double sigma) {
    const std::vector<double> k = gaussian_kernel(sigma);
    const int radius = (static_cast<int>(k.size()) - 1) / 2;
    const int h = img.height, w = img.width;

    // Scatter form of each 1-D pass: out[reflect(i+t)] += k[t] * in[i].
    ImageF tmp(h, w, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int t = -radius; t <= radius; ++t) {
                const int ys = reflect_index(y + t, h);
                const double wk = k[t + radius];
                for (int c = 0; c < 3; ++c) tmp.at(ys, x, c) += wk * img.at(y, x, c);
            }
        }
    }
    ImageF out(h, w, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int t = -radius; t <= radius; ++t) {
                const int xs = reflect_index(x + t, w);
                const double wk = k[t + radius];
                for (int c = 0; c < 3; ++c) out.at(y, xs, c) += wk * tmp.at(y, x, c);
            }
        }
    }
    return out;
}

ImageF bilinear_resize(const ImageF& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("bilinear_resize: output dimensions must be >= 1");
    if (out_h == img.height && out_w == img.width) return img;

    ImageF out(out_h, out_w);
    const double sy = static_cast<double>(img.height) / out_h;
    const double sx = static_cast<double>(img.width) / out_w;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = (1.0 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c);
                const double bot = (1.0 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c);
                out.at(y, x, c) = (1.0 - wy) * top + wy * bot;
            }
        }
    }
    return out;
}

double mean_squared_error(const ImageF& a, const ImageF& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("mean_squared_error: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.data.size());
}

}  // namespace diffisp
