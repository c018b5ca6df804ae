#include "diffisp/degrade.hpp"

#include <cmath>
#include <stdexcept>

#include "diffisp/rng.hpp"

namespace diffisp {

std::string degrade_mode_name(DegradeMode m) {
    switch (m) {
        case DegradeMode::None: return "none";
        case DegradeMode::Fog: return "fog";
        case DegradeMode::LowLight: return "lowlight";
    }
    throw std::logic_error("unknown degrade mode");
}

DegradeMode parse_degrade_mode(const std::string& s) {
    if (s == "none") return DegradeMode::None;
    if (s == "fog") return DegradeMode::Fog;
    if (s == "lowlight") return DegradeMode::LowLight;
    throw std::invalid_argument("unknown degrade mode '" + s + "' (expected none, fog or lowlight)");
}

GrayF scene_depth(int height, int width) {
    GrayF d(height, width);
    // Distances are measured to the central pixel (floor of each half-extent),
    // so that pixel itself sits at rho = 0 and carries the depth maximum.
    const double cy = height / 2;
    const double cx = width / 2;
    const double base = std::sqrt(static_cast<double>(std::max(height, width)));
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double rho = std::hypot(y - cy, x - cx);
            d.at(y, x) = std::max(0.0, -0.04 * rho + base);
        }
    return d;
}

ImageF fog_compose(const ImageF& img, const GrayF& trans, double airlight) {
    if (img.height != trans.height || img.width != trans.width)
        throw std::invalid_argument("fog_compose: transmission map shape does not match image");
    ImageF out(img.height, img.width);
    const size_t n = img.pixel_count();
    for (size_t i = 0; i < n; ++i) {
        const double t = trans.data[i];
        for (int c = 0; c < 3; ++c)
            out.data[3 * i + static_cast<size_t>(c)] =
                clamp01(img.data[3 * i + static_cast<size_t>(c)] * t + airlight * (1.0 - t));
    }
    return out;
}

ImageF add_fog(const ImageF& img, int level) {
    if (level < 0 || level > 9)
        throw std::invalid_argument("add_fog: level must lie in 0..9");
    GrayF t = scene_depth(img.height, img.width);
    const double beta = fog_beta(level);
    for (double& v : t.data) v = std::exp(-beta * v);
    return fog_compose(img, t, kFogAirlight);
}

ImageF add_lowlight(const ImageF& img, double gamma) {
    if (!(gamma >= 1.0))
        throw std::invalid_argument("add_lowlight: gamma must be >= 1");
    ImageF out(img.height, img.width);
    for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = clamp01(std::pow(img.data[i], gamma));
    return out;
}

DegradeSpec hybrid_sample(uint64_t seed, DegradeDomain domain) {
    Rng rng(seed);
    DegradeSpec spec;
    spec.seed = seed;
    // First draw decides whether to degrade at all (2 of 3 outcomes), the
    // second draws the strength; this order is part of the determinism
    // contract for a given seed.
    const bool degrade = rng.randint(0, 2) > 0;
    if (!degrade) {
        spec.mode = DegradeMode::None;
        return spec;
    }
    if (domain == DegradeDomain::Fog) {
        spec.mode = DegradeMode::Fog;
        spec.fog_level = static_cast<int>(rng.randint(0, 9));
    } else {
        spec.mode = DegradeMode::LowLight;
        spec.gamma = rng.uniform(1.5, 5.0);
    }
    return spec;
}

ImageF apply_degrade(const ImageF& img, const DegradeSpec& spec) {
    switch (spec.mode) {
        case DegradeMode::None: return img;
        case DegradeMode::Fog: return add_fog(img, spec.fog_level);
        case DegradeMode::LowLight: return add_lowlight(img, spec.gamma);
    }
    throw std::logic_error("unknown degrade mode");
}

}  // namespace diffisp
