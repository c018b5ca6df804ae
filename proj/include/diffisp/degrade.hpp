#pragma once

#include <cstdint>
#include <string>

#include "diffisp/image.hpp"

namespace diffisp {

enum class DegradeMode { None, Fog, LowLight };

std::string degrade_mode_name(DegradeMode m);
DegradeMode parse_degrade_mode(const std::string& s);  // throws std::invalid_argument

// Fully resolved degradation recipe for one image.
struct DegradeSpec {
    DegradeMode mode = DegradeMode::None;
    int fog_level = 0;     // k in 0..9; extinction beta = 0.01*k + 0.05
    double gamma = 1.5;    // darkening exponent in [1.5, 5]
    uint64_t seed = 0;     // seed the recipe was drawn from (bookkeeping only)
};

inline constexpr double kFogAirlight = 0.5;

inline double fog_beta(int level) { return 0.01 * level + 0.05; }

// Radial pseudo-depth d(x) = -0.04 * rho + sqrt(max(H, W)), rho being the
// distance from the central pixel (H/2, W/2), floored at 0. The central
// pixel itself sits at rho = 0 and carries the depth maximum.
GrayF scene_depth(int height, int width);

// Scattering compositor I = J * t + A * (1 - t).
ImageF fog_compose(const ImageF& img, const GrayF& trans, double airlight);

// t(x) = exp(-beta * d(x)) with the radial pseudo-depth above.
ImageF add_fog(const ImageF& img, int level);

// Per-channel darkening v -> v^gamma.
ImageF add_lowlight(const ImageF& img, double gamma);

// Draws one recipe for the hybrid scheme: with probability 2/3 the image is
// degraded (fog level uniform over 0..9 in the fog domain, gamma uniform
// over [1.5, 5] in the low-light domain), otherwise left unchanged.
enum class DegradeDomain { Fog, LowLight };
DegradeSpec hybrid_sample(uint64_t seed, DegradeDomain domain);

ImageF apply_degrade(const ImageF& img, const DegradeSpec& spec);

}  // namespace diffisp
