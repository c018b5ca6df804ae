#pragma once

#include <array>
#include <string>
#include <variant>
#include <vector>

#include "diffisp/image.hpp"

namespace diffisp {

// ---------------------------------------------------------------------------
// Filter parameter records
// ---------------------------------------------------------------------------

struct DefogParams {
    double omega = 0.0;  // degree of defogging, in [0,1]
    int radius = 7;      // dark-channel patch radius (15x15 window); not fitted
};

struct WbParams {
    double wr = 1.0, wg = 1.0, wb = 1.0;  // positive channel factors
};

struct GammaParams {
    double g = 1.0;  // positive exponent
};

struct ContrastParams {
    double alpha = 0.0;  // blend weight in [0,1]
};

struct ToneParams {
    std::vector<double> knots;  // positive increments t_0..t_{L-1}

    ToneParams() : knots(8, 1.0) {}
    explicit ToneParams(std::vector<double> k) : knots(std::move(k)) {}
};

struct SharpenParams {
    double lambda = 0.0;  // non-negative unsharp-mask strength
    double sigma = 1.0;   // blur width in pixels at the applied resolution; not fitted
};

using FilterParams =
    std::variant<DefogParams, WbParams, GammaParams, ContrastParams, ToneParams, SharpenParams>;

enum class FilterId { Defog, WhiteBalance, Gamma, Contrast, Tone, Sharpen };

FilterId filter_id(const FilterParams& p);
std::string filter_name(FilterId id);
int param_count(const FilterParams& p);

// ---------------------------------------------------------------------------
// Filter chain
// ---------------------------------------------------------------------------

// Ordered filter list. Valid chains are subsequences of the canonical order
// [Defog, WB, Gamma, Contrast, Tone, Sharpen]; Defog, when present, comes
// first and is the only spatial-prior filter.
struct FilterChain {
    std::vector<FilterParams> stages;

    bool has_defog() const;
    int total_params() const;

    // Full six-filter chain at neutral parameters (identity map), with or
    // without the defog stage.
    static FilterChain default_chain(bool with_defog, int tone_knots = 8);
};

// Throws std::invalid_argument naming the violated rule if the stage order
// is not a subsequence of the canonical order or a filter repeats.
void validate_chain(const FilterChain& chain);

// ---------------------------------------------------------------------------
// Forward maps
// ---------------------------------------------------------------------------

ImageF apply_wb(const ImageF& img, const WbParams& p);
ImageF apply_gamma(const ImageF& img, const GammaParams& p);
ImageF apply_contrast(const ImageF& img, const ContrastParams& p);
ImageF apply_tone(const ImageF& img, const ToneParams& p);
ImageF apply_sharpen(const ImageF& img, const SharpenParams& p);

// Dark channel: channel minimum followed by patch_min over the
// (2*radius+1)^2 window.
GrayF dark_channel(const ImageF& img, int radius);

// Airlight from the min(1000, H*W) brightest dark-channel pixels, ties
// broken by row-major index; per-channel mean at those positions, clamped
// below by 1e-6.
std::array<double, 3> estimate_atmospheric_light(const ImageF& img, const GrayF& dark);

// t(x) = 1 - omega * min_C(min_patch(I^C / A^C)), clamped to
// [kTransmissionFloor, 1].
GrayF transmission(const ImageF& img, const std::array<double, 3>& airlight, double omega, int radius);

inline constexpr double kTransmissionFloor = 0.1;

struct DefogIntermediates {
    GrayF dark;                       // dark channel of the input image
    std::array<double, 3> airlight{};  // A
    GrayF trans;                      // clamped transmission map
    GrayF norm_dark;                  // airlight-normalized dark channel D(x)
};

// Scene-radiance recovery J = (I - A) / max(t, floor) + A, clamped to [0,1].
ImageF defog_recover(const ImageF& img, const std::array<double, 3>& airlight, const GrayF& trans);

// `reuse`, when given, must carry the dark / airlight / norm_dark statistics
// an earlier call computed for this same image and radius; they do not depend
// on omega, so only the transmission map and output are recomputed.
std::pair<ImageF, DefogIntermediates> apply_defog(const ImageF& img, const DefogParams& p,
                                                  const DefogIntermediates* reuse = nullptr);

ImageF apply_filter(const ImageF& img, const FilterParams& p);
ImageF apply_chain(const ImageF& img, const FilterChain& chain);

// ---------------------------------------------------------------------------
// Backward maps (vector-Jacobian products)
// ---------------------------------------------------------------------------

// Per-stage data cached by the forward pass so the backward pass does not
// recompute blur or dark-channel statistics.
using StageAux = std::variant<std::monostate, ImageF, DefogIntermediates>;

struct FilterVjp {
    std::vector<double> param_grad;  // dL/dp, one entry per scalar parameter
    ImageF input_grad;               // dL/dinput; all-zero for Defog (stop-gradient)
};

// VJP at the forward point. `aux` may carry the cached forward aux for this
// filter (sharpen blur, defog intermediates); when monostate it is
// recomputed. Skipping the input gradient saves the blur adjoint where the
// caller does not need it (e.g. the first chain stage).
FilterVjp filter_vjp(const ImageF& input, const FilterParams& p, const ImageF& upstream,
                     bool want_input_grad = true, const StageAux& aux = std::monostate{});

// Scalar parameter names in chain order, e.g. "wb.wr", "tone.t3".
std::vector<std::string> param_names(const FilterParams& p);
std::vector<std::string> chain_param_names(const FilterChain& chain);

}  // namespace diffisp
