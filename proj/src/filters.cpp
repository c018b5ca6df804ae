#include "diffisp/filters.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace diffisp {

namespace {

// Closed-interval clamp mask: boundary points keep the interior derivative.
inline double clamp_mask(double pre) { return (pre >= 0.0 && pre <= 1.0) ? 1.0 : 0.0; }

constexpr double kLumR = 0.27, kLumG = 0.67, kLumB = 0.06;
constexpr double kPi = 3.14159265358979323846;

// Luminance-to-enhanced-luminance ratio g(L) = (1 - cos(pi L)) / (2 L) and
// its derivative, with the removable singularity at L = 0 filled by limits
// (g -> 0, g' -> pi^2 / 4).
inline double contrast_gain(double lum) {
    if (lum == 0.0) return 0.0;
    return 0.5 * (1.0 - std::cos(kPi * lum)) / lum;
}

inline double contrast_gain_deriv(double lum) {
    if (lum == 0.0) return kPi * kPi / 4.0;
    const double en = 0.5 * (1.0 - std::cos(kPi * lum));
    const double den = 0.5 * kPi * std::sin(kPi * lum);
    return (den * lum - en) / (lum * lum);
}

int canonical_rank(FilterId id) { return static_cast<int>(id); }

}  // namespace

FilterId filter_id(const FilterParams& p) {
    return std::visit(
        [](const auto& v) -> FilterId {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, DefogParams>) return FilterId::Defog;
            if constexpr (std::is_same_v<T, WbParams>) return FilterId::WhiteBalance;
            if constexpr (std::is_same_v<T, GammaParams>) return FilterId::Gamma;
            if constexpr (std::is_same_v<T, ContrastParams>) return FilterId::Contrast;
            if constexpr (std::is_same_v<T, ToneParams>) return FilterId::Tone;
            if constexpr (std::is_same_v<T, SharpenParams>) return FilterId::Sharpen;
        },
        p);
}

std::string filter_name(FilterId id) {
    switch (id) {
        case FilterId::Defog: return "defog";
        case FilterId::WhiteBalance: return "wb";
        case FilterId::Gamma: return "gamma";
        case FilterId::Contrast: return "contrast";
        case FilterId::Tone: return "tone";
        case FilterId::Sharpen: return "sharpen";
    }
    throw std::logic_error("unknown filter id");
}

int param_count(const FilterParams& p) {
    if (std::holds_alternative<WbParams>(p)) return 3;
    if (const auto* t = std::get_if<ToneParams>(&p)) return static_cast<int>(t->knots.size());
    return 1;  // defog.omega, gamma.g, contrast.alpha, sharpen.lambda
}

bool FilterChain::has_defog() const {
    return !stages.empty() && std::holds_alternative<DefogParams>(stages.front());
}

int FilterChain::total_params() const {
    int n = 0;
    for (const auto& s : stages) n += param_count(s);
    return n;
}

FilterChain FilterChain::default_chain(bool with_defog, int tone_knots) {
    FilterChain c;
    if (with_defog) c.stages.push_back(DefogParams{});
    c.stages.push_back(WbParams{});
    c.stages.push_back(GammaParams{});
    c.stages.push_back(ContrastParams{});
    c.stages.push_back(ToneParams{std::vector<double>(static_cast<size_t>(tone_knots), 1.0)});
    c.stages.push_back(SharpenParams{});
    return c;
}

void validate_chain(const FilterChain& chain) {
    int prev_rank = -1;
    FilterId prev_id = FilterId::Defog;
    for (const auto& stage : chain.stages) {
        const FilterId id = filter_id(stage);
        const int rank = canonical_rank(id);
        if (rank == prev_rank)
            throw std::invalid_argument("invalid chain: " + filter_name(id) + " appears more than once");
        if (rank < prev_rank)
            throw std::invalid_argument("invalid chain: " + filter_name(id) + " must precede " +
                                        filter_name(prev_id) + " in the canonical filter order");
        prev_rank = rank;
        prev_id = id;

        if (const auto* d = std::get_if<DefogParams>(&stage)) {
            if (!(d->omega >= 0.0 && d->omega <= 1.0))
                throw std::invalid_argument("invalid chain: defog.omega must lie in [0,1]");
            if (d->radius < 0) throw std::invalid_argument("invalid chain: defog.radius must be >= 0");
        } else if (const auto* w = std::get_if<WbParams>(&stage)) {
            if (!(w->wr > 0.0 && w->wg > 0.0 && w->wb > 0.0))
                throw std::invalid_argument("invalid chain: wb factors must be > 0");
        } else if (const auto* g = std::get_if<GammaParams>(&stage)) {
            if (!(g->g > 0.0)) throw std::invalid_argument("invalid chain: gamma.g must be > 0");
        } else if (const auto* a = std::get_if<ContrastParams>(&stage)) {
            if (!(a->alpha >= 0.0 && a->alpha <= 1.0))
                throw std::invalid_argument("invalid chain: contrast.alpha must lie in [0,1]");
        } else if (const auto* t = std::get_if<ToneParams>(&stage)) {
            if (t->knots.empty()) throw std::invalid_argument("invalid chain: tone needs at least one knot");
            for (double k : t->knots)
                if (!(k > 0.0)) throw std::invalid_argument("invalid chain: tone knots must be > 0");
        } else if (const auto* s = std::get_if<SharpenParams>(&stage)) {
            if (!(s->lambda >= 0.0))
                throw std::invalid_argument("invalid chain: sharpen.lambda must be >= 0");
            if (!(s->sigma > 0.0)) throw std::invalid_argument("invalid chain: sharpen.sigma must be > 0");
        }
    }
}

// ---------------------------------------------------------------------------
// Forward maps
// ---------------------------------------------------------------------------

ImageF apply_wb(const ImageF& img, const WbParams& p) {
    ImageF out(img.height, img.width);
    const double w[3] = {p.wr, p.wg, p.wb};
    for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = clamp01(w[i % 3] * img.data[i]);
    return out;
}

ImageF apply_gamma(const ImageF& img, const GammaParams& p) {
    ImageF out(img.height, img.width);
    for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = clamp01(std::pow(img.data[i], p.g));
    return out;
}

ImageF apply_contrast(const ImageF& img, const ContrastParams& p) {
    ImageF out(img.height, img.width);
    const size_t n = img.pixel_count();
    for (size_t i = 0; i < n; ++i) {
        const double r = img.data[3 * i], g = img.data[3 * i + 1], b = img.data[3 * i + 2];
        const double gain = contrast_gain(kLumR * r + kLumG * g + kLumB * b);
        const double blend = 1.0 + p.alpha * (gain - 1.0);
        out.data[3 * i] = clamp01(r * blend);
        out.data[3 * i + 1] = clamp01(g * blend);
        out.data[3 * i + 2] = clamp01(b * blend);
    }
    return out;
}

ImageF apply_tone(const ImageF& img, const ToneParams& p) {
    const int L = static_cast<int>(p.knots.size());
    const double total = std::accumulate(p.knots.begin(), p.knots.end(), 0.0);
    ImageF out(img.height, img.width);
    for (size_t i = 0; i < img.data.size(); ++i) {
        const double lv = L * img.data[i];
        double s = 0.0;
        for (int j = 0; j < L; ++j) s += std::clamp(lv - j, 0.0, 1.0) * p.knots[static_cast<size_t>(j)];
        out.data[i] = clamp01(s / total);
    }
    return out;
}

ImageF apply_sharpen(const ImageF& img, const SharpenParams& p) {
    const ImageF blurred = gaussian_blur(img, p.sigma);
    ImageF out(img.height, img.width);
    for (size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = clamp01(img.data[i] + p.lambda * (img.data[i] - blurred.data[i]));
    return out;
}

GrayF dark_channel(const ImageF& img, int radius) {
    GrayF mins(img.height, img.width);
    const size_t n = img.pixel_count();
    for (size_t i = 0; i < n; ++i)
        mins.data[i] = std::min({img.data[3 * i], img.data[3 * i + 1], img.data[3 * i + 2]});
    return patch_min(mins, radius);
}

std::array<double, 3> estimate_atmospheric_light(const ImageF& img, const GrayF& dark) {
    const size_t n = dark.data.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    const size_t k = std::min<size_t>(1000, n);
    // Brightest dark-channel pixels first; row-major order breaks ties.
    std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(k), idx.end(),
                      [&](size_t a, size_t b) {
                          if (dark.data[a] != dark.data[b]) return dark.data[a] > dark.data[b];
                          return a < b;
                      });
    std::array<double, 3> a{0.0, 0.0, 0.0};
    for (size_t i = 0; i < k; ++i)
        for (int c = 0; c < 3; ++c) a[static_cast<size_t>(c)] += img.data[3 * idx[i] + static_cast<size_t>(c)];
    for (int c = 0; c < 3; ++c)
        a[static_cast<size_t>(c)] = std::max(a[static_cast<size_t>(c)] / static_cast<double>(k), 1e-6);
    return a;
}

namespace {

// Airlight-normalized dark channel D(x) = min_patch(min_C I^C / A^C).
GrayF normalized_dark(const ImageF& img, const std::array<double, 3>& airlight, int radius) {
    GrayF mins(img.height, img.width);
    const size_t n = img.pixel_count();
    for (size_t i = 0; i < n; ++i)
        mins.data[i] = std::min({img.data[3 * i] / airlight[0], img.data[3 * i + 1] / airlight[1],
                                 img.data[3 * i + 2] / airlight[2]});
    return patch_min(mins, radius);
}

}  // namespace

GrayF transmission(const ImageF& img, const std::array<double, 3>& airlight, double omega, int radius) {
    GrayF t = normalized_dark(img, airlight, radius);
    for (double& v : t.data) v = std::clamp(1.0 - omega * v, kTransmissionFloor, 1.0);
    return t;
}

ImageF defog_recover(const ImageF& img, const std::array<double, 3>& airlight, const GrayF& trans) {
    ImageF out(img.height, img.width);
    const size_t n = img.pixel_count();
    for (size_t i = 0; i < n; ++i) {
        const double t = std::max(trans.data[i], kTransmissionFloor);
        for (int c = 0; c < 3; ++c) {
            const double a = airlight[static_cast<size_t>(c)];
            const double v = img.data[3 * i + static_cast<size_t>(c)];
            // t == 1 must pass the value through bit-exactly; (v - a) + a
            // would reintroduce rounding.
            out.data[3 * i + static_cast<size_t>(c)] = (t == 1.0) ? clamp01(v) : clamp01((v - a) / t + a);
        }
    }
    return out;
}

std::pair<ImageF, DefogIntermediates> apply_defog(const ImageF& img, const DefogParams& p,
                                                  const DefogIntermediates* reuse) {
    DefogIntermediates inter{GrayF(img.height, img.width), {}, GrayF(img.height, img.width),
                             GrayF(img.height, img.width)};
    if (reuse) {
        inter.dark = reuse->dark;
        inter.airlight = reuse->airlight;
        inter.norm_dark = reuse->norm_dark;
    } else {
        inter.dark = dark_channel(img, p.radius);
        inter.airlight = estimate_atmospheric_light(img, inter.dark);
        inter.norm_dark = normalized_dark(img, inter.airlight, p.radius);
    }
    inter.trans = inter.norm_dark;
    for (double& v : inter.trans.data) v = std::clamp(1.0 - p.omega * v, kTransmissionFloor, 1.0);
    return {defog_recover(img, inter.airlight, inter.trans), std::move(inter)};
}

ImageF apply_filter(const ImageF& img, const FilterParams& p) {
    return std::visit(
        [&](const auto& v) -> ImageF {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, DefogParams>) return apply_defog(img, v).first;
            if constexpr (std::is_same_v<T, WbParams>) return apply_wb(img, v);
            if constexpr (std::is_same_v<T, GammaParams>) return apply_gamma(img, v);
            if constexpr (std::is_same_v<T, ContrastParams>) return apply_contrast(img, v);
            if constexpr (std::is_same_v<T, ToneParams>) return apply_tone(img, v);
            if constexpr (std::is_same_v<T, SharpenParams>) return apply_sharpen(img, v);
        },
        p);
}

ImageF apply_chain(const ImageF& img, const FilterChain& chain) {
    validate_chain(chain);
    ImageF cur = img;
    for (const auto& stage : chain.stages) cur = apply_filter(cur, stage);
    return cur;
}

// ---------------------------------------------------------------------------
// Backward maps
// ---------------------------------------------------------------------------

namespace {

FilterVjp vjp_wb(const ImageF& in, const WbParams& p, const ImageF& up, bool want_input) {
    FilterVjp r{std::vector<double>(3, 0.0), ImageF(in.height, in.width)};
    const double w[3] = {p.wr, p.wg, p.wb};
    for (size_t i = 0; i < in.data.size(); ++i) {
        const size_t c = i % 3;
        const double m = clamp_mask(w[c] * in.data[i]);
        r.param_grad[c] += up.data[i] * m * in.data[i];
        if (want_input) r.input_grad.data[i] = up.data[i] * m * w[c];
    }
    return r;
}

FilterVjp vjp_gamma(const ImageF& in, const GammaParams& p, const ImageF& up, bool want_input) {
    FilterVjp r{std::vector<double>(1, 0.0), ImageF(in.height, in.width)};
    for (size_t i = 0; i < in.data.size(); ++i) {
        const double v = in.data[i];
        // pow(v, g) stays in [0,1], so the output clamp never masks anything.
        if (v > 0.0) {
            r.param_grad[0] += up.data[i] * std::pow(v, p.g) * std::log(v);
            if (want_input) r.input_grad.data[i] = up.data[i] * p.g * std::pow(v, p.g - 1.0);
        } else if (want_input) {
            r.input_grad.data[i] = (p.g == 1.0) ? up.data[i] : 0.0;
        }
    }
    return r;
}

FilterVjp vjp_contrast(const ImageF& in, const ContrastParams& p, const ImageF& up, bool want_input) {
    FilterVjp r{std::vector<double>(1, 0.0), ImageF(in.height, in.width)};
    const double w[3] = {kLumR, kLumG, kLumB};
    const size_t n = in.pixel_count();
    for (size_t i = 0; i < n; ++i) {
        const double* v = &in.data[3 * i];
        const double lum = kLumR * v[0] + kLumG * v[1] + kLumB * v[2];
        const double gain = contrast_gain(lum);
        const double dgain = contrast_gain_deriv(lum);
        const double blend = 1.0 + p.alpha * (gain - 1.0);
        double through_lum = 0.0;
        for (int c = 0; c < 3; ++c) {
            const double m = clamp_mask(v[c] * blend);
            const double g = up.data[3 * i + static_cast<size_t>(c)] * m;
            r.param_grad[0] += g * v[c] * (gain - 1.0);
            through_lum += g * v[c] * p.alpha * dgain;
            if (want_input) r.input_grad.data[3 * i + static_cast<size_t>(c)] = g * blend;
        }
        if (want_input)
            for (int c = 0; c < 3; ++c) r.input_grad.data[3 * i + static_cast<size_t>(c)] += through_lum * w[c];
    }
    return r;
}

FilterVjp vjp_tone(const ImageF& in, const ToneParams& p, const ImageF& up, bool want_input) {
    const int L = static_cast<int>(p.knots.size());
    const double total = std::accumulate(p.knots.begin(), p.knots.end(), 0.0);
    FilterVjp r{std::vector<double>(p.knots.size(), 0.0), ImageF(in.height, in.width)};
    for (size_t i = 0; i < in.data.size(); ++i) {
        const double lv = L * in.data[i];
        double s = 0.0;
        for (int j = 0; j < L; ++j) s += std::clamp(lv - j, 0.0, 1.0) * p.knots[static_cast<size_t>(j)];
        const double f = s / total;  // in [0,1]; output clamp never masks
        for (int j = 0; j < L; ++j)
            r.param_grad[static_cast<size_t>(j)] +=
                up.data[i] * (std::clamp(lv - j, 0.0, 1.0) - f) / total;
        if (want_input) {
            const int seg = std::clamp(static_cast<int>(std::floor(lv)), 0, L - 1);
            r.input_grad.data[i] = up.data[i] * L * p.knots[static_cast<size_t>(seg)] / total;
        }
    }
    return r;
}

FilterVjp vjp_sharpen(const ImageF& in, const SharpenParams& p, const ImageF& up, bool want_input,
                      const StageAux& aux) {
    const ImageF* blurred = std::get_if<ImageF>(&aux);
    ImageF local(1, 1);
    if (!blurred) {
        local = gaussian_blur(in, p.sigma);
        blurred = &local;
    }
    FilterVjp r{std::vector<double>(1, 0.0), ImageF(in.height, in.width)};
    ImageF masked(in.height, in.width);
    for (size_t i = 0; i < in.data.size(); ++i) {
        const double m = clamp_mask(in.data[i] + p.lambda * (in.data[i] - blurred->data[i]));
        masked.data[i] = up.data[i] * m;
        r.param_grad[0] += masked.data[i] * (in.data[i] - blurred->data[i]);
    }
    if (want_input) {
        const ImageF adj = gaussian_blur_adjoint(masked, p.sigma);
        for (size_t i = 0; i < in.data.size(); ++i)
            r.input_grad.data[i] = (1.0 + p.lambda) * masked.data[i] - p.lambda * adj.data[i];
    }
    return r;
}

FilterVjp vjp_defog(const ImageF& in, const DefogParams& p, const ImageF& up, const StageAux& aux) {
    const DefogIntermediates* inter = std::get_if<DefogIntermediates>(&aux);
    std::pair<ImageF, DefogIntermediates> local{ImageF(1, 1),
                                                DefogIntermediates{GrayF(1, 1), {}, GrayF(1, 1), GrayF(1, 1)}};
    if (!inter) {
        local = apply_defog(in, p);
        inter = &local.second;
    }
    // Input gradient is defined as zero: the spatial prior (dark channel,
    // airlight selection) is treated as a constant of the input image.
    FilterVjp r{std::vector<double>(1, 0.0), ImageF(in.height, in.width)};
    const size_t n = in.pixel_count();
    for (size_t i = 0; i < n; ++i) {
        const double d = inter->norm_dark.data[i];
        const double t_pre = 1.0 - p.omega * d;
        if (t_pre < kTransmissionFloor || t_pre > 1.0) continue;  // transmission clamp active
        const double t = inter->trans.data[i];
        for (int c = 0; c < 3; ++c) {
            const double a = inter->airlight[static_cast<size_t>(c)];
            const double diff = in.data[3 * i + static_cast<size_t>(c)] - a;
            const double m = clamp_mask(diff / t + a);
            r.param_grad[0] += up.data[3 * i + static_cast<size_t>(c)] * m * diff / (t * t) * d;
        }
    }
    return r;
}

}  // namespace

FilterVjp filter_vjp(const ImageF& input, const FilterParams& p, const ImageF& upstream,
                     bool want_input_grad, const StageAux& aux) {
    if (!input.same_shape(upstream))
        throw std::invalid_argument("filter_vjp: upstream cotangent shape does not match input");
    return std::visit(
        [&](const auto& v) -> FilterVjp {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, DefogParams>) return vjp_defog(input, v, upstream, aux);
            if constexpr (std::is_same_v<T, WbParams>) return vjp_wb(input, v, upstream, want_input_grad);
            if constexpr (std::is_same_v<T, GammaParams>)
                return vjp_gamma(input, v, upstream, want_input_grad);
            if constexpr (std::is_same_v<T, ContrastParams>)
                return vjp_contrast(input, v, upstream, want_input_grad);
            if constexpr (std::is_same_v<T, ToneParams>)
                return vjp_tone(input, v, upstream, want_input_grad);
            if constexpr (std::is_same_v<T, SharpenParams>)
                return vjp_sharpen(input, v, upstream, want_input_grad, aux);
        },
        p);
}

std::vector<std::string> param_names(const FilterParams& p) {
    if (std::holds_alternative<DefogParams>(p)) return {"defog.omega"};
    if (std::holds_alternative<WbParams>(p)) return {"wb.wr", "wb.wg", "wb.wb"};
    if (std::holds_alternative<GammaParams>(p)) return {"gamma.g"};
    if (std::holds_alternative<ContrastParams>(p)) return {"contrast.alpha"};
    if (const auto* t = std::get_if<ToneParams>(&p)) {
        std::vector<std::string> names;
        for (size_t j = 0; j < t->knots.size(); ++j) names.push_back("tone.t" + std::to_string(j));
        return names;
    }
    return {"sharpen.lambda"};
}

std::vector<std::string> chain_param_names(const FilterChain& chain) {
    std::vector<std::string> names;
    for (const auto& stage : chain.stages) {
        auto n = param_names(stage);
        names.insert(names.end(), n.begin(), n.end());
    }
    return names;
}

}  // namespace diffisp
