#include "diffisp/gradient.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>
#include <optional>
#include <stdexcept>

namespace diffisp {

namespace {

double logit(double p, const char* what) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error(std::string(what) + ": boundary value has no unconstrained image");
    return std::log(p / (1.0 - p));
}

double positive_log(double v, const char* what) {
    if (!(v > 0.0))
        throw std::domain_error(std::string(what) + ": non-positive value has no unconstrained image");
    return std::log(v);
}

double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }

}  // namespace

std::vector<double> chain_to_unconstrained(const FilterChain& chain) {
    std::vector<double> u;
    for (const auto& stage : chain.stages) {
        if (const auto* d = std::get_if<DefogParams>(&stage)) {
            u.push_back(logit(d->omega, "defog.omega"));
        } else if (const auto* w = std::get_if<WbParams>(&stage)) {
            u.push_back(positive_log(w->wr, "wb.wr"));
            u.push_back(positive_log(w->wg, "wb.wg"));
            u.push_back(positive_log(w->wb, "wb.wb"));
        } else if (const auto* g = std::get_if<GammaParams>(&stage)) {
            u.push_back(positive_log(g->g, "gamma.g"));
        } else if (const auto* a = std::get_if<ContrastParams>(&stage)) {
            u.push_back(logit(a->alpha, "contrast.alpha"));
        } else if (const auto* t = std::get_if<ToneParams>(&stage)) {
            for (size_t j = 0; j < t->knots.size(); ++j)
                u.push_back(positive_log(t->knots[j], "tone knot"));
        } else if (const auto* s = std::get_if<SharpenParams>(&stage)) {
            u.push_back(positive_log(s->lambda, "sharpen.lambda"));
        }
    }
    return u;
}

FilterChain chain_from_unconstrained(const FilterChain& shape, const std::vector<double>& u) {
    FilterChain out;
    size_t i = 0;
    auto next = [&]() {
        if (i >= u.size())
            throw std::invalid_argument("chain_from_unconstrained: vector shorter than parameter count");
        return u[i++];
    };
    for (const auto& stage : shape.stages) {
        if (const auto* d = std::get_if<DefogParams>(&stage)) {
            out.stages.push_back(DefogParams{logistic(next()), d->radius});
        } else if (std::holds_alternative<WbParams>(stage)) {
            WbParams w;
            w.wr = std::exp(next());
            w.wg = std::exp(next());
            w.wb = std::exp(next());
            out.stages.push_back(w);
        } else if (std::holds_alternative<GammaParams>(stage)) {
            out.stages.push_back(GammaParams{std::exp(next())});
        } else if (std::holds_alternative<ContrastParams>(stage)) {
            out.stages.push_back(ContrastParams{logistic(next())});
        } else if (const auto* t = std::get_if<ToneParams>(&stage)) {
            ToneParams tp{std::vector<double>(t->knots.size())};
            for (size_t j = 0; j < tp.knots.size(); ++j) tp.knots[j] = std::exp(next());
            out.stages.push_back(std::move(tp));
        } else if (const auto* s = std::get_if<SharpenParams>(&stage)) {
            out.stages.push_back(SharpenParams{std::exp(next()), s->sigma});
        }
    }
    if (i != u.size())
        throw std::invalid_argument("chain_from_unconstrained: vector longer than parameter count");
    return out;
}

std::vector<double> grad_to_unconstrained(const FilterChain& at, const std::vector<double>& param_grad) {
    std::vector<double> mult;
    for (const auto& stage : at.stages) {
        if (const auto* d = std::get_if<DefogParams>(&stage)) {
            mult.push_back(d->omega * (1.0 - d->omega));
        } else if (const auto* w = std::get_if<WbParams>(&stage)) {
            mult.push_back(w->wr);
            mult.push_back(w->wg);
            mult.push_back(w->wb);
        } else if (const auto* g = std::get_if<GammaParams>(&stage)) {
            mult.push_back(g->g);
        } else if (const auto* a = std::get_if<ContrastParams>(&stage)) {
            mult.push_back(a->alpha * (1.0 - a->alpha));
        } else if (const auto* t = std::get_if<ToneParams>(&stage)) {
            for (double k : t->knots) mult.push_back(k);
        } else if (const auto* s = std::get_if<SharpenParams>(&stage)) {
            mult.push_back(s->lambda);
        }
    }
    if (mult.size() != param_grad.size())
        throw std::invalid_argument("grad_to_unconstrained: gradient size does not match chain");
    std::vector<double> u(param_grad.size());
    for (size_t i = 0; i < u.size(); ++i) u[i] = param_grad[i] * mult[i];
    return u;
}

std::vector<double> neutral_unconstrained(const FilterChain& shape) {
    constexpr double kNearZero = -6.0;  // logistic/exp value ~0.0025
    std::vector<double> u;
    for (const auto& stage : shape.stages) {
        switch (filter_id(stage)) {
            case FilterId::Defog:
            case FilterId::Contrast:
            case FilterId::Sharpen: u.push_back(kNearZero); break;
            case FilterId::WhiteBalance: u.insert(u.end(), {0.0, 0.0, 0.0}); break;
            case FilterId::Gamma: u.push_back(0.0); break;
            case FilterId::Tone:
                u.insert(u.end(), std::get<ToneParams>(stage).knots.size(), 0.0);
                break;
        }
    }
    return u;
}

// ---------------------------------------------------------------------------
// Forward tape + backward
// ---------------------------------------------------------------------------

ChainTape chain_forward(const ImageF& img, const FilterChain& chain,
                        const DefogIntermediates* defog_reuse) {
    validate_chain(chain);
    ChainTape tape;
    ImageF cur = img;
    for (const auto& stage : chain.stages) {
        tape.inputs.push_back(cur);
        if (const auto* d = std::get_if<DefogParams>(&stage)) {
            // A valid chain only ever has defog first, where its input is the
            // chain input the reuse statistics were computed from.
            auto [out, inter] = apply_defog(cur, *d, tape.inputs.size() == 1 ? defog_reuse : nullptr);
            tape.aux.emplace_back(std::move(inter));
            cur = std::move(out);
        } else if (const auto* s = std::get_if<SharpenParams>(&stage)) {
            ImageF blurred = gaussian_blur(cur, s->sigma);
            ImageF out(cur.height, cur.width);
            for (size_t i = 0; i < cur.data.size(); ++i)
                out.data[i] = clamp01(cur.data[i] + s->lambda * (cur.data[i] - blurred.data[i]));
            tape.aux.emplace_back(std::move(blurred));
            cur = std::move(out);
        } else {
            tape.aux.emplace_back(std::monostate{});
            cur = apply_filter(cur, stage);
        }
    }
    tape.output = std::move(cur);
    return tape;
}

ChainVjp chain_backward(const FilterChain& chain, const ChainTape& tape, const ImageF& out_cotangent,
                        bool want_input_grad) {
    const size_t n = chain.stages.size();
    if (tape.inputs.size() != n || tape.aux.size() != n)
        throw std::invalid_argument("chain_backward: tape does not match chain");
    if (!out_cotangent.same_shape(tape.output))
        throw std::invalid_argument("chain_backward: cotangent shape does not match output");

    std::vector<size_t> offset(n + 1, 0);
    for (size_t i = 0; i < n; ++i)
        offset[i + 1] = offset[i] + static_cast<size_t>(param_count(chain.stages[i]));

    ChainVjp r;
    r.param_grad.assign(offset[n], 0.0);
    ImageF cot = out_cotangent;
    for (size_t ri = n; ri-- > 0;) {
        const bool need_input = (ri > 0) || want_input_grad;
        FilterVjp v = filter_vjp(tape.inputs[ri], chain.stages[ri], cot, need_input, tape.aux[ri]);
        std::copy(v.param_grad.begin(), v.param_grad.end(), r.param_grad.begin() + static_cast<long>(offset[ri]));
        if (need_input) cot = std::move(v.input_grad);
    }
    r.input_grad = want_input_grad ? std::move(cot) : ImageF(tape.inputs.front().height, tape.inputs.front().width);
    return r;
}

double chain_loss(const FilterChain& chain, const ImageF& input, const ImageF& target) {
    return mean_squared_error(apply_chain(input, chain), target);
}

LossGrad chain_loss_grad(const FilterChain& chain, const ImageF& input, const ImageF& target,
                         bool want_input_grad, const DefogIntermediates* defog_reuse) {
    ChainTape tape = chain_forward(input, chain, defog_reuse);
    if (!tape.output.same_shape(target))
        throw std::invalid_argument("chain_loss_grad: target shape does not match output");
    LossGrad lg;
    lg.loss = mean_squared_error(tape.output, target);
    ImageF cot(tape.output.height, tape.output.width);
    const double scale = 2.0 / static_cast<double>(tape.output.data.size());
    for (size_t i = 0; i < cot.data.size(); ++i)
        cot.data[i] = scale * (tape.output.data[i] - target.data[i]);
    ChainVjp v = chain_backward(chain, tape, cot, want_input_grad);
    lg.param_grad = std::move(v.param_grad);
    lg.input_grad = std::move(v.input_grad);
    return lg;
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

std::vector<double> finite_diff_gradient(const std::function<double(const std::vector<double>&)>& f,
                                         const std::vector<double>& u, double step) {
    std::vector<double> g(u.size(), 0.0);
    std::vector<double> probe = u;
    for (size_t i = 0; i < u.size(); ++i) {
        probe[i] = u[i] + step;
        const double fp = f(probe);
        probe[i] = u[i] - step;
        const double fm = f(probe);
        probe[i] = u[i];
        g[i] = (fp - fm) / (2.0 * step);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

void adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grad,
               const AdamConfig& cfg) {
    const size_t n = params.size();
    if (grad.size() != n || state.m.size() != n || state.v.size() != n)
        throw std::invalid_argument("adam_step: state, parameter and gradient sizes differ");
    for (double g : grad)
        if (!std::isfinite(g)) throw std::runtime_error("adam_step: non-finite gradient");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < n; ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

std::vector<uint8_t> kink_flags(const ImageF& img, const FilterChain& chain, double margin) {
    validate_chain(chain);
    const size_t npx = img.pixel_count();
    std::vector<uint8_t> flags(npx, 0);
    ImageF cur = img;
    for (const auto& stage : chain.stages) {
        if (const auto* d = std::get_if<DefogParams>(&stage)) {
            auto [out, inter] = apply_defog(cur, *d);
            for (size_t i = 0; i < npx; ++i) {
                const double t_pre = 1.0 - d->omega * inter.norm_dark.data[i];
                if (std::fabs(t_pre - kTransmissionFloor) < margin) flags[i] = 1;
                const double t = inter.trans.data[i];
                for (int c = 0; c < 3; ++c) {
                    const double a = inter.airlight[static_cast<size_t>(c)];
                    const double pre = (cur.data[3 * i + static_cast<size_t>(c)] - a) / t + a;
                    if (std::fabs(pre) < margin || std::fabs(pre - 1.0) < margin) flags[i] = 1;
                }
            }
            cur = std::move(out);
        } else if (const auto* w = std::get_if<WbParams>(&stage)) {
            const double wv[3] = {w->wr, w->wg, w->wb};
            // The product can cross the upper clamp; it cannot cross 0.
            for (size_t i = 0; i < cur.data.size(); ++i)
                if (std::fabs(wv[i % 3] * cur.data[i] - 1.0) < margin) flags[i / 3] = 1;
            cur = apply_wb(cur, *w);
        } else if (const auto* g = std::get_if<GammaParams>(&stage)) {
            // Power stays inside [0,1]; the hazard is the singularity at 0.
            for (size_t i = 0; i < cur.data.size(); ++i)
                if (cur.data[i] > 0.0 && cur.data[i] < margin) flags[i / 3] = 1;
            cur = apply_gamma(cur, *g);
        } else if (const auto* a = std::get_if<ContrastParams>(&stage)) {
            for (size_t i = 0; i < npx; ++i) {
                const double* v = &cur.data[3 * i];
                const double lum = 0.27 * v[0] + 0.67 * v[1] + 0.06 * v[2];
                if (lum > 0.0 && lum < margin) flags[i] = 1;
                const double gain = (lum == 0.0) ? 0.0 : 0.5 * (1.0 - std::cos(3.14159265358979323846 * lum)) / lum;
                const double blend = 1.0 + a->alpha * (gain - 1.0);
                for (int c = 0; c < 3; ++c)
                    if (std::fabs(v[c] * blend - 1.0) < margin) flags[i] = 1;
            }
            cur = apply_contrast(cur, *a);
        } else if (const auto* t = std::get_if<ToneParams>(&stage)) {
            const int L = static_cast<int>(t->knots.size());
            for (size_t i = 0; i < cur.data.size(); ++i) {
                const double v = cur.data[i];
                // Exactly saturated inputs are constant under parameter
                // perturbations, so the segment boundary there is harmless.
                if (v == 0.0 || v == 1.0) continue;
                const double lv = L * v;
                const double j = std::round(lv);
                if (j >= 0.0 && j <= L && std::fabs(lv - j) < margin * L) flags[i / 3] = 1;
            }
            cur = apply_tone(cur, *t);
        } else if (const auto* s = std::get_if<SharpenParams>(&stage)) {
            const ImageF blurred = gaussian_blur(cur, s->sigma);
            ImageF out(cur.height, cur.width);
            for (size_t i = 0; i < cur.data.size(); ++i) {
                const double pre = cur.data[i] + s->lambda * (cur.data[i] - blurred.data[i]);
                if (std::fabs(pre) < margin || std::fabs(pre - 1.0) < margin) flags[i / 3] = 1;
                out.data[i] = clamp01(pre);
            }
            cur = std::move(out);
        }
    }
    return flags;
}

ImageF draw_kink_free_image(Rng& rng, const FilterChain& chain, int height, int width, double margin) {
    constexpr double kLo = 0.15, kHi = 0.85;
    constexpr int kMaxRounds = 400;
    ImageF img(height, width);
    for (double& v : img.data) v = rng.uniform(kLo, kHi);
    for (int round = 0; round < kMaxRounds; ++round) {
        const std::vector<uint8_t> flags = kink_flags(img, chain, margin);
        size_t flagged = 0;
        for (size_t i = 0; i < flags.size(); ++i) {
            if (!flags[i]) continue;
            ++flagged;
            for (int c = 0; c < 3; ++c) img.data[3 * i + static_cast<size_t>(c)] = rng.uniform(kLo, kHi);
        }
        if (flagged == 0) return img;
        // Rare non-contracting configurations (airlight shifts reflagging
        // cleared pixels) escape via a periodic full redraw.
        if ((round + 1) % 80 == 0)
            for (double& v : img.data) v = rng.uniform(kLo, kHi);
    }
    throw std::runtime_error("draw_kink_free_image: could not clear kink-adjacent pixels");
}

FilterChain draw_interior_params(Rng& rng, const FilterChain& shape) {
    FilterChain out;
    for (const auto& stage : shape.stages) {
        if (const auto* d = std::get_if<DefogParams>(&stage)) {
            out.stages.push_back(DefogParams{rng.uniform(0.3, 0.7), d->radius});
        } else if (std::holds_alternative<WbParams>(stage)) {
            WbParams w;
            w.wr = rng.uniform(0.7, 1.3);
            w.wg = rng.uniform(0.7, 1.3);
            w.wb = rng.uniform(0.7, 1.3);
            out.stages.push_back(w);
        } else if (std::holds_alternative<GammaParams>(stage)) {
            out.stages.push_back(GammaParams{rng.uniform(0.5, 2.0)});
        } else if (std::holds_alternative<ContrastParams>(stage)) {
            out.stages.push_back(ContrastParams{rng.uniform(0.2, 0.8)});
        } else if (const auto* t = std::get_if<ToneParams>(&stage)) {
            ToneParams tp{std::vector<double>(t->knots.size())};
            for (double& k : tp.knots) k = rng.uniform(0.5, 2.0);
            out.stages.push_back(std::move(tp));
        } else if (const auto* s = std::get_if<SharpenParams>(&stage)) {
            out.stages.push_back(SharpenParams{rng.uniform(0.1, 0.5), s->sigma});
        }
    }
    return out;
}

bool GradCheckReport::all_pass() const {
    for (const auto& r : rows)
        if (!r.pass) return false;
    return !rows.empty();
}

GradCheckReport gradcheck_chain(const FilterChain& shape, uint64_t seed, const GradCheckOptions& opts) {
    validate_chain(shape);
    const std::vector<std::string> names = chain_param_names(shape);
    GradCheckReport report;
    report.trials = opts.trials;
    report.seed = seed;
    report.rows.resize(names.size());
    std::vector<double> score(names.size(), -1.0);

    const char* corrupt = std::getenv("DIFFISP_CORRUPT_VJP");

    for (int trial = 0; trial < opts.trials; ++trial) {
        Rng rng(child_seed(seed, static_cast<uint64_t>(trial)));
        const FilterChain chain = draw_interior_params(rng, shape);
        const ImageF img = draw_kink_free_image(rng, chain, opts.height, opts.width, opts.kink_margin);
        ImageF target(opts.height, opts.width);
        for (double& v : target.data) v = rng.uniform01();

        const std::vector<double> u = chain_to_unconstrained(chain);
        const LossGrad lg = chain_loss_grad(chain, img, target, false);
        std::vector<double> analytic = grad_to_unconstrained(chain, lg.param_grad);
        if (corrupt)
            for (size_t i = 0; i < names.size(); ++i)
                if (names[i] == corrupt) analytic[i] *= 2.0;

        const std::vector<double> numeric = finite_diff_gradient(
            [&](const std::vector<double>& uu) { return chain_loss(chain_from_unconstrained(chain, uu), img, target); },
            u, opts.step);

        for (size_t i = 0; i < names.size(); ++i) {
            const double abs_err = std::fabs(analytic[i] - numeric[i]);
            const double maxmag = std::max(std::fabs(analytic[i]), std::fabs(numeric[i]));
            const double rel_err = abs_err / std::max(maxmag, 1e-12);
            const bool pass = (maxmag < opts.small_mag) ? (abs_err <= opts.abs_tol) : (rel_err <= opts.rel_tol);
            const double s = (pass ? 0.0 : 1e6) + rel_err;
            if (s > score[i]) {
                score[i] = s;
                report.rows[i] = GradCheckRow{names[i], analytic[i], numeric[i], abs_err, rel_err, pass};
            }
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Parameter fitting
// ---------------------------------------------------------------------------

FitResult fit_params(const ImageF& degraded, const ImageF& reference, const FilterChain& shape,
                     const FitOptions& opts) {
    if (!degraded.same_shape(reference))
        throw std::invalid_argument("fit_params: degraded and reference image shapes differ");
    validate_chain(shape);

    ImageF deg = degraded;
    ImageF ref = reference;
    if (opts.low_res && (deg.height > 256 || deg.width > 256)) {
        deg = bilinear_resize(deg, 256, 256);
        ref = bilinear_resize(ref, 256, 256);
    }

    std::vector<double> u = neutral_unconstrained(shape);
    AdamState state(u.size());
    FitResult r;
    std::vector<double> best_u = u;
    double best_loss = std::numeric_limits<double>::infinity();
    const int checkpoint = (opts.iters * 3) / 4;
    double best_at_checkpoint = std::numeric_limits<double>::infinity();

    // A leading defog stage recomputes its dark-channel statistics from the
    // (fixed) input every evaluation; hoist them out of the loop.
    std::optional<DefogIntermediates> defog_stats;
    if (!shape.stages.empty())
        if (const auto* d = std::get_if<DefogParams>(&shape.stages.front()))
            defog_stats = apply_defog(deg, *d).second;

    for (int it = 0; it < opts.iters; ++it) {
        const FilterChain chain = chain_from_unconstrained(shape, u);
        // An optimizer blow-up can underflow an exp-mapped parameter to
        // exactly 0, leaving the feasible region; treat it like a
        // non-finite loss.
        try {
            validate_chain(chain);
        } catch (const std::invalid_argument&) {
            r.aborted = true;
            break;
        }
        const LossGrad lg =
            chain_loss_grad(chain, deg, ref, false, defog_stats ? &*defog_stats : nullptr);
        if (!std::isfinite(lg.loss)) {
            r.aborted = true;
            break;
        }
        r.trace.emplace_back(it, lg.loss);
        if (lg.loss < best_loss) {
            best_loss = lg.loss;
            best_u = u;
        }
        if (it < checkpoint) best_at_checkpoint = std::min(best_at_checkpoint, lg.loss);

        const std::vector<double> gu = grad_to_unconstrained(chain, lg.param_grad);
        bool finite = true;
        for (double g : gu)
            if (!std::isfinite(g)) finite = false;
        if (!finite) {
            r.aborted = true;
            break;
        }
        adam_step(state, u, gu, opts.adam);
    }

    if (!std::isfinite(best_loss)) {
        // Nothing usable was evaluated; report the starting point.
        r.chain = chain_from_unconstrained(shape, neutral_unconstrained(shape));
        r.final_loss = std::numeric_limits<double>::quiet_NaN();
        r.converged = false;
        return r;
    }

    r.chain = chain_from_unconstrained(shape, best_u);
    r.final_loss = best_loss;
    if (!r.aborted) r.trace.emplace_back(opts.iters, best_loss);
    r.converged = !r.aborted && std::isfinite(best_at_checkpoint) &&
                  (best_at_checkpoint - best_loss) <= 1e-6 * std::max(best_at_checkpoint, 1e-12);
    return r;
}

}  // namespace diffisp
