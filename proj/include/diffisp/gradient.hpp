#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "diffisp/filters.hpp"
#include "diffisp/rng.hpp"

namespace diffisp {

// ---------------------------------------------------------------------------
// Unconstrained reparameterization
//
// Optimization runs in an unconstrained space u: positive parameters (wb
// factors, gamma, tone knots, sharpen strength) map through exp, and
// [0,1]-bounded ones (contrast alpha, defog omega) through the logistic
// function. Parameter order matches chain_param_names().
// ---------------------------------------------------------------------------

std::vector<double> chain_to_unconstrained(const FilterChain& chain);

// Rebuilds a chain with the same structure (filter set, tone knot count,
// sharpen sigma, defog radius) as `shape` but parameter values taken from u.
FilterChain chain_from_unconstrained(const FilterChain& shape, const std::vector<double>& u);

// Pulls a constrained-space gradient dL/dp back to dL/du at the point `at`.
std::vector<double> grad_to_unconstrained(const FilterChain& at, const std::vector<double>& param_grad);

// Starting point for fitting: exact identity for exp-mapped parameters
// (u = 0), and u = -6 (value ~0.0025) for alpha/omega/lambda, whose neutral
// value 0 lies on the open boundary of their maps.
std::vector<double> neutral_unconstrained(const FilterChain& shape);

// ---------------------------------------------------------------------------
// Chain forward with tape + backward
// ---------------------------------------------------------------------------

struct ChainTape {
    std::vector<ImageF> inputs;  // input image to each stage
    std::vector<StageAux> aux;   // cached forward data per stage
    ImageF output;

    ChainTape() : output(1, 1) {}
};

// `defog_reuse`, when given, must hold statistics computed for this same
// image and radius (see apply_defog); it lets repeated forwards over a fixed
// input skip the omega-independent dark-channel work.
ChainTape chain_forward(const ImageF& img, const FilterChain& chain,
                        const DefogIntermediates* defog_reuse = nullptr);

struct ChainVjp {
    std::vector<double> param_grad;  // dL/dp for all stages, chain order
    ImageF input_grad;               // dL/d(chain input); zero through a defog stage

    ChainVjp() : input_grad(1, 1) {}
};

ChainVjp chain_backward(const FilterChain& chain, const ChainTape& tape, const ImageF& out_cotangent,
                        bool want_input_grad = false);

// Loss L = mean squared error between apply_chain(input) and target, with
// gradients in constrained parameter space (and optionally w.r.t. the input).
struct LossGrad {
    double loss = 0.0;
    std::vector<double> param_grad;
    ImageF input_grad;

    LossGrad() : input_grad(1, 1) {}
};

double chain_loss(const FilterChain& chain, const ImageF& input, const ImageF& target);
LossGrad chain_loss_grad(const FilterChain& chain, const ImageF& input, const ImageF& target,
                         bool want_input_grad = false,
                         const DefogIntermediates* defog_reuse = nullptr);

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

// Central differences, one coordinate at a time.
std::vector<double> finite_diff_gradient(const std::function<double(const std::vector<double>&)>& f,
                                         const std::vector<double>& u, double step = 1e-5);

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m, v;
    int64_t step = 0;

    explicit AdamState(size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// One bias-corrected update of `params` in place. Throws std::runtime_error
// on a non-finite gradient, leaving state and params untouched.
void adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grad,
               const AdamConfig& cfg);

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

struct GradCheckRow {
    std::string name;
    double analytic = 0.0;
    double numeric = 0.0;
    double abs_err = 0.0;
    double rel_err = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    int trials = 0;
    uint64_t seed = 0;
    std::vector<GradCheckRow> rows;  // worst case per parameter across trials

    bool all_pass() const;
};

struct GradCheckOptions {
    int trials = 3;
    int height = 64;
    int width = 64;
    double step = 1e-5;       // finite-difference step in u
    double rel_tol = 1e-4;    // relative tolerance for non-tiny gradients
    double abs_tol = 1e-7;    // absolute tolerance used below small_mag
    double small_mag = 1e-3;  // magnitude threshold switching to abs_tol
    double kink_margin = 1e-3;
};

// True where the chain map is within `margin` of a non-differentiable
// boundary (clamp crossings, tone segment boundaries, the transmission
// floor, the gamma singularity at 0) at some stage, per pixel.
std::vector<uint8_t> kink_flags(const ImageF& img, const FilterChain& chain, double margin);

// Uniform random image redrawn pixel-by-pixel until no pixel is flagged.
ImageF draw_kink_free_image(Rng& rng, const FilterChain& chain, int height, int width, double margin);

// Uniform parameter draws strictly inside each constraint region.
FilterChain draw_interior_params(Rng& rng, const FilterChain& shape);

// Compares analytic gradients against central differences on random
// kink-free inputs; reports the worst case per scalar parameter. Setting the
// environment variable DIFFISP_CORRUPT_VJP to a parameter name doubles that
// analytic gradient before comparison (failure-path test hook).
GradCheckReport gradcheck_chain(const FilterChain& shape, uint64_t seed,
                                const GradCheckOptions& opts = {});

// ---------------------------------------------------------------------------
// Parameter fitting
// ---------------------------------------------------------------------------

struct FitOptions {
    int iters = 300;
    AdamConfig adam;
    // Fit on a 256x256 bilinear downsample when the input is larger; the
    // returned parameters are resolution-independent scalars applied at full
    // resolution by the caller.
    bool low_res = false;
};

struct FitResult {
    FilterChain chain;                          // best-so-far parameters
    std::vector<std::pair<int, double>> trace;  // (iteration, loss) pairs
    double final_loss = 0.0;                    // loss of the returned chain
    bool converged = false;
    bool aborted = false;  // non-finite loss or gradient cut the run short
};

// Gradient descent (Adam) on MSE(apply_chain(degraded), reference) starting
// from neutral parameters. Returns the best parameters seen; a non-finite
// loss or gradient aborts early, keeping the trace up to that point.
FitResult fit_params(const ImageF& degraded, const ImageF& reference, const FilterChain& shape,
                     const FitOptions& opts);

}  // namespace diffisp
