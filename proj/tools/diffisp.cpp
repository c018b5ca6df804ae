#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "diffisp/chain_io.hpp"
#include "diffisp/degrade.hpp"
#include "diffisp/filters.hpp"
#include "diffisp/gradient.hpp"
#include "diffisp/image_io.hpp"
#include "diffisp/rng.hpp"

namespace fs = std::filesystem;
using namespace diffisp;

namespace {

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(IoErrorKind::UnreadableFile, path + ": cannot open file");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError(IoErrorKind::UnreadableFile, path + ": read failed");
    return text;
}

void write_text_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError(IoErrorKind::WriteFailure, tmp + ": cannot open for writing");
        out << content;
        out.flush();
        if (!out) throw IoError(IoErrorKind::WriteFailure, tmp + ": write failed");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError(IoErrorKind::WriteFailure, path + ": rename failed");
    }
}

bool has_image_extension(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".ppm";
}

std::vector<std::string> gather_inputs(const std::string& in_path) {
    std::vector<std::string> files;
    if (fs::is_directory(in_path)) {
        for (const auto& entry : fs::directory_iterator(in_path))
            if (entry.is_regular_file() && has_image_extension(entry.path()))
                files.push_back(entry.path().string());
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(in_path);
    }
    if (files.empty()) throw std::invalid_argument(in_path + ": no .png or .ppm images found");
    return files;
}

FilterChain chain_shape_from_list(const std::string& csv) {
    FilterChain shape;
    std::string token;
    std::istringstream ss(csv);
    while (std::getline(ss, token, ',')) {
        const size_t b = token.find_first_not_of(" \t");
        const size_t e = token.find_last_not_of(" \t");
        if (b == std::string::npos) continue;
        token = token.substr(b, e - b + 1);
        if (token == "defog") shape.stages.push_back(DefogParams{});
        else if (token == "wb") shape.stages.push_back(WbParams{});
        else if (token == "gamma") shape.stages.push_back(GammaParams{});
        else if (token == "contrast") shape.stages.push_back(ContrastParams{});
        else if (token == "tone") shape.stages.push_back(ToneParams{});
        else if (token == "sharpen") shape.stages.push_back(SharpenParams{});
        else throw std::invalid_argument("--filters: unknown filter '" + token + "'");
    }
    if (shape.stages.empty()) throw std::invalid_argument("--filters: list is empty");
    validate_chain(shape);
    return shape;
}

struct DegradeArgs {
    std::string in_path, out_dir;
    std::string mode = "hybrid";
    std::string domain = "fog";
    int level = 0;
    double gamma = 2.0;
    uint64_t seed = 0;
    unsigned jobs = 0;
    bool level_given = false, gamma_given = false, domain_given = false;
};

int run_degrade(const DegradeArgs& a) {
    if (a.mode == "fog" && !a.level_given)
        throw std::invalid_argument("--mode fog requires --level");
    if (a.mode != "fog" && a.level_given)
        throw std::invalid_argument("--level only applies to --mode fog");
    if (a.mode == "lowlight" && !a.gamma_given)
        throw std::invalid_argument("--mode lowlight requires --gamma");
    if (a.mode != "lowlight" && a.gamma_given)
        throw std::invalid_argument("--gamma only applies to --mode lowlight");
    if (a.mode != "hybrid" && a.domain_given)
        throw std::invalid_argument("--domain only applies to --mode hybrid");

    const std::vector<std::string> inputs = gather_inputs(a.in_path);
    fs::create_directories(a.out_dir);

    struct Task {
        std::string src, out;
        DegradeSpec spec;
    };
    std::vector<Task> tasks;
    std::vector<std::string> used_names;
    const DegradeDomain domain = (a.domain == "lowlight") ? DegradeDomain::LowLight : DegradeDomain::Fog;
    for (size_t i = 0; i < inputs.size(); ++i) {
        Task t;
        t.src = inputs[i];
        const uint64_t child = child_seed(a.seed, i);
        if (a.mode == "fog") {
            t.spec = DegradeSpec{DegradeMode::Fog, a.level, 1.5, child};
        } else if (a.mode == "lowlight") {
            t.spec = DegradeSpec{DegradeMode::LowLight, 0, a.gamma, child};
        } else if (a.mode == "none") {
            t.spec = DegradeSpec{DegradeMode::None, 0, 1.5, child};
        } else {
            t.spec = hybrid_sample(child, domain);
        }
        std::string stem = fs::path(inputs[i]).stem().string();
        std::string name = stem + ".png";
        for (int suffix = 2; std::count(used_names.begin(), used_names.end(), name) > 0; ++suffix)
            name = stem + "_" + std::to_string(suffix) + ".png";
        used_names.push_back(name);
        t.out = (fs::path(a.out_dir) / name).string();
        tasks.push_back(std::move(t));
    }

    std::vector<std::string> errors(tasks.size());
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            try {
                const ImageF img = load_image(tasks[i].src);
                save_image_atomic(apply_degrade(img, tasks[i].spec), tasks[i].out);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    unsigned jobs = a.jobs ? a.jobs : std::max(1u, std::thread::hardware_concurrency());
    jobs = std::min<unsigned>(jobs, static_cast<unsigned>(tasks.size()));
    std::vector<std::thread> pool;
    for (unsigned i = 1; i < jobs; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    std::string manifest;
    for (size_t i = 0; i < tasks.size(); ++i)
        if (errors[i].empty())
            manifest += manifest_line(ManifestEntry{tasks[i].src, tasks[i].out, tasks[i].spec}) + "\n";
    write_text_file_atomic((fs::path(a.out_dir) / "manifest.jsonl").string(), manifest);

    int failed = 0;
    for (size_t i = 0; i < tasks.size(); ++i)
        if (!errors[i].empty()) {
            ++failed;
            std::cerr << "diffisp: " << tasks[i].src << ": " << errors[i] << "\n";
        }
    if (failed) {
        std::cerr << "diffisp: " << failed << " of " << tasks.size() << " images failed\n";
        return 2;
    }
    std::cerr << "diffisp: degraded " << tasks.size() << " image(s) into " << a.out_dir << "\n";
    return 0;
}

int run_enhance(const std::string& in, const std::string& out, const std::string& params) {
    const FilterChain chain = chain_from_json(read_text_file(params));
    const ImageF img = load_image(in);
    save_image_atomic(apply_chain(img, chain), out);
    std::cerr << "diffisp: enhanced " << in << " -> " << out << "\n";
    return 0;
}

struct FitArgs {
    std::string degraded, reference, out_params;
    std::string filters = "wb,gamma,contrast,tone,sharpen";
    int iters = 300;
    double lr = 1e-2;
    bool low_res = false;
};

int run_fit(const FitArgs& a) {
    const FilterChain shape = chain_shape_from_list(a.filters);
    const ImageF degraded = load_image(a.degraded);
    const ImageF reference = load_image(a.reference);
    FitOptions opts;
    opts.iters = a.iters;
    opts.adam.lr = a.lr;
    opts.low_res = a.low_res;
    const FitResult result = fit_params(degraded, reference, shape, opts);
    write_text_file_atomic(a.out_params, fit_result_to_json(result) + "\n");
    if (result.aborted) {
        std::cerr << "diffisp: fit aborted on a non-finite loss or gradient after " << result.trace.size()
                  << " finite iteration(s); partial trace saved to " << a.out_params << "\n";
        return 2;
    }
    std::cerr << "diffisp: fit finished, final loss " << format_double(result.final_loss) << " after "
              << a.iters << " iteration(s), converged=" << (result.converged ? "true" : "false") << "\n";
    return 0;
}

struct GradcheckArgs {
    int trials = 10;
    uint64_t seed = 42;
    int size = 64;
    std::string report;
};

int run_gradcheck(const GradcheckArgs& a) {
    GradCheckOptions opts;
    opts.trials = a.trials;
    opts.height = a.size;
    opts.width = a.size;
    const GradCheckReport report = gradcheck_chain(FilterChain::default_chain(true), a.seed, opts);

    std::printf("%-16s %14s %14s %11s %11s  %s\n", "parameter", "analytic", "numeric", "rel_err",
                "abs_err", "result");
    for (const auto& row : report.rows)
        std::printf("%-16s %14.6e %14.6e %11.3e %11.3e  %s\n", row.name.c_str(), row.analytic,
                    row.numeric, row.rel_err, row.abs_err, row.pass ? "ok" : "FAIL");
    int failures = 0;
    for (const auto& row : report.rows)
        if (!row.pass) ++failures;
    std::printf("%zu/%zu parameters within tolerance (trials=%d, seed=%llu)\n",
                report.rows.size() - static_cast<size_t>(failures), report.rows.size(), a.trials,
                static_cast<unsigned long long>(a.seed));

    if (!a.report.empty()) write_text_file_atomic(a.report, gradcheck_report_to_json(report) + "\n");
    return report.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Differentiable ISP toolkit: seeded weather degradation, filter-chain enhancement,\n"
                 "gradient-based parameter fitting, and gradient verification."};
    app.require_subcommand(1);

    DegradeArgs da;
    CLI::App* deg = app.add_subcommand("degrade", "Apply seeded fog/low-light degradation to images");
    deg->add_option("--in", da.in_path, "input image file or directory")->required()->check(CLI::ExistingPath);
    deg->add_option("--out", da.out_dir, "output directory (created if missing)")->required();
    deg->add_option("--mode", da.mode, "degradation mode")
        ->check(CLI::IsMember({"fog", "lowlight", "none", "hybrid"}))
        ->capture_default_str();
    auto* level_opt = deg->add_option("--level", da.level, "fog level k (fog mode)")
                          ->check(CLI::Range(0, 9))
                          ->envname("DIFFISP_LEVEL");
    auto* gamma_opt = deg->add_option("--gamma", da.gamma, "darkening exponent (lowlight mode)")
                          ->check(CLI::Range(1.0, 10.0))
                          ->envname("DIFFISP_GAMMA");
    auto* domain_opt = deg->add_option("--domain", da.domain, "degradation family drawn in hybrid mode")
                           ->check(CLI::IsMember({"fog", "lowlight"}))
                           ->capture_default_str();
    deg->add_option("--seed", da.seed, "master seed; image i uses a derived child seed")
        ->envname("DIFFISP_SEED")
        ->capture_default_str();
    deg->add_option("--jobs", da.jobs, "worker threads (default: logical processors)")
        ->check(CLI::Range(1, 1024))
        ->envname("DIFFISP_JOBS");

    std::string en_in, en_out, en_params;
    CLI::App* enh = app.add_subcommand("enhance", "Apply a filter chain from a params file");
    enh->add_option("--in", en_in, "input image")->required()->check(CLI::ExistingFile);
    enh->add_option("--out", en_out, "output PNG path")->required();
    enh->add_option("--params", en_params, "filter-chain JSON file")->required()->check(CLI::ExistingFile);

    FitArgs fa;
    CLI::App* fit = app.add_subcommand("fit", "Fit filter parameters to a degraded/reference pair");
    fit->add_option("--degraded", fa.degraded, "degraded input image")->required()->check(CLI::ExistingFile);
    fit->add_option("--reference", fa.reference, "reference image")->required()->check(CLI::ExistingFile);
    fit->add_option("--out-params", fa.out_params, "output JSON file for the fitted chain")->required();
    fit->add_option("--filters", fa.filters, "comma-separated filters to fit, canonical order")
        ->capture_default_str();
    fit->add_option("--iters", fa.iters, "gradient-descent iterations")
        ->check(CLI::Range(0, 1000000))
        ->envname("DIFFISP_ITERS")
        ->capture_default_str();
    fit->add_option("--lr", fa.lr, "Adam learning rate")
        ->check(CLI::PositiveNumber)
        ->envname("DIFFISP_LR")
        ->capture_default_str();
    fit->add_flag("--low-res", fa.low_res, "fit on a 256x256 bilinear downsample");

    GradcheckArgs ga;
    CLI::App* gc = app.add_subcommand("gradcheck", "Verify analytic gradients against finite differences");
    gc->add_option("--trials", ga.trials, "random draws per parameter")
        ->check(CLI::Range(1, 10000))
        ->envname("DIFFISP_TRIALS")
        ->capture_default_str();
    gc->add_option("--seed", ga.seed, "base seed")->envname("DIFFISP_SEED")->capture_default_str();
    gc->add_option("--size", ga.size, "square test-image side length")
        ->check(CLI::Range(8, 1024))
        ->envname("DIFFISP_SIZE")
        ->capture_default_str();
    gc->add_option("--report", ga.report, "write the JSON report to this file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints help or the parse error
        return code == 0 ? 0 : 1;
    }

    try {
        if (deg->parsed()) {
            da.level_given = level_opt->count() > 0;
            da.gamma_given = gamma_opt->count() > 0;
            da.domain_given = domain_opt->count() > 0;
            return run_degrade(da);
        }
        if (enh->parsed()) return run_enhance(en_in, en_out, en_params);
        if (fit->parsed()) return run_fit(fa);
        if (gc->parsed()) return run_gradcheck(ga);
    } catch (const IoError& e) {
        std::cerr << "diffisp: " << e.what() << "\n";
        return e.kind() == IoErrorKind::WriteFailure ? 2 : 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "diffisp: " << e.what() << "\n";
        return 1;
    } catch (const std::domain_error& e) {
        std::cerr << "diffisp: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "diffisp: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
