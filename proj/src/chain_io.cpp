#include "diffisp/chain_io.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace diffisp {

using ordered_json = nlohmann::ordered_json;

std::string format_double(double v) {
    if (!std::isfinite(v)) return "null";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string json_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size() + 2);
    for (unsigned char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (c < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", c);
                    out += buf;
                } else {
                    out += static_cast<char>(c);
                }
        }
    }
    return out;
}

std::string chain_to_json(const FilterChain& chain) {
    validate_chain(chain);
    const DefogParams* defog = nullptr;
    WbParams wb;
    GammaParams gamma;
    ContrastParams contrast;
    ToneParams tone;
    SharpenParams sharpen;
    for (const auto& stage : chain.stages) {
        if (const auto* d = std::get_if<DefogParams>(&stage)) defog = d;
        else if (const auto* w = std::get_if<WbParams>(&stage)) wb = *w;
        else if (const auto* g = std::get_if<GammaParams>(&stage)) gamma = *g;
        else if (const auto* a = std::get_if<ContrastParams>(&stage)) contrast = *a;
        else if (const auto* t = std::get_if<ToneParams>(&stage)) tone = *t;
        else if (const auto* s = std::get_if<SharpenParams>(&stage)) sharpen = *s;
    }

    std::ostringstream o;
    o << "{\"defog\": ";
    if (defog) o << "{\"omega\": " << format_double(defog->omega) << "}";
    else o << "null";
    o << ", \"wb\": [" << format_double(wb.wr) << ", " << format_double(wb.wg) << ", "
      << format_double(wb.wb) << "]";
    o << ", \"gamma\": " << format_double(gamma.g);
    o << ", \"contrast\": " << format_double(contrast.alpha);
    o << ", \"tone\": [";
    for (size_t j = 0; j < tone.knots.size(); ++j) {
        if (j) o << ", ";
        o << format_double(tone.knots[j]);
    }
    o << "]";
    o << ", \"sharpen\": {\"lambda\": " << format_double(sharpen.lambda) << ", \"sigma\": "
      << format_double(sharpen.sigma) << "}";
    o << "}";
    return o.str();
}

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& why) {
    throw std::invalid_argument("params: " + path + ": " + why);
}

double need_number(const ordered_json& j, const std::string& path) {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
}

constexpr const char* kFieldOrder[6] = {"defog", "wb", "gamma", "contrast", "tone", "sharpen"};

int canonical_field_index(const std::string& key) {
    for (int i = 0; i < 6; ++i)
        if (key == kFieldOrder[i]) return i;
    return -1;
}

}  // namespace

FilterChain chain_from_json(const std::string& text) {
    ordered_json root;
    try {
        root = ordered_json::parse(text);
    } catch (const ordered_json::parse_error& e) {
        throw std::invalid_argument(std::string("params: invalid JSON: ") + e.what());
    }
    if (!root.is_object()) fail("$", "expected a JSON object");

    // Canonical keys must appear in schema order; fit-result extras may
    // follow; anything else is rejected.
    int last_rank = -1;
    bool saw_canonical_after_extra = false;
    bool saw_extra = false;
    for (const auto& item : root.items()) {
        const int rank = canonical_field_index(item.key());
        if (rank < 0) {
            if (item.key() != "trace" && item.key() != "converged")
                fail(item.key(), "unknown field");
            saw_extra = true;
            continue;
        }
        if (saw_extra) saw_canonical_after_extra = true;
        if (rank <= last_rank)
            fail(item.key(), std::string("field out of order (expected order: defog, wb, gamma, "
                                         "contrast, tone, sharpen)"));
        last_rank = rank;
    }
    if (saw_canonical_after_extra) fail("$", "filter fields must precede trace/converged");
    for (const char* key : kFieldOrder)
        if (!root.contains(key)) fail(key, "missing field");

    FilterChain chain;

    const ordered_json& jd = root["defog"];
    if (!jd.is_null()) {
        if (!jd.is_object()) fail("defog", "expected an object or null");
        for (const auto& item : jd.items())
            if (item.key() != "omega") fail("defog." + item.key(), "unknown field");
        if (!jd.contains("omega")) fail("defog.omega", "missing field");
        const double omega = need_number(jd["omega"], "defog.omega");
        if (!(omega >= 0.0 && omega <= 1.0)) fail("defog.omega", "must lie in [0,1]");
        chain.stages.push_back(DefogParams{omega});
    }

    const ordered_json& jw = root["wb"];
    if (!jw.is_array() || jw.size() != 3) fail("wb", "expected an array of 3 numbers");
    WbParams wb;
    double* wslot[3] = {&wb.wr, &wb.wg, &wb.wb};
    for (size_t i = 0; i < 3; ++i) {
        const std::string path = "wb[" + std::to_string(i) + "]";
        const double v = need_number(jw[i], path);
        if (!(v > 0.0)) fail(path, "must be > 0");
        *wslot[i] = v;
    }
    chain.stages.push_back(wb);

    const double g = need_number(root["gamma"], "gamma");
    if (!(g > 0.0)) fail("gamma", "must be > 0");
    chain.stages.push_back(GammaParams{g});

    const double alpha = need_number(root["contrast"], "contrast");
    if (!(alpha >= 0.0 && alpha <= 1.0)) fail("contrast", "must lie in [0,1]");
    chain.stages.push_back(ContrastParams{alpha});

    const ordered_json& jt = root["tone"];
    if (!jt.is_array() || jt.empty()) fail("tone", "expected a non-empty array of numbers");
    ToneParams tone{std::vector<double>(jt.size())};
    for (size_t i = 0; i < jt.size(); ++i) {
        const std::string path = "tone[" + std::to_string(i) + "]";
        tone.knots[i] = need_number(jt[i], path);
        if (!(tone.knots[i] > 0.0)) fail(path, "must be > 0");
    }
    chain.stages.push_back(std::move(tone));

    const ordered_json& js = root["sharpen"];
    if (!js.is_object()) fail("sharpen", "expected an object");
    for (const auto& item : js.items())
        if (item.key() != "lambda" && item.key() != "sigma") fail("sharpen." + item.key(), "unknown field");
    if (!js.contains("lambda")) fail("sharpen.lambda", "missing field");
    if (!js.contains("sigma")) fail("sharpen.sigma", "missing field");
    SharpenParams sharpen;
    sharpen.lambda = need_number(js["lambda"], "sharpen.lambda");
    if (!(sharpen.lambda >= 0.0)) fail("sharpen.lambda", "must be >= 0");
    sharpen.sigma = need_number(js["sigma"], "sharpen.sigma");
    if (!(sharpen.sigma > 0.0)) fail("sharpen.sigma", "must be > 0");
    chain.stages.push_back(sharpen);

    validate_chain(chain);
    return chain;
}

std::string fit_result_to_json(const FitResult& r) {
    std::string chain = chain_to_json(r.chain);
    chain.pop_back();  // reopen the object to append trace/converged
    std::ostringstream o;
    o << chain << ", \"trace\": [";
    for (size_t i = 0; i < r.trace.size(); ++i) {
        if (i) o << ", ";
        o << "[" << r.trace[i].first << ", " << format_double(r.trace[i].second) << "]";
    }
    o << "], \"converged\": " << (r.converged ? "true" : "false") << "}";
    return o.str();
}

std::string gradcheck_report_to_json(const GradCheckReport& r) {
    std::ostringstream o;
    o << "{\"seed\": " << r.seed << ", \"trials\": " << r.trials
      << ", \"all_pass\": " << (r.all_pass() ? "true" : "false") << ", \"rows\": [";
    for (size_t i = 0; i < r.rows.size(); ++i) {
        const GradCheckRow& row = r.rows[i];
        if (i) o << ", ";
        o << "{\"param\": \"" << json_escape(row.name) << "\", \"analytic\": " << format_double(row.analytic)
          << ", \"numeric\": " << format_double(row.numeric) << ", \"abs_err\": " << format_double(row.abs_err)
          << ", \"rel_err\": " << format_double(row.rel_err) << ", \"pass\": " << (row.pass ? "true" : "false")
          << "}";
    }
    o << "]}";
    return o.str();
}

std::string manifest_line(const ManifestEntry& e) {
    std::ostringstream o;
    o << "{\"src\": \"" << json_escape(e.src) << "\", \"out\": \"" << json_escape(e.out) << "\", \"mode\": \""
      << degrade_mode_name(e.spec.mode) << "\", \"k\": ";
    if (e.spec.mode == DegradeMode::Fog) o << e.spec.fog_level;
    else o << "null";
    o << ", \"gamma\": ";
    if (e.spec.mode == DegradeMode::LowLight) o << format_double(e.spec.gamma);
    else o << "null";
    o << ", \"seed\": " << e.spec.seed << "}";
    return o.str();
}

}  // namespace diffisp
