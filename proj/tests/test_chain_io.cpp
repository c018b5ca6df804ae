#include <cmath>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <doctest.h>

#include "diffisp/chain_io.hpp"

using namespace diffisp;

TEST_CASE("format_double round-trips and maps non-finite to null") {
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(0.0) == "0");
    CHECK(format_double(0.5) == "0.5");
    CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "null");
    CHECK(format_double(std::numeric_limits<double>::infinity()) == "null");
    CHECK(format_double(-std::numeric_limits<double>::infinity()) == "null");

    for (double v : {1.0 / 3.0, 0.1, 1e-300, 1e300, -0.12345678901234567, 2.2250738585072014e-308}) {
        const std::string s = format_double(v);
        CHECK(std::strtod(s.c_str(), nullptr) == v);
    }
}

TEST_CASE("json escaping covers quotes, backslashes and control bytes") {
    CHECK(json_escape("plain") == "plain");
    CHECK(json_escape("a\"b") == "a\\\"b");
    CHECK(json_escape("a\\b") == "a\\\\b");
    CHECK(json_escape("a\nb\tc") == "a\\nb\\tc");
    CHECK(json_escape(std::string(1, '\x01')) == "\\u0001");
}

TEST_CASE("chain serialization uses the fixed field order") {
    CHECK(chain_to_json(FilterChain::default_chain(true)) ==
          "{\"defog\": {\"omega\": 0}, \"wb\": [1, 1, 1], \"gamma\": 1, \"contrast\": 0, "
          "\"tone\": [1, 1, 1, 1, 1, 1, 1, 1], \"sharpen\": {\"lambda\": 0, \"sigma\": 1}}");

    CHECK(chain_to_json(FilterChain::default_chain(false)) ==
          "{\"defog\": null, \"wb\": [1, 1, 1], \"gamma\": 1, \"contrast\": 0, "
          "\"tone\": [1, 1, 1, 1, 1, 1, 1, 1], \"sharpen\": {\"lambda\": 0, \"sigma\": 1}}");

    // A sparse chain serializes with neutral values for the missing stages.
    FilterChain sparse;
    sparse.stages = {GammaParams{2.5}};
    CHECK(chain_to_json(sparse) ==
          "{\"defog\": null, \"wb\": [1, 1, 1], \"gamma\": 2.5, \"contrast\": 0, "
          "\"tone\": [1, 1, 1, 1, 1, 1, 1, 1], \"sharpen\": {\"lambda\": 0, \"sigma\": 1}}");
}

TEST_CASE("chain round-trips through JSON bit-exactly") {
    FilterChain chain;
    chain.stages = {DefogParams{0.12345678901234567, 7},
                    WbParams{1.0 / 3.0, 0.9999999999999999, 1.1},
                    GammaParams{0.70000000000000007},
                    ContrastParams{0.25},
                    ToneParams{std::vector<double>{0.1, 2.0, 1.0 / 7.0, 1.5}},
                    SharpenParams{0.30000000000000004, 1.0}};

    const FilterChain back = chain_from_json(chain_to_json(chain));
    REQUIRE(back.stages.size() == 6);
    CHECK(std::get<DefogParams>(back.stages[0]).omega == 0.12345678901234567);
    CHECK(std::get<WbParams>(back.stages[1]).wr == 1.0 / 3.0);
    CHECK(std::get<WbParams>(back.stages[1]).wg == 0.9999999999999999);
    CHECK(std::get<GammaParams>(back.stages[2]).g == 0.70000000000000007);
    CHECK(std::get<ContrastParams>(back.stages[3]).alpha == 0.25);
    const auto& knots = std::get<ToneParams>(back.stages[4]).knots;
    REQUIRE(knots.size() == 4);
    CHECK(knots[2] == 1.0 / 7.0);
    CHECK(std::get<SharpenParams>(back.stages[5]).lambda == 0.30000000000000004);
}

TEST_CASE("reader rejects malformed parameter files with field paths") {
    const std::string good =
        "{\"defog\": {\"omega\": 0.5}, \"wb\": [1, 1, 1], \"gamma\": 1, \"contrast\": 0, "
        "\"tone\": [1, 1], \"sharpen\": {\"lambda\": 0, \"sigma\": 1}}";
    CHECK_NOTHROW(chain_from_json(good));

    CHECK_THROWS_WITH_AS(chain_from_json("not json"), doctest::Contains("invalid JSON"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(chain_from_json("[1,2]"), doctest::Contains("expected a JSON object"),
                         std::invalid_argument);

    CHECK_THROWS_WITH_AS(
        chain_from_json("{\"defog\": null, \"wb\": [1, 1, 1], \"gamma\": 1, \"contrast\": 0, "
                        "\"tone\": [1]}"),
        doctest::Contains("sharpen: missing field"), std::invalid_argument);

    CHECK_THROWS_WITH_AS(
        chain_from_json("{\"defog\": null, \"wb\": [1, 1, 1], \"contrast\": 0, \"gamma\": 1, "
                        "\"tone\": [1], \"sharpen\": {\"lambda\": 0, \"sigma\": 1}}"),
        doctest::Contains("gamma: field out of order"), std::invalid_argument);

    CHECK_THROWS_WITH_AS(
        chain_from_json("{\"defog\": null, \"wb\": [1, 1, 1], \"gamma\": 1, \"contrast\": 0, "
                        "\"tone\": [1], \"sharpen\": {\"lambda\": 0, \"sigma\": 1}, \"extra\": 1}"),
        doctest::Contains("extra: unknown field"), std::invalid_argument);

    CHECK_THROWS_WITH_AS(
        chain_from_json("{\"defog\": {\"omega\": 0.5, \"radius\": 3}, \"wb\": [1, 1, 1], "
                        "\"gamma\": 1, \"contrast\": 0, \"tone\": [1], "
                        "\"sharpen\": {\"lambda\": 0, \"sigma\": 1}}"),
        doctest::Contains("defog.radius: unknown field"), std::invalid_argument);

    CHECK_THROWS_WITH_AS(
        chain_from_json("{\"defog\": null, \"wb\": [1, 1, 1], \"gamma\": \"big\", \"contrast\": 0, "
                        "\"tone\": [1], \"sharpen\": {\"lambda\": 0, \"sigma\": 1}}"),
        doctest::Contains("gamma: expected a number"), std::invalid_argument);

    CHECK_THROWS_WITH_AS(
        chain_from_json("{\"defog\": {\"omega\": 1.5}, \"wb\": [1, 1, 1], \"gamma\": 1, "
                        "\"contrast\": 0, \"tone\": [1], \"sharpen\": {\"lambda\": 0, \"sigma\": 1}}"),
        doctest::Contains("defog.omega: must lie in [0,1]"), std::invalid_argument);

    CHECK_THROWS_WITH_AS(
        chain_from_json("{\"defog\": null, \"wb\": [1, 0, 1], \"gamma\": 1, \"contrast\": 0, "
                        "\"tone\": [1], \"sharpen\": {\"lambda\": 0, \"sigma\": 1}}"),
        doctest::Contains("wb[1]: must be > 0"), std::invalid_argument);

    CHECK_THROWS_WITH_AS(
        chain_from_json("{\"defog\": null, \"wb\": [1, 1, 1], \"gamma\": 1, \"contrast\": 0, "
                        "\"tone\": [], \"sharpen\": {\"lambda\": 0, \"sigma\": 1}}"),
        doctest::Contains("tone: expected a non-empty array"), std::invalid_argument);

    CHECK_THROWS_WITH_AS(
        chain_from_json("{\"defog\": null, \"wb\": [1, 1, 1], \"gamma\": 1, \"contrast\": 0, "
                        "\"tone\": [1, -2], \"sharpen\": {\"lambda\": 0, \"sigma\": 1}}"),
        doctest::Contains("tone[1]: must be > 0"), std::invalid_argument);

    CHECK_THROWS_WITH_AS(
        chain_from_json("{\"defog\": null, \"wb\": [1, 1, 1], \"gamma\": 1, \"contrast\": 0, "
                        "\"tone\": [1], \"sharpen\": {\"lambda\": 0}}"),
        doctest::Contains("sharpen.sigma: missing field"), std::invalid_argument);
}

TEST_CASE("reader tolerates fit-result extras only after the filter fields") {
    const std::string with_extras =
        "{\"defog\": null, \"wb\": [1, 1, 1], \"gamma\": 2, \"contrast\": 0, \"tone\": [1], "
        "\"sharpen\": {\"lambda\": 0, \"sigma\": 1}, \"trace\": [[0, 0.5]], \"converged\": true}";
    const FilterChain c = chain_from_json(with_extras);
    CHECK(std::get<GammaParams>(c.stages[1]).g == 2.0);

    const std::string interleaved =
        "{\"defog\": null, \"wb\": [1, 1, 1], \"gamma\": 2, \"contrast\": 0, \"tone\": [1], "
        "\"trace\": [], \"sharpen\": {\"lambda\": 0, \"sigma\": 1}}";
    CHECK_THROWS_WITH_AS(chain_from_json(interleaved),
                         doctest::Contains("filter fields must precede trace/converged"),
                         std::invalid_argument);
}

TEST_CASE("fit results serialize with trace and feed back into the reader") {
    FitResult r;
    r.chain = FilterChain::default_chain(false);
    r.trace = {{0, 0.5}, {2, 0.25}};
    r.converged = true;

    const std::string s = fit_result_to_json(r);
    CHECK(s ==
          "{\"defog\": null, \"wb\": [1, 1, 1], \"gamma\": 1, \"contrast\": 0, "
          "\"tone\": [1, 1, 1, 1, 1, 1, 1, 1], \"sharpen\": {\"lambda\": 0, \"sigma\": 1}, "
          "\"trace\": [[0, 0.5], [2, 0.25]], \"converged\": true}");

    const FilterChain back = chain_from_json(s);  // a fit output is a valid params file
    CHECK(back.stages.size() == 5);

    FitResult aborted;
    aborted.chain = FilterChain::default_chain(false);
    aborted.trace = {{0, std::numeric_limits<double>::quiet_NaN()}};
    const std::string s2 = fit_result_to_json(aborted);
    CHECK(s2.find("\"trace\": [[0, null]]") != std::string::npos);
    CHECK(s2.find("\"converged\": false") != std::string::npos);
}

TEST_CASE("gradcheck reports serialize row by row") {
    GradCheckReport r;
    r.seed = 42;
    r.trials = 2;
    r.rows = {GradCheckRow{"gamma.g", 0.5, 0.5, 0.0, 0.0, true},
              GradCheckRow{"tone.t0", 1.0, 2.0, 1.0, 0.5, false}};

    CHECK(gradcheck_report_to_json(r) ==
          "{\"seed\": 42, \"trials\": 2, \"all_pass\": false, \"rows\": ["
          "{\"param\": \"gamma.g\", \"analytic\": 0.5, \"numeric\": 0.5, \"abs_err\": 0, "
          "\"rel_err\": 0, \"pass\": true}, "
          "{\"param\": \"tone.t0\", \"analytic\": 1, \"numeric\": 2, \"abs_err\": 1, "
          "\"rel_err\": 0.5, \"pass\": false}]}");
}

TEST_CASE("manifest lines carry only the strength that applies") {
    ManifestEntry fog;
    fog.src = "in/a photo.png";
    fog.out = "out/a photo.png";
    fog.spec.mode = DegradeMode::Fog;
    fog.spec.fog_level = 3;
    fog.spec.seed = 17;
    CHECK(manifest_line(fog) ==
          "{\"src\": \"in/a photo.png\", \"out\": \"out/a photo.png\", \"mode\": \"fog\", "
          "\"k\": 3, \"gamma\": null, \"seed\": 17}");

    ManifestEntry low;
    low.src = "x.ppm";
    low.out = "y.png";
    low.spec.mode = DegradeMode::LowLight;
    low.spec.gamma = 2.5;
    low.spec.seed = 99;
    CHECK(manifest_line(low) ==
          "{\"src\": \"x.ppm\", \"out\": \"y.png\", \"mode\": \"lowlight\", "
          "\"k\": null, \"gamma\": 2.5, \"seed\": 99}");

    ManifestEntry none;
    none.src = "a\"b.png";
    none.out = "c\\d.png";
    none.spec.mode = DegradeMode::None;
    none.spec.seed = 1;
    CHECK(manifest_line(none) ==
          "{\"src\": \"a\\\"b.png\", \"out\": \"c\\\\d.png\", \"mode\": \"none\", "
          "\"k\": null, \"gamma\": null, \"seed\": 1}");
}
