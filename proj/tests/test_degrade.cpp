#include <cmath>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "diffisp/degrade.hpp"
#include "diffisp/rng.hpp"

namespace {

using namespace diffisp;

ImageF random_image(Rng& rng, int h, int w, double lo = 0.0, double hi = 1.0) {
    ImageF img(h, w);
    for (double& v : img.data) v = rng.uniform(lo, hi);
    return img;
}

}  // namespace

TEST_CASE("scene depth peaks at the central pixel") {
    const GrayF d = scene_depth(256, 256);
    CHECK(d.at(128, 128) == 16.0);  // rho = 0, sqrt(256)

    const double corner = std::max(0.0, -0.04 * std::hypot(128.0, 128.0) + 16.0);
    CHECK(d.at(0, 0) == doctest::Approx(corner).epsilon(1e-14));
    CHECK(d.at(0, 255) == doctest::Approx(std::max(0.0, -0.04 * std::hypot(128.0, 127.0) + 16.0))
                              .epsilon(1e-14));

    for (double v : d.data) CHECK(v <= 16.0);

    const GrayF one = scene_depth(1, 1);
    CHECK(one.at(0, 0) == 1.0);

    const GrayF odd = scene_depth(5, 5);
    CHECK(odd.at(2, 2) == doctest::Approx(std::sqrt(5.0)).epsilon(1e-15));
    CHECK(odd.at(2, 3) == doctest::Approx(std::sqrt(5.0) - 0.04).epsilon(1e-14));
}

TEST_CASE("scene depth is floored at zero for remote pixels") {
    const GrayF d = scene_depth(1, 10000);  // base 100, ends 200 and ~199.96 away
    CHECK(d.at(0, 5000) == 100.0);
    CHECK(d.at(0, 9999) == 0.0);
    CHECK(d.at(0, 0) == 0.0);
    for (double v : d.data) CHECK(v >= 0.0);
}

TEST_CASE("fog composition blends toward the airlight") {
    Rng rng(3);
    const ImageF img = random_image(rng, 6, 5);

    GrayF ones(6, 5, 1.0);
    CHECK(fog_compose(img, ones, 0.5).data == img.data);

    GrayF zeros(6, 5, 0.0);
    for (double v : fog_compose(img, zeros, 0.5).data) CHECK(v == 0.5);

    GrayF bad(5, 6, 1.0);
    CHECK_THROWS_AS(fog_compose(img, bad, 0.5), std::invalid_argument);
}

TEST_CASE("fog on a white image matches the scattering oracle") {
    const ImageF white(256, 256, 1.0);
    const ImageF fogged = add_fog(white, 0);

    const double t_center = std::exp(-0.05 * 16.0);
    CHECK(fogged.at(128, 128, 0) == doctest::Approx(0.5 + 0.5 * t_center).epsilon(1e-14));
    CHECK(fogged.at(128, 128, 0) == doctest::Approx(0.72466).epsilon(1e-4));

    const double d_corner = -0.04 * std::hypot(128.0, 128.0) + 16.0;
    const double t_corner = std::exp(-0.05 * d_corner);
    CHECK(fogged.at(0, 0, 2) == doctest::Approx(0.5 + 0.5 * t_corner).epsilon(1e-14));

    // Heavier fog pulls everything closer to the airlight.
    const ImageF heavy = add_fog(white, 9);
    for (size_t i = 0; i < heavy.data.size(); ++i) {
        CHECK(heavy.data[i] <= fogged.data[i]);
        CHECK(heavy.data[i] >= 0.5);
    }
}

TEST_CASE("airlight-gray images are a fog fixed point") {
    const ImageF gray(16, 16, kFogAirlight);
    for (int k : {0, 4, 9})
        for (double v : add_fog(gray, k).data) CHECK(v == kFogAirlight);
}

TEST_CASE("fog rejects out-of-range levels") {
    const ImageF img(4, 4, 0.5);
    CHECK_THROWS_AS(add_fog(img, -1), std::invalid_argument);
    CHECK_THROWS_AS(add_fog(img, 10), std::invalid_argument);
    CHECK(fog_beta(0) == 0.05);
    CHECK(fog_beta(9) == doctest::Approx(0.14).epsilon(1e-15));
}

TEST_CASE("low-light darkening is a power transform") {
    ImageF img(1, 1);
    img.at(0, 0, 0) = 0.5;
    img.at(0, 0, 1) = 1.0;
    img.at(0, 0, 2) = 0.0;

    const ImageF dark = add_lowlight(img, 2.0);
    CHECK(dark.at(0, 0, 0) == 0.25);
    CHECK(dark.at(0, 0, 1) == 1.0);
    CHECK(dark.at(0, 0, 2) == 0.0);

    Rng rng(17);
    const ImageF noisy = random_image(rng, 8, 8);
    for (double g : {1.5, 3.0, 5.0}) {
        const ImageF out = add_lowlight(noisy, g);
        for (size_t i = 0; i < out.data.size(); ++i) CHECK(out.data[i] <= noisy.data[i]);
    }

    CHECK_THROWS_AS(add_lowlight(img, 0.5), std::invalid_argument);
}

TEST_CASE("mode names round-trip and reject junk") {
    for (DegradeMode m : {DegradeMode::None, DegradeMode::Fog, DegradeMode::LowLight})
        CHECK(parse_degrade_mode(degrade_mode_name(m)) == m);
    CHECK_THROWS_AS(parse_degrade_mode("rain"), std::invalid_argument);
}

TEST_CASE("hybrid sampling is deterministic per seed") {
    for (uint64_t seed : {0ull, 1ull, 42ull, 0xdeadbeefull}) {
        const DegradeSpec a = hybrid_sample(seed, DegradeDomain::Fog);
        const DegradeSpec b = hybrid_sample(seed, DegradeDomain::Fog);
        CHECK(a.mode == b.mode);
        CHECK(a.fog_level == b.fog_level);
        CHECK(a.gamma == b.gamma);
        CHECK(a.seed == seed);
    }
}

TEST_CASE("hybrid sampling hits the documented rates and ranges") {
    int degraded = 0;
    std::vector<int> level_hits(10, 0);
    const int n = 3000;
    for (int i = 0; i < n; ++i) {
        const DegradeSpec s = hybrid_sample(child_seed(99, static_cast<uint64_t>(i)), DegradeDomain::Fog);
        if (s.mode == DegradeMode::Fog) {
            ++degraded;
            REQUIRE(s.fog_level >= 0);
            REQUIRE(s.fog_level <= 9);
            ++level_hits[static_cast<size_t>(s.fog_level)];
        } else {
            REQUIRE(s.mode == DegradeMode::None);
        }
    }
    const double frac = static_cast<double>(degraded) / n;
    CHECK(frac > 0.63);
    CHECK(frac < 0.70);
    for (int hits : level_hits) CHECK(hits > 0);

    for (int i = 0; i < 200; ++i) {
        const DegradeSpec s =
            hybrid_sample(child_seed(7, static_cast<uint64_t>(i)), DegradeDomain::LowLight);
        if (s.mode == DegradeMode::LowLight) {
            REQUIRE(s.gamma >= 1.5);
            REQUIRE(s.gamma <= 5.0);
        } else {
            REQUIRE(s.mode == DegradeMode::None);
        }
    }
}

TEST_CASE("apply_degrade dispatches on the recipe") {
    Rng rng(55);
    const ImageF img = random_image(rng, 7, 9);

    DegradeSpec none;
    CHECK(apply_degrade(img, none).data == img.data);

    DegradeSpec fog;
    fog.mode = DegradeMode::Fog;
    fog.fog_level = 4;
    CHECK(apply_degrade(img, fog).data == add_fog(img, 4).data);

    DegradeSpec low;
    low.mode = DegradeMode::LowLight;
    low.gamma = 2.5;
    CHECK(apply_degrade(img, low).data == add_lowlight(img, 2.5).data);
}
