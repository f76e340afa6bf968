#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "ssr/baselines.hpp"
#include "ssr/metrics.hpp"

using namespace ssr;

namespace {

std::vector<ImagePair> synth_corpus(int n, int size, int materials, uint64_t seed,
                                    const ResponseMatrix& response,
                                    const SynthParams& params = {}) {
    Rng rng(seed);
    std::vector<ImagePair> pairs;
    for (int i = 0; i < n; ++i) {
        Rng child = rng.child(static_cast<uint64_t>(i));
        ImagePair p;
        p.cube = synth_scene(child, size, size, materials, params);
        p.rgb = project_to_rgb(p.cube, response);
        pairs.push_back(std::move(p));
    }
    return pairs;
}

// Narrow spectral peaks: the pixel spectra then span all 31 bands with a
// well-conditioned Gram matrix, which full-rank least-squares checks need.
SynthParams sharp_params() {
    SynthParams p;
    p.min_spectral_gaussians = 3;
    p.max_spectral_gaussians = 6;
    p.spectral_sigma_min_nm = 6.0;
    p.spectral_sigma_max_nm = 20.0;
    return p;
}

}  // namespace

TEST_CASE("spline: gray inputs give exactly constant spectra") {
    for (float v : {0.0f, 0.1f, 0.37f, 1.0f}) {
        auto spec = spline_upsample_pixel(v, v, v);
        for (float s : spec) CHECK(s == v);
    }
}

TEST_CASE("spline: knots reproduced exactly") {
    const float r = 0.8f, g = 0.3f, b = 0.6f;
    auto spec = spline_upsample_pixel(r, g, b);
    CHECK(spec[5] == b);    // 450 nm
    CHECK(spec[15] == g);   // 550 nm
    CHECK(spec[30] == r);   // 700 nm
    // clamp left of the blue knot
    for (int i = 0; i < 5; ++i) CHECK(spec[static_cast<size_t>(i)] == b);
}

TEST_CASE("spline: matches the reference natural spline oracle") {
    const std::vector<double> xs = {450.0, 550.0, 700.0};
    const struct {
        double r, g, b;
    } cases[] = {{1.0, 0.0, 0.0}, {0.2, 0.9, 0.4}, {0.05, 0.6, 0.95}};
    for (const auto& c : cases) {
        const std::vector<double> ys = {c.b, c.g, c.r};
        const auto m = oracle::natural_spline_m(xs, ys);
        auto spec = spline_upsample_pixel(c.r, c.g, c.b);
        for (int i = 0; i < 31; ++i) {
            const double wl = 400.0 + 10.0 * i;
            const double want = wl < 450.0 ? c.b : oracle::natural_spline_eval(xs, ys, m, wl);
            CHECK(std::abs(spec[static_cast<size_t>(i)] - want) < 1e-9);
        }
    }
}

TEST_CASE("spline: interpolant is C2 at the middle knot") {
    const double r = 0.9, g = 0.2, b = 0.7;
    auto s = [&](double wl) { return spline_eval_3knot(wl, r, g, b); };
    const double d = 1.0;
    const double left = (s(550.0 - 2 * d) - 2 * s(550.0 - d) + s(550.0)) / (d * d);
    const double right = (s(550.0) - 2 * s(550.0 + d) + s(550.0 + 2 * d)) / (d * d);
    CHECK(left == doctest::Approx(right).epsilon(1e-2));
}

TEST_CASE("spline_baseline: pixelwise application") {
    Rng rng(5);
    RgbImage img(3, 4);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());
    HyperCube cube = spline_baseline(img);
    CHECK(cube.bands == 31);
    CHECK(cube.height == 3);
    CHECK(cube.width == 4);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 4; ++x) {
            auto spec = spline_upsample_pixel(img.at(0, y, x), img.at(1, y, x), img.at(2, y, x));
            for (int b = 0; b < 31; ++b)
                CHECK(cube.at(b, y, x) ==
                      static_cast<float>(std::clamp(spec[static_cast<size_t>(b)], 0.0, 1.0)));
        }
}

TEST_CASE("spline_baseline: produces a finite metric report on synthetic data") {
    auto pairs = synth_corpus(1, 16, 3, 77, default_response());
    HyperCube est = spline_baseline(pairs[0].rgb);
    MetricReport r = evaluate_all(pairs[0].cube, est, "spline");
    for (double v : {r.rmse1, r.rmse2, r.rrmse1, r.rrmse2, r.sam_degrees}) {
        CHECK(std::isfinite(v));
        CHECK(v >= 0.0);
    }
}

TEST_CASE("fit_projection_matrix: noiseless recovery of the generating response") {
    const ResponseMatrix response = default_response();
    auto pairs = synth_corpus(12, 24, 5, 2024, response, sharp_params());
    std::vector<HyperCube> cubes;
    std::vector<RgbImage> rgbs;
    for (auto& p : pairs) {
        cubes.push_back(p.cube);
        rgbs.push_back(p.rgb);
    }
    FittedProjection fit = fit_projection_matrix(cubes, rgbs);
    double max_err = 0.0, max_ref = 0.0;
    for (int b = 0; b < 31; ++b)
        for (int c = 0; c < 3; ++c) {
            max_err = std::max(max_err, std::abs(fit.at(b, c) - response.at(b, c)));
            max_ref = std::max(max_ref, static_cast<double>(std::abs(response.at(b, c))));
        }
    CHECK(max_err / max_ref < 1e-6);
    CHECK(fit.residual_rms < 1e-7);
}

TEST_CASE("fit_projection_matrix: zero targets give the zero matrix") {
    const ResponseMatrix response = default_response();
    auto pairs = synth_corpus(6, 16, 5, 11, response, sharp_params());
    std::vector<HyperCube> cubes;
    std::vector<RgbImage> rgbs;
    for (auto& p : pairs) {
        cubes.push_back(p.cube);
        rgbs.emplace_back(p.rgb.height, p.rgb.width);  // zeros
    }
    FittedProjection fit = fit_projection_matrix(cubes, rgbs);
    for (double v : fit.m) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("fit_projection_matrix: noisy targets leave a sigma-scale residual") {
    const ResponseMatrix response = default_response();
    auto pairs = synth_corpus(26, 64, 5, 5150, response, sharp_params());  // > 1e5 pixels
    const double sigma = 0.01;
    Rng noise(99);
    std::vector<HyperCube> cubes;
    std::vector<RgbImage> rgbs;
    int64_t pixels = 0;
    for (auto& p : pairs) {
        cubes.push_back(p.cube);
        RgbImage noisy = p.rgb;
        for (auto& v : noisy.data) v += static_cast<float>(noise.normal() * sigma);
        pixels += noisy.plane();
        rgbs.push_back(std::move(noisy));
    }
    REQUIRE(pixels >= 100000);
    FittedProjection fit = fit_projection_matrix(cubes, rgbs);
    CHECK(fit.residual_rms >= 0.5 * sigma);
    CHECK(fit.residual_rms <= 2.0 * sigma);
}

TEST_CASE("fit_projection_matrix: rank-deficient corpus detected") {
    // every pixel shares one spectrum: the Gram matrix has rank 1
    HyperCube cube(31, 8, 8, default_wavelengths());
    Rng rng(4);
    std::vector<float> spec(31);
    for (auto& v : spec) v = static_cast<float>(rng.uniform(0.1, 1.0));
    for (int b = 0; b < 31; ++b)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) cube.at(b, y, x) = spec[static_cast<size_t>(b)];
    RgbImage rgb = project_to_rgb(cube, default_response());
    CHECK_THROWS_AS(fit_projection_matrix({cube}, {rgb}), NumericError);
}

TEST_CASE("fit_projection_matrix: scale equivariance in the targets") {
    const ResponseMatrix response = default_response();
    auto pairs = synth_corpus(8, 16, 5, 31, response, sharp_params());
    std::vector<HyperCube> cubes;
    std::vector<RgbImage> rgbs, scaled;
    const float c = 0.5f;
    for (auto& p : pairs) {
        cubes.push_back(p.cube);
        rgbs.push_back(p.rgb);
        RgbImage s = p.rgb;
        for (auto& v : s.data) v *= c;
        scaled.push_back(std::move(s));
    }
    FittedProjection f1 = fit_projection_matrix(cubes, rgbs);
    FittedProjection f2 = fit_projection_matrix(cubes, scaled);
    for (size_t i = 0; i < f1.m.size(); ++i)
        CHECK(f2.m[i] == doctest::Approx(c * f1.m[i]).epsilon(1e-9));
}

TEST_CASE("projection files: PRJ1 round trip") {
    FittedProjection fit;
    fit.bands = 31;
    Rng rng(6);
    fit.m.resize(93);
    for (auto& v : fit.m) v = rng.uniform(-1.0, 1.0);
    const auto path = std::filesystem::temp_directory_path() / "ssr_prj_test.prj";
    write_projection(fit, path.string());
    FittedProjection back = read_projection(path.string());
    CHECK(back.bands == 31);
    for (size_t i = 0; i < fit.m.size(); ++i)
        CHECK(back.m[i] == doctest::Approx(fit.m[i]).epsilon(1e-6));
    std::filesystem::remove(path);

    const auto bad = std::filesystem::temp_directory_path() / "ssr_prj_bad.prj";
    {
        std::ofstream f(bad, std::ios::binary | std::ios::trunc);
        f << "XXXX" << std::string(16, '\0');
    }
    CHECK_THROWS_AS(read_projection(bad.string()), DataError);
    std::filesystem::remove(bad);
}

TEST_CASE("linreg baseline: recovers an exactly affine spectrum model") {
    // build cubes that are exactly affine in the rendition
    Rng rng(8);
    std::vector<double> w(93), c0(31);
    for (auto& v : w) v = rng.uniform(-0.1, 0.1);
    for (auto& v : c0) v = rng.uniform(0.2, 0.5);

    std::vector<HyperCube> cubes;
    std::vector<RgbImage> rgbs;
    for (int img = 0; img < 3; ++img) {
        RgbImage rgb(12, 12);
        for (auto& v : rgb.data) v = static_cast<float>(rng.uniform());
        HyperCube cube(31, 12, 12, default_wavelengths());
        for (int y = 0; y < 12; ++y)
            for (int x = 0; x < 12; ++x)
                for (int b = 0; b < 31; ++b) {
                    double v = c0[static_cast<size_t>(b)];
                    for (int ch = 0; ch < 3; ++ch)
                        v += w[static_cast<size_t>(b) * 3 + ch] * rgb.at(ch, y, x);
                    cube.at(b, y, x) = static_cast<float>(v);
                }
        cubes.push_back(std::move(cube));
        rgbs.push_back(std::move(rgb));
    }
    LinearReconstruction fit = fit_rgb_to_spectrum(cubes, rgbs);
    HyperCube pred = linreg_predict(fit, rgbs[0]);
    for (int64_t i = 0; i < pred.size(); ++i)
        CHECK(std::abs(pred.data[static_cast<size_t>(i)] -
                       cubes[0].data[static_cast<size_t>(i)]) < 1e-5);
}
