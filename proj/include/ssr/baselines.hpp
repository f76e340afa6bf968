#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "ssr/common.hpp"
#include "ssr/data.hpp"

namespace ssr {

// ---------------------------------------------------------------------------
// Spline baseline: each RGB pixel is treated as three spectral samples at
// 700 (r), 550 (g), 450 (b) nm and upsampled to the 31 bands with a natural
// cubic spline. Bands below 450 nm clamp to the 450 nm knot value.
// ---------------------------------------------------------------------------

constexpr double kKnotBlueNm = 450.0;
constexpr double kKnotGreenNm = 550.0;
constexpr double kKnotRedNm = 700.0;

// Natural cubic through three knots has a single free second derivative at
// the middle knot:  M1 = 3 * ((y2-y1)/h1 - (y1-y0)/h0) / (h0+h1).
// Segments are evaluated in incremental form, S = y_i + dy * (t/h) + M1-term,
// so knots and constant inputs reproduce exactly.
inline double spline_eval_3knot(double wavelength_nm, double r, double g, double b) {
    const double x0 = kKnotBlueNm, x1 = kKnotGreenNm, x2 = kKnotRedNm;
    const double y0 = b, y1 = g, y2 = r;
    const double h0 = x1 - x0, h1 = x2 - x1;
    const double m1 = 3.0 * ((y2 - y1) / h1 - (y1 - y0) / h0) / (h0 + h1);

    const double x = wavelength_nm;
    if (x <= x0) return y0;  // clamp policy left of the blue knot
    if (x == x1) return y1;
    if (x >= x2) return y2;
    if (x < x1) {
        const double t = x - x0;
        return y0 + (y1 - y0) * (t / h0) + m1 * (t * t * t / (6.0 * h0) - h0 * t / 6.0);
    }
    const double t = x - x1, u = x2 - x;
    return y1 + (y2 - y1) * (t / h1) + m1 * (u * u * u / (6.0 * h1) - h1 * u / 6.0);
}

inline std::array<double, 31> spline_upsample_pixel(double r, double g, double b) {
    std::array<double, 31> out{};
    for (int i = 0; i < 31; ++i) {
        const double wl = 400.0 + 10.0 * static_cast<double>(i);
        out[static_cast<size_t>(i)] = spline_eval_3knot(wl, r, g, b);
    }
    return out;
}

inline HyperCube spline_baseline(const RgbImage& rgb) {
    HyperCube cube(31, rgb.height, rgb.width, default_wavelengths());
    for (int y = 0; y < rgb.height; ++y) {
        for (int x = 0; x < rgb.width; ++x) {
            const auto spec = spline_upsample_pixel(rgb.at(0, y, x), rgb.at(1, y, x),
                                                    rgb.at(2, y, x));
            for (int bnd = 0; bnd < 31; ++bnd)
                cube.at(bnd, y, x) =
                    static_cast<float>(std::clamp(spec[static_cast<size_t>(bnd)], 0.0, 1.0));
        }
    }
    return cube;
}

// ---------------------------------------------------------------------------
// Least-squares fits. Normal equations are accumulated and solved in long
// double; smooth spectra make the Gram matrix poorly conditioned and the
// extra precision keeps noiseless recovery tight.
// ---------------------------------------------------------------------------

namespace linalg {

// Cholesky solve of A x = rhs for symmetric positive definite A (n x n,
// row-major). Throws NumericError when a pivot collapses.
inline std::vector<long double> cholesky_solve(std::vector<long double> a, int n,
                                               std::vector<long double> rhs, int nrhs) {
    long double max_diag = 0.0L;
    for (int i = 0; i < n; ++i)
        max_diag = std::max(max_diag, a[static_cast<size_t>(i) * n + i]);
    const long double tol = 1e-14L * (max_diag > 0.0L ? max_diag : 1.0L);

    for (int c = 0; c < n; ++c) {
        long double d = a[static_cast<size_t>(c) * n + c];
        for (int k = 0; k < c; ++k) {
            const long double l = a[static_cast<size_t>(c) * n + k];
            d -= l * l;
        }
        if (!(d > tol))
            throw NumericError("least squares: rank-deficient design (singular Gram matrix)");
        const long double diag = std::sqrt(d);
        a[static_cast<size_t>(c) * n + c] = diag;
        for (int r = c + 1; r < n; ++r) {
            long double v = a[static_cast<size_t>(r) * n + c];
            for (int k = 0; k < c; ++k)
                v -= a[static_cast<size_t>(r) * n + k] * a[static_cast<size_t>(c) * n + k];
            a[static_cast<size_t>(r) * n + c] = v / diag;
        }
    }
    // forward then backward substitution per right-hand side
    for (int j = 0; j < nrhs; ++j) {
        for (int i = 0; i < n; ++i) {
            long double v = rhs[static_cast<size_t>(i) * nrhs + j];
            for (int k = 0; k < i; ++k)
                v -= a[static_cast<size_t>(i) * n + k] * rhs[static_cast<size_t>(k) * nrhs + j];
            rhs[static_cast<size_t>(i) * nrhs + j] = v / a[static_cast<size_t>(i) * n + i];
        }
        for (int i = n - 1; i >= 0; --i) {
            long double v = rhs[static_cast<size_t>(i) * nrhs + j];
            for (int k = i + 1; k < n; ++k)
                v -= a[static_cast<size_t>(k) * n + i] * rhs[static_cast<size_t>(k) * nrhs + j];
            rhs[static_cast<size_t>(i) * nrhs + j] = v / a[static_cast<size_t>(i) * n + i];
        }
    }
    return rhs;
}

}  // namespace linalg

// Spectrum -> rgb projection fitted over all pixels: minimizes
// sum || M^T s - rgb ||^2. This is the downsampling operator the sparse
// coding methods assume known; residual_rms is per scalar residual.
struct FittedProjection {
    int bands = 31;
    std::vector<double> m;  // [band * 3 + channel]
    double residual_rms = 0.0;

    double at(int band, int channel) const { return m[static_cast<size_t>(band) * 3 + channel]; }
};

inline FittedProjection fit_projection_matrix(const std::vector<HyperCube>& cubes,
                                              const std::vector<RgbImage>& rgbs) {
    check(!cubes.empty() && cubes.size() == rgbs.size(),
          "fit_projection_matrix: need matching cube/rgb lists");
    const int bands = cubes.front().bands;
    std::vector<long double> gram(static_cast<size_t>(bands) * bands, 0.0L);
    std::vector<long double> cross(static_cast<size_t>(bands) * 3, 0.0L);
    long double target_sq = 0.0L;
    int64_t pixels = 0;

    std::vector<long double> s(static_cast<size_t>(bands));
    for (size_t img = 0; img < cubes.size(); ++img) {
        const HyperCube& cube = cubes[img];
        const RgbImage& rgb = rgbs[img];
        check(cube.bands == bands, "fit_projection_matrix: band counts differ across cubes");
        check(cube.height == rgb.height && cube.width == rgb.width,
              "fit_projection_matrix: cube/rgb extents differ");
        const int64_t plane = cube.plane();
        for (int64_t px = 0; px < plane; ++px, ++pixels) {
            for (int b = 0; b < bands; ++b)
                s[static_cast<size_t>(b)] = static_cast<long double>(
                    cube.data[static_cast<size_t>(static_cast<int64_t>(b) * plane + px)]);
            long double t[3];
            for (int c = 0; c < 3; ++c) {
                t[c] = static_cast<long double>(
                    rgb.data[static_cast<size_t>(static_cast<int64_t>(c) * plane + px)]);
                target_sq += t[c] * t[c];
            }
            for (int i = 0; i < bands; ++i) {
                const long double si = s[static_cast<size_t>(i)];
                for (int j = i; j < bands; ++j)
                    gram[static_cast<size_t>(i) * bands + j] += si * s[static_cast<size_t>(j)];
                for (int c = 0; c < 3; ++c)
                    cross[static_cast<size_t>(i) * 3 + c] += si * t[c];
            }
        }
    }
    for (int i = 0; i < bands; ++i)
        for (int j = 0; j < i; ++j)
            gram[static_cast<size_t>(i) * bands + j] = gram[static_cast<size_t>(j) * bands + i];

    std::vector<long double> sol = linalg::cholesky_solve(gram, bands, cross, 3);

    // residual^2 = sum|t|^2 - 2 tr(M^T B) + tr(M^T A M), all accumulated above
    long double mixed = 0.0L, quad = 0.0L;
    for (int i = 0; i < bands; ++i)
        for (int c = 0; c < 3; ++c)
            mixed += sol[static_cast<size_t>(i) * 3 + c] * cross[static_cast<size_t>(i) * 3 + c];
    for (int i = 0; i < bands; ++i) {
        for (int j = 0; j < bands; ++j) {
            const long double aij = gram[static_cast<size_t>(i) * bands + j];
            for (int c = 0; c < 3; ++c)
                quad += sol[static_cast<size_t>(i) * 3 + c] * aij *
                        sol[static_cast<size_t>(j) * 3 + c];
        }
    }
    long double res_sq = target_sq - 2.0L * mixed + quad;
    if (res_sq < 0.0L) res_sq = 0.0L;

    FittedProjection fit;
    fit.bands = bands;
    fit.m.resize(static_cast<size_t>(bands) * 3);
    for (size_t i = 0; i < fit.m.size(); ++i) fit.m[i] = static_cast<double>(sol[i]);
    fit.residual_rms =
        std::sqrt(static_cast<double>(res_sq) / (3.0 * static_cast<double>(pixels)));
    return fit;
}

// ---------------------------------------------------------------------------
// PRJ1 matrix files: "PRJ1", u32 rows, u32 cols, row-major f32 payload.
// ---------------------------------------------------------------------------

inline void write_projection(const FittedProjection& fit, const std::string& path) {
    std::string out;
    out += "PRJ1";
    put_u32(out, static_cast<uint32_t>(fit.bands));
    put_u32(out, 3);
    for (double v : fit.m) put_f32(out, static_cast<float>(v));
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("write_projection: cannot open " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("write_projection: write failed for " + path);
}

inline FittedProjection read_projection(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("read_projection: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || bytes.compare(0, 4, "PRJ1") != 0)
        throw DataError("read_projection: bad magic in " + path);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const uint32_t rows = get_u32(p + 4), cols = get_u32(p + 8);
    if (cols != 3 || rows < 1) throw DataError("read_projection: bad dimensions in " + path);
    if (bytes.size() != 12 + 4 * static_cast<size_t>(rows) * cols)
        throw DataError("read_projection: size mismatch in " + path);
    FittedProjection fit;
    fit.bands = static_cast<int>(rows);
    fit.m.resize(static_cast<size_t>(rows) * cols);
    size_t off = 12;
    for (auto& v : fit.m) {
        v = static_cast<double>(get_f32(p + off));
        off += 4;
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Linear-regression reconstruction baseline: per-band affine model
// spectrum_b ~ w_b . (r,g,b) + c_b fitted over all training pixels.
// ---------------------------------------------------------------------------

struct LinearReconstruction {
    int bands = 31;
    std::vector<double> coeff;  // [band * 4 + {r,g,b,1}]
};

inline LinearReconstruction fit_rgb_to_spectrum(const std::vector<HyperCube>& cubes,
                                                const std::vector<RgbImage>& rgbs) {
    check(!cubes.empty() && cubes.size() == rgbs.size(),
          "fit_rgb_to_spectrum: need matching cube/rgb lists");
    const int bands = cubes.front().bands;
    std::vector<long double> gram(16, 0.0L);
    std::vector<long double> cross(static_cast<size_t>(4) * bands, 0.0L);

    for (size_t img = 0; img < cubes.size(); ++img) {
        const HyperCube& cube = cubes[img];
        const RgbImage& rgb = rgbs[img];
        check(cube.bands == bands, "fit_rgb_to_spectrum: band counts differ across cubes");
        check(cube.height == rgb.height && cube.width == rgb.width,
              "fit_rgb_to_spectrum: cube/rgb extents differ");
        const int64_t plane = cube.plane();
        for (int64_t px = 0; px < plane; ++px) {
            long double d[4];
            for (int c = 0; c < 3; ++c)
                d[c] = static_cast<long double>(
                    rgb.data[static_cast<size_t>(static_cast<int64_t>(c) * plane + px)]);
            d[3] = 1.0L;
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) gram[static_cast<size_t>(i) * 4 + j] += d[i] * d[j];
            for (int b = 0; b < bands; ++b) {
                const long double t = static_cast<long double>(
                    cube.data[static_cast<size_t>(static_cast<int64_t>(b) * plane + px)]);
                for (int i = 0; i < 4; ++i)
                    cross[static_cast<size_t>(i) * bands + b] += d[i] * t;
            }
        }
    }
    std::vector<long double> sol = linalg::cholesky_solve(gram, 4, cross, bands);
    LinearReconstruction fit;
    fit.bands = bands;
    fit.coeff.resize(static_cast<size_t>(bands) * 4);
    for (int b = 0; b < bands; ++b)
        for (int i = 0; i < 4; ++i)
            fit.coeff[static_cast<size_t>(b) * 4 + i] =
                static_cast<double>(sol[static_cast<size_t>(i) * bands + b]);
    return fit;
}

inline HyperCube linreg_predict(const LinearReconstruction& fit, const RgbImage& rgb) {
    HyperCube cube(fit.bands, rgb.height, rgb.width, default_wavelengths());
    for (int y = 0; y < rgb.height; ++y) {
        for (int x = 0; x < rgb.width; ++x) {
            const double d[4] = {static_cast<double>(rgb.at(0, y, x)),
                                 static_cast<double>(rgb.at(1, y, x)),
                                 static_cast<double>(rgb.at(2, y, x)), 1.0};
            for (int b = 0; b < fit.bands; ++b) {
                double v = 0.0;
                for (int i = 0; i < 4; ++i)
                    v += fit.coeff[static_cast<size_t>(b) * 4 + i] * d[i];
                cube.at(b, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return cube;
}

}  // namespace ssr
