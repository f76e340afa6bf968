#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssr/common.hpp"
#include "ssr/rng.hpp"

namespace ssr {

inline std::vector<float> default_wavelengths() {
    std::vector<float> w(31);
    for (int i = 0; i < 31; ++i) w[static_cast<size_t>(i)] = 400.0f + 10.0f * static_cast<float>(i);
    return w;
}

// Hyperspectral image: one plane per band, planar band-major storage,
// nonnegative finite values in the [0,1] working range.
struct HyperCube {
    int bands = 0;
    int height = 0;
    int width = 0;
    std::vector<float> wavelengths;
    std::vector<float> data;

    HyperCube() = default;
    HyperCube(int bands_, int height_, int width_, std::vector<float> wl)
        : bands(bands_), height(height_), width(width_), wavelengths(std::move(wl)) {
        check(bands >= 1 && height >= 1 && width >= 1, "hypercube: bad extents");
        check(static_cast<int>(wavelengths.size()) == bands,
              "hypercube: wavelength count must equal band count");
        data.assign(static_cast<size_t>(bands) * height * width, 0.0f);
    }

    int64_t plane() const { return static_cast<int64_t>(height) * width; }
    int64_t size() const { return static_cast<int64_t>(bands) * plane(); }

    float& at(int b, int y, int x) {
        return data[static_cast<size_t>((static_cast<int64_t>(b) * height + y) * width + x)];
    }
    float at(int b, int y, int x) const {
        return data[static_cast<size_t>((static_cast<int64_t>(b) * height + y) * width + x)];
    }

    bool same_shape(const HyperCube& o) const {
        return bands == o.bands && height == o.height && width == o.width;
    }
};

// 3-channel image, planar (r, g, b) float planes in [0,1].
struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<float> data;

    RgbImage() = default;
    RgbImage(int height_, int width_) : height(height_), width(width_) {
        check(height >= 1 && width >= 1, "rgb image: bad extents");
        data.assign(static_cast<size_t>(3) * height * width, 0.0f);
    }

    int64_t plane() const { return static_cast<int64_t>(height) * width; }

    float& at(int c, int y, int x) {
        return data[static_cast<size_t>((static_cast<int64_t>(c) * height + y) * width + x)];
    }
    float at(int c, int y, int x) const {
        return data[static_cast<size_t>((static_cast<int64_t>(c) * height + y) * width + x)];
    }
};

// 31x3 spectral response: column c is the camera sensitivity of channel c
// (r, g, b) sampled at the band wavelengths. Columns sum to one.
struct ResponseMatrix {
    int bands = 0;
    std::vector<double> m;  // [band * 3 + channel]

    double& at(int band, int channel) { return m[static_cast<size_t>(band) * 3 + channel]; }
    double at(int band, int channel) const {
        return m[static_cast<size_t>(band) * 3 + channel];
    }
};

// ---------------------------------------------------------------------------
// HSC1 cube files: "HSC1", u32 C/H/W, C f32 wavelengths, C*H*W f32 planar
// values, all little-endian. Round-trips are bit-exact.
// ---------------------------------------------------------------------------

inline void write_hscube(const HyperCube& cube, const std::string& path) {
    std::string out;
    out += "HSC1";
    put_u32(out, static_cast<uint32_t>(cube.bands));
    put_u32(out, static_cast<uint32_t>(cube.height));
    put_u32(out, static_cast<uint32_t>(cube.width));
    for (float w : cube.wavelengths) put_f32(out, w);
    for (float v : cube.data) put_f32(out, v);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("write_hscube: cannot open " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("write_hscube: write failed for " + path);
}

inline HyperCube read_hscube(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("read_hscube: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 16 || bytes.compare(0, 4, "HSC1") != 0)
        throw DataError("read_hscube: bad magic in " + path);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const uint32_t c = get_u32(p + 4), h = get_u32(p + 8), w = get_u32(p + 12);
    if (c < 1 || h < 1 || w < 1) throw DataError("read_hscube: bad extents in " + path);
    const size_t expected = 16 + 4 * (static_cast<size_t>(c) +
                                      static_cast<size_t>(c) * h * w);
    if (bytes.size() != expected)
        throw DataError("read_hscube: size mismatch vs header in " + path);

    HyperCube cube;
    cube.bands = static_cast<int>(c);
    cube.height = static_cast<int>(h);
    cube.width = static_cast<int>(w);
    cube.wavelengths.resize(c);
    size_t off = 16;
    for (uint32_t i = 0; i < c; ++i, off += 4) cube.wavelengths[i] = get_f32(p + off);
    for (uint32_t i = 1; i < c; ++i)
        if (!(cube.wavelengths[i] > cube.wavelengths[i - 1]))
            throw DataError("read_hscube: wavelengths not strictly increasing in " + path);
    cube.data.resize(static_cast<size_t>(c) * h * w);
    for (auto& v : cube.data) {
        v = get_f32(p + off);
        off += 4;
        if (!std::isfinite(v) || v < 0.0f)
            throw DataError("read_hscube: non-finite or negative value in " + path);
    }
    return cube;
}

// ---------------------------------------------------------------------------
// Binary PPM (P6, maxval 255) with linear quantization round(255*v).
// ---------------------------------------------------------------------------

inline void write_ppm(const RgbImage& img, const std::string& path) {
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                      "\n255\n";
    out.reserve(out.size() + static_cast<size_t>(3) * img.plane());
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
                out.push_back(static_cast<char>(
                    static_cast<unsigned char>(std::lround(255.0f * v))));
            }
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("write_ppm: cannot open " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("write_ppm: write failed for " + path);
}

namespace detail {

// Next whitespace-separated token, honoring '#' comments.
inline std::string ppm_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

inline int ppm_int(std::istream& in, const std::string& path) {
    const std::string tok = ppm_token(in);
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
        throw DataError("read_ppm: malformed header in " + path);
    return std::stoi(tok);
}

}  // namespace detail

inline RgbImage read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("read_ppm: cannot open " + path);
    std::string magic = detail::ppm_token(f);
    if (magic != "P6") throw DataError("read_ppm: not a binary PPM (P6): " + path);
    const int w = detail::ppm_int(f, path);
    const int h = detail::ppm_int(f, path);
    const int maxval = detail::ppm_int(f, path);
    if (w < 1 || h < 1) throw DataError("read_ppm: bad extents in " + path);
    if (maxval != 255) throw DataError("read_ppm: unsupported maxval (expected 255) in " + path);
    // header ends after exactly one whitespace byte (already consumed by the
    // tokenizer); payload follows
    std::vector<char> raw(static_cast<size_t>(3) * w * h);
    f.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (f.gcount() != static_cast<std::streamsize>(raw.size()))
        throw DataError("read_ppm: truncated payload in " + path);

    RgbImage img(h, w);
    size_t i = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c, ++i)
                img.at(c, y, x) =
                    static_cast<float>(static_cast<unsigned char>(raw[i])) / 255.0f;
    return img;
}

// ---------------------------------------------------------------------------
// Spectral projection: rgb = R^T * spectrum per pixel, clamped to [0,1].
// ---------------------------------------------------------------------------

inline RgbImage project_to_rgb(const HyperCube& cube, const ResponseMatrix& response,
                               float exposure = 1.0f, bool clamp = true) {
    check(cube.bands == response.bands, "project_to_rgb: band count mismatch");
    RgbImage img(cube.height, cube.width);
    for (int y = 0; y < cube.height; ++y) {
        for (int x = 0; x < cube.width; ++x) {
            double acc[3] = {0.0, 0.0, 0.0};
            for (int b = 0; b < cube.bands; ++b) {
                const double v = static_cast<double>(cube.at(b, y, x));
                for (int c = 0; c < 3; ++c)
                    acc[c] += v * static_cast<double>(response.at(b, c));
            }
            for (int c = 0; c < 3; ++c) {
                float v = static_cast<float>(acc[c] * exposure);
                img.at(c, y, x) = clamp ? std::clamp(v, 0.0f, 1.0f) : v;
            }
        }
    }
    return img;
}

// Gaussian stand-in for a camera spectral response: channel centers at
// 700 (r), 550 (g), 450 (b) nm, column-normalized over the 31 bands.
inline ResponseMatrix default_response(double sigma_r = 60.0, double sigma_g = 50.0,
                                       double sigma_b = 40.0) {
    const std::vector<float> wl = default_wavelengths();
    const double centers[3] = {700.0, 550.0, 450.0};
    const double sigmas[3] = {sigma_r, sigma_g, sigma_b};
    ResponseMatrix r;
    r.bands = static_cast<int>(wl.size());
    r.m.assign(static_cast<size_t>(r.bands) * 3, 0.0);
    for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        std::vector<double> col(static_cast<size_t>(r.bands));
        for (int b = 0; b < r.bands; ++b) {
            const double d = (static_cast<double>(wl[static_cast<size_t>(b)]) - centers[c]) /
                             sigmas[c];
            col[static_cast<size_t>(b)] = std::exp(-0.5 * d * d);
            sum += col[static_cast<size_t>(b)];
        }
        for (int b = 0; b < r.bands; ++b) r.at(b, c) = col[static_cast<size_t>(b)] / sum;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Synthetic scenes: a handful of Gaussian-mixture material spectra blended
// by smooth random abundance fields. Deterministic per seed.
// ---------------------------------------------------------------------------

struct SynthParams {
    int min_spectral_gaussians = 2;
    int max_spectral_gaussians = 4;
    double spectral_sigma_min_nm = 40.0;
    double spectral_sigma_max_nm = 80.0;
    double amp_min = 0.2;
    double amp_max = 1.0;
    double value_floor = 0.05;  // keeps cubes strictly positive
    double value_scale = 0.9;
    int min_bumps = 3;
    int max_bumps = 5;
    double bump_sigma_min = 0.15;  // relative to min(H, W)
    double bump_sigma_max = 0.45;
    double field_floor = 0.15;
};

// Worst-case |value difference| between adjacent 10 nm bands for spectra
// produced with the given parameters (mean value theorem on the normalized
// Gaussian mixture; the max slope of exp(-t^2/2s^2) is exp(-1/2)/s times the
// amplitude, and the sampled peak undershoots the true one by at most
// exp(-5^2 / 2s^2)).
inline double synth_band_step_bound(const SynthParams& p = {}) {
    const double s = p.spectral_sigma_min_nm;
    const double undershoot = std::exp(-25.0 / (2.0 * s * s));
    return p.value_scale * 10.0 * p.max_spectral_gaussians * std::exp(-0.5) / (s * undershoot);
}

inline HyperCube synth_scene(Rng& rng, int height, int width, int n_materials,
                             const SynthParams& p = {}) {
    check(n_materials >= 1, "synth_scene: need at least one material");
    check(height >= 1 && width >= 1, "synth_scene: bad extents");
    const std::vector<float> wl = default_wavelengths();
    const int bands = static_cast<int>(wl.size());

    // Material spectra in [floor, floor + scale].
    std::vector<std::vector<double>> spectra(static_cast<size_t>(n_materials));
    for (auto& spec : spectra) {
        const int ng = p.min_spectral_gaussians +
                       static_cast<int>(rng.below(static_cast<uint64_t>(
                           p.max_spectral_gaussians - p.min_spectral_gaussians + 1)));
        std::vector<double> amp(static_cast<size_t>(ng)), mu(static_cast<size_t>(ng)),
            sig(static_cast<size_t>(ng));
        for (int g = 0; g < ng; ++g) {
            amp[static_cast<size_t>(g)] = rng.uniform(p.amp_min, p.amp_max);
            mu[static_cast<size_t>(g)] = rng.uniform(400.0, 700.0);
            sig[static_cast<size_t>(g)] = rng.uniform(p.spectral_sigma_min_nm,
                                                      p.spectral_sigma_max_nm);
        }
        spec.assign(static_cast<size_t>(bands), 0.0);
        double peak = 0.0;
        for (int b = 0; b < bands; ++b) {
            double v = 0.0;
            for (int g = 0; g < ng; ++g) {
                const double d = (static_cast<double>(wl[static_cast<size_t>(b)]) -
                                  mu[static_cast<size_t>(g)]) / sig[static_cast<size_t>(g)];
                v += amp[static_cast<size_t>(g)] * std::exp(-0.5 * d * d);
            }
            spec[static_cast<size_t>(b)] = v;
            peak = std::max(peak, v);
        }
        for (auto& v : spec) v = p.value_floor + p.value_scale * (v / peak);
    }

    // Smooth abundance fields, simplex-normalized per pixel.
    const double unit = static_cast<double>(std::min(height, width));
    std::vector<std::vector<double>> fields(static_cast<size_t>(n_materials));
    for (auto& field : fields) {
        field.assign(static_cast<size_t>(height) * width, p.field_floor);
        const int nb = p.min_bumps + static_cast<int>(rng.below(static_cast<uint64_t>(
                                         p.max_bumps - p.min_bumps + 1)));
        for (int k = 0; k < nb; ++k) {
            const double a = rng.uniform(p.amp_min, p.amp_max);
            const double cy = rng.uniform(0.0, static_cast<double>(height));
            const double cx = rng.uniform(0.0, static_cast<double>(width));
            const double s = rng.uniform(p.bump_sigma_min, p.bump_sigma_max) * unit;
            for (int y = 0; y < height; ++y) {
                for (int x = 0; x < width; ++x) {
                    const double dy = (static_cast<double>(y) - cy) / s;
                    const double dx = (static_cast<double>(x) - cx) / s;
                    field[static_cast<size_t>(y) * width + x] +=
                        a * std::exp(-0.5 * (dy * dy + dx * dx));
                }
            }
        }
    }

    HyperCube cube(bands, height, width, wl);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const size_t px = static_cast<size_t>(y) * width + x;
            double total = 0.0;
            for (const auto& field : fields) total += field[px];
            for (int b = 0; b < bands; ++b) {
                double v = 0.0;
                for (int m = 0; m < n_materials; ++m)
                    v += fields[static_cast<size_t>(m)][px] / total *
                         spectra[static_cast<size_t>(m)][static_cast<size_t>(b)];
                cube.at(b, y, x) = static_cast<float>(v);
            }
        }
    }
    return cube;
}

// ---------------------------------------------------------------------------
// Dataset manifests and splits.
// ---------------------------------------------------------------------------

struct DatasetEntry {
    std::string cube_path;
    std::string rgb_path;
};

inline void write_manifest(const std::vector<DatasetEntry>& entries, const std::string& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : entries)
        j.push_back({{"cube_path", e.cube_path}, {"rgb_path", e.rgb_path}});
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("write_manifest: cannot open " + path);
    f << j.dump(2) << "\n";
}

// Relative entry paths are resolved against the manifest's directory.
inline std::vector<DatasetEntry> read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("read_manifest: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("read_manifest: bad JSON in " + path + ": " + e.what());
    }
    if (!j.is_array()) throw DataError("read_manifest: expected a JSON list in " + path);
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    std::vector<DatasetEntry> entries;
    for (const auto& item : j) {
        if (!item.is_object() || !item.contains("cube_path") || !item.contains("rgb_path"))
            throw DataError("read_manifest: entries need cube_path and rgb_path in " + path);
        DatasetEntry e{item.at("cube_path").get<std::string>(),
                       item.at("rgb_path").get<std::string>()};
        for (std::string* s : {&e.cube_path, &e.rgb_path}) {
            std::filesystem::path q(*s);
            if (q.is_relative()) *s = (base / q).string();
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

// An aligned cube/rendition pair in memory.
struct ImagePair {
    HyperCube cube;
    RgbImage rgb;
    std::string name;
};

inline std::vector<ImagePair> load_dataset(const std::string& manifest_path) {
    std::vector<ImagePair> pairs;
    for (const auto& e : read_manifest(manifest_path)) {
        ImagePair p;
        p.cube = read_hscube(e.cube_path);
        p.rgb = read_ppm(e.rgb_path);
        if (p.rgb.height != p.cube.height || p.rgb.width != p.cube.width)
            throw DataError("load_dataset: cube/rgb extents differ for " + e.cube_path);
        p.name = std::filesystem::path(e.cube_path).stem().string();
        pairs.push_back(std::move(p));
    }
    return pairs;
}

// Seed-deterministic disjoint split; the first floor(ratio*n) shuffled
// elements form the first part.
template <class T>
std::pair<std::vector<T>, std::vector<T>> split_dataset(std::vector<T> items, double ratio,
                                                        uint64_t seed) {
    check(!items.empty(), "split_dataset: empty input");
    check(ratio > 0.0 && ratio < 1.0, "split_dataset: ratio must lie in (0,1)");
    Rng rng(seed);
    std::vector<size_t> order(items.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    const size_t n_first = static_cast<size_t>(ratio * static_cast<double>(items.size()));
    std::pair<std::vector<T>, std::vector<T>> out;
    for (size_t i = 0; i < order.size(); ++i) {
        auto& dst = (i < n_first) ? out.first : out.second;
        dst.push_back(std::move(items[order[i]]));
    }
    return out;
}

}  // namespace ssr
