#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "ssr/data.hpp"
#include "ssr/metrics.hpp"
#include "ssr/network.hpp"
#include "ssr/tensor.hpp"

namespace ssr {

inline Tensor<float> rgb_to_tensor(const RgbImage& img) {
    Tensor<float> t({1, 3, img.height, img.width});
    std::copy(img.data.begin(), img.data.end(), t.data().begin());
    return t;
}

inline Tensor<float> cube_to_tensor(const HyperCube& cube) {
    Tensor<float> t({1, cube.bands, cube.height, cube.width});
    std::copy(cube.data.begin(), cube.data.end(), t.data().begin());
    return t;
}

inline HyperCube tensor_to_cube(const Tensor<float>& t, std::vector<float> wavelengths,
                                bool clamp01) {
    check(t.rank() == 4 && t.dim(0) == 1, "tensor_to_cube: expects [1,C,H,W]");
    HyperCube cube(t.dim(1), t.dim(2), t.dim(3), std::move(wavelengths));
    for (int64_t i = 0; i < t.size(); ++i) {
        float v = t[i];
        if (clamp01) v = std::clamp(v, 0.0f, 1.0f);
        cube.data[static_cast<size_t>(i)] = v;
    }
    return cube;
}

// Whole-image network prediction: pad to the pyramid granularity, single
// eval-mode forward pass, crop, clamp into the [0,1] working range.
inline HyperCube predict_cube(const Network<float>& net, const RgbImage& rgb) {
    Tensor<float> out = forward_padded(net, rgb_to_tensor(rgb));
    return tensor_to_cube(out, default_wavelengths(), /*clamp01=*/true);
}

// Same forward pass without the clamp; used for in-training diagnostics
// where raw outputs are wanted.
inline HyperCube predict_cube_raw(const Network<float>& net, const RgbImage& rgb) {
    Tensor<float> out = forward_padded(net, rgb_to_tensor(rgb));
    return tensor_to_cube(out, default_wavelengths(), /*clamp01=*/false);
}

// Grayscale heat map of an error map, normalized by its own maximum.
inline RgbImage error_map_image(const std::vector<float>& map, int height, int width) {
    check(static_cast<int64_t>(map.size()) == static_cast<int64_t>(height) * width,
          "error_map_image: size mismatch");
    float peak = 0.0f;
    for (float v : map) peak = std::max(peak, v);
    RgbImage img(height, width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const float v = peak > 0.0f ? map[static_cast<size_t>(y) * width + x] / peak : 0.0f;
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = v;
        }
    }
    return img;
}

// Error map as a single-plane HSC1 cube (raw values, band label 0).
inline HyperCube error_map_cube(const std::vector<float>& map, int height, int width) {
    HyperCube cube(1, height, width, {0.0f});
    cube.data.assign(map.begin(), map.end());
    return cube;
}

}  // namespace ssr
