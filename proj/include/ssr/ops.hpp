#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ssr/common.hpp"
#include "ssr/rng.hpp"
#include "ssr/tensor.hpp"

namespace ssr {

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// conv2d: stride-1 cross-correlation with zero padding, k in {1,3}.
//
// Implemented as tiled im2col plus a small register-blocked GEMM. Every
// accumulation runs in a fixed order, so results do not depend on tiling or
// the worker-thread count.
// ---------------------------------------------------------------------------

namespace detail {

// c[m x n] += a[m x k2] * b[k2 x n], row-major with explicit leading dims.
// Four output rows share one pass over b.
template <class S>
void gemm_acc(S* c, int64_t ldc, const S* a, int64_t lda, const S* b, int64_t ldb, int m,
              int k2, int n) {
    int i = 0;
    for (; i + 4 <= m; i += 4) {
        S* __restrict c0 = c + (i + 0) * ldc;
        S* __restrict c1 = c + (i + 1) * ldc;
        S* __restrict c2 = c + (i + 2) * ldc;
        S* __restrict c3 = c + (i + 3) * ldc;
        const S* a0 = a + (i + 0) * lda;
        const S* a1 = a + (i + 1) * lda;
        const S* a2 = a + (i + 2) * lda;
        const S* a3 = a + (i + 3) * lda;
        for (int p = 0; p < k2; ++p) {
            const S w0 = a0[p], w1 = a1[p], w2 = a2[p], w3 = a3[p];
            const S* __restrict br = b + p * ldb;
            for (int j = 0; j < n; ++j) {
                c0[j] += w0 * br[j];
                c1[j] += w1 * br[j];
                c2[j] += w2 * br[j];
                c3[j] += w3 * br[j];
            }
        }
    }
    for (; i < m; ++i) {
        S* __restrict ci = c + i * ldc;
        const S* ai = a + i * lda;
        for (int p = 0; p < k2; ++p) {
            const S w0 = ai[p];
            const S* __restrict br = b + p * ldb;
            for (int j = 0; j < n; ++j) ci[j] += w0 * br[j];
        }
    }
}

template <class S>
void transpose_into(S* dst, const S* src, int rows, int cols) {
    // dst[cols x rows] = src[rows x cols]
    constexpr int kBlock = 32;
    for (int r0 = 0; r0 < rows; r0 += kBlock)
        for (int c0 = 0; c0 < cols; c0 += kBlock)
            for (int r = r0; r < std::min(rows, r0 + kBlock); ++r)
                for (int c = c0; c < std::min(cols, c0 + kBlock); ++c)
                    dst[static_cast<int64_t>(c) * rows + r] =
                        src[static_cast<int64_t>(r) * cols + c];
}

// Patch matrix for output rows [oy0, oy1): bcol[(i*k+ky)*k+kx][(oy-oy0)*Wo+ox].
template <class S>
void im2col_tile(S* bcol, const S* xplane, int cin, int h, int w, int ksz, int pad, int wo,
                 int oy0, int oy1) {
    const int64_t tile_n = static_cast<int64_t>(oy1 - oy0) * wo;
    int64_t krow = 0;
    for (int i = 0; i < cin; ++i) {
        const S* xc = xplane + static_cast<int64_t>(i) * h * w;
        for (int ky = 0; ky < ksz; ++ky) {
            for (int kx = 0; kx < ksz; ++kx, ++krow) {
                S* dst = bcol + krow * tile_n;
                const int ox0 = std::max(0, pad - kx);
                const int ox1 = std::min(wo, w + pad - kx);
                for (int oy = oy0; oy < oy1; ++oy) {
                    S* drow = dst + static_cast<int64_t>(oy - oy0) * wo;
                    const int iy = oy + ky - pad;
                    if (iy < 0 || iy >= h) {
                        std::fill(drow, drow + wo, S(0));
                        continue;
                    }
                    for (int ox = 0; ox < ox0; ++ox) drow[ox] = S(0);
                    const S* xrow = xc + static_cast<int64_t>(iy) * w + (kx - pad);
                    for (int ox = ox0; ox < ox1; ++ox) drow[ox] = xrow[ox];
                    for (int ox = ox1; ox < wo; ++ox) drow[ox] = S(0);
                }
            }
        }
    }
}

// Scatter-add of a patch-matrix gradient back onto the input plane.
template <class S>
void col2im_add_tile(S* gxplane, const S* bcol, int cin, int h, int w, int ksz, int pad,
                     int wo, int oy0, int oy1) {
    const int64_t tile_n = static_cast<int64_t>(oy1 - oy0) * wo;
    int64_t krow = 0;
    for (int i = 0; i < cin; ++i) {
        S* gxc = gxplane + static_cast<int64_t>(i) * h * w;
        for (int ky = 0; ky < ksz; ++ky) {
            for (int kx = 0; kx < ksz; ++kx, ++krow) {
                const S* src = bcol + krow * tile_n;
                const int ox0 = std::max(0, pad - kx);
                const int ox1 = std::min(wo, w + pad - kx);
                for (int oy = oy0; oy < oy1; ++oy) {
                    const int iy = oy + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    const S* srow = src + static_cast<int64_t>(oy - oy0) * wo;
                    S* gxrow = gxc + static_cast<int64_t>(iy) * w + (kx - pad);
                    for (int ox = ox0; ox < ox1; ++ox) gxrow[ox] += srow[ox];
                }
            }
        }
    }
}

// Output rows per im2col tile, bounded by a ~1M-float patch buffer.
inline int conv_tile_rows(int kdim, int wo, int ho) {
    const int64_t budget = int64_t(1) << 20;
    int rows = static_cast<int>(budget / (static_cast<int64_t>(kdim) * wo));
    if (rows < 1) rows = 1;
    if (rows > ho) rows = ho;
    return rows;
}

}  // namespace detail

template <class S>
Tensor<S> conv2d_forward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                         int padding) {
    check(x.rank() == 4 && w.rank() == 4 && b.rank() == 1, "conv2d: bad tensor ranks");
    const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = w.dim(0), k = w.dim(2);
    check(w.dim(2) == w.dim(3) && (k == 1 || k == 3), "conv2d: kernel must be 1x1 or 3x3");
    check(padding == 0 || padding == 1, "conv2d: padding must be 0 or 1");
    check(w.dim(1) == Cin, "conv2d: weight input channels do not match input");
    check(b.dim(0) == Cout, "conv2d: bias length does not match output channels");
    const int Ho = H + 2 * padding - k + 1;
    const int Wo = W + 2 * padding - k + 1;
    check(Ho > 0 && Wo > 0, "conv2d: non-positive output extent");

    Tensor<S> y({B, Cout, Ho, Wo});
    const int kdim = Cin * k * k;
    const int64_t in_plane = static_cast<int64_t>(Cin) * H * W;
    const int64_t out_plane = static_cast<int64_t>(Cout) * Ho * Wo;

    parallel_for(B, [&](int64_t bi) {
        const S* xplane = x.ptr() + bi * in_plane;
        S* yplane = y.ptr() + bi * out_plane;
        for (int o = 0; o < Cout; ++o)
            std::fill(yplane + static_cast<int64_t>(o) * Ho * Wo,
                      yplane + static_cast<int64_t>(o + 1) * Ho * Wo, b[o]);
        if (k == 1 && padding == 0) {
            detail::gemm_acc(yplane, static_cast<int64_t>(Ho) * Wo, w.ptr(), Cin, xplane,
                             static_cast<int64_t>(H) * W, Cout, Cin,
                             static_cast<int>(static_cast<int64_t>(H) * W));
            return;
        }
        const int rows = detail::conv_tile_rows(kdim, Wo, Ho);
        std::vector<S> bcol(static_cast<size_t>(kdim) * rows * Wo);
        for (int oy0 = 0; oy0 < Ho; oy0 += rows) {
            const int oy1 = std::min(Ho, oy0 + rows);
            const int tile_n = (oy1 - oy0) * Wo;
            detail::im2col_tile(bcol.data(), xplane, Cin, H, W, k, padding, Wo, oy0, oy1);
            detail::gemm_acc(yplane + static_cast<int64_t>(oy0) * Wo,
                             static_cast<int64_t>(Ho) * Wo, w.ptr(), kdim, bcol.data(),
                             tile_n, Cout, kdim, tile_n);
        }
    });
    return y;
}

template <class S>
void conv2d_backward(const Tensor<S>& x, const Tensor<S>& w, int padding,
                     const std::vector<S>& gy, std::vector<S>* gx, std::vector<S>* gw,
                     std::vector<S>* gb) {
    const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = w.dim(0), k = w.dim(2);
    const int Ho = H + 2 * padding - k + 1;
    const int Wo = W + 2 * padding - k + 1;
    const int kdim = Cin * k * k;
    const int64_t in_plane = static_cast<int64_t>(Cin) * H * W;
    const int64_t out_plane = static_cast<int64_t>(Cout) * Ho * Wo;
    const int64_t hw_out = static_cast<int64_t>(Ho) * Wo;

    if (gb) {
        for (int o = 0; o < Cout; ++o) {
            double acc = 0.0;
            for (int bi = 0; bi < B; ++bi) {
                const S* gyp = gy.data() + bi * out_plane + o * hw_out;
                for (int64_t j = 0; j < hw_out; ++j) acc += static_cast<double>(gyp[j]);
            }
            (*gb)[static_cast<size_t>(o)] += static_cast<S>(acc);
        }
    }
    if (!gx && !gw) return;

    // weight transposed once: wt[kdim][Cout]
    std::vector<S> wt;
    if (gx) {
        wt.resize(static_cast<size_t>(kdim) * Cout);
        detail::transpose_into(wt.data(), w.ptr(), Cout, kdim);
    }

    const int rows = detail::conv_tile_rows(kdim, Wo, Ho);
    const size_t tile_cap = static_cast<size_t>(kdim) * rows * Wo;
    std::vector<S> bcol(gw ? tile_cap : size_t(0));
    std::vector<S> bcol_t(gw ? tile_cap : size_t(0));
    std::vector<S> gcol(gx ? tile_cap : size_t(0));

    for (int bi = 0; bi < B; ++bi) {
        const S* xplane = x.ptr() + bi * in_plane;
        const S* gyplane = gy.data() + bi * out_plane;
        S* gxplane = gx ? gx->data() + bi * in_plane : nullptr;

        if (k == 1 && padding == 0) {
            // gx += W^T * gy ; gw += gy * x^T
            if (gx) {
                detail::gemm_acc(gxplane, static_cast<int64_t>(H) * W, wt.data(), Cout,
                                 gyplane, hw_out, Cin, Cout, static_cast<int>(hw_out));
            }
            if (gw) {
                std::vector<S> xt(static_cast<size_t>(H) * W * Cin);
                detail::transpose_into(xt.data(), xplane, Cin, static_cast<int>(hw_out));
                detail::gemm_acc(gw->data(), Cin, gyplane, hw_out, xt.data(), Cin, Cout,
                                 static_cast<int>(hw_out), Cin);
            }
            continue;
        }

        for (int oy0 = 0; oy0 < Ho; oy0 += rows) {
            const int oy1 = std::min(Ho, oy0 + rows);
            const int tile_n = (oy1 - oy0) * Wo;
            if (gw) {
                detail::im2col_tile(bcol.data(), xplane, Cin, H, W, k, padding, Wo, oy0, oy1);
                detail::transpose_into(bcol_t.data(), bcol.data(), kdim, tile_n);
                detail::gemm_acc(gw->data(), kdim, gyplane + static_cast<int64_t>(oy0) * Wo,
                                 hw_out, bcol_t.data(), kdim, Cout, tile_n, kdim);
            }
            if (gx) {
                std::fill(gcol.begin(), gcol.begin() + static_cast<int64_t>(kdim) * tile_n,
                          S(0));
                detail::gemm_acc(gcol.data(), tile_n, wt.data(), Cout,
                                 gyplane + static_cast<int64_t>(oy0) * Wo, hw_out, kdim, Cout,
                                 tile_n);
                detail::col2im_add_tile(gxplane, gcol.data(), Cin, H, W, k, padding, Wo, oy0,
                                        oy1);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// maxpool2: non-overlapping 2x2 max. Ties go to the first element in
// row-major window order so backward routing is deterministic.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> maxpool2_forward(const Tensor<S>& x, std::vector<int64_t>* argmax) {
    check(x.rank() == 4, "maxpool2: expects [B,C,H,W]");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    check(H % 2 == 0 && W % 2 == 0, "maxpool2: height and width must be even");
    const int Ho = H / 2, Wo = W / 2;
    Tensor<S> y({B, C, Ho, Wo});
    if (argmax) argmax->assign(static_cast<size_t>(y.size()), 0);
    const S* xd = x.ptr();
    S* yd = y.ptr();
    int64_t out = 0;
    for (int64_t plane = 0; plane < static_cast<int64_t>(B) * C; ++plane) {
        const S* xp = xd + plane * H * W;
        const int64_t base = plane * H * W;
        for (int oy = 0; oy < Ho; ++oy) {
            for (int ox = 0; ox < Wo; ++ox, ++out) {
                int64_t best = static_cast<int64_t>(2 * oy) * W + 2 * ox;
                S bv = xp[best];
                const int64_t cand[3] = {best + 1, best + W, best + W + 1};
                for (int64_t c : cand) {
                    if (xp[c] > bv) {
                        bv = xp[c];
                        best = c;
                    }
                }
                yd[out] = bv;
                if (argmax) (*argmax)[static_cast<size_t>(out)] = base + best;
            }
        }
    }
    return y;
}

template <class S>
void maxpool2_backward(const std::vector<int64_t>& argmax, const std::vector<S>& gy,
                       std::vector<S>* gx) {
    if (!gx) return;
    for (size_t i = 0; i < gy.size(); ++i) (*gx)[static_cast<size_t>(argmax[i])] += gy[i];
}

// ---------------------------------------------------------------------------
// pixel_shuffle: depth-to-space, out(b, c, r*y+dy, r*x+dx) =
// in(b, c*r^2 + dy*r + dx, y, x). A pure permutation.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> pixel_shuffle(const Tensor<S>& x, int r = 2) {
    check(x.rank() == 4, "pixel_shuffle: expects [B,C,H,W]");
    check(r >= 1, "pixel_shuffle: upscale factor must be >= 1");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    check(C % (r * r) == 0, "pixel_shuffle: channels not divisible by r^2");
    const int Co = C / (r * r);
    Tensor<S> y({B, Co, H * r, W * r});
    const S* xd = x.ptr();
    S* yd = y.ptr();
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < Co; ++c) {
            for (int dy = 0; dy < r; ++dy) {
                for (int dx = 0; dx < r; ++dx) {
                    const S* xp = xd + ((static_cast<int64_t>(b) * C + c * r * r + dy * r + dx) *
                                        H) * W;
                    for (int yrow = 0; yrow < H; ++yrow) {
                        S* yp = yd + y.index4(b, c, yrow * r + dy, dx);
                        const S* xrow = xp + static_cast<int64_t>(yrow) * W;
                        for (int xcol = 0; xcol < W; ++xcol) yp[xcol * r] = xrow[xcol];
                    }
                }
            }
        }
    }
    return y;
}

// Exact inverse of pixel_shuffle (space-to-depth).
template <class S>
Tensor<S> pixel_unshuffle(const Tensor<S>& x, int r = 2) {
    check(x.rank() == 4, "pixel_unshuffle: expects [B,C,H,W]");
    check(r >= 1, "pixel_unshuffle: factor must be >= 1");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    check(H % r == 0 && W % r == 0, "pixel_unshuffle: extents not divisible by r");
    const int Ho = H / r, Wo = W / r;
    Tensor<S> y({B, C * r * r, Ho, Wo});
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
            for (int dy = 0; dy < r; ++dy) {
                for (int dx = 0; dx < r; ++dx) {
                    for (int yrow = 0; yrow < Ho; ++yrow) {
                        for (int xcol = 0; xcol < Wo; ++xcol) {
                            y.at4(b, c * r * r + dy * r + dx, yrow, xcol) =
                                x.at4(b, c, yrow * r + dy, xcol * r + dx);
                        }
                    }
                }
            }
        }
    }
    return y;
}

// ---------------------------------------------------------------------------
// batchnorm: per-channel normalization over (B,H,W).
// ---------------------------------------------------------------------------

template <class S>
struct BatchNormState {
    std::vector<S> running_mean;
    std::vector<S> running_var;
    bool tracked = false;  // set once any batch statistics have been folded in

    explicit BatchNormState(int channels = 0)
        : running_mean(static_cast<size_t>(channels), S(0)),
          running_var(static_cast<size_t>(channels), S(1)) {}
};

template <class S>
struct BatchNormSaved {
    std::vector<S> mean;
    std::vector<S> inv_std;
};

namespace detail {

template <class S>
Tensor<S> bn_apply(const Tensor<S>& x, const std::vector<S>& mean,
                   const std::vector<S>& inv_std, const Tensor<S>& gamma,
                   const Tensor<S>& beta) {
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<S> y(x.shape());
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
            const S scale = gamma[c] * inv_std[static_cast<size_t>(c)];
            const S shift = beta[c] - scale * mean[static_cast<size_t>(c)];
            const S* xp = x.ptr() + x.index4(b, c, 0, 0);
            S* yp = y.ptr() + y.index4(b, c, 0, 0);
            for (int64_t j = 0; j < static_cast<int64_t>(H) * W; ++j)
                yp[j] = scale * xp[j] + shift;
        }
    }
    return y;
}

}  // namespace detail

template <class S>
Tensor<S> batchnorm_forward(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                            BatchNormState<S>& state, Mode mode, S eps, S momentum,
                            BatchNormSaved<S>* saved = nullptr) {
    check(x.rank() == 4, "batchnorm: expects [B,C,H,W]");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    check(gamma.rank() == 1 && gamma.dim(0) == C, "batchnorm: gamma length mismatch");
    check(beta.rank() == 1 && beta.dim(0) == C, "batchnorm: beta length mismatch");
    check(static_cast<int>(state.running_mean.size()) == C, "batchnorm: state channel mismatch");
    const int64_t n = static_cast<int64_t>(B) * H * W;

    std::vector<S> mean(static_cast<size_t>(C)), inv_std(static_cast<size_t>(C));
    if (mode == Mode::train) {
        check(n >= 2, "batchnorm: train mode needs at least 2 values per channel");
        for (int c = 0; c < C; ++c) {
            double sum = 0.0, sumsq = 0.0;
            for (int b = 0; b < B; ++b) {
                const S* xp = x.ptr() + x.index4(b, c, 0, 0);
                for (int64_t j = 0; j < static_cast<int64_t>(H) * W; ++j) {
                    const double v = static_cast<double>(xp[j]);
                    sum += v;
                    sumsq += v * v;
                }
            }
            const double mu = sum / static_cast<double>(n);
            double var = sumsq / static_cast<double>(n) - mu * mu;
            if (var < 0.0) var = 0.0;  // guard against rounding
            mean[c] = static_cast<S>(mu);
            inv_std[c] = static_cast<S>(1.0 / std::sqrt(var + static_cast<double>(eps)));
            const double unbiased = var * static_cast<double>(n) / static_cast<double>(n - 1);
            state.running_mean[c] = static_cast<S>((1.0 - momentum) * state.running_mean[c] +
                                                   momentum * mu);
            state.running_var[c] = static_cast<S>((1.0 - momentum) * state.running_var[c] +
                                                  momentum * unbiased);
        }
        state.tracked = true;
    } else {
        if (!state.tracked)
            throw std::logic_error("batchnorm: eval mode before any running statistics exist");
        for (int c = 0; c < C; ++c) {
            mean[c] = state.running_mean[c];
            inv_std[c] = static_cast<S>(
                1.0 / std::sqrt(static_cast<double>(state.running_var[c]) +
                                static_cast<double>(eps)));
        }
    }

    Tensor<S> y = detail::bn_apply(x, mean, inv_std, gamma, beta);
    if (saved) {
        saved->mean = std::move(mean);
        saved->inv_std = std::move(inv_std);
    }
    return y;
}

// Eval-mode application against frozen running statistics; never mutates.
template <class S>
Tensor<S> batchnorm_eval(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                         const BatchNormState<S>& state, S eps) {
    check(x.rank() == 4, "batchnorm: expects [B,C,H,W]");
    const int C = x.dim(1);
    check(static_cast<int>(state.running_mean.size()) == C, "batchnorm: state channel mismatch");
    if (!state.tracked)
        throw std::logic_error("batchnorm: eval mode before any running statistics exist");
    std::vector<S> inv_std(static_cast<size_t>(C));
    for (int c = 0; c < C; ++c)
        inv_std[static_cast<size_t>(c)] = static_cast<S>(
            1.0 / std::sqrt(static_cast<double>(state.running_var[c]) +
                            static_cast<double>(eps)));
    return detail::bn_apply(x, state.running_mean, inv_std, gamma, beta);
}

template <class S>
void batchnorm_backward(const Tensor<S>& x, const Tensor<S>& gamma,
                        const BatchNormSaved<S>& saved, Mode mode, const std::vector<S>& gy,
                        std::vector<S>* gx, std::vector<S>* ggamma, std::vector<S>* gbeta) {
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t n = static_cast<int64_t>(B) * H * W;
    const int64_t hw = static_cast<int64_t>(H) * W;

    for (int c = 0; c < C; ++c) {
        const S mu = saved.mean[c], r = saved.inv_std[c];
        double sum_gy = 0.0, sum_gy_xhat = 0.0;
        for (int b = 0; b < B; ++b) {
            const S* xp = x.ptr() + x.index4(b, c, 0, 0);
            const S* gp = gy.data() + x.index4(b, c, 0, 0);
            for (int64_t j = 0; j < hw; ++j) {
                const double g = static_cast<double>(gp[j]);
                sum_gy += g;
                sum_gy_xhat += g * static_cast<double>((xp[j] - mu) * r);
            }
        }
        if (gbeta) (*gbeta)[c] += static_cast<S>(sum_gy);
        if (ggamma) (*ggamma)[c] += static_cast<S>(sum_gy_xhat);
        if (!gx) continue;
        const S g = gamma[c];
        if (mode == Mode::train) {
            const S mean_gy = static_cast<S>(sum_gy / static_cast<double>(n));
            const S mean_gy_xhat = static_cast<S>(sum_gy_xhat / static_cast<double>(n));
            for (int b = 0; b < B; ++b) {
                const S* xp = x.ptr() + x.index4(b, c, 0, 0);
                const S* gp = gy.data() + x.index4(b, c, 0, 0);
                S* gxp = gx->data() + x.index4(b, c, 0, 0);
                for (int64_t j = 0; j < hw; ++j) {
                    const S xhat = (xp[j] - mu) * r;
                    gxp[j] += g * r * (gp[j] - mean_gy - xhat * mean_gy_xhat);
                }
            }
        } else {
            // Running statistics are constants in eval mode.
            for (int b = 0; b < B; ++b) {
                const S* gp = gy.data() + x.index4(b, c, 0, 0);
                S* gxp = gx->data() + x.index4(b, c, 0, 0);
                for (int64_t j = 0; j < hw; ++j) gxp[j] += g * r * gp[j];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// leaky_relu
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> leaky_relu_forward(const Tensor<S>& x, S slope) {
    Tensor<S> y(x.shape());
    const S* xp = x.ptr();
    S* yp = y.ptr();
    for (int64_t i = 0; i < x.size(); ++i) yp[i] = xp[i] >= S(0) ? xp[i] : slope * xp[i];
    return y;
}

template <class S>
void leaky_relu_backward(const Tensor<S>& x, S slope, const std::vector<S>& gy,
                         std::vector<S>* gx) {
    if (!gx) return;
    const S* xp = x.ptr();
    for (int64_t i = 0; i < x.size(); ++i)
        (*gx)[static_cast<size_t>(i)] += gy[static_cast<size_t>(i)] * (xp[i] >= S(0) ? S(1) : slope);
}

// ---------------------------------------------------------------------------
// dropout2d: whole channels are zeroed per sample; survivors are scaled by
// 1/(1-rate) so eval mode is the identity. The per-(sample, channel)
// multiplier vector is the saved mask.
// ---------------------------------------------------------------------------

template <class S>
std::vector<S> dropout2d_mask(int batch, int channels, S rate, Rng& rng) {
    check(rate >= S(0) && rate < S(1), "dropout2d: rate must lie in [0,1)");
    std::vector<S> mask(static_cast<size_t>(batch) * channels);
    const S keep_scale = S(1) / (S(1) - rate);
    for (auto& m : mask)
        m = (rng.uniform() < static_cast<double>(rate)) ? S(0) : keep_scale;
    return mask;
}

template <class S>
Tensor<S> dropout2d_apply(const Tensor<S>& x, const std::vector<S>& mask) {
    check(x.rank() == 4, "dropout2d: expects [B,C,H,W]");
    const int B = x.dim(0), C = x.dim(1);
    const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    check(static_cast<int64_t>(mask.size()) == static_cast<int64_t>(B) * C,
          "dropout2d: mask size mismatch");
    Tensor<S> y(x.shape());
    for (int64_t p = 0; p < static_cast<int64_t>(B) * C; ++p) {
        const S m = mask[static_cast<size_t>(p)];
        const S* xp = x.ptr() + p * hw;
        S* yp = y.ptr() + p * hw;
        for (int64_t j = 0; j < hw; ++j) yp[j] = m * xp[j];
    }
    return y;
}

template <class S>
Tensor<S> dropout2d_forward(const Tensor<S>& x, S rate, Mode mode, Rng& rng,
                            std::vector<S>* mask_out = nullptr) {
    check(rate >= S(0) && rate < S(1), "dropout2d: rate must lie in [0,1)");
    if (mode == Mode::eval) {
        if (mask_out) mask_out->clear();
        return x;
    }
    auto mask = dropout2d_mask<S>(x.dim(0), x.dim(1), rate, rng);
    Tensor<S> y = dropout2d_apply(x, mask);
    if (mask_out) *mask_out = std::move(mask);
    return y;
}

template <class S>
void dropout2d_backward(const std::vector<int>& xshape, const std::vector<S>& mask,
                        const std::vector<S>& gy, std::vector<S>* gx) {
    if (!gx) return;
    if (mask.empty()) {  // eval mode: identity
        for (size_t i = 0; i < gy.size(); ++i) (*gx)[i] += gy[i];
        return;
    }
    const int64_t hw = static_cast<int64_t>(xshape[2]) * xshape[3];
    for (int64_t p = 0; p < static_cast<int64_t>(mask.size()); ++p) {
        const S m = mask[static_cast<size_t>(p)];
        const S* gp = gy.data() + p * hw;
        S* gxp = gx->data() + p * hw;
        for (int64_t j = 0; j < hw; ++j) gxp[j] += m * gp[j];
    }
}

// ---------------------------------------------------------------------------
// concat_channels: a's channels first, then b's.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
    check(a.rank() == 4 && b.rank() == 4, "concat_channels: expects [B,C,H,W]");
    check(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
          "concat_channels: batch or spatial extents differ");
    const int B = a.dim(0), C1 = a.dim(1), C2 = b.dim(1), H = a.dim(2), W = a.dim(3);
    const int64_t hw = static_cast<int64_t>(H) * W;
    Tensor<S> y({B, C1 + C2, H, W});
    for (int bi = 0; bi < B; ++bi) {
        std::copy_n(a.ptr() + static_cast<int64_t>(bi) * C1 * hw, C1 * hw,
                    y.ptr() + static_cast<int64_t>(bi) * (C1 + C2) * hw);
        std::copy_n(b.ptr() + static_cast<int64_t>(bi) * C2 * hw, C2 * hw,
                    y.ptr() + (static_cast<int64_t>(bi) * (C1 + C2) + C1) * hw);
    }
    return y;
}

template <class S>
void concat_channels_backward(int B, int C1, int C2, int H, int W, const std::vector<S>& gy,
                              std::vector<S>* ga, std::vector<S>* gb) {
    const int64_t hw = static_cast<int64_t>(H) * W;
    for (int bi = 0; bi < B; ++bi) {
        const S* gyb = gy.data() + static_cast<int64_t>(bi) * (C1 + C2) * hw;
        if (ga) {
            S* gap = ga->data() + static_cast<int64_t>(bi) * C1 * hw;
            for (int64_t j = 0; j < C1 * hw; ++j) gap[j] += gyb[j];
        }
        if (gb) {
            S* gbp = gb->data() + static_cast<int64_t>(bi) * C2 * hw;
            for (int64_t j = 0; j < C2 * hw; ++j) gbp[j] += gyb[C1 * hw + j];
        }
    }
}

// ---------------------------------------------------------------------------
// mse_loss
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> mse_loss_forward(const Tensor<S>& pred, const Tensor<S>& target) {
    check(pred.same_shape(target), "mse_loss: shape mismatch");
    double acc = 0.0;
    const S* p = pred.ptr();
    const S* t = target.ptr();
    for (int64_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
        acc += d * d;
    }
    return Tensor<S>::scalar(static_cast<S>(acc / static_cast<double>(pred.size())));
}

template <class S>
void mse_loss_backward(const Tensor<S>& pred, const Tensor<S>& target, const std::vector<S>& gy,
                       std::vector<S>* gpred, std::vector<S>* gtarget) {
    const S g0 = gy[0];
    const S scale = g0 * S(2) / static_cast<S>(pred.size());
    const S* p = pred.ptr();
    const S* t = target.ptr();
    for (int64_t i = 0; i < pred.size(); ++i) {
        const S d = scale * (p[i] - t[i]);
        if (gpred) (*gpred)[static_cast<size_t>(i)] += d;
        if (gtarget) (*gtarget)[static_cast<size_t>(i)] -= d;
    }
}

}  // namespace ssr
