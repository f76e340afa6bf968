#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "ssr/data.hpp"
#include "ssr/metrics.hpp"
#include "ssr/network.hpp"
#include "ssr/pipeline.hpp"
#include "ssr/tape.hpp"

namespace ssr {

// Training defaults: Adam for 100 epochs, initial rate 5e-5 multiplied by
// 0.93 every 10 epochs, 1e-6 L2 regularization folded into the gradients,
// 64x64 patches on a 40-pixel stride.
struct TrainConfig {
    int epochs = 100;
    double lr0 = 5e-5;
    double lr_gamma = 0.93;
    int lr_step = 10;
    double weight_decay = 1e-6;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch_size = 16;
    int patch_size = 64;
    int patch_stride = 40;
    uint64_t seed = 0;
};

inline void validate(const TrainConfig& cfg) {
    check(cfg.epochs >= 1, "train config: epochs must be >= 1");
    check(cfg.lr0 > 0.0, "train config: lr0 must be positive");
    check(cfg.lr_gamma > 0.0 && cfg.lr_gamma <= 1.0, "train config: lr_gamma must lie in (0,1]");
    check(cfg.lr_step >= 1, "train config: lr_step must be >= 1");
    check(cfg.weight_decay >= 0.0, "train config: weight_decay must be >= 0");
    check(cfg.batch_size >= 1, "train config: batch_size must be >= 1");
    check(cfg.patch_size >= 1 && cfg.patch_stride >= 1,
          "train config: patch size and stride must be positive");
}

inline double lr_at_epoch(int epoch, const TrainConfig& cfg) {
    check(epoch >= 0, "lr_at_epoch: epoch must be >= 0");
    return cfg.lr0 * std::pow(cfg.lr_gamma, static_cast<double>(epoch / cfg.lr_step));
}

// ---------------------------------------------------------------------------
// Patch extraction. Anchors sit at multiples of the stride while the patch
// still fits, giving floor((extent-size)/stride)+1 anchors per axis.
// ---------------------------------------------------------------------------

inline int patch_anchors(int extent, int size, int stride) {
    check(size <= extent, "patches: size exceeds image extent");
    return (extent - size) / stride + 1;
}

inline int64_t patch_count(int height, int width, int size, int stride) {
    return static_cast<int64_t>(patch_anchors(height, size, stride)) *
           patch_anchors(width, size, stride);
}

struct TrainSample {
    Tensor<float> rgb;  // [3, size, size]
    Tensor<float> hsi;  // [bands, size, size]
};

inline std::vector<TrainSample> extract_patches(const HyperCube& cube, const RgbImage& rgb,
                                                int size, int stride) {
    check(cube.height == rgb.height && cube.width == rgb.width,
          "extract_patches: cube/rgb extents differ");
    check(stride >= 1, "extract_patches: stride must be positive");
    const int ny = patch_anchors(cube.height, size, stride);
    const int nx = patch_anchors(cube.width, size, stride);
    std::vector<TrainSample> out;
    out.reserve(static_cast<size_t>(ny) * nx);
    for (int ay = 0; ay < ny; ++ay) {
        for (int ax = 0; ax < nx; ++ax) {
            const int y0 = ay * stride, x0 = ax * stride;
            TrainSample s;
            s.rgb = Tensor<float>({3, size, size});
            s.hsi = Tensor<float>({cube.bands, size, size});
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < size; ++y)
                    for (int x = 0; x < size; ++x)
                        s.rgb[(static_cast<int64_t>(c) * size + y) * size + x] =
                            rgb.at(c, y0 + y, x0 + x);
            for (int b = 0; b < cube.bands; ++b)
                for (int y = 0; y < size; ++y)
                    for (int x = 0; x < size; ++x)
                        s.hsi[(static_cast<int64_t>(b) * size + y) * size + x] =
                            cube.at(b, y0 + y, x0 + x);
            out.push_back(std::move(s));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Adam with L2 regularization folded into the gradient:
//   g <- g + weight_decay * theta, then the standard bias-corrected update.
// ---------------------------------------------------------------------------

template <class S>
struct AdamState {
    std::vector<std::vector<S>> m;  // first moments, parameter order
    std::vector<std::vector<S>> v;  // second moments
    int64_t t = 0;                  // completed steps

    static AdamState init(Network<S>& net) {
        AdamState st;
        net.for_each_param([&](Tensor<S>& p) {
            st.m.emplace_back(static_cast<size_t>(p.size()), S(0));
            st.v.emplace_back(static_cast<size_t>(p.size()), S(0));
        });
        return st;
    }
};

// Single-buffer update, exposed for direct testing.
template <class S>
void adam_update(std::vector<S>& theta, const std::vector<S>& grad, std::vector<S>& m,
                 std::vector<S>& v, int64_t t, double lr, const TrainConfig& cfg) {
    check(theta.size() == grad.size() && theta.size() == m.size() && theta.size() == v.size(),
          "adam_update: buffer sizes differ");
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (size_t i = 0; i < theta.size(); ++i) {
        const double g = static_cast<double>(grad[i]) +
                         cfg.weight_decay * static_cast<double>(theta[i]);
        const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * g;
        const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * g * g;
        m[i] = static_cast<S>(mi);
        v[i] = static_cast<S>(vi);
        const double mhat = mi / corr1;
        const double vhat = vi / corr2;
        theta[i] = static_cast<S>(static_cast<double>(theta[i]) -
                                  lr * mhat / (std::sqrt(vhat) + cfg.adam_eps));
    }
}

// One optimizer step over every parameter; gradients must be populated.
template <class S>
void adam_step(Network<S>& net, AdamState<S>& state, double lr, const TrainConfig& cfg) {
    ++state.t;
    size_t idx = 0;
    net.for_each_param([&](Tensor<S>& p) {
        check(p.grad().size() == p.data().size(), "adam_step: missing gradient for a parameter");
        adam_update(p.data(), p.grad(), state.m[idx], state.v[idx], state.t, lr, cfg);
        ++idx;
    });
}

// ---------------------------------------------------------------------------
// Epoch loop.
// ---------------------------------------------------------------------------

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_mse = 0.0;  // mean step loss over the epoch, train mode
    double rmse1 = 0.0, rmse2 = 0.0, rrmse1 = 0.0, rrmse2 = 0.0, sam = 0.0;
};

struct TrainLog {
    std::vector<EpochLog> epochs;
};

inline void write_train_log_csv(const TrainLog& log, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("write_train_log_csv: cannot open " + path);
    f << "epoch,lr,train_mse,rmse1,rmse2,rrmse1,rrmse2,sam\n";
    char buf[512];
    for (const auto& e : log.epochs) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      e.epoch, e.lr, e.train_mse, e.rmse1, e.rmse2, e.rrmse1, e.rrmse2, e.sam);
        f << buf;
    }
}

// Optional per-epoch observer (step progress, early inspection).
using EpochCallback = std::function<void(const EpochLog&)>;

// Trains in place. One epoch is a full pass over all patches in seeded
// shuffled order; the trailing partial batch is kept. Held-out metrics are
// computed per epoch on raw (unclamped) whole-image predictions; the metric
// fields stay NaN when eval_images is empty. Deterministic for a fixed
// (seed, dataset, config) on a fixed binary.
inline TrainLog train(Network<float>& net, const std::vector<ImagePair>& train_images,
                      const std::vector<ImagePair>& eval_images, const TrainConfig& cfg,
                      const EpochCallback& on_epoch = {}) {
    validate(cfg);
    check(!train_images.empty(), "train: empty dataset");

    std::vector<TrainSample> samples;
    for (const auto& pair : train_images) {
        auto patches = extract_patches(pair.cube, pair.rgb, cfg.patch_size, cfg.patch_stride);
        for (auto& p : patches) samples.push_back(std::move(p));
    }
    check(!samples.empty(), "train: no patches extracted");

    const int bands = train_images.front().cube.bands;
    const int ps = cfg.patch_size;
    Rng rng(cfg.seed);
    AdamState<float> adam = AdamState<float>::init(net);
    TrainLog log;

    std::vector<size_t> order(samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at_epoch(epoch, cfg);
        rng.shuffle(order);

        double loss_acc = 0.0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const int bs = static_cast<int>(
                std::min<size_t>(static_cast<size_t>(cfg.batch_size), order.size() - start));
            Tensor<float> x({bs, 3, ps, ps});
            Tensor<float> t({bs, bands, ps, ps});
            for (int b = 0; b < bs; ++b) {
                const TrainSample& s = samples[order[start + static_cast<size_t>(b)]];
                std::copy(s.rgb.data().begin(), s.rgb.data().end(),
                          x.data().begin() + static_cast<int64_t>(b) * s.rgb.size());
                std::copy(s.hsi.data().begin(), s.hsi.data().end(),
                          t.data().begin() + static_cast<int64_t>(b) * s.hsi.size());
            }

            Tape<float> tape;
            auto xid = tape.constant(std::move(x));
            auto out = net.forward(tape, xid, Mode::train, rng);
            auto loss = tape.mse_loss(out, tape.constant(std::move(t)));
            const double loss_val = static_cast<double>(tape.scalar_value(loss));
            if (!std::isfinite(loss_val))
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
            tape.backward(loss);
            adam_step(net, adam, lr, cfg);
            loss_acc += loss_val * static_cast<double>(bs);
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.lr = lr;
        entry.train_mse = loss_acc / static_cast<double>(samples.size());

        if (!eval_images.empty()) {
            std::vector<MetricReport> reports;
            for (const auto& pair : eval_images)
                reports.push_back(
                    evaluate_all(pair.cube, predict_cube_raw(net, pair.rgb), pair.name));
            const MetricReport avg = average_report(reports);
            entry.rmse1 = avg.rmse1;
            entry.rmse2 = avg.rmse2;
            entry.rrmse1 = avg.rrmse1;
            entry.rrmse2 = avg.rrmse2;
            entry.sam = avg.sam_degrees;
        } else {
            entry.rmse1 = entry.rmse2 = entry.rrmse1 = entry.rrmse2 = entry.sam =
                std::numeric_limits<double>::quiet_NaN();
        }
        log.epochs.push_back(entry);
        if (on_epoch) on_epoch(entry);
    }
    return log;
}

// Eval-mode MSE of the network against whole images; the overfit probe.
inline double dataset_mse(const Network<float>& net, const std::vector<ImagePair>& images) {
    check(!images.empty(), "dataset_mse: empty dataset");
    double acc = 0.0;
    int64_t n = 0;
    for (const auto& pair : images) {
        Tensor<float> out = forward_padded(net, rgb_to_tensor(pair.rgb));
        const Tensor<float> target = cube_to_tensor(pair.cube);
        check(out.size() == target.size(), "dataset_mse: shape mismatch");
        for (int64_t i = 0; i < out.size(); ++i) {
            const double d = static_cast<double>(out[i]) - static_cast<double>(target[i]);
            acc += d * d;
        }
        n += out.size();
    }
    return acc / static_cast<double>(n);
}

}  // namespace ssr
