#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "ssr/ops.hpp"
#include "ssr/tape.hpp"
#include "ssr/tensor.hpp"

namespace ssr {

// Architecture knobs for the multi-scale encoder-decoder. Everything that
// changes the parameter layout or the forward math lives here so that a
// single fingerprint can guard weight files.
struct NetworkConfig {
    int scales = 4;          // number of downsample steps
    int base_features = 64;  // features after the first double conv
    int in_channels = 3;
    int out_channels = 31;
    float dropout_rate = 0.2f;
    float lrelu_slope = 0.2f;
    float bn_eps = 1e-5f;
    float bn_momentum = 0.1f;
};

inline uint64_t config_fingerprint(const NetworkConfig& cfg) {
    std::string bytes;
    put_u32(bytes, static_cast<uint32_t>(cfg.scales));
    put_u32(bytes, static_cast<uint32_t>(cfg.base_features));
    put_u32(bytes, static_cast<uint32_t>(cfg.in_channels));
    put_u32(bytes, static_cast<uint32_t>(cfg.out_channels));
    put_f32(bytes, cfg.dropout_rate);
    put_f32(bytes, cfg.lrelu_slope);
    put_f32(bytes, cfg.bn_eps);
    put_f32(bytes, cfg.bn_momentum);
    return fnv1a(bytes.data(), bytes.size());
}

template <class S>
struct Conv2dLayer {
    Tensor<S> weight;  // [Cout, Cin, k, k]
    Tensor<S> bias;    // [Cout]
    int padding = 0;
};

template <class S>
struct BatchNormLayer {
    Tensor<S> gamma;
    Tensor<S> beta;
    BatchNormState<S> state;
};

// conv3x3 -> batchnorm -> leaky relu -> 2d dropout, twice.
template <class S>
struct DoubleConvBlock {
    Conv2dLayer<S> conv1;
    BatchNormLayer<S> bn1;
    Conv2dLayer<S> conv2;
    BatchNormLayer<S> bn2;
};

// One decoder stage: 1x1 channel expansion so the pixel shuffle lands on
// exactly half the incoming feature count, then the fused double conv.
template <class S>
struct UpStep {
    Conv2dLayer<S> expand;
    DoubleConvBlock<S> block;
};

template <class S>
class Network {
public:
    using NodeId = typename Tape<S>::NodeId;

    static Network build(const NetworkConfig& cfg) {
        check(cfg.scales >= 1, "network: scales must be >= 1");
        check(cfg.base_features >= 1, "network: base_features must be >= 1");
        check(cfg.in_channels >= 1 && cfg.out_channels >= 1, "network: bad channel counts");
        check(cfg.dropout_rate >= 0.0f && cfg.dropout_rate < 1.0f,
              "network: dropout rate must lie in [0,1)");

        Network net;
        net.cfg_ = cfg;
        int ch = cfg.in_channels;
        for (int s = 0; s < cfg.scales; ++s) {
            const int out = cfg.base_features << s;
            net.encoder_.push_back(make_double_conv(ch, out));
            ch = out;
        }
        net.bottleneck_ = make_double_conv(ch, cfg.base_features << cfg.scales);
        for (int s = cfg.scales - 1; s >= 0; --s) {
            const int deep = cfg.base_features << (s + 1);
            UpStep<S> up;
            up.expand = make_conv(deep, 2 * deep, 1, 0);
            // post-shuffle features (deep/2) + skip features (deep/2)
            up.block = make_double_conv(deep, cfg.base_features << s);
            net.decoder_.push_back(std::move(up));
        }
        net.head_ = make_conv(cfg.base_features, cfg.out_channels, 1, 0);
        return net;
    }

    const NetworkConfig& config() const { return cfg_; }

    // Deterministic eval-mode forward. Requires running statistics, i.e.
    // a trained or loaded network.
    Tensor<S> forward(const Tensor<S>& x) const {
        check_input(x);
        std::vector<Tensor<S>> skips;
        Tensor<S> h = x;
        for (const auto& enc : encoder_) {
            h = eval_double_conv(enc, h);
            skips.push_back(h);
            h = maxpool2_forward<S>(h, nullptr);
        }
        h = eval_double_conv(bottleneck_, h);
        for (size_t d = 0; d < decoder_.size(); ++d) {
            const auto& up = decoder_[d];
            h = conv2d_forward(h, up.expand.weight, up.expand.bias, up.expand.padding);
            h = pixel_shuffle(h, 2);
            h = concat_channels(h, skips[decoder_.size() - 1 - d]);
            h = eval_double_conv(up.block, h);
        }
        return conv2d_forward(h, head_.weight, head_.bias, head_.padding);
    }

    // Recorded forward for training. Dropout draws from rng in train mode;
    // batch-norm running statistics are updated in train mode.
    NodeId forward(Tape<S>& tape, NodeId x, Mode mode, Rng& rng) {
        check_input(tape.value(x));
        std::vector<NodeId> skips;
        NodeId h = x;
        for (auto& enc : encoder_) {
            h = taped_double_conv(tape, enc, h, mode, rng);
            skips.push_back(h);
            h = tape.maxpool2(h);
        }
        h = taped_double_conv(tape, bottleneck_, h, mode, rng);
        for (size_t d = 0; d < decoder_.size(); ++d) {
            auto& up = decoder_[d];
            h = tape.conv2d(h, tape.leaf(up.expand.weight), tape.leaf(up.expand.bias),
                            up.expand.padding);
            h = tape.pixel_shuffle(h, 2);
            h = tape.concat_channels(h, skips[decoder_.size() - 1 - d]);
            h = taped_double_conv(tape, up.block, h, mode, rng);
        }
        return tape.conv2d(h, tape.leaf(head_.weight), tape.leaf(head_.bias), head_.padding);
    }

    // HeNormal conv weights, zero biases, identity batch norm.
    void init_he_normal(Rng& rng) {
        for_each_conv([&](Conv2dLayer<S>& conv) {
            const int fan_in = conv.weight.dim(1) * conv.weight.dim(2) * conv.weight.dim(3);
            const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
            for (auto& v : conv.weight.data()) v = static_cast<S>(rng.normal() * stddev);
            std::fill(conv.bias.data().begin(), conv.bias.data().end(), S(0));
        });
        for_each_bn([&](BatchNormLayer<S>& bn) {
            std::fill(bn.gamma.data().begin(), bn.gamma.data().end(), S(1));
            std::fill(bn.beta.data().begin(), bn.beta.data().end(), S(0));
            std::fill(bn.state.running_mean.begin(), bn.state.running_mean.end(), S(0));
            std::fill(bn.state.running_var.begin(), bn.state.running_var.end(), S(1));
            bn.state.tracked = false;
        });
    }

    int64_t num_parameters() const {
        int64_t n = 0;
        self().for_each_param([&](Tensor<S>& t) { n += t.size(); });
        return n;
    }

    // Parameters plus batch-norm running statistics (the weight-file payload).
    int64_t num_saved_values() const {
        int64_t n = 0;
        self().for_each_saved([&](std::vector<S>& v) { n += static_cast<int64_t>(v.size()); });
        return n;
    }

    // Learnable tensors in a fixed traversal order.
    template <class Fn>
    void for_each_param(Fn&& fn) {
        visit_blocks(
            [&](DoubleConvBlock<S>& b) {
                fn(b.conv1.weight);
                fn(b.conv1.bias);
                fn(b.bn1.gamma);
                fn(b.bn1.beta);
                fn(b.conv2.weight);
                fn(b.conv2.bias);
                fn(b.bn2.gamma);
                fn(b.bn2.beta);
            },
            [&](Conv2dLayer<S>& c) {
                fn(c.weight);
                fn(c.bias);
            });
    }

    template <class Fn>
    void for_each_conv(Fn&& fn) {
        visit_blocks(
            [&](DoubleConvBlock<S>& b) {
                fn(b.conv1);
                fn(b.conv2);
            },
            [&](Conv2dLayer<S>& c) { fn(c); });
    }

    template <class Fn>
    void for_each_bn(Fn&& fn) {
        visit_blocks(
            [&](DoubleConvBlock<S>& b) {
                fn(b.bn1);
                fn(b.bn2);
            },
            [&](Conv2dLayer<S>&) {});
    }

    // Weight-file payload in file order: parameters with running statistics
    // interleaved right after their batch-norm layer.
    template <class Fn>
    void for_each_saved(Fn&& fn) {
        visit_blocks(
            [&](DoubleConvBlock<S>& b) {
                fn(b.conv1.weight.data());
                fn(b.conv1.bias.data());
                fn(b.bn1.gamma.data());
                fn(b.bn1.beta.data());
                fn(b.bn1.state.running_mean);
                fn(b.bn1.state.running_var);
                fn(b.conv2.weight.data());
                fn(b.conv2.bias.data());
                fn(b.bn2.gamma.data());
                fn(b.bn2.beta.data());
                fn(b.bn2.state.running_mean);
                fn(b.bn2.state.running_var);
            },
            [&](Conv2dLayer<S>& c) {
                fn(c.weight.data());
                fn(c.bias.data());
            });
    }

    const std::vector<DoubleConvBlock<S>>& encoder() const { return encoder_; }
    const DoubleConvBlock<S>& bottleneck() const { return bottleneck_; }
    const std::vector<UpStep<S>>& decoder() const { return decoder_; }
    const Conv2dLayer<S>& head() const { return head_; }

    // True once batch-norm statistics exist (trained or loaded).
    bool has_running_stats() const {
        bool ok = true;
        self().for_each_bn([&](BatchNormLayer<S>& bn) { ok = ok && bn.state.tracked; });
        return ok;
    }

    void mark_stats_tracked() {
        for_each_bn([](BatchNormLayer<S>& bn) { bn.state.tracked = true; });
    }

private:
    Network& self() const { return const_cast<Network&>(*this); }

    static Conv2dLayer<S> make_conv(int cin, int cout, int k, int padding) {
        Conv2dLayer<S> c;
        c.weight = Tensor<S>({cout, cin, k, k});
        c.bias = Tensor<S>({cout});
        c.weight.set_requires_grad(true);
        c.bias.set_requires_grad(true);
        c.padding = padding;
        return c;
    }

    static BatchNormLayer<S> make_bn(int channels) {
        BatchNormLayer<S> bn;
        bn.gamma = Tensor<S>::full({channels}, S(1));
        bn.beta = Tensor<S>({channels});
        bn.gamma.set_requires_grad(true);
        bn.beta.set_requires_grad(true);
        bn.state = BatchNormState<S>(channels);
        return bn;
    }

    static DoubleConvBlock<S> make_double_conv(int cin, int cout) {
        DoubleConvBlock<S> b;
        b.conv1 = make_conv(cin, cout, 3, 1);
        b.bn1 = make_bn(cout);
        b.conv2 = make_conv(cout, cout, 3, 1);
        b.bn2 = make_bn(cout);
        return b;
    }

    void check_input(const Tensor<S>& x) const {
        check(x.rank() == 4, "network: input must be [B,C,H,W]");
        check(x.dim(1) == cfg_.in_channels, "network: input channel count mismatch");
        const int div = 1 << cfg_.scales;
        check(x.dim(2) % div == 0 && x.dim(3) % div == 0,
              "network: spatial extents must be divisible by 2^scales (pad first)");
    }

    Tensor<S> eval_double_conv(const DoubleConvBlock<S>& b, const Tensor<S>& x) const {
        const S eps = static_cast<S>(cfg_.bn_eps);
        const S slope = static_cast<S>(cfg_.lrelu_slope);
        Tensor<S> h = conv2d_forward(x, b.conv1.weight, b.conv1.bias, b.conv1.padding);
        h = batchnorm_eval(h, b.bn1.gamma, b.bn1.beta, b.bn1.state, eps);
        h = leaky_relu_forward(h, slope);
        h = conv2d_forward(h, b.conv2.weight, b.conv2.bias, b.conv2.padding);
        h = batchnorm_eval(h, b.bn2.gamma, b.bn2.beta, b.bn2.state, eps);
        return leaky_relu_forward(h, slope);
    }

    typename Tape<S>::NodeId taped_double_conv(Tape<S>& tape, DoubleConvBlock<S>& b,
                                               typename Tape<S>::NodeId x, Mode mode,
                                               Rng& rng) {
        const S eps = static_cast<S>(cfg_.bn_eps);
        const S mom = static_cast<S>(cfg_.bn_momentum);
        const S slope = static_cast<S>(cfg_.lrelu_slope);
        const S rate = static_cast<S>(cfg_.dropout_rate);
        NodeId h = tape.conv2d(x, tape.leaf(b.conv1.weight), tape.leaf(b.conv1.bias),
                               b.conv1.padding);
        h = tape.batchnorm(h, tape.leaf(b.bn1.gamma), tape.leaf(b.bn1.beta), b.bn1.state, mode,
                           eps, mom);
        h = tape.leaky_relu(h, slope);
        h = tape.dropout2d(h, rate, mode, rng);
        h = tape.conv2d(h, tape.leaf(b.conv2.weight), tape.leaf(b.conv2.bias),
                        b.conv2.padding);
        h = tape.batchnorm(h, tape.leaf(b.bn2.gamma), tape.leaf(b.bn2.beta), b.bn2.state, mode,
                           eps, mom);
        h = tape.leaky_relu(h, slope);
        return tape.dropout2d(h, rate, mode, rng);
    }

    template <class BlockFn, class ConvFn>
    void visit_blocks(BlockFn&& on_block, ConvFn&& on_conv) {
        for (auto& enc : encoder_) on_block(enc);
        on_block(bottleneck_);
        for (auto& up : decoder_) {
            on_conv(up.expand);
            on_block(up.block);
        }
        on_conv(head_);
    }

    NetworkConfig cfg_;
    std::vector<DoubleConvBlock<S>> encoder_;
    DoubleConvBlock<S> bottleneck_;
    std::vector<UpStep<S>> decoder_;
    Conv2dLayer<S> head_;
};

template <class S>
Network<S> build_network(const NetworkConfig& cfg) {
    return Network<S>::build(cfg);
}

// ---------------------------------------------------------------------------
// Reflect padding for inputs whose extents are not multiples of 2^scales.
// Pads bottom/right; the mirror index clamps at the far edge when the pad
// exceeds the extent.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> reflect_pad_br(const Tensor<S>& x, int pad_h, int pad_w) {
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<S> y({B, C, H + pad_h, W + pad_w});
    auto mirror = [](int i, int n) {
        if (i < n) return i;
        int m = 2 * n - 2 - i;
        if (m < 0) m = 0;
        return m;
    };
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int yy = 0; yy < H + pad_h; ++yy)
                for (int xx = 0; xx < W + pad_w; ++xx)
                    y.at4(b, c, yy, xx) = x.at4(b, c, mirror(yy, H), mirror(xx, W));
    return y;
}

// Whole-image inference at arbitrary sizes: reflect-pad up to the pyramid
// granularity, run eval forward, crop back.
template <class S>
Tensor<S> forward_padded(const Network<S>& net, const Tensor<S>& x) {
    const int div = 1 << net.config().scales;
    const int H = x.dim(2), W = x.dim(3);
    const int pad_h = (div - H % div) % div;
    const int pad_w = (div - W % div) % div;
    if (pad_h == 0 && pad_w == 0) return net.forward(x);
    Tensor<S> out = net.forward(reflect_pad_br(x, pad_h, pad_w));
    Tensor<S> cropped({x.dim(0), out.dim(1), H, W});
    for (int b = 0; b < x.dim(0); ++b)
        for (int c = 0; c < out.dim(1); ++c)
            for (int yy = 0; yy < H; ++yy)
                for (int xx = 0; xx < W; ++xx)
                    cropped.at4(b, c, yy, xx) = out.at4(b, c, yy, xx);
    return cropped;
}

// ---------------------------------------------------------------------------
// Weight files: "SSRW", u16 version, u64 config fingerprint, then every
// parameter and batch-norm running statistic as little-endian f32 in
// traversal order.
// ---------------------------------------------------------------------------

inline constexpr uint16_t kWeightFileVersion = 1;
inline constexpr size_t kWeightHeaderBytes = 14;

template <class S>
void save_weights(Network<S>& net, const std::string& path) {
    std::string out;
    out += "SSRW";
    put_u16(out, kWeightFileVersion);
    put_u64(out, config_fingerprint(net.config()));
    net.for_each_saved([&](std::vector<S>& vals) {
        for (S v : vals) put_f32(out, static_cast<float>(v));
    });

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("save_weights: cannot open " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("save_weights: write failed for " + path);
}

template <class S>
void load_weights(Network<S>& net, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("load_weights: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < kWeightHeaderBytes || bytes.compare(0, 4, "SSRW") != 0)
        throw DataError("load_weights: bad magic in " + path);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (get_u16(p + 4) != kWeightFileVersion)
        throw DataError("load_weights: unsupported version in " + path);
    if (get_u64(p + 6) != config_fingerprint(net.config()))
        throw DataError("load_weights: config fingerprint mismatch for " + path);
    const size_t expected =
        kWeightHeaderBytes + 4 * static_cast<size_t>(net.num_saved_values());
    if (bytes.size() != expected)
        throw DataError("load_weights: file size mismatch (truncated or oversized) " + path);

    size_t off = kWeightHeaderBytes;
    net.for_each_saved([&](std::vector<S>& vals) {
        for (auto& v : vals) {
            v = static_cast<S>(get_f32(p + off));
            off += 4;
        }
    });
    net.mark_stats_tracked();
}

}  // namespace ssr
