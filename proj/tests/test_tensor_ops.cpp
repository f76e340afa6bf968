#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "oracles.hpp"
#include "ssr/ops.hpp"
#include "ssr/rng.hpp"
#include "ssr/tensor.hpp"

using namespace ssr;

TEST_CASE("conv2d: 3x3 all-ones kernel with same padding") {
    Tensor<float> x = Tensor<float>::full({1, 1, 3, 3}, 1.0f);
    Tensor<float> w = Tensor<float>::full({1, 1, 3, 3}, 1.0f);
    Tensor<float> b({1});
    Tensor<float> y = conv2d_forward(x, w, b, 1);
    const float expected[9] = {4, 6, 4, 6, 9, 6, 4, 6, 4};
    REQUIRE(y.shape() == std::vector<int>({1, 1, 3, 3}));
    for (int i = 0; i < 9; ++i) CHECK(y[i] == doctest::Approx(expected[i]));
}

TEST_CASE("conv2d: 1x1 identity kernel reproduces the input") {
    Rng rng(7);
    Tensor<float> x = random_uniform<float>({2, 1, 4, 5}, rng);
    Tensor<float> w = Tensor<float>::full({1, 1, 1, 1}, 1.0f);
    Tensor<float> b({1});
    Tensor<float> y = conv2d_forward(x, w, b, 0);
    for (int64_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("conv2d: same-padding shape arithmetic") {
    Rng rng(8);
    Tensor<float> x = random_uniform<float>({2, 3, 8, 8}, rng);
    Tensor<float> w = random_normal<float>({5, 3, 3, 3}, rng);
    Tensor<float> b({5});
    Tensor<float> y = conv2d_forward(x, w, b, 1);
    CHECK(y.shape() == std::vector<int>({2, 5, 8, 8}));
}

TEST_CASE("conv2d: errors") {
    Tensor<float> x({1, 2, 4, 4});
    Tensor<float> w({3, 1, 3, 3});  // Cin mismatch
    Tensor<float> b({3});
    CHECK_THROWS_AS(conv2d_forward(x, w, b, 1), std::invalid_argument);

    Tensor<float> x2({1, 1, 2, 2});
    Tensor<float> w2({1, 1, 3, 3});
    Tensor<float> b2({1});
    // 2 + 0 - 3 + 1 = 0 output rows
    CHECK_THROWS_AS(conv2d_forward(x2, w2, b2, 0), std::invalid_argument);
}

TEST_CASE("conv2d: agrees with the naive scalar oracle") {
    Rng rng(99);
    const struct {
        int b, cin, cout, h, w, k, pad;
    } cases[] = {
        {1, 1, 1, 5, 5, 3, 1}, {2, 3, 4, 6, 7, 3, 1}, {1, 4, 2, 5, 4, 3, 0},
        {2, 2, 5, 3, 3, 1, 0}, {1, 5, 3, 8, 8, 3, 1},
    };
    for (const auto& c : cases) {
        Tensor<double> x = random_uniform<double>({c.b, c.cin, c.h, c.w}, rng, -1.0, 1.0);
        Tensor<double> w = random_normal<double>({c.cout, c.cin, c.k, c.k}, rng);
        Tensor<double> b = random_normal<double>({c.cout}, rng);
        Tensor<double> got = conv2d_forward(x, w, b, c.pad);
        Tensor<double> want = oracle::conv2d_naive(x, w, b, c.pad);
        REQUIRE(got.shape() == want.shape());
        for (int64_t i = 0; i < got.size(); ++i)
            CHECK(std::abs(got[i] - want[i]) < 1e-5);
    }
}

TEST_CASE("maxpool2: hand examples") {
    Tensor<float> single({1, 1, 2, 2}, {1, 2, 3, 4});
    std::vector<int64_t> argmax;
    Tensor<float> y = maxpool2_forward(single, &argmax);
    CHECK(y.size() == 1);
    CHECK(y[0] == 4.0f);
    CHECK(argmax[0] == 3);

    Tensor<float> x({1, 1, 4, 4},
                    {1, 2, 5, 6, 3, 4, 7, 8, 9, 10, 13, 14, 11, 12, 15, 16});
    Tensor<float> p = maxpool2_forward<float>(x, nullptr);
    const float expected[4] = {4, 8, 12, 16};
    for (int i = 0; i < 4; ++i) CHECK(p[i] == expected[i]);
}

TEST_CASE("maxpool2: constant input stays constant at half resolution") {
    Tensor<float> x = Tensor<float>::full({2, 3, 6, 4}, 2.5f);
    Tensor<float> y = maxpool2_forward<float>(x, nullptr);
    CHECK(y.shape() == std::vector<int>({2, 3, 3, 2}));
    for (int64_t i = 0; i < y.size(); ++i) CHECK(y[i] == 2.5f);
}

TEST_CASE("maxpool2: odd extents rejected") {
    Tensor<float> x({1, 1, 3, 4});
    CHECK_THROWS_AS(maxpool2_forward<float>(x, nullptr), std::invalid_argument);
    Tensor<float> x2({1, 1, 4, 5});
    CHECK_THROWS_AS(maxpool2_forward<float>(x2, nullptr), std::invalid_argument);
}

TEST_CASE("maxpool2: matches brute-force window maxima") {
    Rng rng(17);
    for (int rep = 0; rep < 5; ++rep) {
        Tensor<double> x = random_uniform<double>({2, 2, 8, 6}, rng, -3.0, 3.0);
        Tensor<double> got = maxpool2_forward<double>(x, nullptr);
        Tensor<double> want = oracle::maxpool2_naive(x);
        for (int64_t i = 0; i < got.size(); ++i) CHECK(got[i] == want[i]);
    }
}

TEST_CASE("pixel_shuffle: depth-to-space example") {
    Tensor<float> x({1, 4, 1, 1}, {1, 2, 3, 4});
    Tensor<float> y = pixel_shuffle(x, 2);
    REQUIRE(y.shape() == std::vector<int>({1, 1, 2, 2}));
    CHECK(y[0] == 1.0f);
    CHECK(y[1] == 2.0f);
    CHECK(y[2] == 3.0f);
    CHECK(y[3] == 4.0f);
}

TEST_CASE("pixel_shuffle: bijection and multiset preservation") {
    Rng rng(313);
    for (int rep = 0; rep < 20; ++rep) {
        const int r = 2 + static_cast<int>(rng.below(2));  // 2 or 3
        const int b = 1 + static_cast<int>(rng.below(3));
        const int c = r * r * (1 + static_cast<int>(rng.below(4)));
        const int h = 1 + static_cast<int>(rng.below(5));
        const int w = 1 + static_cast<int>(rng.below(5));
        Tensor<float> x = random_uniform<float>({b, c, h, w}, rng);
        Tensor<float> y = pixel_shuffle(x, r);
        Tensor<float> back = pixel_unshuffle(y, r);
        REQUIRE(back.shape() == x.shape());
        for (int64_t i = 0; i < x.size(); ++i) CHECK(back[i] == x[i]);

        std::multiset<float> in(x.data().begin(), x.data().end());
        std::multiset<float> out(y.data().begin(), y.data().end());
        CHECK(in == out);
    }
}

TEST_CASE("pixel_shuffle: channel divisibility enforced") {
    Tensor<float> x({1, 3, 2, 2});
    CHECK_THROWS_AS(pixel_shuffle(x, 2), std::invalid_argument);
}

TEST_CASE("batchnorm: two-value channel normalizes to -1, +1") {
    // channel values {1,3}: mean 2, biased variance 1
    Tensor<double> x({2, 1, 1, 1}, {1.0, 3.0});
    Tensor<double> gamma = Tensor<double>::full({1}, 1.0);
    Tensor<double> beta({1});
    BatchNormState<double> state(1);
    Tensor<double> y = batchnorm_forward(x, gamma, beta, state, Mode::train, 1e-12, 0.1);
    CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("batchnorm: train output is standardized per channel") {
    Rng rng(5);
    Tensor<double> x = random_uniform<double>({4, 3, 8, 8}, rng, -2.0, 5.0);
    Tensor<double> gamma = Tensor<double>::full({3}, 1.0);
    Tensor<double> beta({3});
    BatchNormState<double> state(3);
    Tensor<double> y = batchnorm_forward(x, gamma, beta, state, Mode::train, 1e-5, 0.1);
    const int64_t n = 4 * 8 * 8;
    for (int c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0;
        for (int b = 0; b < 4; ++b)
            for (int yy = 0; yy < 8; ++yy)
                for (int xx = 0; xx < 8; ++xx) mean += y.at4(b, c, yy, xx);
        mean /= static_cast<double>(n);
        for (int b = 0; b < 4; ++b)
            for (int yy = 0; yy < 8; ++yy)
                for (int xx = 0; xx < 8; ++xx) {
                    const double d = y.at4(b, c, yy, xx) - mean;
                    var += d * d;
                }
        var /= static_cast<double>(n);
        CHECK(std::abs(mean) < 1e-5);
        CHECK(std::abs(var - 1.0) < 1e-3);
    }
    CHECK(state.tracked);
}

TEST_CASE("batchnorm: gamma 0 gives a constant output") {
    Rng rng(6);
    Tensor<float> x = random_uniform<float>({2, 2, 4, 4}, rng);
    Tensor<float> gamma({2});  // zeros
    Tensor<float> beta = Tensor<float>::full({2}, 0.75f);
    BatchNormState<float> state(2);
    Tensor<float> y = batchnorm_forward(x, gamma, beta, state, Mode::train, 1e-5f, 0.1f);
    for (int64_t i = 0; i < y.size(); ++i) CHECK(y[i] == 0.75f);
}

TEST_CASE("batchnorm: eval before any running stats is an error") {
    Tensor<float> x({1, 1, 2, 2});
    Tensor<float> gamma = Tensor<float>::full({1}, 1.0f);
    Tensor<float> beta({1});
    BatchNormState<float> state(1);
    CHECK_THROWS_AS(batchnorm_forward(x, gamma, beta, state, Mode::eval, 1e-5f, 0.1f),
                    std::logic_error);
    CHECK_THROWS_AS(batchnorm_eval(x, gamma, beta, state, 1e-5f), std::logic_error);
}

TEST_CASE("batchnorm: train mode needs at least two values per channel") {
    Tensor<float> x({1, 3, 1, 1});
    Tensor<float> gamma = Tensor<float>::full({3}, 1.0f);
    Tensor<float> beta({3});
    BatchNormState<float> state(3);
    CHECK_THROWS_AS(batchnorm_forward(x, gamma, beta, state, Mode::train, 1e-5f, 0.1f),
                    std::invalid_argument);
}

TEST_CASE("leaky_relu: slope 0.2 cases") {
    Tensor<float> x({3}, {2.0f, -1.0f, 0.0f});
    Tensor<float> y = leaky_relu_forward(x, 0.2f);
    CHECK(y[0] == 2.0f);
    CHECK(y[1] == doctest::Approx(-0.2f));
    CHECK(y[2] == 0.0f);
}

TEST_CASE("dropout2d: eval mode is bit-identical to the input") {
    Rng rng(11);
    Tensor<float> x = random_uniform<float>({2, 4, 3, 3}, rng);
    Rng drop_rng(1);
    Tensor<float> y = dropout2d_forward(x, 0.5f, Mode::eval, drop_rng);
    for (int64_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("dropout2d: rate zero is the identity in train mode") {
    Rng rng(12);
    Tensor<float> x = random_uniform<float>({2, 4, 3, 3}, rng);
    Rng drop_rng(2);
    Tensor<float> y = dropout2d_forward(x, 0.0f, Mode::train, drop_rng);
    for (int64_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("dropout2d: drop fraction and expectation at rate 0.2") {
    const int B = 50, C = 400;  // 20000 channels
    Tensor<double> x = Tensor<double>::full({B, C, 1, 1}, 1.0);
    Rng drop_rng(99);
    std::vector<double> mask;
    Tensor<double> y = dropout2d_forward(x, 0.2, Mode::train, drop_rng, &mask);
    int64_t zeros = 0;
    double sum = 0.0;
    for (int64_t i = 0; i < y.size(); ++i) {
        if (y[i] == 0.0) ++zeros;
        sum += y[i];
    }
    const double frac = static_cast<double>(zeros) / static_cast<double>(y.size());
    CHECK(frac == doctest::Approx(0.2).epsilon(0.05));
    // inverted dropout: E[output] equals the input
    CHECK(sum / static_cast<double>(y.size()) == doctest::Approx(1.0).epsilon(0.02));
    // whole channels only: every surviving value is exactly 1/(1-rate)
    for (int64_t i = 0; i < y.size(); ++i)
        CHECK((y[i] == 0.0 || y[i] == doctest::Approx(1.25)));
}

TEST_CASE("dropout2d: invalid rates rejected") {
    Tensor<float> x({1, 1, 2, 2});
    Rng rng(3);
    CHECK_THROWS_AS(dropout2d_forward(x, 1.0f, Mode::train, rng), std::invalid_argument);
    CHECK_THROWS_AS(dropout2d_forward(x, -0.1f, Mode::train, rng), std::invalid_argument);
}

TEST_CASE("concat_channels: shape, recovery, and order") {
    Rng rng(21);
    Tensor<float> a = random_uniform<float>({2, 2, 3, 4}, rng);
    Tensor<float> b = random_uniform<float>({2, 3, 3, 4}, rng);
    Tensor<float> y = concat_channels(a, b);
    CHECK(y.shape() == std::vector<int>({2, 5, 3, 4}));
    for (int bi = 0; bi < 2; ++bi)
        for (int c = 0; c < 2; ++c)
            for (int yy = 0; yy < 3; ++yy)
                for (int xx = 0; xx < 4; ++xx)
                    CHECK(y.at4(bi, c, yy, xx) == a.at4(bi, c, yy, xx));

    Tensor<float> z = concat_channels(b, a);
    CHECK(z.shape() == y.shape());
    bool any_diff = false;
    for (int64_t i = 0; i < y.size(); ++i) any_diff = any_diff || (y[i] != z[i]);
    CHECK(any_diff);

    Tensor<float> bad({2, 3, 4, 4});
    CHECK_THROWS_AS(concat_channels(a, bad), std::invalid_argument);
}

TEST_CASE("mse_loss: hand values and homogeneity") {
    Tensor<float> p({2}, {1.0f, 2.0f});
    Tensor<float> t({2}, {0.0f, 0.0f});
    CHECK(mse_loss_forward(p, t)[0] == doctest::Approx(2.5f));

    CHECK(mse_loss_forward(t, t)[0] == 0.0f);

    Tensor<float> p2({2}, {2.0f, 4.0f});
    CHECK(mse_loss_forward(p2, t)[0] == doctest::Approx(4.0f * 2.5f));

    Tensor<float> bad({3});
    CHECK_THROWS_AS(mse_loss_forward(p, bad), std::invalid_argument);
}
