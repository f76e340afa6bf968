#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ssr/data.hpp"
#include "ssr/training.hpp"

using namespace ssr;

namespace {

// A tiny in-memory dataset of aligned synthetic pairs.
std::vector<ImagePair> tiny_dataset(int n, int size, uint64_t seed) {
    Rng rng(seed);
    const ResponseMatrix response = default_response();
    std::vector<ImagePair> pairs;
    for (int i = 0; i < n; ++i) {
        Rng child = rng.child(static_cast<uint64_t>(i));
        ImagePair p;
        p.cube = synth_scene(child, size, size, 3);
        p.rgb = project_to_rgb(p.cube, response);
        p.name = "img" + std::to_string(i);
        pairs.push_back(std::move(p));
    }
    return pairs;
}

}  // namespace

TEST_CASE("patches: anchor counts at full-frame geometry") {
    CHECK(patch_anchors(1392, 64, 40) == 34);
    CHECK(patch_anchors(1300, 64, 40) == 31);
    CHECK(patch_count(1392, 1300, 64, 40) == 1054);
    CHECK(1054 * 256 == 269824);
    CHECK(1054 * 256 > 267000);
}

TEST_CASE("patches: edge cases") {
    CHECK(patch_count(64, 64, 64, 40) == 1);          // H == W == size
    CHECK(patch_anchors(104, 64, 40) == 2);           // anchors at 0 and 40
    CHECK_THROWS_AS(patch_anchors(32, 64, 40), std::invalid_argument);
}

TEST_CASE("patches: formula matches exhaustive anchor enumeration") {
    Rng rng(404);
    for (int rep = 0; rep < 50; ++rep) {
        const int size = 1 + static_cast<int>(rng.below(30));
        const int h = size + static_cast<int>(rng.below(100));
        const int stride = 1 + static_cast<int>(rng.below(20));
        int count = 0;
        for (int a = 0; a + size <= h; a += stride) ++count;
        CHECK(patch_anchors(h, size, stride) == count);
    }
}

TEST_CASE("patches: extracted windows are pixel-aligned") {
    auto pairs = tiny_dataset(1, 16, 5);
    const auto& p = pairs.front();
    auto patches = extract_patches(p.cube, p.rgb, 8, 4);
    REQUIRE(static_cast<int64_t>(patches.size()) == patch_count(16, 16, 8, 4));
    // anchors: 0,4,8 per axis; check the (1,2) patch
    const int ay = 1, ax = 2;
    const auto& sample = patches[static_cast<size_t>(ay * 3 + ax)];
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
                CHECK(sample.rgb[(static_cast<int64_t>(c) * 8 + y) * 8 + x] ==
                      p.rgb.at(c, 4 * ay + y, 4 * ax + x));
    for (int b = 0; b < 31; ++b)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
                CHECK(sample.hsi[(static_cast<int64_t>(b) * 8 + y) * 8 + x] ==
                      p.cube.at(b, 4 * ay + y, 4 * ax + x));
}

TEST_CASE("lr schedule: stepped decay") {
    TrainConfig cfg;
    CHECK(lr_at_epoch(0, cfg) == doctest::Approx(5e-5).epsilon(1e-12));
    CHECK(lr_at_epoch(9, cfg) == doctest::Approx(5e-5).epsilon(1e-12));
    CHECK(lr_at_epoch(10, cfg) == doctest::Approx(4.65e-5).epsilon(1e-9));
    CHECK(lr_at_epoch(95, cfg) == doctest::Approx(5e-5 * std::pow(0.93, 9)).epsilon(1e-12));
    CHECK_THROWS_AS(lr_at_epoch(-1, cfg), std::invalid_argument);
}

TEST_CASE("adam: first step moves by about -lr under unit gradient") {
    TrainConfig cfg;
    cfg.weight_decay = 0.0;
    std::vector<double> theta = {0.3, -0.7, 1.1};
    std::vector<double> grad = {1.0, 1.0, 1.0};
    std::vector<double> m(3, 0.0), v(3, 0.0);
    const double lr = 1e-3;
    adam_update(theta, grad, m, v, 1, lr, cfg);
    // bias-corrected m-hat = 1, v-hat = 1: step = lr / (1 + eps)
    CHECK(theta[0] == doctest::Approx(0.3 - lr).epsilon(1e-7));
    CHECK(theta[1] == doctest::Approx(-0.7 - lr).epsilon(1e-7));
    CHECK(theta[2] == doctest::Approx(1.1 - lr).epsilon(1e-7));
}

TEST_CASE("adam: zero gradient with no decay leaves parameters unchanged") {
    TrainConfig cfg;
    cfg.weight_decay = 0.0;
    std::vector<double> theta = {0.5, -0.25};
    std::vector<double> grad = {0.0, 0.0};
    std::vector<double> m(2, 0.0), v(2, 0.0);
    for (int t = 1; t <= 5; ++t) adam_update(theta, grad, m, v, t, 1e-3, cfg);
    CHECK(theta[0] == 0.5);
    CHECK(theta[1] == -0.25);
}

TEST_CASE("adam: weight decay alone strictly shrinks positive parameters") {
    TrainConfig cfg;
    cfg.weight_decay = 1e-2;
    std::vector<double> theta = {0.5};
    std::vector<double> grad = {0.0};
    std::vector<double> m(1, 0.0), v(1, 0.0);
    double prev = theta[0];
    for (int t = 1; t <= 10; ++t) {
        adam_update(theta, grad, m, v, t, 1e-3, cfg);
        CHECK(theta[0] < prev);
        prev = theta[0];
    }
}

TEST_CASE("adam: bounded update under a constant gradient") {
    TrainConfig cfg;
    cfg.weight_decay = 0.0;
    Rng rng(31);
    std::vector<double> theta(8), grad(8);
    for (auto& t : theta) t = rng.uniform(-1.0, 1.0);
    for (auto& g : grad) g = rng.uniform(-2.0, 2.0);
    std::vector<double> m(8, 0.0), v(8, 0.0);
    const double lr = 7e-4;
    std::vector<double> prev = theta;
    for (int t = 1; t <= 40; ++t) {
        adam_update(theta, grad, m, v, t, lr, cfg);
        for (size_t i = 0; i < theta.size(); ++i)
            CHECK(std::abs(theta[i] - prev[i]) <= lr * (1.0 + 1e-9));
        prev = theta;
    }
}

TEST_CASE("adam: missing gradient detected") {
    NetworkConfig ncfg;
    ncfg.scales = 1;
    ncfg.base_features = 4;
    auto net = build_network<float>(ncfg);
    Rng rng(1);
    net.init_he_normal(rng);
    auto state = AdamState<float>::init(net);
    TrainConfig cfg;
    CHECK_THROWS_AS(adam_step(net, state, 1e-3, cfg), std::invalid_argument);
}

TEST_CASE("train: deterministic per seed, log shape, lr decay visible") {
    auto run = [](uint64_t seed) {
        auto pairs = tiny_dataset(2, 16, 7);
        NetworkConfig ncfg;
        ncfg.scales = 1;
        ncfg.base_features = 4;
        auto net = build_network<float>(ncfg);
        Rng init_rng(seed);
        net.init_he_normal(init_rng);
        TrainConfig cfg;
        cfg.epochs = 12;
        cfg.lr_step = 10;
        cfg.batch_size = 4;
        cfg.patch_size = 8;
        cfg.patch_stride = 8;
        cfg.seed = seed;
        std::vector<ImagePair> eval_set = {pairs.back()};
        std::vector<ImagePair> train_set = {pairs.front()};
        return train(net, train_set, eval_set, cfg);
    };

    TrainLog a = run(5), b = run(5);
    REQUIRE(a.epochs.size() == 12);
    REQUIRE(b.epochs.size() == 12);
    for (size_t i = 0; i < a.epochs.size(); ++i) {
        CHECK(a.epochs[i].train_mse == b.epochs[i].train_mse);
        CHECK(a.epochs[i].rmse1 == b.epochs[i].rmse1);
        CHECK(a.epochs[i].sam == b.epochs[i].sam);
    }
    // the epoch-10 rate is 0.93x the epoch-9 rate
    CHECK(a.epochs[10].lr == doctest::Approx(0.93 * a.epochs[9].lr).epsilon(1e-12));
    // metrics populated and finite
    for (const auto& e : a.epochs) {
        CHECK(std::isfinite(e.train_mse));
        CHECK(std::isfinite(e.rmse1));
        CHECK(std::isfinite(e.sam));
    }
}

TEST_CASE("train: csv export has one row per epoch and reproduces bit-exactly") {
    auto pairs = tiny_dataset(1, 16, 9);
    NetworkConfig ncfg;
    ncfg.scales = 1;
    ncfg.base_features = 4;
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 4;
    cfg.patch_size = 8;
    cfg.patch_stride = 8;
    cfg.seed = 3;

    auto run_csv = [&]() {
        auto net = build_network<float>(ncfg);
        Rng init_rng(cfg.seed);
        net.init_he_normal(init_rng);
        TrainLog log = train(net, pairs, {}, cfg);
        const auto path = std::filesystem::temp_directory_path() / "ssr_trainlog_test.csv";
        write_train_log_csv(log, path.string());
        std::ifstream f(path);
        std::stringstream ss;
        ss << f.rdbuf();
        std::filesystem::remove(path);
        return ss.str();
    };

    const std::string csv1 = run_csv();
    const std::string csv2 = run_csv();
    CHECK(csv1 == csv2);

    int lines = 0;
    for (char c : csv1)
        if (c == '\n') ++lines;
    CHECK(lines == cfg.epochs + 1);  // header + one row per epoch
    CHECK(csv1.rfind("epoch,lr,train_mse,rmse1,rmse2,rrmse1,rrmse2,sam\n", 0) == 0);
}

TEST_CASE("train: 20-epoch moving average of the loss is non-increasing") {
    auto pairs = tiny_dataset(2, 16, 21);
    NetworkConfig ncfg;
    ncfg.scales = 1;
    ncfg.base_features = 4;
    auto net = build_network<float>(ncfg);
    Rng init_rng(21);
    net.init_he_normal(init_rng);
    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.batch_size = 16;
    cfg.patch_size = 8;
    cfg.patch_stride = 1;  // dense: descent per epoch well above dropout noise
    cfg.seed = 21;
    TrainLog log = train(net, pairs, {}, cfg);

    std::vector<double> ma;
    double window = 0.0;
    for (size_t i = 0; i < log.epochs.size(); ++i) {
        window += log.epochs[i].train_mse;
        if (i >= 20) window -= log.epochs[i - 20].train_mse;
        if (i >= 19) ma.push_back(window / 20.0);
    }
    REQUIRE(ma.size() > 1);
    for (size_t i = 1; i < ma.size(); ++i) CHECK(ma[i] <= ma[i - 1]);
}

TEST_CASE("train: empty dataset rejected, bad config rejected") {
    NetworkConfig ncfg;
    ncfg.scales = 1;
    ncfg.base_features = 4;
    auto net = build_network<float>(ncfg);
    TrainConfig cfg;
    CHECK_THROWS_AS(train(net, {}, {}, cfg), std::invalid_argument);

    TrainConfig bad;
    bad.lr_gamma = 0.0;
    auto pairs = tiny_dataset(1, 16, 2);
    CHECK_THROWS_AS(train(net, pairs, {}, bad), std::invalid_argument);
}
