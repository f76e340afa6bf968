// Command-line front end: synthesize datasets, train, evaluate, predict.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ssr/ssr.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Every setting a run needs, persisted verbatim next to the outputs so any
// result directory can be reproduced from its own snapshot.
struct RunConfig {
    ssr::NetworkConfig net;
    ssr::TrainConfig train;
    double eval_ratio = 0.2;
    std::string data;
    std::string out;
};

json to_json(const RunConfig& cfg) {
    return json{{"scales", cfg.net.scales},
                {"base_features", cfg.net.base_features},
                {"in_channels", cfg.net.in_channels},
                {"out_channels", cfg.net.out_channels},
                {"dropout_rate", cfg.net.dropout_rate},
                {"lrelu_slope", cfg.net.lrelu_slope},
                {"bn_eps", cfg.net.bn_eps},
                {"bn_momentum", cfg.net.bn_momentum},
                {"epochs", cfg.train.epochs},
                {"lr0", cfg.train.lr0},
                {"lr_gamma", cfg.train.lr_gamma},
                {"lr_step", cfg.train.lr_step},
                {"weight_decay", cfg.train.weight_decay},
                {"adam_beta1", cfg.train.adam_beta1},
                {"adam_beta2", cfg.train.adam_beta2},
                {"adam_eps", cfg.train.adam_eps},
                {"batch_size", cfg.train.batch_size},
                {"patch_size", cfg.train.patch_size},
                {"patch_stride", cfg.train.patch_stride},
                {"seed", cfg.train.seed},
                {"eval_ratio", cfg.eval_ratio},
                {"data", cfg.data},
                {"out", cfg.out}};
}

RunConfig from_json(const json& j, const std::string& origin) {
    static const std::vector<std::string> known = {
        "scales",      "base_features", "in_channels", "out_channels", "dropout_rate",
        "lrelu_slope", "bn_eps",        "bn_momentum", "epochs",       "lr0",
        "lr_gamma",    "lr_step",       "weight_decay", "adam_beta1",  "adam_beta2",
        "adam_eps",    "batch_size",    "patch_size",  "patch_stride", "seed",
        "eval_ratio",  "data",          "out"};
    if (!j.is_object()) throw ssr::ConfigError(origin + ": config must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw ssr::ConfigError(origin + ": unknown config key '" + it.key() + "'");
    }
    RunConfig cfg;
    try {
        auto get = [&](const char* key, auto& dst) {
            if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
        };
        get("scales", cfg.net.scales);
        get("base_features", cfg.net.base_features);
        get("in_channels", cfg.net.in_channels);
        get("out_channels", cfg.net.out_channels);
        get("dropout_rate", cfg.net.dropout_rate);
        get("lrelu_slope", cfg.net.lrelu_slope);
        get("bn_eps", cfg.net.bn_eps);
        get("bn_momentum", cfg.net.bn_momentum);
        get("epochs", cfg.train.epochs);
        get("lr0", cfg.train.lr0);
        get("lr_gamma", cfg.train.lr_gamma);
        get("lr_step", cfg.train.lr_step);
        get("weight_decay", cfg.train.weight_decay);
        get("adam_beta1", cfg.train.adam_beta1);
        get("adam_beta2", cfg.train.adam_beta2);
        get("adam_eps", cfg.train.adam_eps);
        get("batch_size", cfg.train.batch_size);
        get("patch_size", cfg.train.patch_size);
        get("patch_stride", cfg.train.patch_stride);
        get("seed", cfg.train.seed);
        get("eval_ratio", cfg.eval_ratio);
        get("data", cfg.data);
        get("out", cfg.out);
    } catch (const json::exception& e) {
        throw ssr::ConfigError(origin + ": bad config value: " + e.what());
    }
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ssr::ConfigError("cannot open config file " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ssr::ConfigError("config parse failure in " + path + ": " + e.what());
    }
    return from_json(j, path);
}

void write_json_file(const json& j, const fs::path& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ssr::DataError("cannot write " + path.string());
    f << j.dump(2) << "\n";
}

void ensure_out_dir(const std::string& out) {
    if (out.empty()) throw ssr::ConfigError("--out is required");
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw ssr::DataError("cannot create output directory " + out);
}

std::string image_stem(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "img_%03d", index);
    return buf;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string out;
    int images = 8;
    std::string size = "64x64";
    int materials = 4;
    uint64_t seed = 0;
};

std::pair<int, int> parse_size(const std::string& s) {
    const auto x = s.find('x');
    if (x == std::string::npos) throw ssr::ConfigError("--size expects HxW, e.g. 64x64");
    try {
        const int h = std::stoi(s.substr(0, x));
        const int w = std::stoi(s.substr(x + 1));
        if (h < 1 || w < 1) throw ssr::ConfigError("--size extents must be positive");
        return {h, w};
    } catch (const std::logic_error&) {
        throw ssr::ConfigError("--size expects HxW, e.g. 64x64");
    }
}

int cmd_synth(const SynthArgs& args) {
    ensure_out_dir(args.out);
    const auto [h, w] = parse_size(args.size);
    if (args.images < 1) throw ssr::ConfigError("--images must be positive");
    if (args.materials < 1) throw ssr::ConfigError("--materials must be positive");

    const ssr::ResponseMatrix response = ssr::default_response();
    ssr::Rng master(args.seed);
    std::vector<ssr::DatasetEntry> entries;
    for (int i = 0; i < args.images; ++i) {
        ssr::Rng child = master.child(static_cast<uint64_t>(i));
        const ssr::HyperCube cube = ssr::synth_scene(child, h, w, args.materials);
        const ssr::RgbImage rgb = ssr::project_to_rgb(cube, response);
        const std::string stem = image_stem(i);
        ssr::write_hscube(cube, (fs::path(args.out) / (stem + ".hsc")).string());
        ssr::write_ppm(rgb, (fs::path(args.out) / (stem + ".ppm")).string());
        entries.push_back({stem + ".hsc", stem + ".ppm"});
    }
    ssr::write_manifest(entries, (fs::path(args.out) / "manifest.json").string());
    write_json_file(json{{"out", args.out},
                         {"images", args.images},
                         {"size", args.size},
                         {"materials", args.materials},
                         {"seed", args.seed}},
                    fs::path(args.out) / "synth_config.json");
    std::cout << "wrote " << args.images << " cube/ppm pairs to " << args.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::string data;
    std::string out;
    std::optional<uint64_t> seed;
};

int cmd_train(const TrainArgs& args) {
    RunConfig cfg = args.config.empty() ? RunConfig{} : load_config_file(args.config);
    if (!args.data.empty()) cfg.data = args.data;
    if (!args.out.empty()) cfg.out = args.out;
    if (args.seed) cfg.train.seed = *args.seed;
    if (cfg.data.empty()) throw ssr::ConfigError("train: no dataset (use --data or config)");
    ensure_out_dir(cfg.out);
    if (cfg.eval_ratio < 0.0 || cfg.eval_ratio >= 1.0)
        throw ssr::ConfigError("train: eval_ratio must lie in [0,1)");

    std::vector<ssr::ImagePair> pairs = ssr::load_dataset(cfg.data);
    std::vector<ssr::ImagePair> train_set, eval_set;
    if (cfg.eval_ratio == 0.0 || pairs.size() < 2) {
        train_set = std::move(pairs);
    } else {
        auto split = ssr::split_dataset(std::move(pairs), 1.0 - cfg.eval_ratio, cfg.train.seed);
        train_set = std::move(split.first);
        eval_set = std::move(split.second);
    }

    auto net = ssr::build_network<float>(cfg.net);
    ssr::Rng init_rng(cfg.train.seed);
    net.init_he_normal(init_rng);

    std::cout << "training on " << train_set.size() << " images (" << eval_set.size()
              << " held out), " << net.num_parameters() << " parameters\n";
    ssr::TrainLog log = ssr::train(net, train_set, eval_set, cfg.train,
                                   [](const ssr::EpochLog& e) {
                                       std::printf("epoch %3d  lr %.3e  mse %.6e\n", e.epoch,
                                                   e.lr, e.train_mse);
                                       std::fflush(stdout);
                                   });

    ssr::save_weights(net, (fs::path(cfg.out) / "weights.ssrw").string());
    ssr::write_train_log_csv(log, (fs::path(cfg.out) / "trainlog.csv").string());
    write_json_file(to_json(cfg), fs::path(cfg.out) / "config.json");
    std::cout << "wrote weights.ssrw, trainlog.csv, config.json to " << cfg.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string weights;
    std::string config;
    std::string data;
    std::string out;
    std::string baseline;  // spline | linreg
    std::string fit_data;
    bool self_eval = false;
};

// Locates the architecture snapshot for a weight file.
RunConfig config_for_weights(const EvalArgs& args) {
    std::string path = args.config;
    if (path.empty()) {
        const fs::path sibling = fs::path(args.weights).parent_path() / "config.json";
        if (!fs::exists(sibling))
            throw ssr::ConfigError(
                "eval: pass --config (no config.json found next to the weights)");
        path = sibling.string();
    }
    return load_config_file(path);
}

int cmd_eval(const EvalArgs& args) {
    if (args.data.empty()) throw ssr::ConfigError("eval: --data is required");
    ensure_out_dir(args.out);
    const int modes = static_cast<int>(!args.weights.empty()) +
                      static_cast<int>(!args.baseline.empty()) +
                      static_cast<int>(args.self_eval);
    if (modes != 1)
        throw ssr::ConfigError("eval: pick exactly one of --weights, --baseline, --self-eval");

    std::vector<ssr::ImagePair> pairs = ssr::load_dataset(args.data);
    if (pairs.empty()) throw ssr::DataError("eval: dataset is empty");

    std::string method;
    std::function<ssr::HyperCube(const ssr::ImagePair&)> predict;

    ssr::Network<float> net;
    ssr::LinearReconstruction linreg;
    if (!args.weights.empty()) {
        RunConfig cfg = config_for_weights(args);
        net = ssr::build_network<float>(cfg.net);
        ssr::load_weights(net, args.weights);
        method = "cnn";
        predict = [&](const ssr::ImagePair& p) { return ssr::predict_cube(net, p.rgb); };
    } else if (args.baseline == "spline") {
        method = "spline";
        predict = [](const ssr::ImagePair& p) { return ssr::spline_baseline(p.rgb); };
    } else if (args.baseline == "linreg") {
        const std::string fit_manifest = args.fit_data.empty() ? args.data : args.fit_data;
        std::vector<ssr::ImagePair> fit_pairs = ssr::load_dataset(fit_manifest);
        std::vector<ssr::HyperCube> cubes;
        std::vector<ssr::RgbImage> rgbs;
        for (auto& p : fit_pairs) {
            cubes.push_back(std::move(p.cube));
            rgbs.push_back(std::move(p.rgb));
        }
        linreg = ssr::fit_rgb_to_spectrum(cubes, rgbs);
        method = "linreg";
        predict = [&](const ssr::ImagePair& p) { return ssr::linreg_predict(linreg, p.rgb); };
    } else if (args.self_eval) {
        method = "self";
        predict = [](const ssr::ImagePair& p) { return p.cube; };
    } else {
        throw ssr::ConfigError("eval: unknown baseline '" + args.baseline + "'");
    }

    std::vector<ssr::MetricReport> reports;
    for (const auto& pair : pairs) {
        const ssr::HyperCube est = predict(pair);
        reports.push_back(ssr::evaluate_all(pair.cube, est, pair.name));
        const auto map = ssr::error_map(pair.cube, est);
        ssr::write_ppm(ssr::error_map_image(map, pair.cube.height, pair.cube.width),
                       (fs::path(args.out) / ("err_" + pair.name + ".ppm")).string());
        ssr::write_hscube(ssr::error_map_cube(map, pair.cube.height, pair.cube.width),
                          (fs::path(args.out) / ("err_" + pair.name + ".hsc")).string());
    }
    ssr::write_metric_csv(method, reports, (fs::path(args.out) / "metrics.csv").string());
    write_json_file(json{{"data", args.data},
                         {"out", args.out},
                         {"weights", args.weights},
                         {"baseline", args.baseline},
                         {"self_eval", args.self_eval},
                         {"fit_data", args.fit_data}},
                    fs::path(args.out) / "eval_config.json");

    const ssr::MetricReport avg = ssr::average_report(reports);
    std::printf("%s average: rmse1 %.6g rmse2 %.6g rrmse1 %.6g rrmse2 %.6g sam %.6g\n",
                method.c_str(), avg.rmse1, avg.rmse2, avg.rrmse1, avg.rrmse2, avg.sam_degrees);
    return 0;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

struct PredictArgs {
    std::string weights;
    std::string config;
    std::string rgb;
    std::string out;
};

int cmd_predict(const PredictArgs& args) {
    if (args.weights.empty() || args.rgb.empty() || args.out.empty())
        throw ssr::ConfigError("predict: --weights, --rgb and --out are required");
    EvalArgs lookup;
    lookup.weights = args.weights;
    lookup.config = args.config;
    RunConfig cfg = config_for_weights(lookup);
    auto net = ssr::build_network<float>(cfg.net);
    ssr::load_weights(net, args.weights);

    const ssr::RgbImage rgb = ssr::read_ppm(args.rgb);
    const ssr::HyperCube cube = ssr::predict_cube(net, rgb);
    ssr::write_hscube(cube, args.out);
    std::cout << "wrote " << cube.bands << "x" << cube.height << "x" << cube.width
              << " cube to " << args.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectral super-resolution: multi-scale CNN, baselines, metrics"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic cube/ppm dataset");
    synth_cmd->add_option("--out", synth.out, "Output directory")->required();
    synth_cmd->add_option("--images", synth.images, "Number of images");
    synth_cmd->add_option("--size", synth.size, "Image size HxW");
    synth_cmd->add_option("--materials", synth.materials, "Materials per scene");
    synth_cmd->add_option("--seed", synth.seed, "Generator seed");

    TrainArgs train;
    uint64_t train_seed = 0;
    auto* train_cmd = app.add_subcommand("train", "Train the network on a manifest");
    train_cmd->add_option("--config", train.config, "Run config JSON");
    train_cmd->add_option("--data", train.data, "Dataset manifest");
    train_cmd->add_option("--out", train.out, "Output directory");
    auto* seed_opt = train_cmd->add_option("--seed", train_seed, "Seed override");

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model or baseline");
    eval_cmd->add_option("--weights", eval.weights, "Weight file");
    eval_cmd->add_option("--config", eval.config, "Run config JSON for the weights");
    eval_cmd->add_option("--data", eval.data, "Evaluation manifest")->required();
    eval_cmd->add_option("--out", eval.out, "Output directory")->required();
    eval_cmd->add_option("--baseline", eval.baseline, "spline or linreg")
        ->check(CLI::IsMember({"spline", "linreg"}));
    eval_cmd->add_option("--fit-data", eval.fit_data, "Manifest for fitting linreg");
    eval_cmd->add_flag("--self-eval", eval.self_eval, "Score ground truth against itself");

    PredictArgs predict;
    auto* predict_cmd = app.add_subcommand("predict", "Reconstruct a cube from one PPM");
    predict_cmd->add_option("--weights", predict.weights, "Weight file")->required();
    predict_cmd->add_option("--config", predict.config, "Run config JSON for the weights");
    predict_cmd->add_option("--rgb", predict.rgb, "Input PPM image")->required();
    predict_cmd->add_option("--out", predict.out, "Output cube path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth_cmd->parsed()) return cmd_synth(synth);
        if (train_cmd->parsed()) {
            if (seed_opt->count() > 0) train.seed = train_seed;
            return cmd_train(train);
        }
        if (eval_cmd->parsed()) return cmd_eval(eval);
        if (predict_cmd->parsed()) return cmd_predict(predict);
        return 2;
    } catch (const ssr::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ssr::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const ssr::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const std::domain_error& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
