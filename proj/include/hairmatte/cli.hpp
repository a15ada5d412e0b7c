#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hairmatte/checkpoint.hpp"
#include "hairmatte/dataset.hpp"
#include "hairmatte/eval.hpp"
#include "hairmatte/recolor.hpp"
#include "hairmatte/runconfig.hpp"
#include "hairmatte/train.hpp"

namespace hairmatte {
namespace cli_detail {

namespace fs = std::filesystem;

struct Extras {
    std::vector<std::string> inputs;
    std::string mask_path;
    std::string color = "0.8,0.1,0.1";
    std::string out_file;
    std::string spec_file;
};

inline void ensure_out_dir(const RunConfig& cfg) { fs::create_directories(cfg.out_dir); }

inline void write_config(const RunConfig& cfg) {
    std::ofstream out(fs::path(cfg.out_dir) / "config.txt");
    require(out.good(), ErrorKind::io, "cannot write config under " + cfg.out_dir);
    out << cfg.canonical_text();
}

inline std::array<float, 3> parse_color(const std::string& s) {
    std::array<float, 3> rgb{};
    int consumed = 0;
    const int got = std::sscanf(s.c_str(), "%f,%f,%f%n", &rgb[0], &rgb[1], &rgb[2], &consumed);
    require(got == 3 && consumed == static_cast<int>(s.size()), ErrorKind::usage,
            "color must be r,g,b with components in [0,1], got \"" + s + "\"");
    for (float v : rgb) {
        require(v >= 0.0f && v <= 1.0f, ErrorKind::usage,
                "color component " + format_number(v) + " outside [0,1]");
    }
    return rgb;
}

// Input images are resized to the model resolution when needed; the loader
// assumes pre-cropped portraits.
inline Tensor load_model_input(const std::string& path, int input_size) {
    Tensor img = load_image(path);
    require(img.c() == 3, ErrorKind::data, "input " + path + " must be a 3-channel image");
    return resize_bilinear(img, input_size, input_size);
}

inline int cmd_synth(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    SynthConfig base;
    base.seed = cfg.seed;
    base.canvas = cfg.synth_size;
    base.background = cfg.synth_background;
    base.count = cfg.synth_train + cfg.synth_val + cfg.synth_test;
    require(base.count > 0, ErrorKind::usage, "synth: empty dataset requested");

    // Coarse labels, when enabled, degrade only the training split; val and
    // test keep the rasterizer's exact masks.
    SynthConfig coarse = base;
    coarse.coarse_labels = cfg.synth_coarse;
    coarse.coarse_radius_max = cfg.synth_coarse_radius;

    std::vector<std::pair<Sample, std::string>> rows;
    for (int i = 0; i < base.count; ++i) {
        const bool train = i < cfg.synth_train;
        const std::string split =
            train ? "train" : (i < cfg.synth_train + cfg.synth_val ? "val" : "test");
        Sample s = generate_synthetic_sample(train ? coarse : base, i);
        validate_sample(s);
        rows.emplace_back(std::move(s), split);
    }
    write_dataset(cfg.out_dir, rows);
    write_config(cfg);
    std::cout << "wrote " << rows.size() << " samples (" << cfg.synth_train << " train, "
              << cfg.synth_val << " val, " << cfg.synth_test << " test) to " << cfg.out_dir
              << "\n";
    return 0;
}

inline int cmd_train(const RunConfig& cfg) {
    cfg.model.validate();
    require(!cfg.data_dir.empty(), ErrorKind::usage, "train: --data is required");
    const Dataset train_set = load_dataset(cfg.data_dir, "train");
    const Dataset val_set = load_dataset(cfg.data_dir, "val");
    ensure_out_dir(cfg);
    write_config(cfg);

    Model model = build_model(cfg.model, cfg.seed);
    const FitConfig fit_cfg = cfg.fit_config();
    FitResult result = fit(model, train_set, val_set, fit_cfg);

    TrainingMeta meta;
    meta.epoch = result.best_epoch;
    meta.history = result.history;
    const std::string ckpt = (fs::path(cfg.out_dir) / "model.ckpt").string();
    save_checkpoint(model, ckpt, &result.optimizer_state, &meta);
    write_history((fs::path(cfg.out_dir) / "history.tsv").string(), result.history);

    std::cout << "trained " << variant_name(cfg.model.variant) << " for " << cfg.epochs
              << " epochs on " << train_set.size() << " samples\n";
    if (result.best_epoch > 0) {
        std::cout << "best epoch " << result.best_epoch << " with val IoU "
                  << format_number(result.best_val_iou) << "\n";
    } else {
        std::cout << "no epochs ran; wrote the initial parameters\n";
    }
    std::cout << "checkpoint: " << ckpt << "\n";
    return 0;
}

// Rejects explicit model flags that contradict the loaded checkpoint.
inline void check_spec_overrides(const ModelSpec& requested, const ModelSpec& loaded,
                                 const std::vector<std::string>& explicit_flags) {
    for (const auto& flag : explicit_flags) {
        std::string req, got;
        if (flag == "--variant") {
            req = variant_name(requested.variant);
            got = variant_name(loaded.variant);
        } else if (flag == "--input-size") {
            req = std::to_string(requested.input_size);
            got = std::to_string(loaded.input_size);
        } else if (flag == "--classes") {
            req = std::to_string(requested.num_classes);
            got = std::to_string(loaded.num_classes);
        } else if (flag == "--width") {
            req = format_number(requested.width);
            got = format_number(loaded.width);
        } else if (flag == "--decoder-depth") {
            req = std::to_string(requested.decoder_depth);
            got = std::to_string(loaded.decoder_depth);
        }
        require(req == got, ErrorKind::data,
                "checkpoint spec mismatch: " + flag + " requests " + req +
                    " but the checkpoint was built with " + got);
    }
}

inline int cmd_infer(const RunConfig& cfg, const Extras& extras,
                     const std::vector<std::string>& explicit_flags) {
    require(!cfg.checkpoint_path.empty(), ErrorKind::usage, "infer: --checkpoint is required");
    require(!extras.inputs.empty(), ErrorKind::usage, "infer: at least one input image required");
    Model model = load_checkpoint(cfg.checkpoint_path);
    check_spec_overrides(cfg.model, model.spec, explicit_flags);
    ensure_out_dir(cfg);

    for (const auto& path : extras.inputs) {
        const Tensor img = load_model_input(path, model.spec.input_size);
        Tensor prob = predict_hair_prob(
            model, img, cfg.hair_class,
            cfg.refine ? std::optional<GuidedFilterParams>(cfg.guided_filter_params())
                       : std::nullopt);
        const std::string out =
            (fs::path(cfg.out_dir) / (fs::path(path).stem().string() + "_mask.pgm")).string();
        save_image(out, prob);
        std::cout << out << "\n";
    }
    return 0;
}

inline int cmd_eval(const RunConfig& cfg, const std::vector<std::string>& explicit_flags) {
    require(!cfg.checkpoint_path.empty(), ErrorKind::usage, "eval: --checkpoint is required");
    require(!cfg.data_dir.empty(), ErrorKind::usage, "eval: --data is required");
    Model model = load_checkpoint(cfg.checkpoint_path);
    check_spec_overrides(cfg.model, model.spec, explicit_flags);
    const Dataset data = load_dataset(cfg.data_dir, cfg.split);

    const MetricsReport report = evaluate_dataset(
        model, data,
        cfg.refine ? std::optional<GuidedFilterParams>(cfg.guided_filter_params()) : std::nullopt,
        cfg.hair_class);
    const std::string text = report_to_text(report);
    std::cout << text;
    ensure_out_dir(cfg);
    std::ofstream out(fs::path(cfg.out_dir) / "metrics.tsv");
    require(out.good(), ErrorKind::io, "cannot write metrics under " + cfg.out_dir);
    out << text;
    return 0;
}

inline int cmd_refine(const RunConfig& cfg, const Extras& extras) {
    require(extras.inputs.size() == 1, ErrorKind::usage, "refine: exactly one input image");
    require(!extras.mask_path.empty(), ErrorKind::usage, "refine: --mask is required");
    const Tensor img = load_image(extras.inputs[0]);
    Tensor coarse = load_image(extras.mask_path);
    require(coarse.c() == 1, ErrorKind::data, "refine: mask must be single-channel");
    require(coarse.h() == img.h() && coarse.w() == img.w(), ErrorKind::data,
            "refine: image and mask sizes differ");
    const Tensor refined = refine_mask(img, coarse, cfg.guided_filter_params());
    const std::string out = extras.out_file.empty() ? "refined.pgm" : extras.out_file;
    save_image(out, refined);
    std::cout << out << "\n";
    return 0;
}

inline int cmd_recolor(const RunConfig& cfg, const Extras& extras) {
    (void)cfg;
    require(extras.inputs.size() == 1, ErrorKind::usage, "recolor: exactly one input image");
    require(!extras.mask_path.empty(), ErrorKind::usage, "recolor: --mask is required");
    const Tensor img = load_image(extras.inputs[0]);
    Tensor mask = load_image(extras.mask_path);
    require(mask.c() == 1, ErrorKind::data, "recolor: mask must be single-channel");
    require(mask.h() == img.h() && mask.w() == img.w(), ErrorKind::data,
            "recolor: image and mask sizes differ");
    const auto rgb = parse_color(extras.color);
    const Tensor out_img = recolor(img, mask, rgb);
    const std::string out = extras.out_file.empty() ? "recolored.ppm" : extras.out_file;
    save_image(out, out_img);
    std::cout << out << "\n";
    return 0;
}

inline int cmd_bench(const RunConfig& cfg) {
    Model model = cfg.checkpoint_path.empty() ? build_model(cfg.model, cfg.seed)
                                              : load_checkpoint(cfg.checkpoint_path);
    const ModelSpec spec = model.spec;
    require(cfg.bench_iters >= 1, ErrorKind::usage, "bench: iterations must be >= 1");

    Rng rng(cfg.seed ^ 0x62656e6368ULL);
    const Tensor input =
        Tensor::random_uniform(Shape{1, 3, spec.input_size, spec.input_size}, rng, 0.0f, 1.0f);

    auto run_once = [&]() {
        const auto t0 = std::chrono::steady_clock::now();
        Tensor out = model.forward(input);
        const auto t1 = std::chrono::steady_clock::now();
        (void)out;
        return std::chrono::duration<double, std::milli>(t1 - t0).count();
    };
    run_once();  // warm
    std::vector<double> times(cfg.bench_iters);
    for (auto& t : times) t = run_once();
    std::sort(times.begin(), times.end());
    const double median = times[times.size() / 2];
    const double p95 = times[std::min(times.size() - 1,
                                      static_cast<std::size_t>(std::ceil(times.size() * 0.95)) - 1)];

    ModelSpec seg = spec;
    seg.variant = Variant::hairsegnet;
    ModelSpec matte = spec;
    matte.variant = Variant::hairmattenet;
    const std::int64_t seg_macs = build_model(seg, 0).mac_count();
    const std::int64_t matte_macs = build_model(matte, 0).mac_count();

    std::string report;
    report += "variant=" + std::string(variant_name(spec.variant)) + "\n";
    report += "input_size=" + std::to_string(spec.input_size) + "\n";
    report += "width=" + format_number(spec.width) + "\n";
    report += "iterations=" + std::to_string(cfg.bench_iters) + "\n";
    report += "median_ms=" + format_number(median) + "\n";
    report += "p95_ms=" + format_number(p95) + "\n";
    report += "macs=" + std::to_string(model.mac_count()) + "\n";
    report += "hairsegnet_macs=" + std::to_string(seg_macs) + "\n";
    report += "hairmattenet_macs=" + std::to_string(matte_macs) + "\n";
    report += "mac_ratio_matte_over_seg=" +
              format_number(static_cast<double>(matte_macs) / static_cast<double>(seg_macs)) +
              "\n";
    std::cout << report;
    ensure_out_dir(cfg);
    std::ofstream out(fs::path(cfg.out_dir) / "bench.txt");
    require(out.good(), ErrorKind::io, "cannot write bench report under " + cfg.out_dir);
    out << report;

    require(matte_macs < seg_macs, ErrorKind::numeric,
            "bench: expected the skip-connection variant to need fewer MACs (" +
                std::to_string(matte_macs) + " vs " + std::to_string(seg_macs) + ")");
    return 0;
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv) {
    using namespace cli_detail;
    CLI::App app{"hair matting models: training, inference, refinement and evaluation"};
    app.require_subcommand(1);

    RunConfig cfg;
    Extras extras;

    std::vector<CLI::Option*> spec_opts;
    auto add_common = [&](CLI::App* sub, bool with_model_spec) {
        sub->add_option("--seed", cfg.seed, "deterministic seed");
        sub->add_option("--out", cfg.out_dir, "output directory");
        sub->add_option("--spec", extras.spec_file,
                        "config file (key=value); overrides the flags");
        if (with_model_spec) {
            std::string variant = "hairmattenet";
            auto* v = sub->add_option_function<std::string>(
                "--variant", [&cfg](const std::string& s) { cfg.model.variant = parse_variant(s); },
                "hairsegnet | hairmattenet");
            auto* i = sub->add_option("--input-size", cfg.model.input_size, "square input size");
            auto* c = sub->add_option("--classes", cfg.model.num_classes, "output classes");
            auto* w = sub->add_option("--width", cfg.model.width, "channel width multiplier");
            auto* d = sub->add_option("--decoder-depth", cfg.model.decoder_depth,
                                      "decoder channels (16|32|64|128)");
            sub->add_flag_function(
                "--no-batchnorm",
                [&cfg](std::int64_t) { cfg.model.use_batchnorm = false; },
                "disable batch normalization");
            spec_opts.insert(spec_opts.end(), {v, i, c, w, d});
            (void)variant;
        }
    };
    auto add_gf = [&](CLI::App* sub) {
        sub->add_option("--radius", cfg.gf_radius, "guided filter radius");
        sub->add_option("--eps", cfg.gf_eps, "guided filter regularization");
        sub->add_option_function<std::string>(
            "--guide",
            [&cfg](const std::string& s) {
                require(s == "gray" || s == "rgb", ErrorKind::usage,
                        "--guide must be gray or rgb");
                cfg.gf_guide = s == "rgb" ? GuideMode::rgb : GuideMode::gray;
            },
            "guided filter guide mode (gray|rgb)");
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic strand dataset");
    add_common(synth, false);
    synth->add_option("--train-count", cfg.synth_train, "training samples");
    synth->add_option("--val-count", cfg.synth_val, "validation samples");
    synth->add_option("--test-count", cfg.synth_test, "test samples");
    synth->add_option("--size", cfg.synth_size, "canvas size in pixels");
    synth->add_option_function<std::string>(
        "--background",
        [&cfg](const std::string& s) { cfg.synth_background = parse_background_mode(s); },
        "flat | gradient | textured");
    synth->add_flag("--coarse", cfg.synth_coarse, "degrade training masks (dilate/erode)");
    synth->add_option("--coarse-radius", cfg.synth_coarse_radius, "max degradation radius");

    auto* train = app.add_subcommand("train", "train a model");
    add_common(train, true);
    train->add_option("--data", cfg.data_dir, "dataset directory");
    train->add_option("--epochs", cfg.epochs, "training epochs");
    train->add_option("--batch", cfg.batch_size, "batch size");
    train->add_option("--w-gradcons", cfg.loss_w, "gradient consistency weight");
    train->add_option("--l2", cfg.l2_weight, "l2 weight for dense/pointwise kernels");
    train->add_flag("--flip", cfg.flip_augment, "train on originals plus mirrored copies");

    auto* infer = app.add_subcommand("infer", "write hair probability maps");
    add_common(infer, true);
    infer->add_option("--checkpoint", cfg.checkpoint_path, "model checkpoint");
    infer->add_option("--input", extras.inputs, "input image(s)");
    infer->add_flag("--refine", cfg.refine, "guided-filter refinement");
    add_gf(infer);

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a labeled split");
    add_common(eval, true);
    eval->add_option("--checkpoint", cfg.checkpoint_path, "model checkpoint");
    eval->add_option("--data", cfg.data_dir, "dataset directory");
    eval->add_option("--split", cfg.split, "train | val | test");
    eval->add_flag("--refine", cfg.refine, "guided-filter refinement before scoring");
    add_gf(eval);

    auto* refine = app.add_subcommand("refine", "guided-filter a mask against its image");
    add_common(refine, false);
    refine->add_option("--input", extras.inputs, "input image");
    refine->add_option("--mask", extras.mask_path, "coarse mask (grayscale)");
    refine->add_option("--out-file", extras.out_file, "output file");
    add_gf(refine);

    auto* recolor_cmd = app.add_subcommand("recolor", "recolor masked hair");
    add_common(recolor_cmd, false);
    recolor_cmd->add_option("--input", extras.inputs, "input image");
    recolor_cmd->add_option("--mask", extras.mask_path, "hair matte (grayscale)");
    recolor_cmd->add_option("--color", extras.color, "target color r,g,b in [0,1]");
    recolor_cmd->add_option("--out-file", extras.out_file, "output file");

    auto* bench = app.add_subcommand("bench", "forward-pass timing and MAC accounting");
    add_common(bench, true);
    bench->add_option("--checkpoint", cfg.checkpoint_path, "optional checkpoint to time");
    bench->add_option("--iters", cfg.bench_iters, "timed iterations");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        cfg.command = sub->get_name();
        if (!extras.spec_file.empty()) {
            std::ifstream in(extras.spec_file);
            require(in.good(), ErrorKind::io, "cannot open config file " + extras.spec_file);
            std::string text((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
            cfg.apply_text(text, extras.spec_file);
            cfg.command = sub->get_name();
        }
        std::vector<std::string> explicit_flags;
        for (auto* opt : spec_opts) {
            if (opt && opt->count() > 0) explicit_flags.push_back(opt->get_name());
        }

        if (cfg.command == "synth") return cmd_synth(cfg);
        if (cfg.command == "train") return cmd_train(cfg);
        if (cfg.command == "infer") return cmd_infer(cfg, extras, explicit_flags);
        if (cfg.command == "eval") return cmd_eval(cfg, explicit_flags);
        if (cfg.command == "refine") return cmd_refine(cfg, extras);
        if (cfg.command == "recolor") return cmd_recolor(cfg, extras);
        if (cfg.command == "bench") return cmd_bench(cfg);
        fail(ErrorKind::usage, "unknown command " + cfg.command);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

inline int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("hairmatte");
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace hairmatte
