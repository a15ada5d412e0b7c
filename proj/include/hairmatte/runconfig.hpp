#pragma once

#include <cstdint>
#include <string>

#include "hairmatte/checkpoint.hpp"
#include "hairmatte/dataset.hpp"
#include "hairmatte/guided_filter.hpp"
#include "hairmatte/loss.hpp"
#include "hairmatte/model.hpp"
#include "hairmatte/optim.hpp"
#include "hairmatte/textio.hpp"
#include "hairmatte/train.hpp"

namespace hairmatte {

// Everything a command run needs, with a canonical text form: parsing the
// printed form reproduces the config exactly (fixpoint).
struct RunConfig {
    std::string command;

    ModelSpec model;

    // loss
    float loss_w = 0.5f;
    float l2_weight = 2e-5f;
    int hair_class = 1;

    // optimizer
    float opt_rho = 0.95f;
    float opt_eps = 1e-7f;
    float opt_lr = 1.0f;

    // guided filter
    int gf_radius = 4;
    double gf_eps = 1e-3;
    GuideMode gf_guide = GuideMode::gray;
    bool refine = false;

    // paths
    std::string data_dir;
    std::string checkpoint_path;
    std::string out_dir = "out";
    std::string split = "test";

    // training
    int epochs = 50;
    int batch_size = 4;
    bool flip_augment = false;

    // synthetic data
    int synth_train = 100;
    int synth_val = 20;
    int synth_test = 20;
    int synth_size = 64;
    BackgroundMode synth_background = BackgroundMode::gradient;
    bool synth_coarse = false;
    int synth_coarse_radius = 1;

    std::uint64_t seed = 0;
    int bench_iters = 20;

    LossConfig loss_config() const {
        LossConfig cfg;
        cfg.w = loss_w;
        cfg.l2_weight = l2_weight;
        cfg.hair_class_index = hair_class;
        return cfg;
    }

    AdadeltaConfig optimizer_config() const {
        AdadeltaConfig cfg;
        cfg.rho = opt_rho;
        cfg.eps = opt_eps;
        cfg.lr = opt_lr;
        return cfg;
    }

    GuidedFilterParams guided_filter_params() const {
        return GuidedFilterParams{gf_radius, gf_eps, gf_guide};
    }

    FitConfig fit_config() const {
        FitConfig cfg;
        cfg.epochs = epochs;
        cfg.batch_size = batch_size;
        cfg.seed = seed;
        cfg.loss = loss_config();
        cfg.optimizer = optimizer_config();
        cfg.flip_train_set = flip_augment;
        return cfg;
    }

    std::string canonical_text() const {
        std::string out;
        out += "command=" + command + "\n";
        out += spec_to_text(model);
        out += "loss_w=" + format_number(loss_w) + "\n";
        out += "l2_weight=" + format_number(l2_weight) + "\n";
        out += "hair_class=" + std::to_string(hair_class) + "\n";
        out += "opt_rho=" + format_number(opt_rho) + "\n";
        out += "opt_eps=" + format_number(opt_eps) + "\n";
        out += "opt_lr=" + format_number(opt_lr) + "\n";
        out += "gf_radius=" + std::to_string(gf_radius) + "\n";
        out += "gf_eps=" + format_number(gf_eps) + "\n";
        out += std::string("gf_guide=") + (gf_guide == GuideMode::rgb ? "rgb" : "gray") + "\n";
        out += std::string("refine=") + (refine ? "1" : "0") + "\n";
        out += "data_dir=" + data_dir + "\n";
        out += "checkpoint_path=" + checkpoint_path + "\n";
        out += "out_dir=" + out_dir + "\n";
        out += "split=" + split + "\n";
        out += "epochs=" + std::to_string(epochs) + "\n";
        out += "batch_size=" + std::to_string(batch_size) + "\n";
        out += std::string("flip_augment=") + (flip_augment ? "1" : "0") + "\n";
        out += "synth_train=" + std::to_string(synth_train) + "\n";
        out += "synth_val=" + std::to_string(synth_val) + "\n";
        out += "synth_test=" + std::to_string(synth_test) + "\n";
        out += "synth_size=" + std::to_string(synth_size) + "\n";
        out += std::string("synth_background=") + background_mode_name(synth_background) + "\n";
        out += std::string("synth_coarse=") + (synth_coarse ? "1" : "0") + "\n";
        out += "synth_coarse_radius=" + std::to_string(synth_coarse_radius) + "\n";
        out += "seed=" + std::to_string(seed) + "\n";
        out += "bench_iters=" + std::to_string(bench_iters) + "\n";
        return out;
    }

    // Applies key=value text over the current values; unknown keys are
    // rejected so typos in config files fail loudly.
    void apply_text(const std::string& text, const std::string& what) {
        for (const auto& [key, value] : parse_kv(text, what)) {
            apply_kv(key, value, what);
        }
    }

    static RunConfig from_text(const std::string& text, const std::string& what = "run config") {
        RunConfig cfg;
        cfg.apply_text(text, what);
        return cfg;
    }

private:
    void apply_kv(const std::string& key, const std::string& value, const std::string& what) {
        auto as_int = [&] { return static_cast<int>(parse_long(value, what + "." + key)); };
        auto as_float = [&] { return static_cast<float>(parse_double(value, what + "." + key)); };
        auto as_bool = [&] { return parse_long(value, what + "." + key) != 0; };
        if (key == "command") {
            command = value;
        } else if (key == "variant") {
            model.variant = parse_variant(value);
        } else if (key == "input_size") {
            model.input_size = as_int();
        } else if (key == "num_classes") {
            model.num_classes = as_int();
        } else if (key == "width") {
            model.width = as_float();
        } else if (key == "decoder_depth") {
            model.decoder_depth = as_int();
        } else if (key == "use_batchnorm") {
            model.use_batchnorm = as_bool();
        } else if (key == "loss_w") {
            loss_w = as_float();
        } else if (key == "l2_weight") {
            l2_weight = as_float();
        } else if (key == "hair_class") {
            hair_class = as_int();
        } else if (key == "opt_rho") {
            opt_rho = as_float();
        } else if (key == "opt_eps") {
            opt_eps = as_float();
        } else if (key == "opt_lr") {
            opt_lr = as_float();
        } else if (key == "gf_radius") {
            gf_radius = as_int();
        } else if (key == "gf_eps") {
            gf_eps = parse_double(value, what + ".gf_eps");
        } else if (key == "gf_guide") {
            require(value == "gray" || value == "rgb", ErrorKind::usage,
                    "gf_guide must be gray or rgb, got \"" + value + "\"");
            gf_guide = value == "rgb" ? GuideMode::rgb : GuideMode::gray;
        } else if (key == "refine") {
            refine = as_bool();
        } else if (key == "data_dir") {
            data_dir = value;
        } else if (key == "checkpoint_path") {
            checkpoint_path = value;
        } else if (key == "out_dir") {
            out_dir = value;
        } else if (key == "split") {
            split = value;
        } else if (key == "epochs") {
            epochs = as_int();
        } else if (key == "batch_size") {
            batch_size = as_int();
        } else if (key == "flip_augment") {
            flip_augment = as_bool();
        } else if (key == "synth_train") {
            synth_train = as_int();
        } else if (key == "synth_val") {
            synth_val = as_int();
        } else if (key == "synth_test") {
            synth_test = as_int();
        } else if (key == "synth_size") {
            synth_size = as_int();
        } else if (key == "synth_background") {
            synth_background = parse_background_mode(value);
        } else if (key == "synth_coarse") {
            synth_coarse = as_bool();
        } else if (key == "synth_coarse_radius") {
            synth_coarse_radius = as_int();
        } else if (key == "seed") {
            seed = static_cast<std::uint64_t>(parse_long(value, what + ".seed"));
        } else if (key == "bench_iters") {
            bench_iters = as_int();
        } else {
            fail(ErrorKind::usage, what + ": unknown key \"" + key + "\"");
        }
    }
};

}  // namespace hairmatte
