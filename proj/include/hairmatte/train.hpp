#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "hairmatte/checkpoint.hpp"
#include "hairmatte/eval.hpp"
#include "hairmatte/loss.hpp"
#include "hairmatte/model.hpp"
#include "hairmatte/optim.hpp"

namespace hairmatte {

template <typename T>
struct FitConfigT {
    int epochs = 50;
    int batch_size = 4;
    std::uint64_t seed = 0;
    LossConfigT<T> loss;
    AdadeltaConfigT<T> optimizer;
    bool flip_train_set = false;  // add mirrored copies before training
};

using FitConfig = FitConfigT<float>;

template <typename T>
struct FitResultT {
    std::vector<HistoryRow> history;
    int best_epoch = 0;       // 1-based; 0 when no epochs ran
    double best_val_iou = 0;  // of the restored parameters
    AdadeltaStateT<T> optimizer_state;
};

using FitResult = FitResultT<float>;

namespace train_detail {

// Stacks samples into one (B,3,h,w) image batch and (B,1,h,w) mask batch.
template <typename T>
void assemble_batch(const Dataset& data, const std::vector<int>& order, std::size_t first,
                    std::size_t count, TensorT<T>& images, TensorT<T>& masks) {
    const Sample& head = data[order[first]];
    const int H = head.image.h(), W = head.image.w();
    images = TensorT<T>(Shape{static_cast<int>(count), 3, H, W});
    masks = TensorT<T>(Shape{static_cast<int>(count), 1, H, W});
    const std::size_t chw = static_cast<std::size_t>(3) * H * W;
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    for (std::size_t i = 0; i < count; ++i) {
        const Sample& s = data[order[first + i]];
        require(s.image.h() == H && s.image.w() == W, ErrorKind::data,
                "fit: sample " + s.id + " size differs within the batch");
        for (std::size_t k = 0; k < chw; ++k) {
            images[i * chw + k] = static_cast<T>(s.image[k]);
        }
        for (std::size_t k = 0; k < hw; ++k) {
            masks[i * hw + k] = static_cast<T>(s.mask[k]);
        }
    }
}

}  // namespace train_detail

// One recorded training step: forward, combined loss, backward, analytic l2
// gradients, Adadelta update. Returns the loss parts.
template <typename T>
LossReport train_step(ModelT<T>& model, AdadeltaStateT<T>& opt, const TensorT<T>& images,
                      const TensorT<T>& masks, const LossConfigT<T>& cfg) {
    model.zero_grads();
    auto probs = model.forward_value(images, /*training=*/true);
    const double l2 = l2_penalty(model, cfg.l2_weight);
    auto terms = combined_loss(probs, masks, images, cfg, l2);
    backward(terms.objective);
    accumulate_l2_gradients(model, cfg.l2_weight);
    adadelta_step(opt, model);
    return terms.report();
}

// Seeded shuffled mini-batches (partial tail kept), per-epoch validation
// IoU, best-epoch selection (ties go to the earliest). The model is left
// holding the best epoch's parameters and running stats.
template <typename T>
FitResultT<T> fit(ModelT<T>& model, const Dataset& train_set_in, const Dataset& val_set,
                  const FitConfigT<T>& cfg) {
    require(!train_set_in.empty(), ErrorKind::data, "fit: empty training set");
    require(!val_set.empty(), ErrorKind::data, "fit: empty validation set");
    require(cfg.epochs >= 0, ErrorKind::usage, "fit: negative epoch count");
    require(cfg.batch_size >= 1, ErrorKind::usage, "fit: batch size must be >= 1");

    const Dataset train_set = cfg.flip_train_set ? flip_augment(train_set_in) : train_set_in;

    FitResultT<T> result;
    result.optimizer_state.cfg = cfg.optimizer;
    result.optimizer_state.init(model);

    Rng shuffle_rng(cfg.seed ^ 0x747261696eULL);
    std::vector<int> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    auto best_params = model.snapshot_params();
    auto best_bn = model.bn_states;
    double best_iou = -1.0;
    int best_epoch = 0;

    TensorT<T> images, masks;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double sum_lm = 0.0, sum_lc = 0.0, sum_l2 = 0.0, sum_total = 0.0;
        int batches = 0;
        for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
            const std::size_t count =
                std::min<std::size_t>(cfg.batch_size, order.size() - first);
            train_detail::assemble_batch(train_set, order, first, count, images, masks);
            LossReport r;
            try {
                r = train_step(model, result.optimizer_state, images, masks, cfg.loss);
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::numeric) {
                    fail(ErrorKind::numeric,
                         "fit: diverged at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batches + 1) + ": " + e.what());
                }
                throw;
            }
            require(std::isfinite(r.total), ErrorKind::numeric,
                    "fit: diverged at epoch " + std::to_string(epoch) + ", batch " +
                        std::to_string(batches + 1) + " (non-finite loss)");
            sum_lm += r.l_m;
            sum_lc += r.l_c;
            sum_l2 += r.l2;
            sum_total += r.total;
            ++batches;
        }
        HistoryRow row;
        row.epoch = epoch;
        row.l_m = sum_lm / batches;
        row.l_c = sum_lc / batches;
        row.l2 = sum_l2 / batches;
        row.total = sum_total / batches;
        row.val_iou = mean_iou(model, val_set, cfg.loss.hair_class_index);
        result.history.push_back(row);

        if (row.val_iou > best_iou) {
            best_iou = row.val_iou;
            best_epoch = epoch;
            best_params = model.snapshot_params();
            best_bn = model.bn_states;
        }
    }

    if (cfg.epochs > 0) {
        model.restore_params(best_params);
        model.bn_states = best_bn;
    }
    result.best_epoch = best_epoch;
    result.best_val_iou = std::max(best_iou, 0.0);
    return result;
}

// ---------------------------------------------------------------------------
// History file: one row per epoch as structured text
// ---------------------------------------------------------------------------

inline std::string history_to_text(const std::vector<HistoryRow>& history) {
    std::string out = "epoch\tl_m\tl_c\tl2\ttotal\tval_iou\n";
    for (const auto& r : history) {
        out += std::to_string(r.epoch) + "\t" + format_number(r.l_m) + "\t" +
               format_number(r.l_c) + "\t" + format_number(r.l2) + "\t" + format_number(r.total) +
               "\t" + format_number(r.val_iou) + "\n";
    }
    return out;
}

inline void write_history(const std::string& path, const std::vector<HistoryRow>& history) {
    std::ofstream out(path);
    require(out.good(), ErrorKind::io, "cannot open " + path + " for writing");
    out << history_to_text(history);
    require(out.good(), ErrorKind::io, "failed writing history " + path);
}

}  // namespace hairmatte
