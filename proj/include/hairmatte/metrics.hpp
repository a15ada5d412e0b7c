#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hairmatte/guided_filter.hpp"
#include "hairmatte/loss.hpp"
#include "hairmatte/tensor.hpp"
#include "hairmatte/textio.hpp"

namespace hairmatte {

struct ConfusionCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::int64_t tn = 0;

    std::int64_t total() const { return tp + fp + fn + tn; }
};

// Pixel counts at the given threshold; a prediction exactly at the threshold
// counts as positive.
template <typename T>
ConfusionCounts confusion(const TensorT<T>& pred_prob, const TensorT<T>& gt_mask,
                          T threshold = T(0.5)) {
    check_same_shape(pred_prob, gt_mask, "confusion");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred_prob.size(); ++i) {
        const bool pred = pred_prob[i] >= threshold;
        const bool gt = gt_mask[i] != T(0);
        if (pred && gt) {
            ++c.tp;
        } else if (pred && !gt) {
            ++c.fp;
        } else if (!pred && gt) {
            ++c.fn;
        } else {
            ++c.tn;
        }
    }
    return c;
}

// Ratio metrics with the empty-empty convention: a vacuous denominator is a
// perfect score only when both prediction and ground truth are empty.
inline double f1_score(const ConfusionCounts& c) {
    const std::int64_t den = 2 * c.tp + c.fp + c.fn;
    if (den == 0) return c.tp == 0 && c.fp == 0 && c.fn == 0 ? 1.0 : 0.0;
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(den);
}

inline double iou_score(const ConfusionCounts& c) {
    const std::int64_t den = c.tp + c.fp + c.fn;
    if (den == 0) return 1.0;
    return static_cast<double>(c.tp) / static_cast<double>(den);
}

inline double accuracy_score(const ConfusionCounts& c) {
    const std::int64_t den = c.total();
    if (den == 0) return 1.0;
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(den);
}

// Same computation as the training-time consistency loss, run without
// recording.
template <typename T>
double grad_consistency_metric(const TensorT<T>& image, const TensorT<T>& pred_prob) {
    return gradient_consistency_loss(rgb_to_gray(image), pred_prob);
}

// The Performance measure of Guo & Aarabi is referenced but not defined by
// the evaluation protocol this follows; a formula can be registered here
// once transcribed from that paper. Reports print "n/a" until then.
using PerformanceMetricFn = std::function<double(const ConfusionCounts&)>;

inline PerformanceMetricFn& performance_metric_slot() {
    static PerformanceMetricFn fn;
    return fn;
}

struct PerImageMetrics {
    std::string id;
    double f1 = 0.0;
    std::optional<double> performance;
    double iou = 0.0;
    double accuracy = 0.0;
    double grad_consistency = 0.0;
};

struct MetricsReport {
    std::vector<PerImageMetrics> per_image;
    double f1 = 0.0;
    std::optional<double> performance;
    double iou = 0.0;
    double accuracy = 0.0;
    double grad_consistency = 0.0;

    void finalize() {
        require(!per_image.empty(), ErrorKind::data, "metrics: empty evaluation set");
        f1 = iou = accuracy = grad_consistency = 0.0;
        double perf = 0.0;
        bool have_perf = true;
        for (const auto& row : per_image) {
            f1 += row.f1;
            iou += row.iou;
            accuracy += row.accuracy;
            grad_consistency += row.grad_consistency;
            if (row.performance) {
                perf += *row.performance;
            } else {
                have_perf = false;
            }
        }
        const double n = static_cast<double>(per_image.size());
        f1 /= n;
        iou /= n;
        accuracy /= n;
        grad_consistency /= n;
        if (have_perf) performance = perf / n;
    }
};

template <typename T>
PerImageMetrics score_single(const std::string& id, const TensorT<T>& image,
                             const TensorT<T>& pred_prob, const TensorT<T>& gt_mask) {
    PerImageMetrics m;
    m.id = id;
    const ConfusionCounts c = confusion(pred_prob, gt_mask);
    m.f1 = f1_score(c);
    m.iou = iou_score(c);
    m.accuracy = accuracy_score(c);
    if (const auto& fn = performance_metric_slot()) m.performance = fn(c);
    m.grad_consistency = grad_consistency_metric(image, pred_prob);
    return m;
}

namespace metrics_detail {
inline std::string cell(const std::optional<double>& v) {
    return v ? format_number(*v) : std::string("n/a");
}
}  // namespace metrics_detail

// One row per image plus a summary row, in the column order
// F1, Perf., IoU, Acc., Grad-cons.
inline std::string report_to_text(const MetricsReport& r) {
    std::ostringstream os;
    os << "image\tf1\tperformance\tiou\taccuracy\tgrad_consistency\n";
    for (const auto& row : r.per_image) {
        os << row.id << "\t" << format_number(row.f1) << "\t"
           << metrics_detail::cell(row.performance) << "\t" << format_number(row.iou) << "\t"
           << format_number(row.accuracy) << "\t" << format_number(row.grad_consistency) << "\n";
    }
    os << "mean\t" << format_number(r.f1) << "\t" << metrics_detail::cell(r.performance) << "\t"
       << format_number(r.iou) << "\t" << format_number(r.accuracy) << "\t"
       << format_number(r.grad_consistency) << "\n";
    return os.str();
}

}  // namespace hairmatte
