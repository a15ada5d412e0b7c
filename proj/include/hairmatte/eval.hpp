#pragma once

#include <optional>
#include <string>

#include "hairmatte/dataset.hpp"
#include "hairmatte/guided_filter.hpp"
#include "hairmatte/metrics.hpp"
#include "hairmatte/model.hpp"

namespace hairmatte {

// Hair probability plane for one sample, in infer mode. Optionally refined
// with the guided filter (the "+ GF" configuration).
template <typename T>
TensorT<T> predict_hair_prob(ModelT<T>& model, const TensorT<T>& image, int hair_class,
                             const std::optional<GuidedFilterParams>& refine = std::nullopt) {
    NoGradGuard off;
    auto probs = model.forward_value(image, /*training=*/false);
    auto hair = ops::slice_channels(probs, hair_class, 1);
    TensorT<T> prob = hair->value;
    if (refine) prob = refine_mask(image, prob, *refine);
    return prob;
}

// Per-image metrics then the arithmetic mean across the set.
template <typename T>
MetricsReport evaluate_dataset(ModelT<T>& model, const Dataset& data,
                               const std::optional<GuidedFilterParams>& refine = std::nullopt,
                               int hair_class = 1) {
    require(!data.empty(), ErrorKind::data, "evaluate_dataset: empty dataset");
    MetricsReport report;
    for (const auto& s : data) {
        const TensorT<T> image = s.image.template cast<T>();
        const TensorT<T> mask = s.mask.template cast<T>();
        const TensorT<T> prob = predict_hair_prob(model, image, hair_class, refine);
        report.per_image.push_back(score_single(s.id, image, prob, mask));
    }
    report.finalize();
    return report;
}

// Mean per-image IoU at threshold 0.5; the epoch-selection criterion.
template <typename T>
double mean_iou(ModelT<T>& model, const Dataset& data, int hair_class = 1) {
    require(!data.empty(), ErrorKind::data, "mean_iou: empty dataset");
    double acc = 0.0;
    for (const auto& s : data) {
        const TensorT<T> image = s.image.template cast<T>();
        const TensorT<T> prob = predict_hair_prob(model, image, hair_class);
        acc += iou_score(confusion(prob, s.mask.template cast<T>()));
    }
    return acc / static_cast<double>(data.size());
}

}  // namespace hairmatte
