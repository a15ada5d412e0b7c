#pragma once

#include <cmath>
#include <vector>

#include "hairmatte/model.hpp"
#include "hairmatte/tensor.hpp"

namespace hairmatte {

template <typename T>
struct AdadeltaConfigT {
    T rho = T(0.95);
    T eps = T(1e-7);
    T lr = T(1.0);
};

using AdadeltaConfig = AdadeltaConfigT<float>;

// x <- x + lr * dx with dx = -(RMS[dx]/RMS[g]) * g, RMS[v] = sqrt(v + eps).
// Accumulators decay with rho; both are updated in place.
template <typename T>
void adadelta_update(TensorT<T>& x, const TensorT<T>& grad, TensorT<T>& accum_grad_sq,
                     TensorT<T>& accum_update_sq, const AdadeltaConfigT<T>& cfg) {
    check_same_shape(x, grad, "adadelta_update");
    check_same_shape(x, accum_grad_sq, "adadelta_update");
    check_same_shape(x, accum_update_sq, "adadelta_update");
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T g = grad[i];
        accum_grad_sq[i] = cfg.rho * accum_grad_sq[i] + (T(1) - cfg.rho) * g * g;
        const T dx = -std::sqrt(accum_update_sq[i] + cfg.eps) /
                     std::sqrt(accum_grad_sq[i] + cfg.eps) * g;
        accum_update_sq[i] = cfg.rho * accum_update_sq[i] + (T(1) - cfg.rho) * dx * dx;
        x[i] += cfg.lr * dx;
    }
}

template <typename T>
struct AdadeltaStateT {
    AdadeltaConfigT<T> cfg;
    std::vector<TensorT<T>> accum_grad_sq;
    std::vector<TensorT<T>> accum_update_sq;

    void init(const ModelT<T>& model) {
        accum_grad_sq.clear();
        accum_update_sq.clear();
        for (const auto& p : model.params) {
            accum_grad_sq.emplace_back(p.node->value.shape());
            accum_update_sq.emplace_back(p.node->value.shape());
        }
    }

    bool initialized_for(const ModelT<T>& model) const {
        return accum_grad_sq.size() == model.params.size();
    }
};

using AdadeltaState = AdadeltaStateT<float>;

// One optimizer step over every model parameter from its accumulated grads.
template <typename T>
void adadelta_step(AdadeltaStateT<T>& state, ModelT<T>& model) {
    if (!state.initialized_for(model)) state.init(model);
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        auto& node = *model.params[i].node;
        node.ensure_grad();
        adadelta_update(node.value, node.grad, state.accum_grad_sq[i], state.accum_update_sq[i],
                        state.cfg);
    }
}

}  // namespace hairmatte
