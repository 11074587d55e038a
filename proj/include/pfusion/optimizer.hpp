// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "pfusion/tensor.hpp"

namespace pfusion {

/// Decoupled-weight-decay adaptive gradient method. State is keyed by Param
/// address; one optimizer instance lives for one task.
template <typename T>
struct AdamW {
    T lr = T(0.002);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    T weight_decay = T(1e-4);

    struct Slot {
        Tensor<T> m, v;
    };
    std::map<Param<T>*, Slot> slots;
    long step_count = 0;

    void step(const std::vector<Param<T>*>& params, T lr_now) {
        ++step_count;
        T bc1 = T(1) - std::pow(beta1, static_cast<T>(step_count));
        T bc2 = T(1) - std::pow(beta2, static_cast<T>(step_count));
        for (Param<T>* p : params) {
            if (!p->trainable) continue;
            auto& slot = slots[p];
            if (slot.m.numel() != p->value.numel()) {
                slot.m = Tensor<T>(p->value.rows, p->value.cols);
                slot.v = Tensor<T>(p->value.rows, p->value.cols);
            }
            for (int i = 0; i < p->value.numel(); ++i) {
                T g = p->grad.data[i];
                slot.m.data[i] = beta1 * slot.m.data[i] + (T(1) - beta1) * g;
                slot.v.data[i] = beta2 * slot.v.data[i] + (T(1) - beta2) * g * g;
                T mhat = slot.m.data[i] / bc1;
                T vhat = slot.v.data[i] / bc2;
                p->value.data[i] -= lr_now * (mhat / (std::sqrt(vhat) + eps) +
                                              weight_decay * p->value.data[i]);
            }
        }
    }
};

/// Per-task cosine annealing: full lr at step 0, ~zero at the last step.
template <typename T>
T cosine_lr(T base_lr, int step, int total_steps) {
    if (total_steps <= 1) return base_lr;
    T progress = static_cast<T>(step) / static_cast<T>(total_steps - 1);
    return base_lr * T(0.5) * (T(1) + std::cos(progress * T(3.14159265358979323846)));
}

}  // namespace pfusion
