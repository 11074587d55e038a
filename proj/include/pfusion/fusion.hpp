// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfusion/autograd.hpp"

namespace pfusion {

enum class MaskMode { Rehearsal, MemoryFree };

/// Learned fusion state: scalar lambda plus the class-balance mask parameters.
/// alpha covers the current task's (new) classes, beta the previously seen
/// (old) ones; both re-initialize to zero at every task boundary, with classes
/// migrating from new to old.
template <typename T>
struct FusionParams {
    Param<T> lambda_;  // 1x1
    Param<T> alpha;    // 1 x n_new
    Param<T> beta;     // 1 x n_old
    MaskMode mode = MaskMode::Rehearsal;
    int current_task = 0;  // 1-based T_i
    bool mask_enabled = true;
    bool lambda_enabled = true;
    bool apply_mask_at_inference = true;

    void init(bool lambda_on, bool mask_on, MaskMode m) {
        lambda_enabled = lambda_on;
        mask_enabled = mask_on;
        mode = m;
        lambda_ = Param<T>("fusion/lambda", Tensor<T>::scalar(T(0)), lambda_enabled);
    }

    /// Task boundary: previous alpha classes become old; both vectors reset to
    /// zero (sigma(0)=0.5 neutral start).
    void begin_task(int n_old, int n_new) {
        current_task += 1;
        alpha = Param<T>("fusion/alpha", Tensor<T>::zeros(1, n_new), true);
        beta = Param<T>("fusion/beta", Tensor<T>::zeros(1, n_old), n_old > 0);
    }

    int n_old() const { return beta.value.cols; }
    int n_new() const { return alpha.value.cols; }

    void for_each_param(const std::function<void(Param<T>&)>& fn) {
        fn(lambda_);
        fn(alpha);
        fn(beta);
    }

    std::vector<Param<T>*> trainable_params() {
        std::vector<Param<T>*> out;
        if (lambda_.trainable) out.push_back(&lambda_);
        if (alpha.value.cols > 0) out.push_back(&alpha);
        if (beta.value.cols > 0 && beta.trainable) out.push_back(&beta);
        return out;
    }
};

/// W = Concat[theta / sigma(beta), sigma(alpha)] with theta = T_i/2 in
/// rehearsal mode and theta = 1 in memory-free mode. Old-class entries first,
/// matching class arrival order. Value-level variant used by tests and oracle
/// arithmetic.
template <typename T>
Tensor<T> build_mask_value(int current_task, const Tensor<T>& alpha, const Tensor<T>& beta,
                           MaskMode mode) {
    if (current_task < 1) throw std::invalid_argument("build_mask: T_i must be >= 1");
    T theta = mode == MaskMode::Rehearsal ? static_cast<T>(current_task) / T(2) : T(1);
    Tensor<T> w(1, beta.cols + alpha.cols);
    for (int i = 0; i < beta.cols; ++i) {
        T s = T(1) / (T(1) + std::exp(-beta.data[i]));
        w.data[i] = theta / s;
    }
    for (int i = 0; i < alpha.cols; ++i) {
        T s = T(1) / (T(1) + std::exp(-alpha.data[i]));
        w.data[beta.cols + i] = s;
    }
    return w;
}

/// Graph version of the mask, differentiable wrt alpha and beta.
template <typename T>
typename Graph<T>::NodeId build_mask(Graph<T>& g, FusionParams<T>& fp) {
    if (fp.current_task < 1) throw std::invalid_argument("build_mask: no task begun");
    T theta = fp.mode == MaskMode::Rehearsal ? static_cast<T>(fp.current_task) / T(2) : T(1);
    std::vector<typename Graph<T>::NodeId> parts;
    if (fp.n_old() > 0) {
        auto old_part = g.affine(g.pow_const(g.sigmoid(g.leaf(fp.beta)), T(-1)), theta, T(0));
        parts.push_back(old_part);
    }
    if (fp.n_new() > 0) parts.push_back(g.sigmoid(g.leaf(fp.alpha)));
    if (parts.empty()) throw std::logic_error("build_mask: empty mask");
    return parts.size() == 1 ? parts[0] : g.concat_cols(parts);
}

/// z = W o [(1 - sigma(lambda)) S + sigma(lambda) B]. Pass mask = -1 for W = 1.
template <typename T>
typename Graph<T>::NodeId fuse(Graph<T>& g, typename Graph<T>::NodeId s_logits,
                               typename Graph<T>::NodeId b_logits,
                               typename Graph<T>::NodeId lambda_node,
                               typename Graph<T>::NodeId mask) {
    if (!g.value(s_logits).same_shape(g.value(b_logits)))
        throw std::invalid_argument("fuse: S " + g.value(s_logits).shape_str() + " vs B " +
                                    g.value(b_logits).shape_str());
    auto sl = g.sigmoid(lambda_node);                    // 1x1
    auto one_minus = g.affine(sl, T(-1), T(1));          // 1 - sigma(lambda)
    auto mix = g.add(g.scale_by(s_logits, one_minus), g.scale_by(b_logits, sl));
    if (mask < 0) return mix;
    if (!g.value(mask).same_shape(g.value(s_logits)))
        throw std::invalid_argument("fuse: mask " + g.value(mask).shape_str() + " vs logits " +
                                    g.value(s_logits).shape_str());
    return g.mul(mask, mix);
}

/// Gated variant: z = W o [(1-sigma(lambda)) S + sigma(lambda) * m0 * B] where
/// m0 is the first entry of the (straight-through) decision vector.
template <typename T>
typename Graph<T>::NodeId fuse_gated(Graph<T>& g, typename Graph<T>::NodeId s_logits,
                                     typename Graph<T>::NodeId b_logits,
                                     typename Graph<T>::NodeId decision,  // 1x2, entry 0 = use Booster
                                     typename Graph<T>::NodeId lambda_node,
                                     typename Graph<T>::NodeId mask) {
    auto m0 = g.slice(decision, 0, 1, 0, 1);
    auto gated_b = g.scale_by(b_logits, m0);
    return fuse(g, s_logits, gated_b, lambda_node, mask);
}

}  // namespace pfusion
