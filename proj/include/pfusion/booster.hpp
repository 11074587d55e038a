// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "pfusion/encoder.hpp"

namespace pfusion {

/// Visual-prompt branch: one shared prompt tensor updated on every task, and
/// a linear head over the pooled feature that grows by rows as classes arrive.
/// There is exactly one prompt tensor for the whole run; no per-task copies.
template <typename T>
struct Booster {
    using NodeId = typename Graph<T>::NodeId;

    Param<T> prompts;  // p x e_vis
    Param<T> head_w;   // classes_seen x e_vis
    Param<T> head_b;   // 1 x classes_seen
    int classes_seen = 0;
    int embed_dim = 32;

    void init(int prompt_len, int e_vis, uint64_t seed) {
        embed_dim = e_vis;
        auto rng = make_rng(seed, SeedTag::PromptInit, 0xb005);
        prompts = Param<T>("booster/prompts",
                           prompt_len > 0 ? Tensor<T>::randn(prompt_len, e_vis, rng, T(0.02))
                                          : Tensor<T>::zeros(0, e_vis),
                           prompt_len > 0);
        head_w = Param<T>("booster/head_w", Tensor<T>::zeros(0, e_vis), true);
        head_b = Param<T>("booster/head_b", Tensor<T>::zeros(1, 0), true);
    }

    /// Adds n_new zero-initialized rows; existing rows are copied verbatim.
    void extend_head(int n_new) {
        if (n_new < 1) throw std::invalid_argument("extend_head: n_new must be >= 1");
        Tensor<T> w(classes_seen + n_new, embed_dim);
        Tensor<T> b(1, classes_seen + n_new);
        for (int r = 0; r < classes_seen; ++r) {
            for (int c = 0; c < embed_dim; ++c) w.at(r, c) = head_w.value.at(r, c);
            b.data[r] = head_b.value.data[r];
        }
        head_w.reset(std::move(w));
        head_b.reset(std::move(b));
        classes_seen += n_new;
    }

    /// Pooled feature of the prompt-inserted sequence.
    NodeId image_feature(Graph<T>& g, VisionEncoder<T>& enc, const Image& im) {
        NodeId p = prompts.value.rows > 0 ? g.leaf(prompts) : -1;
        return enc.encode_image(g, im, p);
    }

    /// B(x) over seen classes.
    NodeId logits(Graph<T>& g, NodeId image_feat) {
        if (classes_seen == 0) throw std::logic_error("booster logits: empty head");
        auto z = g.matmul(image_feat, g.leaf(head_w), false, true);  // 1 x classes_seen
        return g.add_row(z, g.leaf(head_b));
    }

    int prompt_tensor_count() const { return 1; }

    void for_each_param(const ParamVisitor<T>& fn) {
        fn(prompts);
        fn(head_w);
        fn(head_b);
    }

    std::vector<Param<T>*> trainable_params() {
        std::vector<Param<T>*> out;
        if (prompts.trainable && prompts.value.rows > 0) out.push_back(&prompts);
        if (head_w.value.rows > 0) {
            out.push_back(&head_w);
            out.push_back(&head_b);
        }
        return out;
    }
};

}  // namespace pfusion
