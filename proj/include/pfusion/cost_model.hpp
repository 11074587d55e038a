// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "pfusion/config.hpp"

namespace pfusion {

/// Analytic multiply-accumulate counts per forward pass. Matmul and attention
/// terms only; normalizations and elementwise work are not counted.
struct CostBreakdown {
    double stabilizer_macs = 0;      // per image, inference, text features cached
    double booster_macs = 0;         // per image
    double gate_macs = 0;            // per image (plain encoder pass + MLP)
    double fusion_combine_macs = 0;  // mask + convex combination
    double stabilizer_text_macs = 0; // one-time text-feature refresh per task
    double promptfusion_macs = 0;    // stabilizer + booster + combine
    double lite_expected_macs = 0;   // stabilizer + gate + rate * booster
    int64_t trainable_params = 0;
};

namespace detail {

inline double stack_macs(double seq, double e, double depth) {
    // per layer: qkv+out projections 4*s*e^2, attention 2*s^2*e, tanh MLP 8*s*e^2
    return depth * (12.0 * seq * e * e + 2.0 * seq * seq * e);
}

}  // namespace detail

/// n_classes: classes covered by the accounting (all tasks seen).
inline CostBreakdown cost_model(const RunConfig& c, int n_classes, double activation_rate) {
    CostBreakdown out;
    double e_vis = c.model.embed_dim_vis;
    double e_text = c.model.embed_dim_text;
    double depth = c.model.encoder_depth;
    double m = (static_cast<double>(c.stream.image_h) / c.model.patch_size) *
               (static_cast<double>(c.stream.image_w) / c.model.patch_size);
    double patch_dim = static_cast<double>(c.model.patch_size) * c.model.patch_size * c.stream.image_c;
    double patch_proj = m * patch_dim * e_vis;
    double K = n_classes;

    double l_img = c.fusion.augmentation_enabled ? c.model.image_prompt_len : 0;
    double seq_stab = 1 + l_img + m;
    double seq_boost = 1 + c.model.visual_prompt_len + m;
    double seq_plain = 1 + m;
    double seq_text = c.model.text_prompt_len + 1;

    out.stabilizer_macs = patch_proj + detail::stack_macs(seq_stab, e_vis, depth) + 3.0 * K * e_vis;
    out.booster_macs = patch_proj + detail::stack_macs(seq_boost, e_vis, depth) + K * e_vis;
    out.gate_macs = patch_proj + detail::stack_macs(seq_plain, e_vis, depth) +
                    e_vis * c.gate.hidden + 2.0 * c.gate.hidden;
    out.fusion_combine_macs = 4.0 * K;
    out.stabilizer_text_macs = K * detail::stack_macs(seq_text, e_text, depth);

    out.promptfusion_macs = out.stabilizer_macs + out.booster_macs + out.fusion_combine_macs;
    out.lite_expected_macs = out.stabilizer_macs + out.gate_macs + activation_rate * out.booster_macs;

    int64_t params = 0;
    params += static_cast<int64_t>(K) * c.model.text_prompt_len * c.model.embed_dim_text;  // text prompts
    if (c.fusion.augmentation_enabled)
        params += static_cast<int64_t>(c.model.image_prompt_len) * c.model.embed_dim_vis;
    params += static_cast<int64_t>(c.model.visual_prompt_len) * c.model.embed_dim_vis;  // booster prompts
    params += static_cast<int64_t>(K) * c.model.embed_dim_vis + static_cast<int64_t>(K);  // head
    if (c.fusion.lambda_enabled) params += 1;
    if (c.fusion.mask_enabled) params += static_cast<int64_t>(K);  // alpha + beta cover all classes
    if (c.gate.enabled)
        params += static_cast<int64_t>(c.model.embed_dim_vis) * c.gate.hidden + c.gate.hidden +
                  2L * c.gate.hidden + 2;
    out.trainable_params = params;
    return out;
}

/// The paper-scale configuration used for parameter accounting checks:
/// 100 classes in 10 tasks, ViT-B/16-like dims, M = p = 30, image-prompt
/// length 40.
inline RunConfig full_scale_config() {
    RunConfig c;
    c.stream.kind = "blobs";
    c.stream.n_tasks = 10;
    c.stream.n_classes = 100;
    c.stream.image_h = 224;
    c.stream.image_w = 224;
    c.stream.image_c = 3;
    c.model.patch_size = 16;
    c.model.embed_dim_vis = 768;
    c.model.embed_dim_text = 512;
    c.model.encoder_depth = 12;
    c.model.n_heads = 8;
    c.model.text_prompt_len = 30;
    c.model.visual_prompt_len = 30;
    c.model.image_prompt_len = 40;
    c.gate.enabled = false;
    return c;
}

}  // namespace pfusion
