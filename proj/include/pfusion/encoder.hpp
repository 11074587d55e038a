// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfusion/autograd.hpp"
#include "pfusion/dataset.hpp"
#include "pfusion/random.hpp"
#include "pfusion/tensor.hpp"

namespace pfusion {

template <typename T>
using ParamVisitor = std::function<void(Param<T>&)>;

/// One pre-norm transformer block: x += attn(ln1(x)); x += mlp(ln2(x)).
template <typename T>
struct TransformerBlock {
    Param<T> ln1_g, ln1_b;
    Param<T> wq, bq, wk, bk, wv, bv, wo, bo;
    Param<T> ln2_g, ln2_b;
    Param<T> w1, b1, w2, b2;  // tanh MLP

    void init(const std::string& prefix, int e, int mlp_hidden, std::mt19937_64& rng) {
        T ws = T(1) / std::sqrt(static_cast<T>(e));
        T ms = T(1) / std::sqrt(static_cast<T>(mlp_hidden));
        ln1_g = Param<T>(prefix + "/ln1_g", Tensor<T>::full(1, e, T(1)), false);
        ln1_b = Param<T>(prefix + "/ln1_b", Tensor<T>::zeros(1, e), false);
        wq = Param<T>(prefix + "/wq", Tensor<T>::randn(e, e, rng, ws), false);
        bq = Param<T>(prefix + "/bq", Tensor<T>::zeros(1, e), false);
        wk = Param<T>(prefix + "/wk", Tensor<T>::randn(e, e, rng, ws), false);
        bk = Param<T>(prefix + "/bk", Tensor<T>::zeros(1, e), false);
        wv = Param<T>(prefix + "/wv", Tensor<T>::randn(e, e, rng, ws), false);
        bv = Param<T>(prefix + "/bv", Tensor<T>::zeros(1, e), false);
        wo = Param<T>(prefix + "/wo", Tensor<T>::randn(e, e, rng, ws), false);
        bo = Param<T>(prefix + "/bo", Tensor<T>::zeros(1, e), false);
        ln2_g = Param<T>(prefix + "/ln2_g", Tensor<T>::full(1, e, T(1)), false);
        ln2_b = Param<T>(prefix + "/ln2_b", Tensor<T>::zeros(1, e), false);
        w1 = Param<T>(prefix + "/w1", Tensor<T>::randn(e, mlp_hidden, rng, ws), false);
        b1 = Param<T>(prefix + "/b1", Tensor<T>::zeros(1, mlp_hidden), false);
        w2 = Param<T>(prefix + "/w2", Tensor<T>::randn(mlp_hidden, e, rng, ms), false);
        b2 = Param<T>(prefix + "/b2", Tensor<T>::zeros(1, e), false);
    }

    typename Graph<T>::NodeId forward(Graph<T>& g, typename Graph<T>::NodeId x, int n_heads) {
        auto xn = g.layer_norm(x, g.leaf(ln1_g), g.leaf(ln1_b));
        auto q = g.add_row(g.matmul(xn, g.leaf(wq)), g.leaf(bq));
        auto k = g.add_row(g.matmul(xn, g.leaf(wk)), g.leaf(bk));
        auto v = g.add_row(g.matmul(xn, g.leaf(wv)), g.leaf(bv));
        auto att = g.sdpa(q, k, v, n_heads);
        auto proj = g.add_row(g.matmul(att, g.leaf(wo)), g.leaf(bo));
        x = g.add(x, proj);
        auto xn2 = g.layer_norm(x, g.leaf(ln2_g), g.leaf(ln2_b));
        auto h = g.tanh_(g.add_row(g.matmul(xn2, g.leaf(w1)), g.leaf(b1)));
        auto mlp = g.add_row(g.matmul(h, g.leaf(w2)), g.leaf(b2));
        return g.add(x, mlp);
    }

    void for_each_param(const ParamVisitor<T>& fn) {
        for (Param<T>* p : {&ln1_g, &ln1_b, &wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo,
                            &ln2_g, &ln2_b, &w1, &b1, &w2, &b2})
            fn(*p);
    }
};

template <typename T>
struct TransformerStack {
    std::vector<TransformerBlock<T>> blocks;
    Param<T> ln_f_g, ln_f_b;
    int n_heads = 4;

    void init(const std::string& prefix, int e, int depth, int n_heads_, int mlp_hidden,
              std::mt19937_64& rng) {
        n_heads = n_heads_;
        blocks.resize(depth);
        for (int i = 0; i < depth; ++i) blocks[i].init(prefix + "/blk" + std::to_string(i), e, mlp_hidden, rng);
        ln_f_g = Param<T>(prefix + "/ln_f_g", Tensor<T>::full(1, e, T(1)), false);
        ln_f_b = Param<T>(prefix + "/ln_f_b", Tensor<T>::zeros(1, e), false);
    }

    typename Graph<T>::NodeId forward(Graph<T>& g, typename Graph<T>::NodeId seq) {
        for (auto& b : blocks) seq = b.forward(g, seq, n_heads);
        return g.layer_norm(seq, g.leaf(ln_f_g), g.leaf(ln_f_b));
    }

    void for_each_param(const ParamVisitor<T>& fn) {
        for (auto& b : blocks) b.for_each_param(fn);
        fn(ln_f_g);
        fn(ln_f_b);
    }
};

/// Frozen ViT-style encoder. Prompts, when given, sit between [CLS] and the
/// patch tokens; positional embeddings cover [CLS] and patches only.
template <typename T>
struct VisionEncoder {
    int img_h = 16, img_w = 16, img_c = 1;
    int patch_size = 8;
    int embed_dim = 32;
    int n_layers = 2;
    Param<T> patch_w, patch_b;  // (patch^2*c) x e, 1 x e
    Param<T> cls_token;         // 1 x e
    Param<T> pos_embed;         // (1+m) x e
    TransformerStack<T> stack;

    int n_patches() const { return (img_h / patch_size) * (img_w / patch_size); }

    void init(const std::string& prefix, int h, int w, int c, int patch, int e, int depth,
              int n_heads, uint64_t seed) {
        if (h % patch != 0 || w % patch != 0)
            throw std::invalid_argument("VisionEncoder: image sides not divisible by patch size");
        img_h = h;
        img_w = w;
        img_c = c;
        patch_size = patch;
        embed_dim = e;
        n_layers = depth;
        auto rng = make_rng(seed, SeedTag::EncoderInit);
        int pd = patch * patch * c;
        patch_w = Param<T>(prefix + "/patch_w", Tensor<T>::randn(pd, e, rng, T(1) / std::sqrt(static_cast<T>(pd))), false);
        patch_b = Param<T>(prefix + "/patch_b", Tensor<T>::randn(1, e, rng, T(0.02)), false);
        cls_token = Param<T>(prefix + "/cls", Tensor<T>::randn(1, e, rng, T(0.5)), false);
        pos_embed = Param<T>(prefix + "/pos", Tensor<T>::randn(1 + n_patches(), e, rng, T(0.5)), false);
        stack.init(prefix, e, depth, n_heads, 4 * e, rng);
    }

    /// Row-major patch extraction + linear projection -> m x e tokens.
    typename Graph<T>::NodeId patchify(Graph<T>& g, const Image& im) const {
        if (im.h % patch_size != 0 || im.w % patch_size != 0)
            throw std::invalid_argument("patchify: image " + std::to_string(im.h) + "x" +
                                        std::to_string(im.w) + " not divisible by patch " +
                                        std::to_string(patch_size));
        if (im.h != img_h || im.w != img_w || im.c != img_c)
            throw std::invalid_argument("patchify: image shape does not match encoder");
        int py = im.h / patch_size, px = im.w / patch_size;
        int pd = patch_size * patch_size * im.c;
        Tensor<T> patches(py * px, pd);
        for (int gy = 0; gy < py; ++gy)
            for (int gx = 0; gx < px; ++gx) {
                int row = gy * px + gx;
                int i = 0;
                for (int y = 0; y < patch_size; ++y)
                    for (int x = 0; x < patch_size; ++x)
                        for (int ch = 0; ch < im.c; ++ch)
                            patches.at(row, i++) =
                                static_cast<T>(im.at(gy * patch_size + y, gx * patch_size + x, ch));
            }
        auto toks = g.matmul(g.constant(std::move(patches)), g.leaf(const_cast<Param<T>&>(patch_w)));
        return g.add_row(toks, g.leaf(const_cast<Param<T>&>(patch_b)));
    }

    /// [CLS][U_1..U_p][I_1..I_m]; pass prompts = -1 for the plain sequence.
    typename Graph<T>::NodeId insert_visual_prompts(Graph<T>& g, typename Graph<T>::NodeId tokens,
                                                    typename Graph<T>::NodeId prompts) const {
        int m = g.value(tokens).rows;
        if (prompts >= 0 && g.value(prompts).cols != embed_dim)
            throw std::invalid_argument("insert_visual_prompts: prompt dim " +
                                        g.value(prompts).shape_str() + " != embed dim " +
                                        std::to_string(embed_dim));
        auto pos = g.leaf(const_cast<Param<T>&>(pos_embed));
        auto cls = g.add(g.leaf(const_cast<Param<T>&>(cls_token)), g.slice(pos, 0, 1, 0, embed_dim));
        auto pat = g.add(tokens, g.slice(pos, 1, 1 + m, 0, embed_dim));
        if (prompts < 0) return g.concat_rows({cls, pat});
        return g.concat_rows({cls, prompts, pat});
    }

    /// Returns (pooled 1xe, token outputs). Pooled is the [CLS] output.
    std::pair<typename Graph<T>::NodeId, typename Graph<T>::NodeId> encode_sequence(
        Graph<T>& g, typename Graph<T>::NodeId seq) {
        auto out = stack.forward(g, seq);
        auto pooled = g.slice(out, 0, 1, 0, embed_dim);
        return {pooled, out};
    }

    /// Full forward: patchify + insert prompts + encode; returns pooled feature.
    typename Graph<T>::NodeId encode_image(Graph<T>& g, const Image& im,
                                           typename Graph<T>::NodeId prompts = -1) {
        auto seq = insert_visual_prompts(g, patchify(g, im), prompts);
        return encode_sequence(g, seq).first;
    }

    /// Pooled no-prompt feature as a detached value (used by the gate).
    Tensor<T> plain_feature(const Image& im) {
        Graph<T> g;
        auto pooled = encode_image(g, im, -1);
        return g.value(pooled);
    }

    void for_each_param(const ParamVisitor<T>& fn) {
        fn(patch_w);
        fn(patch_b);
        fn(cls_token);
        fn(pos_embed);
        stack.for_each_param(fn);
    }

    uint64_t weights_checksum() {
        uint64_t h = 0xcbf29ce484222325ULL;
        for_each_param([&](Param<T>& p) { h = splitmix64(h ^ checksum(p.value)); });
        return h;
    }
};

/// Frozen text-side encoder over [V_1..V_M][class-embedding] sequences.
/// A frozen per-class embedding table stands in for tokenized class names.
template <typename T>
struct TextEncoder {
    int embed_dim = 32;
    int max_context = 8;  // M
    Param<T> class_embed;  // n_classes x e
    Param<T> pos_embed;    // (M+1) x e
    TransformerStack<T> stack;

    void init(const std::string& prefix, int n_classes, int e, int M, int depth, int n_heads,
              uint64_t seed) {
        embed_dim = e;
        max_context = M;
        auto rng = make_rng(seed, SeedTag::EncoderInit, 99);
        class_embed = Param<T>(prefix + "/class_embed", Tensor<T>::randn(n_classes, e, rng, T(0.5)), false);
        pos_embed = Param<T>(prefix + "/pos", Tensor<T>::randn(M + 1, e, rng, T(0.5)), false);
        stack.init(prefix, e, depth, n_heads, 4 * e, rng);
    }

    int n_classes() const { return class_embed.value.rows; }

    /// context: m_ctx x e (m_ctx <= M) or -1 for none. Pools the class position.
    typename Graph<T>::NodeId encode_text(Graph<T>& g, typename Graph<T>::NodeId context, int class_id) {
        if (class_id < 0 || class_id >= n_classes())
            throw std::invalid_argument("encode_text: unknown class id " + std::to_string(class_id));
        int m_ctx = context >= 0 ? g.value(context).rows : 0;
        if (m_ctx > max_context)
            throw std::invalid_argument("encode_text: context length " + std::to_string(m_ctx) +
                                        " exceeds M=" + std::to_string(max_context));
        if (context >= 0 && g.value(context).cols != embed_dim)
            throw std::invalid_argument("encode_text: context dim mismatch");
        auto pos = g.leaf(pos_embed);
        auto cls = g.add(g.slice(g.leaf(class_embed), class_id, class_id + 1, 0, embed_dim),
                         g.slice(pos, m_ctx, m_ctx + 1, 0, embed_dim));
        typename Graph<T>::NodeId seq;
        if (context >= 0) {
            auto ctx = g.add(context, g.slice(pos, 0, m_ctx, 0, embed_dim));
            seq = g.concat_rows({ctx, cls});
        } else {
            seq = cls;
        }
        auto out = stack.forward(g, seq);
        return g.slice(out, m_ctx, m_ctx + 1, 0, embed_dim);
    }

    void for_each_param(const ParamVisitor<T>& fn) {
        fn(class_embed);
        fn(pos_embed);
        stack.for_each_param(fn);
    }

    uint64_t weights_checksum() {
        uint64_t h = 0xcbf29ce484222325ULL;
        for_each_param([&](Param<T>& p) { h = splitmix64(h ^ checksum(p.value)); });
        return h;
    }
};

/// v_i for the gate: pooled Stabilizer-side feature with no prompt insertion,
/// detached from any training graph.
template <typename T>
Tensor<T> gate_feature(VisionEncoder<T>& stabilizer_encoder, const Image& im) {
    return stabilizer_encoder.plain_feature(im);
}

}  // namespace pfusion
