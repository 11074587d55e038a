// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfusion/encoder.hpp"

namespace pfusion {

/// Contrastive text-prompt head: one trainable prompt set per task, frozen
/// once the task ends, plus shared image prompts that augment the vision side
/// and stay trainable for the whole run.
template <typename T>
struct Stabilizer {
    using NodeId = typename Graph<T>::NodeId;

    struct PromptSet {
        std::unique_ptr<Param<T>> prompts;  // (|classes|*M) x e_text, class-major blocks
        std::vector<int> class_ids;         // block order
    };

    struct BankRow {
        int class_id;
        int set_idx;
        int block_idx;  // block within the set
    };

    int context_len = 8;  // M
    T temperature = T(0.07);
    bool augmentation_enabled = true;
    std::vector<PromptSet> sets;
    std::vector<BankRow> bank_rows;        // arrival order
    std::vector<int> seen_classes;         // arrival order, unique
    Param<T> image_prompts;                // L~ x e_vis
    StreamMode mode = StreamMode::ClassIncremental;

    void init(int M, int e_text, int image_prompt_len, int e_vis, T temp, uint64_t seed,
              StreamMode m) {
        context_len = M;
        text_dim_ = e_text;
        temperature = temp;
        mode = m;
        auto rng = make_rng(seed, SeedTag::PromptInit, 0xa06);
        image_prompts = Param<T>("stabilizer/image_prompts",
                                 image_prompt_len > 0
                                     ? Tensor<T>::randn(image_prompt_len, e_vis, rng, T(0.02))
                                     : Tensor<T>::zeros(0, e_vis),
                                 image_prompt_len > 0);
    }

    /// Appends a fresh trainable prompt set for task_classes and freezes all
    /// earlier sets. In domain-incremental mode classes repeat across tasks
    /// and each set covers the full class list for its domain.
    void begin_task(const std::vector<int>& task_classes, uint64_t seed) {
        if (task_classes.empty()) throw std::invalid_argument("begin_task: no classes");
        if (mode == StreamMode::ClassIncremental) {
            std::set<int> owned(seen_classes.begin(), seen_classes.end());
            for (int k : task_classes)
                if (owned.count(k))
                    throw std::invalid_argument("begin_task: class " + std::to_string(k) +
                                                " already owned by an earlier task");
        }
        for (auto& s : sets) s.prompts->trainable = false;

        int t = static_cast<int>(sets.size());
        auto rng = make_rng(seed, SeedTag::PromptInit, static_cast<uint64_t>(t) + 1);
        PromptSet ps;
        ps.class_ids = task_classes;
        ps.prompts = std::make_unique<Param<T>>(
            "stabilizer/prompts_task" + std::to_string(t),
            Tensor<T>::randn(static_cast<int>(task_classes.size()) * context_len, text_dim_, rng,
                             T(0.02)),
            true);
        for (size_t b = 0; b < task_classes.size(); ++b) {
            bank_rows.push_back({task_classes[b], t, static_cast<int>(b)});
            if (!std::count(seen_classes.begin(), seen_classes.end(), task_classes[b]))
                seen_classes.push_back(task_classes[b]);
        }
        sets.push_back(std::move(ps));
    }

    int text_dim() const { return text_dim_; }

    int n_bank_rows() const { return static_cast<int>(bank_rows.size()); }
    int n_seen_classes() const { return static_cast<int>(seen_classes.size()); }

    /// Concatenated bank as a value: rows in task arrival order, one block of
    /// M context rows per class entry.
    Tensor<T> concat_bank() const {
        if (sets.empty()) throw std::logic_error("concat_bank: no task begun");
        Tensor<T> out(n_bank_rows() * context_len, text_dim_);
        int r = 0;
        for (auto& row : bank_rows) {
            const auto& v = sets[row.set_idx].prompts->value;
            for (int i = 0; i < context_len; ++i)
                for (int c = 0; c < text_dim_; ++c)
                    out.at(r + i, c) = v.at(row.block_idx * context_len + i, c);
            r += context_len;
        }
        return out;
    }

    /// g(P_k) for every bank row, one node per row (1 x e_text each).
    /// Shared across a batch: build once per graph.
    std::vector<NodeId> text_features(Graph<T>& g, TextEncoder<T>& text_enc) {
        if (sets.empty()) throw std::logic_error("text_features: no task begun");
        std::vector<NodeId> feats;
        feats.reserve(bank_rows.size());
        std::vector<NodeId> set_leaves(sets.size(), -1);
        for (auto& row : bank_rows) {
            if (set_leaves[row.set_idx] < 0) set_leaves[row.set_idx] = g.leaf(*sets[row.set_idx].prompts);
            NodeId ctx = context_len > 0
                             ? g.slice(set_leaves[row.set_idx], row.block_idx * context_len,
                                       (row.block_idx + 1) * context_len, 0, text_dim_)
                             : -1;
            feats.push_back(text_enc.encode_text(g, ctx, row.class_id));
        }
        return feats;
    }

    /// Pooled image feature f(x~) with the image prompts inserted among patches.
    NodeId image_feature(Graph<T>& g, VisionEncoder<T>& enc, const Image& im) {
        NodeId prompts = -1;
        if (augmentation_enabled && image_prompts.value.rows > 0) prompts = g.leaf(image_prompts);
        return enc.encode_image(g, im, prompts);
    }

    /// S(x) over seen classes: entry k = <g(P_k), f(x~)> / T. In
    /// domain-incremental mode the per-class logit is the max over the
    /// domain-specific rows owning that class.
    NodeId logits(Graph<T>& g, const std::vector<NodeId>& text_feats, NodeId image_feat) {
        auto mat = g.concat_rows(text_feats);
        auto cos = g.cosine_rows(mat, image_feat);  // 1 x n_bank_rows
        auto scaled = g.affine(cos, T(1) / temperature, T(0));
        if (mode == StreamMode::ClassIncremental) return scaled;
        // reduce domain rows per class, seen_classes order
        std::vector<NodeId> per_class;
        for (int k : seen_classes) {
            NodeId acc = -1;
            for (size_t r = 0; r < bank_rows.size(); ++r) {
                if (bank_rows[r].class_id != k) continue;
                NodeId entry = g.slice(scaled, 0, 1, static_cast<int>(r), static_cast<int>(r) + 1);
                acc = acc < 0 ? entry : g.maximum(acc, entry);
            }
            per_class.push_back(acc);
        }
        return g.concat_cols(per_class);
    }

    /// Argmax class over seen classes; ties break to the lowest class id.
    int predict(const Tensor<T>& logits_row) const {
        int best = 0;
        for (int i = 1; i < logits_row.cols; ++i)
            if (logits_row.data[i] > logits_row.data[best]) best = i;
        // resolve ties toward the lowest class id among equal entries
        int best_class = seen_classes[best];
        for (int i = 0; i < logits_row.cols; ++i)
            if (logits_row.data[i] == logits_row.data[best] && seen_classes[i] < best_class) {
                best = i;
                best_class = seen_classes[i];
            }
        return seen_classes[best];
    }

    std::vector<uint64_t> set_checksums() const {
        std::vector<uint64_t> out;
        for (auto& s : sets) out.push_back(checksum(s.prompts->value));
        return out;
    }

    void for_each_param(const ParamVisitor<T>& fn) {
        for (auto& s : sets) fn(*s.prompts);
        fn(image_prompts);
    }

    std::vector<Param<T>*> trainable_params() {
        std::vector<Param<T>*> out;
        for (auto& s : sets)
            if (s.prompts->trainable) out.push_back(s.prompts.get());
        if (image_prompts.trainable && image_prompts.value.rows > 0) out.push_back(&image_prompts);
        return out;
    }

  private:
    int text_dim_ = 32;
};

}  // namespace pfusion
