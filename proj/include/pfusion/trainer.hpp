// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfusion/booster.hpp"
#include "pfusion/checkpoint.hpp"
#include "pfusion/config.hpp"
#include "pfusion/cost_model.hpp"
#include "pfusion/encoder.hpp"
#include "pfusion/fusion.hpp"
#include "pfusion/gate.hpp"
#include "pfusion/kde.hpp"
#include "pfusion/metrics.hpp"
#include "pfusion/optimizer.hpp"
#include "pfusion/rehearsal.hpp"
#include "pfusion/results.hpp"
#include "pfusion/stabilizer.hpp"
#include "pfusion/stream.hpp"
#include "pfusion/synthetic.hpp"

namespace pfusion {

inline TaskStream build_stream(const RunConfig& cfg) {
    const auto& s = cfg.stream;
    if (s.kind == "blobs") {
        BlobSpec spec;
        spec.n_classes = s.n_classes;
        spec.samples_per_class = s.samples_per_class;
        spec.h = s.image_h;
        spec.w = s.image_w;
        spec.c = s.image_c;
        spec.noise = static_cast<float>(s.noise);
        spec.seed = cfg.seed;
        Dataset ds = make_split_blobs(spec);
        auto order = s.shuffled_class_order ? shuffled_order(ds.n_classes, cfg.seed)
                                            : identity_order(ds.n_classes);
        return make_class_incremental_stream(ds, s.n_tasks, order, cfg.seed);
    }
    if (s.kind == "domain_blobs") {
        DomainBlobSpec spec;
        spec.base.n_classes = s.n_classes;
        spec.base.samples_per_class = s.samples_per_class;
        spec.base.h = s.image_h;
        spec.base.w = s.image_w;
        spec.base.c = s.image_c;
        spec.base.noise = static_cast<float>(s.noise);
        spec.base.seed = cfg.seed;
        for (double a : s.domain_angles) spec.domain_angles.push_back(static_cast<float>(a));
        for (double b : s.domain_brightness) spec.domain_brightness.push_back(static_cast<float>(b));
        Dataset ds = make_domain_blobs(spec);
        return make_domain_incremental_stream(ds, s.train_domains, s.test_domains);
    }
    // manifest
    Dataset ds = load_manifest(s.manifest_path);
    if (!s.train_domains.empty())
        return make_domain_incremental_stream(ds, s.train_domains, s.test_domains);
    auto order = s.shuffled_class_order ? shuffled_order(ds.n_classes, cfg.seed)
                                        : identity_order(ds.n_classes);
    return make_class_incremental_stream(ds, s.n_tasks, order, cfg.seed);
}

/// The full continual learner: frozen encoders, both branches, fusion state,
/// optional gate, rehearsal memory, and the metrics matrix.
template <typename T>
class ContinualModel {
  public:
    RunConfig cfg;
    TaskStream stream;
    VisionEncoder<T> enc_stab;
    VisionEncoder<T> enc_boost;
    TextEncoder<T> text_enc;
    Stabilizer<T> stab;
    Booster<T> boost;
    FusionParams<T> fusion;
    Gate<T> gate;
    MemoryBuffer buffer;
    ClassFeatureStats<T> stats;
    MetricsMatrix metrics;
    int tasks_trained = 0;

    // diagnostics: task-1 test features right after task 1 and most recently
    Tensor<T> task1_stab_before, task1_boost_before;
    Tensor<T> task1_stab_last, task1_boost_last;
    std::vector<bool> last_decision_log;
    long booster_eval_count = 0;  // inference-side Booster forward count

    void init(const RunConfig& config) {
        cfg = config;
        stream = build_stream(cfg);
        int n_classes = stream.tasks.empty() ? cfg.stream.n_classes
                                             : stream.tasks[0].train_slice.n_classes;
        const auto& m = cfg.model;
        enc_stab.init("enc_stab", cfg.stream.image_h, cfg.stream.image_w, cfg.stream.image_c,
                      m.patch_size, m.embed_dim_vis, m.encoder_depth, m.n_heads,
                      derive_seed(cfg.seed, SeedTag::EncoderInit, 1));
        if (!m.share_vision_encoder)
            enc_boost.init("enc_boost", cfg.stream.image_h, cfg.stream.image_w, cfg.stream.image_c,
                           m.patch_size, m.embed_dim_vis, m.encoder_depth, m.n_heads,
                           derive_seed(cfg.seed, SeedTag::EncoderInit, 2));
        text_enc.init("text", n_classes, m.embed_dim_text, m.text_prompt_len, m.encoder_depth,
                      m.n_heads, derive_seed(cfg.seed, SeedTag::EncoderInit, 3));
        stab.init(m.text_prompt_len, m.embed_dim_text, m.image_prompt_len, m.embed_dim_vis,
                  static_cast<T>(m.temperature), cfg.seed, stream.mode);
        stab.augmentation_enabled = cfg.fusion.augmentation_enabled;
        boost.init(m.visual_prompt_len, m.embed_dim_vis, cfg.seed);
        fusion.init(cfg.fusion.lambda_enabled, cfg.fusion.mask_enabled, mask_mode());
        if (cfg.gate.enabled)
            gate.init(m.embed_dim_vis, cfg.gate.hidden, static_cast<T>(cfg.gate.tau),
                      static_cast<T>(cfg.gate.rho), static_cast<T>(cfg.gate.zeta),
                      static_cast<T>(cfg.gate.delta), cfg.seed);
        buffer.capacity = cfg.rehearsal.capacity;
    }

    VisionEncoder<T>& booster_encoder() { return cfg.model.share_vision_encoder ? enc_stab : enc_boost; }

    MaskMode mask_mode() const {
        if (cfg.fusion.mask_mode == "rehearsal") return MaskMode::Rehearsal;
        if (cfg.fusion.mask_mode == "memory_free") return MaskMode::MemoryFree;
        return cfg.rehearsal_mode() == RehearsalMode::Gaussian ? MaskMode::MemoryFree
                                                               : MaskMode::Rehearsal;
    }

    const std::vector<int>& seen_classes() const { return stab.seen_classes; }

    int seen_index(int class_id) const {
        const auto& sc = stab.seen_classes;
        auto it = std::find(sc.begin(), sc.end(), class_id);
        if (it == sc.end())
            throw std::invalid_argument("label " + std::to_string(class_id) + " not among seen classes");
        return static_cast<int>(it - sc.begin());
    }

    uint64_t frozen_encoder_checksum() {
        uint64_t h = enc_stab.weights_checksum();
        if (!cfg.model.share_vision_encoder) h = splitmix64(h ^ enc_boost.weights_checksum());
        return splitmix64(h ^ text_enc.weights_checksum());
    }

    // ---- per-batch graph construction ----

    struct BatchBuild {
        std::vector<typename Graph<T>::NodeId> z_rows;
        std::vector<int> labels;                           // seen-index labels
        std::vector<typename Graph<T>::NodeId> st_m0;      // gate ST activations (training)
        std::vector<typename Graph<T>::NodeId> kd_terms;   // distillation terms
    };

    /// Builds the fused (or single-branch) logits for each item. When
    /// gumbel_noise is non-null the gate path is active; soft_only replaces
    /// the straight-through decision with its relaxation (used by gradient
    /// audits).
    BatchBuild build_training_batch(Graph<T>& g, const std::vector<const Item*>& batch,
                                    const std::vector<Tensor<T>>* gumbel_noise = nullptr,
                                    bool soft_only = false) {
        BatchBuild out;
        Variant v = cfg.variant();
        typename Graph<T>::NodeId text_mat = -1;
        if (v != Variant::BoosterOnly)
            text_mat = g.concat_rows(stab.text_features(g, text_enc));
        typename Graph<T>::NodeId lambda_node = -1;
        typename Graph<T>::NodeId mask_node = -1;
        if (v == Variant::PromptFusion) {
            lambda_node = g.leaf(fusion.lambda_);
            if (fusion.mask_enabled) mask_node = build_mask(g, fusion);
        }
        for (size_t i = 0; i < batch.size(); ++i) {
            const Item* item = batch[i];
            out.labels.push_back(seen_index(item->label));
            typename Graph<T>::NodeId s_logits = -1, b_logits = -1;
            if (v != Variant::BoosterOnly) {
                auto f = stab.image_feature(g, enc_stab, item->image);
                s_logits = stab.logits(g, text_mat, f);
            }
            if (v != Variant::StabilizerOnly) {
                auto f = boost.image_feature(g, booster_encoder(), item->image);
                b_logits = boost.logits(g, f);
            }
            typename Graph<T>::NodeId z;
            if (v == Variant::StabilizerOnly) {
                z = s_logits;
            } else if (v == Variant::BoosterOnly) {
                z = b_logits;
            } else if (gumbel_noise) {
                Tensor<T> feat = gate_feature(enc_stab, item->image);
                auto dec = gate.gumbel_decision(g, g.constant(feat), (*gumbel_noise)[i],
                                                gate.tau, soft_only);
                z = fuse_gated(g, s_logits, b_logits, dec.st, lambda_node, mask_node);
                out.st_m0.push_back(g.slice(dec.st, 0, 1, 0, 1));
                if (gate.has_snapshot)
                    out.kd_terms.push_back(gate.distill_term(g, g.constant(feat), feat));
            } else {
                z = fuse(g, s_logits, b_logits, lambda_node, mask_node);
            }
            out.z_rows.push_back(z);
        }
        return out;
    }

    /// Sum-form objective: sum CE (+ usage penalty and distillation when the
    /// gate is active). Matches the training objective before the 1/|batch|
    /// optimizer scaling.
    typename Graph<T>::NodeId training_loss(Graph<T>& g, const BatchBuild& bb) {
        auto logits = g.concat_rows(bb.z_rows);
        auto loss = g.cross_entropy_sum(logits, bb.labels);
        if (!bb.st_m0.empty()) {
            auto activations = g.sum(g.concat_cols(bb.st_m0));
            T gamma = gate.rho * static_cast<T>(bb.st_m0.size());
            auto dev = g.affine(activations, T(1), -gamma);
            auto penalty = g.affine(g.mul(dev, dev), gate.zeta, T(0));
            loss = g.add(loss, penalty);
        }
        if (!bb.kd_terms.empty()) {
            auto kd = g.concat_cols(bb.kd_terms);
            auto kd_mean = g.mean(kd);
            loss = g.add(loss, g.affine(kd_mean, gate.delta, T(0)));
        }
        return loss;
    }

    std::vector<Param<T>*> trainable_params() {
        std::vector<Param<T>*> params;
        Variant v = cfg.variant();
        if (v != Variant::BoosterOnly)
            for (auto* p : stab.trainable_params()) params.push_back(p);
        if (v != Variant::StabilizerOnly)
            for (auto* p : boost.trainable_params()) params.push_back(p);
        if (v == Variant::PromptFusion)
            for (auto* p : fusion.trainable_params()) params.push_back(p);
        if (cfg.gate.enabled)
            for (auto* p : gate.trainable_params()) params.push_back(p);
        return params;
    }

    // ---- continual loop ----

    void train_task(int t) {
        if (t != tasks_trained + 1)
            throw std::logic_error("train_task: task " + std::to_string(t) + " out of order, expected " +
                                   std::to_string(tasks_trained + 1));
        const Task& task = stream.tasks[t - 1];
        std::vector<int> classes = task_classes(stream, t - 1);

        int n_before = stab.n_seen_classes();
        stab.begin_task(classes, cfg.seed);
        int n_new = stab.n_seen_classes() - n_before;
        if (n_new > 0) boost.extend_head(n_new);
        fusion.begin_task(n_before, n_new);
        if (cfg.gate.enabled) gate.begin_task();

        // training pool: task items plus buffer exemplars mixed in
        std::vector<Item> pool_storage;
        std::vector<const Item*> pool;
        for (const auto& it : task.train_slice.items) pool.push_back(&it);
        if (cfg.rehearsal_mode() == RehearsalMode::Buffer && t > 1) {
            for (const auto& e : buffer.store) {
                Item it;
                it.image = e.image;
                it.label = e.label;
                pool_storage.push_back(std::move(it));
            }
            for (const auto& it : pool_storage) pool.push_back(&it);
        }

        int n = static_cast<int>(pool.size());
        int bs = std::min(cfg.optimizer.batch_size, n);
        int steps_per_epoch = (n + bs - 1) / bs;
        int total_steps = steps_per_epoch * cfg.optimizer.epochs_per_task;

        AdamW<T> opt;
        opt.lr = static_cast<T>(cfg.optimizer.lr);
        opt.weight_decay = static_cast<T>(cfg.optimizer.weight_decay);
        auto params = trainable_params();

        auto gumbel_rng = make_rng(cfg.seed, SeedTag::Gumbel, static_cast<uint64_t>(t));
        int step = 0;
        for (int epoch = 0; epoch < cfg.optimizer.epochs_per_task; ++epoch) {
            std::vector<int> order(n);
            std::iota(order.begin(), order.end(), 0);
            auto shuffle_rng = make_rng(cfg.seed, SeedTag::BatchShuffle, static_cast<uint64_t>(t),
                                        static_cast<uint64_t>(epoch));
            std::shuffle(order.begin(), order.end(), shuffle_rng);
            for (int b0 = 0; b0 < n; b0 += bs, ++step) {
                std::vector<const Item*> batch;
                for (int i = b0; i < std::min(n, b0 + bs); ++i) batch.push_back(pool[order[i]]);
                std::vector<Tensor<T>> noise;
                const std::vector<Tensor<T>>* noise_ptr = nullptr;
                if (cfg.gate.enabled) {
                    for (size_t i = 0; i < batch.size(); ++i)
                        noise.push_back(Gate<T>::gumbel_draw(gumbel_rng));
                    noise_ptr = &noise;
                }
                Graph<T> g;
                auto bb = build_training_batch(g, batch, noise_ptr);
                auto loss = training_loss(g, bb);
                auto scaled = g.affine(loss, T(1) / static_cast<T>(batch.size()), T(0));
                for (auto* p : params) p->zero_grad();
                g.backward(scaled);
                T lr_now = cfg.optimizer.schedule == "cosine"
                               ? cosine_lr(opt.lr, step, total_steps)
                               : opt.lr;
                opt.step(params, lr_now);
            }
        }

        // task boundary: stats/buffer, feature rehearsal, then freeze + snapshot
        if (cfg.rehearsal_mode() == RehearsalMode::Buffer) {
            std::vector<MemoryBuffer::Exemplar> task_items;
            for (size_t i = 0; i < task.train_slice.items.size(); ++i) {
                const auto& it = task.train_slice.items[i];
                task_items.push_back({it.image, it.label,
                                      derive_seed(cfg.seed, SeedTag::Buffer, t, i)});
            }
            buffer.update(task_items, stab.seen_classes, cfg.seed);
        } else if (cfg.rehearsal_mode() == RehearsalMode::Gaussian) {
            record_task_stats(task);
            feature_finetune(t);
        }
        stab.sets.back().prompts->trainable = false;
        if (cfg.gate.enabled) {
            gate.end_task();
            gate.snapshot();
        }
        tasks_trained = t;
    }

    /// Branch features over a dataset slice, as plain values.
    std::pair<Tensor<T>, Tensor<T>> branch_features(const std::vector<Item>& items) {
        int e = cfg.model.embed_dim_vis;
        Variant v = cfg.variant();
        Tensor<T> fs(v == Variant::BoosterOnly ? 0 : static_cast<int>(items.size()), e);
        Tensor<T> fb(v == Variant::StabilizerOnly ? 0 : static_cast<int>(items.size()), e);
        for (size_t i = 0; i < items.size(); ++i) {
            if (v != Variant::BoosterOnly) {
                Graph<T> g;
                auto f = stab.image_feature(g, enc_stab, items[i].image);
                const auto& fv = g.value(f);
                for (int c = 0; c < e; ++c) fs.at(static_cast<int>(i), c) = fv.data[c];
            }
            if (v != Variant::StabilizerOnly) {
                Graph<T> g;
                auto f = boost.image_feature(g, booster_encoder(), items[i].image);
                const auto& fv = g.value(f);
                for (int c = 0; c < e; ++c) fb.at(static_cast<int>(i), c) = fv.data[c];
            }
        }
        return {std::move(fs), std::move(fb)};
    }

    void record_task_stats(const Task& task) {
        auto [fs, fb] = branch_features(task.train_slice.items);
        std::vector<int> labels;
        for (const auto& it : task.train_slice.items) labels.push_back(it.label);
        if (fs.rows > 0) stats.record(fs, labels, Branch::Stabilizer);
        if (fb.rows > 0) stats.record(fb, labels, Branch::Booster);
    }

    /// Memory-free rehearsal: sample per-class Gaussian features for every
    /// seen class on both branches and finetune the downstream parameters
    /// (text prompts, head, lambda, alpha, beta). Visual and image prompts
    /// sit upstream of the sampled features and receive no gradient.
    void feature_finetune(int t) {
        Variant v = cfg.variant();
        auto classes = stab.seen_classes;
        auto rng = make_rng(cfg.seed, SeedTag::FeatureSample, static_cast<uint64_t>(t));
        SampledFeatures<T> s_stab, s_boost;
        if (v != Variant::BoosterOnly)
            s_stab = sample_features(stats, Branch::Stabilizer, classes,
                                     cfg.rehearsal.samples_per_class, rng);
        if (v != Variant::StabilizerOnly)
            s_boost = sample_features(stats, Branch::Booster, classes,
                                      cfg.rehearsal.samples_per_class, rng);
        const auto& labels_src = v == Variant::BoosterOnly ? s_boost.labels : s_stab.labels;
        int n = static_cast<int>(labels_src.size());

        std::vector<Param<T>*> params;
        if (v != Variant::BoosterOnly)
            for (auto* p : stab.trainable_params())
                if (p != &stab.image_prompts) params.push_back(p);
        if (v != Variant::StabilizerOnly) {
            params.push_back(&boost.head_w);
            params.push_back(&boost.head_b);
        }
        if (v == Variant::PromptFusion)
            for (auto* p : fusion.trainable_params()) params.push_back(p);

        AdamW<T> opt;
        opt.lr = static_cast<T>(cfg.optimizer.lr);
        opt.weight_decay = static_cast<T>(cfg.optimizer.weight_decay);
        for (int step = 0; step < cfg.rehearsal.finetune_steps; ++step) {
            Graph<T> g;
            auto loss = feature_loss(g, s_stab, s_boost, n);
            auto scaled = g.affine(loss, T(1) / static_cast<T>(n), T(0));
            for (auto* p : params) p->zero_grad();
            g.backward(scaled);
            opt.step(params, opt.lr);
        }
    }

    /// Sum-CE over sampled features; used by feature_finetune and its tests.
    typename Graph<T>::NodeId feature_loss(Graph<T>& g, const SampledFeatures<T>& s_stab,
                                           const SampledFeatures<T>& s_boost, int n) {
        Variant v = cfg.variant();
        typename Graph<T>::NodeId text_mat = -1;
        if (v != Variant::BoosterOnly)
            text_mat = g.concat_rows(stab.text_features(g, text_enc));
        typename Graph<T>::NodeId lambda_node = -1, mask_node = -1;
        if (v == Variant::PromptFusion) {
            lambda_node = g.leaf(fusion.lambda_);
            if (fusion.mask_enabled) mask_node = build_mask(g, fusion);
        }
        std::vector<typename Graph<T>::NodeId> rows;
        std::vector<int> labels;
        for (int i = 0; i < n; ++i) {
            typename Graph<T>::NodeId s_logits = -1, b_logits = -1;
            if (v != Variant::BoosterOnly) {
                auto feat = g.constant(slice_row(s_stab.features, i));
                s_logits = stab.logits(g, text_mat, feat);
                labels.push_back(seen_index(s_stab.labels[i]));
            }
            if (v != Variant::StabilizerOnly) {
                auto feat = g.constant(slice_row(s_boost.features, i));
                b_logits = boost.logits(g, feat);
                if (v == Variant::BoosterOnly) labels.push_back(seen_index(s_boost.labels[i]));
            }
            typename Graph<T>::NodeId z;
            if (v == Variant::StabilizerOnly)
                z = s_logits;
            else if (v == Variant::BoosterOnly)
                z = b_logits;
            else
                z = fuse(g, s_logits, b_logits, lambda_node, mask_node);
            rows.push_back(z);
        }
        return g.cross_entropy_sum(g.concat_rows(rows), labels);
    }

    // ---- evaluation ----

    /// Predicted class id for one image under the configured variant. The
    /// gate path skips the Booster forward entirely when the decision is off.
    int predict(const Item& item, const Tensor<T>& text_matrix, std::vector<bool>* decision_log) {
        Variant v = cfg.variant();
        Tensor<T> z;
        if (v == Variant::StabilizerOnly) {
            z = stabilizer_logits_value(item.image, text_matrix);
        } else if (v == Variant::BoosterOnly) {
            z = booster_logits_value(item.image);
        } else {
            bool use_booster = true;
            if (cfg.gate.enabled) {
                Tensor<T> feat = gate_feature(enc_stab, item.image);
                use_booster = gate.decide(feat);
                if (decision_log) decision_log->push_back(use_booster);
            }
            Tensor<T> s = stabilizer_logits_value(item.image, text_matrix);
            T lam = fusion.lambda_.value.data[0];
            T sl = T(1) / (T(1) + std::exp(-lam));
            Tensor<T> mix(1, s.cols);
            if (use_booster) {
                Tensor<T> b = booster_logits_value(item.image);
                ++booster_eval_count;
                for (int i = 0; i < s.cols; ++i)
                    mix.data[i] = (T(1) - sl) * s.data[i] + sl * b.data[i];
            } else {
                for (int i = 0; i < s.cols; ++i) mix.data[i] = (T(1) - sl) * s.data[i];
            }
            if (fusion.mask_enabled && fusion.apply_mask_at_inference) {
                Tensor<T> w = build_mask_value(fusion.current_task, fusion.alpha.value,
                                               fusion.beta.value, fusion.mode);
                for (int i = 0; i < s.cols; ++i) mix.data[i] *= w.data[i];
            }
            z = std::move(mix);
        }
        return stab.predict(z);
    }

    Tensor<T> stabilizer_logits_value(const Image& im, const Tensor<T>& text_matrix) {
        Graph<T> g;
        auto f = stab.image_feature(g, enc_stab, im);
        auto logits = stab.logits(g, g.constant(text_matrix), f);
        return g.value(logits);
    }

    Tensor<T> booster_logits_value(const Image& im) {
        Graph<T> g;
        auto f = boost.image_feature(g, booster_encoder(), im);
        return g.value(boost.logits(g, f));
    }

    /// Cached g(P_k) matrix (bank rows x e_text); valid while prompts are fixed.
    Tensor<T> text_feature_matrix() {
        Graph<T> g;
        auto mat = g.concat_rows(stab.text_features(g, text_enc));
        return g.value(mat);
    }

    double accuracy(const Dataset& slice, const Tensor<T>& text_matrix,
                    std::vector<bool>* decision_log) {
        if (slice.items.empty()) throw std::invalid_argument("accuracy: empty test slice");
        int correct = 0;
        for (const auto& item : slice.items)
            if (predict(item, text_matrix, decision_log) == item.label) ++correct;
        return static_cast<double>(correct) / static_cast<double>(slice.items.size());
    }

    /// Row R[T][1..T]; also refreshes the decision log and the task-1 branch
    /// feature diagnostics.
    std::vector<double> evaluate_all(int T_) {
        if (T_ != tasks_trained) throw std::logic_error("evaluate_all: task not trained");
        Variant v = cfg.variant();
        Tensor<T> text_matrix;
        if (v != Variant::BoosterOnly) text_matrix = text_feature_matrix();
        last_decision_log.clear();
        std::vector<double> row;
        for (int i = 0; i < T_; ++i)
            row.push_back(accuracy(stream.tasks[i].test_slice, text_matrix,
                                   cfg.gate.enabled ? &last_decision_log : nullptr));

        auto [fs, fb] = branch_features(stream.tasks[0].test_slice.items);
        if (T_ == 1) {
            task1_stab_before = fs;
            task1_boost_before = fb;
        }
        task1_stab_last = std::move(fs);
        task1_boost_last = std::move(fb);
        return row;
    }

  private:
    static Tensor<T> slice_row(const Tensor<T>& m, int r) {
        Tensor<T> out(1, m.cols);
        for (int c = 0; c < m.cols; ++c) out.data[c] = m.at(r, c);
        return out;
    }
};

}  // namespace pfusion
