// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "pfusion/checkpoint.hpp"
#include "pfusion/trainer.hpp"

namespace pfusion {

namespace detail {

inline std::string task_checkpoint_dir(const std::string& output_dir, int task) {
    char buf[32];
    snprintf(buf, sizeof(buf), "ckpt_task_%04d", task);
    return (std::filesystem::path(output_dir) / buf).string();
}

inline std::string hex64(uint64_t v) {
    char buf[17];
    snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

template <typename T>
Tensor<double> to_double(const Tensor<T>& t) {
    Tensor<double> out(t.rows, t.cols);
    for (int i = 0; i < t.numel(); ++i) out.data[i] = static_cast<double>(t.data[i]);
    return out;
}

}  // namespace detail

template <typename T>
void save_model_checkpoint(ContinualModel<T>& model, const std::string& dir) {
    Checkpoint ck;
    ck.config_hash = config_hash(model.cfg);
    ck.task_index = model.tasks_trained;
    ck.extra["config"] = config_to_json(model.cfg);
    ck.extra["seen_classes"] = model.stab.seen_classes;
    ck.extra["fusion_current_task"] = model.fusion.current_task;
    ck.extra["gate_has_snapshot"] = model.gate.has_snapshot;

    nlohmann::json set_classes = nlohmann::json::array();
    for (auto& s : model.stab.sets) set_classes.push_back(s.class_ids);
    ck.extra["stabilizer_sets"] = set_classes;

    nlohmann::json rows = nlohmann::json::array();
    for (auto& r : model.metrics.rows) rows.push_back(r);
    ck.extra["metrics_rows"] = rows;

    auto put_param = [&](Param<T>& p) { ck.put(p.name, p.value); };
    model.enc_stab.for_each_param(put_param);
    if (!model.cfg.model.share_vision_encoder) model.enc_boost.for_each_param(put_param);
    model.text_enc.for_each_param(put_param);
    model.stab.for_each_param(put_param);
    model.boost.for_each_param(put_param);
    model.fusion.for_each_param(put_param);
    if (model.cfg.gate.enabled) {
        model.gate.for_each_param(put_param);
        if (model.gate.has_snapshot) {
            ck.put("gate/snap_w1", model.gate.fw1);
            ck.put("gate/snap_b1", model.gate.fb1);
            ck.put("gate/snap_w2", model.gate.fw2);
            ck.put("gate/snap_b2", model.gate.fb2);
        }
    }

    if (model.cfg.rehearsal_mode() == RehearsalMode::Buffer) {
        nlohmann::json exemplars = nlohmann::json::array();
        for (size_t i = 0; i < model.buffer.store.size(); ++i) {
            const auto& e = model.buffer.store[i];
            Tensor<float> img(e.image.h, e.image.w * e.image.c);
            for (int j = 0; j < e.image.numel(); ++j) img.data[j] = e.image.px[j];
            std::string name = "buffer/img_" + std::to_string(i);
            ck.tensors[name] = std::move(img);
            exemplars.push_back({{"label", e.label}, {"uid", e.uid},
                                 {"h", e.image.h}, {"w", e.image.w}, {"c", e.image.c}});
        }
        ck.extra["buffer_exemplars"] = exemplars;
    }
    if (model.cfg.rehearsal_mode() == RehearsalMode::Gaussian) {
        nlohmann::json entries = nlohmann::json::array();
        for (auto& [key, e] : model.stats.entries) {
            std::string base = "stats/c" + std::to_string(key.first) + "_b" + std::to_string(key.second);
            ck.put(base + "/mu", e.mu);
            ck.put(base + "/cov", e.cov);
            entries.push_back({{"class", key.first}, {"branch", key.second}, {"count", e.count}});
        }
        ck.extra["stats_entries"] = entries;
    }
    if (model.task1_stab_before.rows > 0) ck.put("diag/task1_stab_before", model.task1_stab_before);
    if (model.task1_boost_before.rows > 0) ck.put("diag/task1_boost_before", model.task1_boost_before);
    save_checkpoint(ck, dir);
}

template <typename T>
void restore_model(ContinualModel<T>& model, const Checkpoint& ck) {
    RunConfig cfg = config_from_json(ck.extra.at("config"));
    std::string expected = config_hash(cfg);
    if (expected != ck.config_hash)
        throw std::runtime_error("resume: config hash mismatch (" + ck.config_hash +
                                 " stored vs " + expected + " recomputed)");
    model.init(cfg);

    // rebuild branch structure task by task, then overwrite values
    for (const auto& classes_json : ck.extra.at("stabilizer_sets")) {
        std::vector<int> classes = classes_json.get<std::vector<int>>();
        int n_before = model.stab.n_seen_classes();
        model.stab.begin_task(classes, cfg.seed);
        int n_new = model.stab.n_seen_classes() - n_before;
        if (n_new > 0) model.boost.extend_head(n_new);
    }
    for (auto& s : model.stab.sets) s.prompts->trainable = false;
    model.fusion.current_task = ck.extra.at("fusion_current_task").get<int>();
    Tensor<T> alpha = ck.get<T>("fusion/alpha");
    Tensor<T> beta = ck.get<T>("fusion/beta");
    model.fusion.alpha = Param<T>("fusion/alpha", alpha, true);
    model.fusion.beta = Param<T>("fusion/beta", beta, beta.cols > 0);

    auto load_param = [&](Param<T>& p) {
        Tensor<T> t = ck.get<T>(p.name);
        if (t.rows != p.value.rows || t.cols != p.value.cols)
            throw std::runtime_error("resume: shape mismatch for " + p.name);
        p.value = std::move(t);
        p.zero_grad();
    };
    model.enc_stab.for_each_param(load_param);
    if (!cfg.model.share_vision_encoder) model.enc_boost.for_each_param(load_param);
    model.text_enc.for_each_param(load_param);
    model.stab.for_each_param(load_param);
    model.boost.for_each_param(load_param);
    model.fusion.for_each_param(load_param);
    if (cfg.gate.enabled) {
        model.gate.for_each_param(load_param);
        if (ck.extra.at("gate_has_snapshot").get<bool>()) {
            model.gate.fw1 = ck.get<T>("gate/snap_w1");
            model.gate.fb1 = ck.get<T>("gate/snap_b1");
            model.gate.fw2 = ck.get<T>("gate/snap_w2");
            model.gate.fb2 = ck.get<T>("gate/snap_b2");
            model.gate.has_snapshot = true;
        }
    }

    if (cfg.rehearsal_mode() == RehearsalMode::Buffer && ck.extra.contains("buffer_exemplars")) {
        const auto& exemplars = ck.extra.at("buffer_exemplars");
        for (size_t i = 0; i < exemplars.size(); ++i) {
            MemoryBuffer::Exemplar e;
            e.label = exemplars[i].at("label").get<int>();
            e.uid = exemplars[i].at("uid").get<uint64_t>();
            e.image.h = exemplars[i].at("h").get<int>();
            e.image.w = exemplars[i].at("w").get<int>();
            e.image.c = exemplars[i].at("c").get<int>();
            Tensor<float> img = ck.get<float>("buffer/img_" + std::to_string(i));
            e.image.px.assign(img.data.begin(), img.data.end());
            model.buffer.store.push_back(std::move(e));
        }
    }
    if (cfg.rehearsal_mode() == RehearsalMode::Gaussian && ck.extra.contains("stats_entries")) {
        for (const auto& entry : ck.extra.at("stats_entries")) {
            int cls = entry.at("class").get<int>();
            int br = entry.at("branch").get<int>();
            std::string base = "stats/c" + std::to_string(cls) + "_b" + std::to_string(br);
            typename ClassFeatureStats<T>::Entry e;
            e.mu = ck.get<T>(base + "/mu");
            e.cov = ck.get<T>(base + "/cov");
            e.count = entry.at("count").get<int>();
            model.stats.entries[{cls, br}] = std::move(e);
        }
    }
    for (const auto& row : ck.extra.at("metrics_rows"))
        model.metrics.push_row(row.get<std::vector<double>>());
    if (ck.has("diag/task1_stab_before")) model.task1_stab_before = ck.get<T>("diag/task1_stab_before");
    if (ck.has("diag/task1_boost_before")) model.task1_boost_before = ck.get<T>("diag/task1_boost_before");
    model.tasks_trained = ck.task_index;
}

struct RunSummary {
    MetricsMatrix metrics;
    double final_avg_acc = 0;
    double activation_rate = -1;  // -1 when the gate is disabled
    double kde_shift_stabilizer = -1;
    double kde_shift_booster = -1;
    std::string results_path;
    std::string output_dir;
};

/// Continual loop from start_task (1-based) through the end of the stream,
/// emitting results records and per-task checkpoints.
template <typename T>
RunSummary run_loop(ContinualModel<T>& model, int start_task, int stop_after_task = -1) {
    namespace fs = std::filesystem;
    const RunConfig& cfg = model.cfg;
    fs::create_directories(cfg.output_dir);
    std::string results_path = (fs::path(cfg.output_dir) / "results.jsonl").string();
    ResultsWriter writer(results_path);

    int n_tasks = model.stream.n_tasks;
    int last_task = stop_after_task > 0 ? std::min(stop_after_task, n_tasks) : n_tasks;

    writer.emit({{"event", "run_started"},
                 {"config_hash", config_hash(cfg)},
                 {"variant", cfg.fusion.variant},
                 {"n_tasks", n_tasks},
                 {"start_task", start_task},
                 {"seed", cfg.seed}});

    RunSummary summary;
    for (int t = start_task; t <= last_task; ++t) {
        model.train_task(t);
        writer.emit({{"event", "task_trained"}, {"task", t}});

        nlohmann::json audit = {{"event", "freeze_audit"},
                                {"task", t},
                                {"encoder_checksum", detail::hex64(model.frozen_encoder_checksum())}};
        nlohmann::json set_sums = nlohmann::json::array();
        for (uint64_t s : model.stab.set_checksums()) set_sums.push_back(detail::hex64(s));
        audit["stabilizer_set_checksums"] = set_sums;
        if (model.cfg.gate.enabled)
            audit["gate_snapshot_checksum"] = detail::hex64(model.gate.snapshot_checksum());
        writer.emit(audit);

        auto row = model.evaluate_all(t);
        model.metrics.push_row(row);
        nlohmann::json eval = {{"event", "eval"},
                               {"task", t},
                               {"row", row},
                               {"avg_acc", average_accuracy(model.metrics, t)}};
        if (cfg.gate.enabled) {
            double rate = activation_rate(model.last_decision_log);
            eval["activation_rate"] = rate;
            summary.activation_rate = rate;
        }
        writer.emit(eval);

        if (t >= 2) {
            auto fp = forgetting_profile(model.metrics);
            writer.emit({{"event", "forgetting"},
                         {"task", t},
                         {"drops", fp.drops},
                         {"mean_drop", fp.mean_drop}});
        }
        save_model_checkpoint(model, detail::task_checkpoint_dir(cfg.output_dir, t));
    }

    // end-of-run diagnostics
    if (model.task1_stab_before.rows > 0 && model.task1_stab_last.rows > 0) {
        auto shift = kde_shift(detail::to_double(model.task1_stab_before),
                               detail::to_double(model.task1_stab_last), cfg.seed);
        summary.kde_shift_stabilizer = shift.divergence;
        writer.emit({{"event", "kde_shift"},
                     {"branch", "stabilizer"},
                     {"value", shift.divergence},
                     {"grid", shift.grid},
                     {"density_before", shift.density_before},
                     {"density_after", shift.density_after}});
    }
    if (model.task1_boost_before.rows > 0 && model.task1_boost_last.rows > 0) {
        auto shift = kde_shift(detail::to_double(model.task1_boost_before),
                               detail::to_double(model.task1_boost_last), cfg.seed);
        summary.kde_shift_booster = shift.divergence;
        writer.emit({{"event", "kde_shift"},
                     {"branch", "booster"},
                     {"value", shift.divergence},
                     {"grid", shift.grid},
                     {"density_before", shift.density_before},
                     {"density_after", shift.density_after}});
    }

    double rate_for_cost = cfg.gate.enabled && summary.activation_rate >= 0 ? summary.activation_rate : 1.0;
    auto cost = cost_model(cfg, model.stab.n_seen_classes(), rate_for_cost);
    writer.emit({{"event", "cost"},
                 {"stabilizer_macs", cost.stabilizer_macs},
                 {"booster_macs", cost.booster_macs},
                 {"gate_macs", cost.gate_macs},
                 {"fusion_combine_macs", cost.fusion_combine_macs},
                 {"stabilizer_text_macs", cost.stabilizer_text_macs},
                 {"promptfusion_macs", cost.promptfusion_macs},
                 {"lite_expected_macs", cost.lite_expected_macs},
                 {"activation_rate", rate_for_cost},
                 {"trainable_params", cost.trainable_params}});

    nlohmann::json r_matrix = nlohmann::json::array();
    for (auto& r : model.metrics.rows) r_matrix.push_back(r);
    int trained = model.tasks_trained;
    summary.final_avg_acc = average_accuracy(model.metrics, trained);
    writer.emit({{"event", "run_complete"},
                 {"tasks_trained", trained},
                 {"r_matrix", r_matrix},
                 {"final_avg_acc", summary.final_avg_acc}});

    summary.metrics = model.metrics;
    summary.results_path = results_path;
    summary.output_dir = cfg.output_dir;
    return summary;
}

inline RunSummary run(const RunConfig& cfg, int stop_after_task = -1) {
    ContinualModel<float> model;
    model.init(cfg);
    return run_loop(model, 1, stop_after_task);
}

inline RunSummary resume(const std::string& checkpoint_dir) {
    Checkpoint ck = load_checkpoint(checkpoint_dir);
    ContinualModel<float> model;
    restore_model(model, ck);
    if (model.tasks_trained >= model.stream.n_tasks)
        throw std::runtime_error("resume: run already complete");
    return run_loop(model, model.tasks_trained + 1);
}

}  // namespace pfusion
