// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfusion/tensor.hpp"

namespace pfusion {

using json = nlohmann::json;

enum class Variant { PromptFusion, StabilizerOnly, BoosterOnly };
enum class RehearsalMode { Buffer, Gaussian, None };

struct StreamConfig {
    std::string kind = "blobs";  // blobs | domain_blobs | manifest
    int n_tasks = 5;
    bool shuffled_class_order = false;
    // blobs / domain_blobs
    int n_classes = 10;
    int samples_per_class = 60;
    int image_h = 16, image_w = 16, image_c = 1;
    double noise = 0.18;
    // domain_blobs
    std::vector<double> domain_angles;
    std::vector<double> domain_brightness;
    std::vector<int> train_domains;
    std::vector<int> test_domains;
    // manifest
    std::string manifest_path;
};

struct ModelConfig {
    int text_prompt_len = 8;    // M
    int visual_prompt_len = 8;  // p
    int image_prompt_len = 8;   // L~
    int embed_dim_vis = 32;
    int embed_dim_text = 32;
    int encoder_depth = 2;
    int n_heads = 4;
    int patch_size = 8;
    bool share_vision_encoder = false;
    double temperature = 0.07;
};

struct FusionConfig {
    std::string variant = "promptfusion";  // promptfusion | stabilizer_only | booster_only
    bool mask_enabled = true;
    bool lambda_enabled = true;
    bool augmentation_enabled = true;
    bool apply_mask_at_inference = true;
    std::string mask_mode = "auto";  // auto | rehearsal | memory_free
};

struct GateConfig {
    bool enabled = false;
    double tau = 1.0;
    double rho = 0.5;
    double zeta = 0.1;
    double delta = 1.0;
    int hidden = 64;
};

struct RehearsalConfig {
    std::string mode = "none";  // buffer | gaussian | none
    int capacity = 200;
    int finetune_steps = 20;
    int samples_per_class = 16;
};

struct OptimizerConfig {
    double lr = 0.002;
    double weight_decay = 1e-4;
    std::string schedule = "cosine";  // cosine | constant
    int epochs_per_task = 3;
    int batch_size = 32;
};

struct RunConfig {
    StreamConfig stream;
    ModelConfig model;
    FusionConfig fusion;
    GateConfig gate;
    RehearsalConfig rehearsal;
    OptimizerConfig optimizer;
    uint64_t seed = 1;
    std::string output_dir = "runs/out";

    Variant variant() const {
        if (fusion.variant == "promptfusion") return Variant::PromptFusion;
        if (fusion.variant == "stabilizer_only") return Variant::StabilizerOnly;
        return Variant::BoosterOnly;
    }
    RehearsalMode rehearsal_mode() const {
        if (rehearsal.mode == "buffer") return RehearsalMode::Buffer;
        if (rehearsal.mode == "gaussian") return RehearsalMode::Gaussian;
        return RehearsalMode::None;
    }
};

namespace detail {

template <typename T>
void read_field(const json& j, const char* key, T& out, std::vector<std::string>& errors,
                const std::string& path) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const std::exception&) {
        errors.push_back(path + "." + key + ": wrong type");
    }
}

}  // namespace detail

inline json config_to_json(const RunConfig& c) {
    json j;
    j["stream"] = {{"kind", c.stream.kind},
                   {"n_tasks", c.stream.n_tasks},
                   {"shuffled_class_order", c.stream.shuffled_class_order},
                   {"n_classes", c.stream.n_classes},
                   {"samples_per_class", c.stream.samples_per_class},
                   {"image_h", c.stream.image_h},
                   {"image_w", c.stream.image_w},
                   {"image_c", c.stream.image_c},
                   {"noise", c.stream.noise},
                   {"domain_angles", c.stream.domain_angles},
                   {"domain_brightness", c.stream.domain_brightness},
                   {"train_domains", c.stream.train_domains},
                   {"test_domains", c.stream.test_domains},
                   {"manifest_path", c.stream.manifest_path}};
    j["model"] = {{"text_prompt_len", c.model.text_prompt_len},
                  {"visual_prompt_len", c.model.visual_prompt_len},
                  {"image_prompt_len", c.model.image_prompt_len},
                  {"embed_dim_vis", c.model.embed_dim_vis},
                  {"embed_dim_text", c.model.embed_dim_text},
                  {"encoder_depth", c.model.encoder_depth},
                  {"n_heads", c.model.n_heads},
                  {"patch_size", c.model.patch_size},
                  {"share_vision_encoder", c.model.share_vision_encoder},
                  {"temperature", c.model.temperature}};
    j["fusion"] = {{"variant", c.fusion.variant},
                   {"mask_enabled", c.fusion.mask_enabled},
                   {"lambda_enabled", c.fusion.lambda_enabled},
                   {"augmentation_enabled", c.fusion.augmentation_enabled},
                   {"apply_mask_at_inference", c.fusion.apply_mask_at_inference},
                   {"mask_mode", c.fusion.mask_mode}};
    j["gate"] = {{"enabled", c.gate.enabled}, {"tau", c.gate.tau},     {"rho", c.gate.rho},
                 {"zeta", c.gate.zeta},       {"delta", c.gate.delta}, {"hidden", c.gate.hidden}};
    j["rehearsal"] = {{"mode", c.rehearsal.mode},
                      {"capacity", c.rehearsal.capacity},
                      {"finetune_steps", c.rehearsal.finetune_steps},
                      {"samples_per_class", c.rehearsal.samples_per_class}};
    j["optimizer"] = {{"lr", c.optimizer.lr},
                      {"weight_decay", c.optimizer.weight_decay},
                      {"schedule", c.optimizer.schedule},
                      {"epochs_per_task", c.optimizer.epochs_per_task},
                      {"batch_size", c.optimizer.batch_size}};
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    return j;
}

/// Parses and validates; all schema violations are reported together.
inline RunConfig config_from_json(const json& j) {
    RunConfig c;
    std::vector<std::string> errors;
    using detail::read_field;

    if (j.contains("stream")) {
        const auto& s = j.at("stream");
        read_field(s, "kind", c.stream.kind, errors, "stream");
        read_field(s, "n_tasks", c.stream.n_tasks, errors, "stream");
        read_field(s, "shuffled_class_order", c.stream.shuffled_class_order, errors, "stream");
        read_field(s, "n_classes", c.stream.n_classes, errors, "stream");
        read_field(s, "samples_per_class", c.stream.samples_per_class, errors, "stream");
        read_field(s, "image_h", c.stream.image_h, errors, "stream");
        read_field(s, "image_w", c.stream.image_w, errors, "stream");
        read_field(s, "image_c", c.stream.image_c, errors, "stream");
        read_field(s, "noise", c.stream.noise, errors, "stream");
        read_field(s, "domain_angles", c.stream.domain_angles, errors, "stream");
        read_field(s, "domain_brightness", c.stream.domain_brightness, errors, "stream");
        read_field(s, "train_domains", c.stream.train_domains, errors, "stream");
        read_field(s, "test_domains", c.stream.test_domains, errors, "stream");
        read_field(s, "manifest_path", c.stream.manifest_path, errors, "stream");
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        read_field(m, "text_prompt_len", c.model.text_prompt_len, errors, "model");
        read_field(m, "visual_prompt_len", c.model.visual_prompt_len, errors, "model");
        read_field(m, "image_prompt_len", c.model.image_prompt_len, errors, "model");
        read_field(m, "embed_dim_vis", c.model.embed_dim_vis, errors, "model");
        read_field(m, "embed_dim_text", c.model.embed_dim_text, errors, "model");
        read_field(m, "encoder_depth", c.model.encoder_depth, errors, "model");
        read_field(m, "n_heads", c.model.n_heads, errors, "model");
        read_field(m, "patch_size", c.model.patch_size, errors, "model");
        read_field(m, "share_vision_encoder", c.model.share_vision_encoder, errors, "model");
        read_field(m, "temperature", c.model.temperature, errors, "model");
    }
    if (j.contains("fusion")) {
        const auto& f = j.at("fusion");
        read_field(f, "variant", c.fusion.variant, errors, "fusion");
        read_field(f, "mask_enabled", c.fusion.mask_enabled, errors, "fusion");
        read_field(f, "lambda_enabled", c.fusion.lambda_enabled, errors, "fusion");
        read_field(f, "augmentation_enabled", c.fusion.augmentation_enabled, errors, "fusion");
        read_field(f, "apply_mask_at_inference", c.fusion.apply_mask_at_inference, errors, "fusion");
        read_field(f, "mask_mode", c.fusion.mask_mode, errors, "fusion");
    }
    if (j.contains("gate")) {
        const auto& g = j.at("gate");
        read_field(g, "enabled", c.gate.enabled, errors, "gate");
        read_field(g, "tau", c.gate.tau, errors, "gate");
        read_field(g, "rho", c.gate.rho, errors, "gate");
        read_field(g, "zeta", c.gate.zeta, errors, "gate");
        read_field(g, "delta", c.gate.delta, errors, "gate");
        read_field(g, "hidden", c.gate.hidden, errors, "gate");
    }
    if (j.contains("rehearsal")) {
        const auto& r = j.at("rehearsal");
        read_field(r, "mode", c.rehearsal.mode, errors, "rehearsal");
        read_field(r, "capacity", c.rehearsal.capacity, errors, "rehearsal");
        read_field(r, "finetune_steps", c.rehearsal.finetune_steps, errors, "rehearsal");
        read_field(r, "samples_per_class", c.rehearsal.samples_per_class, errors, "rehearsal");
    }
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        read_field(o, "lr", c.optimizer.lr, errors, "optimizer");
        read_field(o, "weight_decay", c.optimizer.weight_decay, errors, "optimizer");
        read_field(o, "schedule", c.optimizer.schedule, errors, "optimizer");
        read_field(o, "epochs_per_task", c.optimizer.epochs_per_task, errors, "optimizer");
        read_field(o, "batch_size", c.optimizer.batch_size, errors, "optimizer");
    }
    read_field(j, "seed", c.seed, errors, "config");
    read_field(j, "output_dir", c.output_dir, errors, "config");

    // value checks
    auto bad = [&](const std::string& m) { errors.push_back(m); };
    if (c.stream.kind != "blobs" && c.stream.kind != "domain_blobs" && c.stream.kind != "manifest")
        bad("stream.kind: must be blobs|domain_blobs|manifest");
    if (c.stream.n_tasks < 1) bad("stream.n_tasks: must be >= 1");
    if (c.stream.image_h < 1 || c.stream.image_w < 1 || c.stream.image_c < 1)
        bad("stream.image_*: must be positive");
    if (c.model.text_prompt_len < 0) bad("model.text_prompt_len: must be >= 0");
    if (c.model.visual_prompt_len < 0) bad("model.visual_prompt_len: must be >= 0");
    if (c.model.image_prompt_len < 0) bad("model.image_prompt_len: must be >= 0");
    if (c.model.embed_dim_vis < 1 || c.model.embed_dim_text < 1) bad("model.embed_dim: must be positive");
    if (c.model.encoder_depth < 1) bad("model.encoder_depth: must be >= 1");
    if (c.model.n_heads < 1 || c.model.embed_dim_vis % c.model.n_heads != 0 ||
        c.model.embed_dim_text % c.model.n_heads != 0)
        bad("model.n_heads: must divide both embed dims");
    if (c.model.patch_size < 1 || c.stream.image_h % c.model.patch_size != 0 ||
        c.stream.image_w % c.model.patch_size != 0)
        bad("model.patch_size: must divide image sides");
    if (c.model.temperature <= 0) bad("model.temperature: must be positive");
    if (c.fusion.variant != "promptfusion" && c.fusion.variant != "stabilizer_only" &&
        c.fusion.variant != "booster_only")
        bad("fusion.variant: must be promptfusion|stabilizer_only|booster_only");
    if (c.fusion.mask_mode != "auto" && c.fusion.mask_mode != "rehearsal" &&
        c.fusion.mask_mode != "memory_free")
        bad("fusion.mask_mode: must be auto|rehearsal|memory_free");
    if (c.gate.tau <= 0) bad("gate.tau: must be positive");
    if (c.gate.rho < 0 || c.gate.rho > 1) bad("gate.rho: must be in [0,1]");
    if (c.gate.zeta < 0 || c.gate.delta < 0) bad("gate.zeta/delta: must be non-negative");
    if (c.gate.hidden < 1) bad("gate.hidden: must be >= 1");
    if (c.rehearsal.mode != "buffer" && c.rehearsal.mode != "gaussian" && c.rehearsal.mode != "none")
        bad("rehearsal.mode: must be buffer|gaussian|none");
    if (c.optimizer.lr < 0) bad("optimizer.lr: must be >= 0");
    if (c.optimizer.schedule != "cosine" && c.optimizer.schedule != "constant")
        bad("optimizer.schedule: must be cosine|constant");
    if (c.optimizer.epochs_per_task < 1) bad("optimizer.epochs_per_task: must be >= 1");
    if (c.optimizer.batch_size < 1) bad("optimizer.batch_size: must be >= 1");
    if (c.gate.enabled && c.fusion.variant != "promptfusion")
        bad("gate.enabled: requires fusion.variant == promptfusion");

    if (!errors.empty()) {
        std::string msg = "config: " + std::to_string(errors.size()) + " violation(s):";
        for (auto& e : errors) msg += "\n  - " + e;
        throw std::invalid_argument(msg);
    }
    return c;
}

inline RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    json j = json::parse(in);
    return config_from_json(j);
}

inline std::string config_hash(const RunConfig& c) {
    std::string s = config_to_json(c).dump();
    uint64_t h = fnv1a64(s.data(), s.size());
    char buf[17];
    snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace pfusion
