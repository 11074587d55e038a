// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfusion/tensor.hpp"

namespace pfusion {

/// Checkpoint layout:
///   <dir>/manifest.json         schema version, config hash, task index,
///                               tensor name -> file + shape, extra metadata
///   <dir>/tensors/<id>.bin      per-tensor blob: magic "PFTB", u32 version,
///                               u32 rows, u32 cols, then rows*cols little-
///                               endian float32 values
struct Checkpoint {
    static constexpr int kSchemaVersion = 1;
    static constexpr char kMagic[5] = "PFTB";

    std::string config_hash;
    int task_index = 0;  // 1-based index of the last trained task
    std::map<std::string, Tensor<float>> tensors;
    nlohmann::json extra;  // small structured state (metrics rows, class lists)

    template <typename T>
    void put(const std::string& name, const Tensor<T>& t) {
        Tensor<float> f(t.rows, t.cols);
        for (int i = 0; i < t.numel(); ++i) f.data[i] = static_cast<float>(t.data[i]);
        tensors[name] = std::move(f);
    }

    template <typename T>
    Tensor<T> get(const std::string& name) const {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw std::runtime_error("checkpoint: missing tensor " + name);
        Tensor<T> out(it->second.rows, it->second.cols);
        for (int i = 0; i < out.numel(); ++i) out.data[i] = static_cast<T>(it->second.data[i]);
        return out;
    }

    bool has(const std::string& name) const { return tensors.count(name) > 0; }
};

namespace detail {

inline void write_u32(std::ofstream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw std::runtime_error("checkpoint: truncated u32");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void write_f32_le(std::ofstream& out, const std::vector<float>& v) {
    for (float f : v) {
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        write_u32(out, bits);
    }
}

inline void read_f32_le(std::ifstream& in, std::vector<float>& v) {
    for (auto& f : v) {
        uint32_t bits = read_u32(in);
        std::memcpy(&f, &bits, 4);
    }
}

inline std::string tensor_file_id(int index) {
    char buf[16];
    snprintf(buf, sizeof(buf), "t%05d.bin", index);
    return buf;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ck, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "tensors");
    nlohmann::json manifest;
    manifest["schema_version"] = Checkpoint::kSchemaVersion;
    manifest["config_hash"] = ck.config_hash;
    manifest["task_index"] = ck.task_index;
    manifest["extra"] = ck.extra;
    nlohmann::json tensor_index = nlohmann::json::object();
    int i = 0;
    for (auto& [name, t] : ck.tensors) {
        std::string file = detail::tensor_file_id(i++);
        tensor_index[name] = {{"file", file}, {"rows", t.rows}, {"cols", t.cols}};
        std::ofstream out(fs::path(dir) / "tensors" / file, std::ios::binary);
        if (!out) throw std::runtime_error("checkpoint: cannot write tensor " + name);
        out.write(Checkpoint::kMagic, 4);
        detail::write_u32(out, 1);
        detail::write_u32(out, static_cast<uint32_t>(t.rows));
        detail::write_u32(out, static_cast<uint32_t>(t.cols));
        detail::write_f32_le(out, t.data);
    }
    manifest["tensors"] = tensor_index;
    std::ofstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw std::runtime_error("checkpoint: cannot write manifest in " + dir);
    mf << manifest.dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw std::runtime_error("checkpoint: cannot open manifest in " + dir);
    nlohmann::json manifest = nlohmann::json::parse(mf);
    if (manifest.at("schema_version").get<int>() != Checkpoint::kSchemaVersion)
        throw std::runtime_error("checkpoint: unsupported schema version");
    Checkpoint ck;
    ck.config_hash = manifest.at("config_hash").get<std::string>();
    ck.task_index = manifest.at("task_index").get<int>();
    ck.extra = manifest.value("extra", nlohmann::json::object());
    for (auto& [name, meta] : manifest.at("tensors").items()) {
        std::ifstream in(fs::path(dir) / "tensors" / meta.at("file").get<std::string>(),
                         std::ios::binary);
        if (!in) throw std::runtime_error("checkpoint: cannot open tensor " + name);
        char magic[4];
        in.read(magic, 4);
        if (in.gcount() != 4 || std::memcmp(magic, Checkpoint::kMagic, 4) != 0)
            throw std::runtime_error("checkpoint: bad magic for tensor " + name);
        if (detail::read_u32(in) != 1) throw std::runtime_error("checkpoint: bad tensor version");
        uint32_t rows = detail::read_u32(in);
        uint32_t cols = detail::read_u32(in);
        if (static_cast<int>(rows) != meta.at("rows").get<int>() ||
            static_cast<int>(cols) != meta.at("cols").get<int>())
            throw std::runtime_error("checkpoint: shape header mismatch for tensor " + name);
        Tensor<float> t(static_cast<int>(rows), static_cast<int>(cols));
        detail::read_f32_le(in, t.data);
        ck.tensors[name] = std::move(t);
    }
    return ck;
}

}  // namespace pfusion
