// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfusion/tensor.hpp"

namespace pfusion {

/// HxWxC raster with values in [0,1], stored channel-interleaved row-major.
struct Image {
    int h = 0, w = 0, c = 0;
    std::vector<float> px;

    float at(int y, int x, int ch) const { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
    float& at(int y, int x, int ch) { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
    int numel() const { return h * w * c; }
    bool same_shape(const Image& o) const { return h == o.h && w == o.w && c == o.c; }
};

inline uint64_t checksum(const Image& im) {
    return fnv1a64(im.px.data(), im.px.size() * sizeof(float));
}

struct Item {
    Image image;
    int label = 0;
    std::optional<int> domain;
};

struct Dataset {
    std::vector<Item> items;
    std::vector<std::string> class_names;
    int n_classes = 0;

    void validate() const {
        if (static_cast<int>(class_names.size()) != n_classes)
            throw std::invalid_argument("Dataset: class_names size != n_classes");
        for (size_t i = 0; i < items.size(); ++i) {
            if (items[i].label < 0 || items[i].label >= n_classes)
                throw std::invalid_argument("Dataset: label out of range at item " + std::to_string(i));
            if (!items[i].image.same_shape(items[0].image))
                throw std::invalid_argument("Dataset: image shape mismatch at item " + std::to_string(i));
        }
    }
};

// ---- PGM/PPM raster IO (binary and ASCII variants) ----

namespace detail {

inline int next_pnm_int(std::istream& in) {
    // skips whitespace and '#' comments
    while (true) {
        int ch = in.peek();
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(ch)) {
            in.get();
        } else {
            break;
        }
    }
    int v;
    if (!(in >> v)) throw std::runtime_error("pnm: truncated header");
    return v;
}

}  // namespace detail

inline Image read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("pnm: cannot open " + path);
    std::string magic;
    in >> magic;
    int channels;
    bool binary;
    if (magic == "P5") {
        channels = 1;
        binary = true;
    } else if (magic == "P6") {
        channels = 3;
        binary = true;
    } else if (magic == "P2") {
        channels = 1;
        binary = false;
    } else if (magic == "P3") {
        channels = 3;
        binary = false;
    } else {
        throw std::runtime_error("pnm: unsupported magic '" + magic + "' in " + path);
    }
    int w = detail::next_pnm_int(in);
    int h = detail::next_pnm_int(in);
    int maxval = detail::next_pnm_int(in);
    if (maxval <= 0 || maxval > 255) throw std::runtime_error("pnm: unsupported maxval in " + path);
    Image im;
    im.h = h;
    im.w = w;
    im.c = channels;
    im.px.resize(static_cast<size_t>(h) * w * channels);
    if (binary) {
        in.get();  // single whitespace after maxval
        std::vector<unsigned char> raw(im.px.size());
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (in.gcount() != static_cast<std::streamsize>(raw.size()))
            throw std::runtime_error("pnm: truncated pixel data in " + path);
        for (size_t i = 0; i < raw.size(); ++i) im.px[i] = static_cast<float>(raw[i]) / maxval;
    } else {
        for (size_t i = 0; i < im.px.size(); ++i) {
            int v;
            if (!(in >> v)) throw std::runtime_error("pnm: truncated pixel data in " + path);
            im.px[i] = static_cast<float>(v) / maxval;
        }
    }
    return im;
}

inline void write_pnm(const std::string& path, const Image& im) {
    if (im.c != 1 && im.c != 3) throw std::invalid_argument("pnm: only 1 or 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("pnm: cannot write " + path);
    out << (im.c == 1 ? "P5" : "P6") << "\n" << im.w << " " << im.h << "\n255\n";
    std::vector<unsigned char> raw(im.px.size());
    for (size_t i = 0; i < raw.size(); ++i) {
        float v = std::clamp(im.px[i], 0.0f, 1.0f);
        raw[i] = static_cast<unsigned char>(v * 255.0f + 0.5f);
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

// ---- CSV manifest: header `path,label[,domain]`, paths relative to the manifest ----

namespace detail {

inline std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t");
    size_t b = s.find_last_not_of(" \t");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

}  // namespace detail

inline Dataset load_manifest(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("manifest: cannot open " + manifest_path);
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("manifest: empty file " + manifest_path);
    auto cols = detail::split_csv_row(header);
    for (auto& c : cols) c = detail::trim(c);
    bool has_domain = false;
    if (cols.size() == 3 && cols[2] == "domain")
        has_domain = true;
    else if (!(cols.size() == 2))
        if (!(cols.size() == 3))
            throw std::runtime_error("manifest: bad header '" + header + "'");
    if (cols.empty() || cols[0] != "path" || cols.size() < 2 || cols[1] != "label")
        throw std::runtime_error("manifest: header must be path,label[,domain], got '" + header + "'");

    std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();

    struct Row {
        std::string path;
        std::string label;
        std::optional<int> domain;
    };
    std::vector<Row> rows;
    std::string line;
    int row_idx = 1;
    while (std::getline(in, line)) {
        ++row_idx;
        if (detail::trim(line).empty()) continue;
        auto f = detail::split_csv_row(line);
        if (f.size() != cols.size())
            throw std::runtime_error("manifest: row " + std::to_string(row_idx) + " has " +
                                     std::to_string(f.size()) + " fields, expected " +
                                     std::to_string(cols.size()));
        Row r;
        r.path = detail::trim(f[0]);
        r.label = detail::trim(f[1]);
        if (r.path.empty() || r.label.empty())
            throw std::runtime_error("manifest: row " + std::to_string(row_idx) + " has empty field");
        if (has_domain) {
            try {
                r.domain = std::stoi(detail::trim(f[2]));
            } catch (...) {
                throw std::runtime_error("manifest: row " + std::to_string(row_idx) + " bad domain '" + f[2] + "'");
            }
        }
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw std::runtime_error("manifest: no data rows in " + manifest_path);

    // class ids from sorted unique labels; numeric-aware when all labels are integers
    std::vector<std::string> names;
    for (auto& r : rows) names.push_back(r.label);
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    bool all_numeric = std::all_of(names.begin(), names.end(), [](const std::string& s) {
        if (s.empty()) return false;
        return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
    });
    if (all_numeric)
        std::sort(names.begin(), names.end(), [](const std::string& a, const std::string& b) {
            return std::stol(a) < std::stol(b);
        });
    std::map<std::string, int> label_to_id;
    for (size_t i = 0; i < names.size(); ++i) label_to_id[names[i]] = static_cast<int>(i);

    Dataset ds;
    ds.class_names = names;
    ds.n_classes = static_cast<int>(names.size());
    int idx = 1;
    for (auto& r : rows) {
        ++idx;
        Item it;
        std::string full = (base / r.path).string();
        try {
            it.image = read_pnm(full);
        } catch (const std::exception& e) {
            throw std::runtime_error("manifest: row " + std::to_string(idx) + ": " + e.what());
        }
        if (!ds.items.empty() && !it.image.same_shape(ds.items[0].image))
            throw std::runtime_error("manifest: row " + std::to_string(idx) + ": image shape " +
                                     std::to_string(it.image.h) + "x" + std::to_string(it.image.w) + "x" +
                                     std::to_string(it.image.c) + " differs from first image");
        it.label = label_to_id.at(r.label);
        it.domain = r.domain;
        ds.items.push_back(std::move(it));
    }
    ds.validate();
    return ds;
}

}  // namespace pfusion
