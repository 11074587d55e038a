// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace pfusion {

/// Line-delimited JSON results: one record per (event, task). Serialization
/// goes through nlohmann's shortest-round-trip float formatting, so repeated
/// runs with the same config and seed produce byte-identical files.
class ResultsWriter {
  public:
    explicit ResultsWriter(const std::string& path) : out_(path) {
        if (!out_) throw std::runtime_error("results: cannot write " + path);
    }

    void emit(const nlohmann::json& record) {
        out_ << record.dump() << "\n";
        out_.flush();
    }

  private:
    std::ofstream out_;
};

inline std::vector<nlohmann::json> read_results(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("results: cannot open " + path);
    std::vector<nlohmann::json> records;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            records.push_back(nlohmann::json::parse(line));
        } catch (const std::exception& e) {
            throw std::runtime_error("results: bad record at line " + std::to_string(n) + ": " + e.what());
        }
    }
    return records;
}

inline nlohmann::json find_event(const std::vector<nlohmann::json>& records, const std::string& event,
                                 int task = -1) {
    for (const auto& r : records) {
        if (r.value("event", "") != event) continue;
        if (task >= 0 && r.value("task", -1) != task) continue;
        return r;
    }
    throw std::runtime_error("results: no event '" + event + "'" +
                             (task >= 0 ? " for task " + std::to_string(task) : ""));
}

}  // namespace pfusion
