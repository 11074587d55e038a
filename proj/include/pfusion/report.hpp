// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pfusion/results.hpp"

namespace pfusion {

/// Plain-text summary tables from a results file.
inline std::string format_report(const std::vector<nlohmann::json>& records) {
    std::ostringstream os;
    auto complete = find_event(records, "run_complete");
    int T = complete.at("tasks_trained").get<int>();
    os << "tasks trained: " << T << "\n";
    os << "final average accuracy: ";
    char buf[32];
    snprintf(buf, sizeof(buf), "%.4f", complete.at("final_avg_acc").get<double>());
    os << buf << "\n\n";

    os << "accuracy matrix R[T][i]\n";
    const auto& rm = complete.at("r_matrix");
    for (int t = 0; t < T; ++t) {
        snprintf(buf, sizeof(buf), "after T%-2d", t + 1);
        os << buf << " |";
        for (const auto& v : rm[t]) {
            snprintf(buf, sizeof(buf), " %.3f", v.get<double>());
            os << buf;
        }
        os << "\n";
    }
    os << "\n";

    for (const auto& r : records) {
        if (r.value("event", "") == "forgetting" && r.value("task", 0) == T) {
            snprintf(buf, sizeof(buf), "%.4f", r.at("mean_drop").get<double>());
            os << "mean forgetting drop: " << buf << "\n";
        }
        if (r.value("event", "") == "eval" && r.value("task", 0) == T && r.contains("activation_rate")) {
            snprintf(buf, sizeof(buf), "%.4f", r.at("activation_rate").get<double>());
            os << "booster activation rate: " << buf << "\n";
        }
    }
    for (const auto& r : records) {
        if (r.value("event", "") == "kde_shift") {
            snprintf(buf, sizeof(buf), "%.6f", r.at("value").get<double>());
            os << "kde shift (" << r.at("branch").get<std::string>() << "): " << buf << "\n";
        }
        if (r.value("event", "") == "cost") {
            os << "modeled MACs: promptfusion=" << r.at("promptfusion_macs").get<double>()
               << " lite_expected=" << r.at("lite_expected_macs").get<double>()
               << " trainable_params=" << r.at("trainable_params").get<int64_t>() << "\n";
        }
    }
    return os.str();
}

// ---- minimal SVG polyline plots ----

namespace detail {

struct Series {
    std::string label;
    std::vector<double> xs, ys;
    std::string color;
};

inline std::string render_svg(const std::vector<Series>& series, const std::string& title,
                              const std::string& x_label, const std::string& y_label) {
    const int W = 640, H = 420, ML = 60, MR = 20, MT = 40, MB = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (size_t i = 0; i < s.xs.size(); ++i) {
            xmin = std::min(xmin, s.xs[i]);
            xmax = std::max(xmax, s.xs[i]);
            ymin = std::min(ymin, s.ys[i]);
            ymax = std::max(ymax, s.ys[i]);
        }
    if (xmin >= xmax) xmax = xmin + 1;
    if (ymin >= ymax) ymax = ymin + 1;
    double yr = ymax - ymin;
    ymin -= 0.05 * yr;
    ymax += 0.05 * yr;

    auto px = [&](double x) { return ML + (x - xmin) / (xmax - xmin) * (W - ML - MR); };
    auto py = [&](double y) { return H - MB - (y - ymin) / (ymax - ymin) * (H - MT - MB); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
       << "</text>\n";
    os << "<line x1=\"" << ML << "\" y1=\"" << H - MB << "\" x2=\"" << W - MR << "\" y2=\"" << H - MB
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ML << "\" y1=\"" << MT << "\" x2=\"" << ML << "\" y2=\"" << H - MB
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << (ML + W - MR) / 2 << "\" y=\"" << H - 12
       << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n";
    os << "<text x=\"16\" y=\"" << (MT + H - MB) / 2
       << "\" font-size=\"12\" transform=\"rotate(-90 16 " << (MT + H - MB) / 2 << ")\">" << y_label
       << "</text>\n";
    for (int i = 0; i <= 4; ++i) {
        double yv = ymin + (ymax - ymin) * i / 4.0;
        char buf[32];
        snprintf(buf, sizeof(buf), "%.2f", yv);
        os << "<text x=\"" << ML - 6 << "\" y=\"" << py(yv) + 4
           << "\" text-anchor=\"end\" font-size=\"10\">" << buf << "</text>\n";
    }
    int li = 0;
    for (const auto& s : series) {
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.6\" points=\"";
        for (size_t i = 0; i < s.xs.size(); ++i) os << px(s.xs[i]) << "," << py(s.ys[i]) << " ";
        os << "\"/>\n";
        os << "<text x=\"" << W - MR - 4 << "\" y=\"" << MT + 14 * (li + 1)
           << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << s.color << "\">" << s.label
           << "</text>\n";
        ++li;
    }
    os << "</svg>\n";
    return os.str();
}

inline const char* palette(int i) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    return colors[i % 8];
}

}  // namespace detail

/// accuracy-vs-task curves (one line per task plus the running average) and
/// KDE density overlays, written as static SVG files.
inline std::vector<std::string> write_plots(const std::vector<nlohmann::json>& records,
                                            const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::vector<std::string> written;

    auto complete = find_event(records, "run_complete");
    const auto& rm = complete.at("r_matrix");
    int T = static_cast<int>(rm.size());
    std::vector<detail::Series> acc_series;
    for (int i = 0; i < T; ++i) {
        detail::Series s;
        s.label = "task " + std::to_string(i + 1);
        s.color = detail::palette(i);
        for (int t = i; t < T; ++t) {
            s.xs.push_back(t + 1);
            s.ys.push_back(rm[t][i].get<double>());
        }
        acc_series.push_back(std::move(s));
    }
    detail::Series avg;
    avg.label = "average";
    avg.color = "#000000";
    for (int t = 0; t < T; ++t) {
        double a = 0;
        for (int i = 0; i <= t; ++i) a += rm[t][i].get<double>();
        avg.xs.push_back(t + 1);
        avg.ys.push_back(a / (t + 1));
    }
    acc_series.push_back(std::move(avg));
    {
        std::string path = (fs::path(out_dir) / "accuracy_curves.svg").string();
        std::ofstream out(path);
        out << detail::render_svg(acc_series, "Per-task accuracy over the stream", "trained tasks",
                                  "accuracy");
        written.push_back(path);
    }

    for (const auto& r : records) {
        if (r.value("event", "") != "kde_shift") continue;
        std::string branch = r.at("branch").get<std::string>();
        detail::Series before, after;
        before.label = "after task 1";
        before.color = "#1f77b4";
        after.label = "after final task";
        after.color = "#d62728";
        const auto& grid = r.at("grid");
        const auto& db = r.at("density_before");
        const auto& da = r.at("density_after");
        for (size_t i = 0; i < grid.size(); ++i) {
            before.xs.push_back(grid[i].get<double>());
            before.ys.push_back(db[i].get<double>());
            after.xs.push_back(grid[i].get<double>());
            after.ys.push_back(da[i].get<double>());
        }
        std::string path = (fs::path(out_dir) / ("kde_overlay_" + branch + ".svg")).string();
        std::ofstream out(path);
        out << detail::render_svg({before, after}, "Task-1 feature density (" + branch + ")",
                                  "projected feature", "density");
        written.push_back(path);
    }
    return written;
}

}  // namespace pfusion
