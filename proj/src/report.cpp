#include "thermaltap/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace thermaltap::report {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string metrics_csv_from_json(const json& j) {
    std::ostringstream out;
    out << "fold_id,window_accuracy,window_weighted_f1,window_active_accuracy,"
           "window_active_weighted_f1,session_accuracy,stage1_active_recall,"
           "stage1_home_recall,wind_k\n";
    for (const auto& f : j.at("folds")) {
        double active_recall = 0.0, home_recall = 0.0;
        for (const auto& c : f.at("stage1").at("per_class")) {
            if (c.at("label") == "active") active_recall = c.at("recall").get<double>();
            if (c.at("label") == "home") home_recall = c.at("recall").get<double>();
        }
        out << csv_field(f.at("fold_id").get<std::string>()) << ','
            << fmt(f.at("window").at("accuracy").get<double>()) << ','
            << fmt(f.at("window").at("weighted_f1").get<double>()) << ','
            << fmt(f.at("window_active").at("accuracy").get<double>()) << ','
            << fmt(f.at("window_active").at("weighted_f1").get<double>()) << ','
            << fmt(f.at("session").at("accuracy").get<double>()) << ',' << fmt(active_recall)
            << ',' << fmt(home_recall) << ',' << fmt(f.at("wind_k").get<double>()) << '\n';
    }
    const auto& agg = j.at("aggregate");
    const char* stats[2] = {"mean", "std"};
    for (const char* stat : stats) {
        out << stat << ',' << fmt(agg.at("window_accuracy").at(stat).get<double>()) << ','
            << fmt(agg.at("window_weighted_f1").at(stat).get<double>()) << ','
            << fmt(agg.at("window_active_accuracy").at(stat).get<double>()) << ','
            << fmt(agg.at("window_active_weighted_f1").at(stat).get<double>()) << ','
            << fmt(agg.at("session_accuracy").at(stat).get<double>()) << ','
            << fmt(agg.at("stage1_active_recall").at(stat).get<double>()) << ','
            << fmt(agg.at("stage1_home_recall").at(stat).get<double>()) << ",\n";
    }
    return out.str();
}

}  // namespace

std::string confusion_csv(const eval::ConfusionMatrix& cm) {
    std::ostringstream out;
    out << "truth\\pred";
    for (const auto& c : cm.classes) out << ',' << csv_field(c);
    out << '\n';
    for (size_t t = 0; t < cm.classes.size(); ++t) {
        out << csv_field(cm.classes[t]);
        for (size_t p = 0; p < cm.classes.size(); ++p) {
            out << ',' << cm.at(static_cast<int>(t), static_cast<int>(p));
        }
        out << '\n';
    }
    return out.str();
}

std::string metrics_csv(const eval::ExperimentReport& report) {
    return metrics_csv_from_json(json::parse(eval::report_to_json(report)));
}

std::string bar_chart_svg(const std::vector<std::string>& labels,
                          const std::vector<double>& values, const std::string& title) {
    const int width = 720, height = 400, left = 50, bottom = 60, top = 40;
    const int plot_w = width - left - 20, plot_h = height - top - bottom;
    double vmax = 1e-12;
    for (double v : values) vmax = std::max(vmax, v);

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"16\">" << xml_escape(title) << "</text>\n";
    const size_t n = values.size();
    if (n > 0) {
        const double slot = static_cast<double>(plot_w) / n;
        const double bar_w = std::max(2.0, slot * 0.7);
        const size_t label_step = n > 24 ? (n + 23) / 24 : 1;
        for (size_t i = 0; i < n; ++i) {
            const double h = plot_h * values[i] / vmax;
            const double x = left + slot * i + (slot - bar_w) / 2.0;
            const double y = top + plot_h - h;
            svg << "<rect x=\"" << fmt(x, 2) << "\" y=\"" << fmt(y, 2) << "\" width=\""
                << fmt(bar_w, 2) << "\" height=\"" << fmt(h, 2) << "\" fill=\"#4878a8\"/>\n";
            if (i % label_step == 0 && i < labels.size()) {
                svg << "<text x=\"" << fmt(x + bar_w / 2.0, 2) << "\" y=\"" << height - bottom + 14
                    << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"9\" "
                    << "transform=\"rotate(-45 " << fmt(x + bar_w / 2.0, 2) << " "
                    << height - bottom + 14 << ")\">" << xml_escape(labels[i]) << "</text>\n";
            }
        }
    }
    svg << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w
        << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
        << top + plot_h << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << left - 6 << "\" y=\"" << top + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(vmax, 2)
        << "</text>\n";
    svg << "<text x=\"" << left - 6 << "\" y=\"" << top + plot_h + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">0</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

std::string line_chart_svg(const std::vector<double>& xs, const std::vector<double>& ys,
                           const std::string& x_label, const std::string& title) {
    const int width = 720, height = 400, left = 60, bottom = 50, top = 40;
    const int plot_w = width - left - 30, plot_h = height - top - bottom;
    double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
    if (!xs.empty()) {
        xmin = *std::min_element(xs.begin(), xs.end());
        xmax = *std::max_element(xs.begin(), xs.end());
        ymin = *std::min_element(ys.begin(), ys.end());
        ymax = *std::max_element(ys.begin(), ys.end());
        if (xmax == xmin) xmax = xmin + 1.0;
        const double pad = std::max(0.02, (ymax - ymin) * 0.1);
        ymin -= pad;
        ymax += pad;
    }
    const auto px = [&](double x) { return left + plot_w * (x - xmin) / (xmax - xmin); };
    const auto py = [&](double y) { return top + plot_h * (1.0 - (y - ymin) / (ymax - ymin)); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"16\">" << xml_escape(title) << "</text>\n";
    if (!xs.empty()) {
        svg << "<polyline fill=\"none\" stroke=\"#4878a8\" stroke-width=\"2\" points=\"";
        for (size_t i = 0; i < xs.size(); ++i) {
            if (i) svg << ' ';
            svg << fmt(px(xs[i]), 2) << ',' << fmt(py(ys[i]), 2);
        }
        svg << "\"/>\n";
        for (size_t i = 0; i < xs.size(); ++i) {
            svg << "<circle cx=\"" << fmt(px(xs[i]), 2) << "\" cy=\"" << fmt(py(ys[i]), 2)
                << "\" r=\"3\" fill=\"#4878a8\"/>\n";
            svg << "<text x=\"" << fmt(px(xs[i]), 2) << "\" y=\"" << top + plot_h + 16
                << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
                << fmt(xs[i], 0) << "</text>\n";
            svg << "<text x=\"" << fmt(px(xs[i]), 2) << "\" y=\"" << fmt(py(ys[i]) - 8.0, 2)
                << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
                << fmt(ys[i], 3) << "</text>\n";
        }
    }
    svg << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w
        << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
        << top + plot_h << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 12
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
        << xml_escape(x_label) << "</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

std::string grid_heatmap_svg(const std::vector<double>& cells, int n, const std::string& title) {
    if (n <= 0 || cells.size() != static_cast<size_t>(n) * n) {
        throw ValueError("heatmap expects n*n cells");
    }
    const int cell_px = std::max(8, 360 / n);
    const int left = 30, top = 40;
    const int width = left + n * cell_px + 30, height = top + n * cell_px + 30;
    double vmin = cells[0], vmax = cells[0];
    for (double v : cells) {
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
    }
    const double span = vmax > vmin ? vmax - vmin : 1.0;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double t = (cells[static_cast<size_t>(i) * n + j] - vmin) / span;
            const int r = static_cast<int>(30 + t * (220 - 30));
            const int g = static_cast<int>(60 + t * (50 - 60));
            const int b = static_cast<int>(200 + t * (40 - 200));
            svg << "<rect x=\"" << left + j * cell_px << "\" y=\"" << top + i * cell_px
                << "\" width=\"" << cell_px << "\" height=\"" << cell_px << "\" fill=\"rgb(" << r
                << ',' << g << ',' << b << ")\" stroke=\"white\" stroke-width=\"0.5\"/>\n";
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

void render_report(const fs::path& report_json, const fs::path& out_dir) {
    std::ifstream f(report_json);
    if (!f) throw ParseError("cannot open " + report_json.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ParseError(report_json.string() + ": " + e.what());
    }
    fs::create_directories(out_dir);

    const auto to_confusion = [](const json& cj) {
        eval::ConfusionMatrix cm;
        cm.classes = cj.at("classes").get<std::vector<std::string>>();
        cm.counts = cj.at("counts").get<std::vector<int64_t>>();
        return cm;
    };
    const auto window_cm = to_confusion(j.at("window_confusion"));
    write_text(out_dir / "confusion_window.csv", confusion_csv(window_cm));
    write_text(out_dir / "confusion_session.csv", confusion_csv(to_confusion(j.at("session_confusion"))));
    write_text(out_dir / "metrics.csv", metrics_csv_from_json(j));

    std::vector<std::string> fold_ids;
    std::vector<double> fold_acc;
    for (const auto& fj : j.at("folds")) {
        fold_ids.push_back(fj.at("fold_id").get<std::string>());
        fold_acc.push_back(fj.at("window").at("accuracy").get<double>());
    }
    write_text(out_dir / "accuracy_by_fold.svg",
               bar_chart_svg(fold_ids, fold_acc, "window accuracy by fold"));

    // per-class recall out of the summed window confusion
    std::vector<double> recall;
    const size_t k = window_cm.classes.size();
    for (size_t t = 0; t < k; ++t) {
        int64_t row = 0;
        for (size_t p = 0; p < k; ++p) row += window_cm.at(static_cast<int>(t), static_cast<int>(p));
        recall.push_back(row > 0 ? static_cast<double>(window_cm.at(static_cast<int>(t),
                                                                    static_cast<int>(t))) /
                                       row
                                 : 0.0);
    }
    write_text(out_dir / "recall_by_class.svg",
               bar_chart_svg(window_cm.classes, recall, "window recall by class"));

    if (j.contains("importance")) {
        const auto cells = j.at("importance").at("cell").get<std::vector<double>>();
        const int n = j.at("importance").at("n").get<int>();
        write_text(out_dir / "importance.svg",
                   grid_heatmap_svg(cells, n, "mean split-gain importance by cell"));
    }
}

void render_sweep(const std::vector<fs::path>& report_jsons, const fs::path& out_dir) {
    if (report_jsons.empty()) throw ValueError("sweep needs at least one report");
    struct Point {
        double x;
        double acc, f1;
    };
    std::vector<Point> points;
    std::vector<int> grid_ns, window_ss;
    std::vector<json> docs;
    for (const auto& path : report_jsons) {
        std::ifstream f(path);
        if (!f) throw ParseError("cannot open " + path.string());
        json j;
        try {
            f >> j;
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ": " + e.what());
        }
        grid_ns.push_back(j.at("config").at("grid_n").get<int>());
        window_ss.push_back(j.at("config").at("window_s").get<int>());
        docs.push_back(std::move(j));
    }
    const bool grid_varies =
        std::adjacent_find(grid_ns.begin(), grid_ns.end(), std::not_equal_to<>()) != grid_ns.end();
    const std::string key = grid_varies ? "grid_n" : "window_s";
    for (size_t i = 0; i < docs.size(); ++i) {
        Point p;
        p.x = grid_varies ? grid_ns[i] : window_ss[i];
        p.acc = docs[i].at("aggregate").at("window_accuracy").at("mean").get<double>();
        p.f1 = docs[i].at("aggregate").at("window_weighted_f1").at("mean").get<double>();
        points.push_back(p);
    }
    std::sort(points.begin(), points.end(), [](const Point& a, const Point& b) { return a.x < b.x; });

    fs::create_directories(out_dir);
    std::ostringstream csv;
    csv << key << ",window_accuracy_mean,window_weighted_f1_mean\n";
    std::vector<double> xs, ys;
    for (const auto& p : points) {
        csv << fmt(p.x, 0) << ',' << fmt(p.acc) << ',' << fmt(p.f1) << '\n';
        xs.push_back(p.x);
        ys.push_back(p.acc);
    }
    write_text(out_dir / "sweep.csv", csv.str());
    write_text(out_dir / "sweep.svg",
               line_chart_svg(xs, ys, key, "window accuracy vs " + key));
}

}  // namespace thermaltap::report
