#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "thermaltap/report.hpp"
#include "test_support.hpp"

using namespace thermaltap;
using nlohmann::json;

namespace {

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

std::vector<std::string> fields_of(const std::string& line) {
    std::vector<std::string> fields;
    std::istringstream in(line);
    std::string field;
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

size_t count_of(const std::string& text, const std::string& needle) {
    size_t n = 0, pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        ++n;
        pos += needle.size();
    }
    return n;
}

// Same separable layout the eval tests use: 3 apps x 3 sessions x 4 windows
// with one informative column.
struct Toy {
    features::FeatureMatrix matrix;
    std::vector<eval::SessionMeta> sessions;
};

Toy toy_experiment() {
    Toy toy;
    toy.matrix = ttest::blank_matrix(2, {5, 30}, 36);
    const size_t col = ttest::col_of(toy.matrix, "cell_0_0_mean_mean");
    const char* apps[3] = {"home", "appA", "appB"};
    size_t r = 0;
    for (int c = 0; c < 3; ++c) {
        for (int s = 0; s < 3; ++s) {
            const std::string id = std::string(apps[c]) + "_s" + std::to_string(s);
            toy.sessions.push_back(eval::SessionMeta{id, "dev0", apps[c], "indoor"});
            for (int w = 0; w < 4; ++w, ++r) {
                toy.matrix.labels[r] = apps[c];
                toy.matrix.session_ids[r] = id;
                toy.matrix.window_starts[r] = w * 10;
                toy.matrix.rows[r][col] = c * 5.0 + 0.05 * w + 0.01 * s;
            }
        }
    }
    return toy;
}

eval::ExperimentReport toy_report() {
    eval::RunConfig config;
    config.protocol = "loso";
    config.seed = 42;
    config.train.backend = classify::Backend::forest;
    config.train.forest.trees = 25;
    config.train.forest.max_depth = 6;
    config.train.forest.min_leaf = 1;
    const Toy toy = toy_experiment();
    return eval::run_experiment(config, toy.matrix, toy.sessions);
}

constexpr const char* kMetricsHeader =
    "fold_id,window_accuracy,window_weighted_f1,window_active_accuracy,"
    "window_active_weighted_f1,session_accuracy,stage1_active_recall,"
    "stage1_home_recall,wind_k";

}  // namespace

TEST_CASE("confusion_csv is truth-major with a labeled corner") {
    eval::ConfusionMatrix cm;
    cm.classes = {"appA", "home"};
    cm.counts = {3, 1, 0, 2};
    CHECK(report::confusion_csv(cm) == "truth\\pred,appA,home\nappA,3,1\nhome,0,2\n");

    eval::ConfusionMatrix quoted;
    quoted.classes = {"a,b"};
    quoted.counts = {7};
    CHECK(report::confusion_csv(quoted) == "truth\\pred,\"a,b\"\n\"a,b\",7\n");
}

TEST_CASE("metrics_csv lists folds then aggregate rows") {
    const eval::ExperimentReport report = toy_report();
    const auto lines = lines_of(report::metrics_csv(report));
    REQUIRE(lines.size() == 1 + report.folds.size() + 2);
    CHECK(lines[0] == kMetricsHeader);

    const auto first = fields_of(lines[1]);
    REQUIRE(first.size() == 9);
    CHECK(first[0] == report.folds[0].fold_id);
    CHECK(first[1] == "1.0000");  // the toy problem is solved exactly
    CHECK(first[5] == "1.0000");
    CHECK(first[8] == "0.0000");  // wind correction off -> k stays 0

    const auto mean_row = fields_of(lines[lines.size() - 2]);
    const auto std_row = fields_of(lines.back());
    REQUIRE(mean_row.size() == 9);
    REQUIRE(std_row.size() == 9);
    CHECK(mean_row[0] == "mean");
    CHECK(mean_row[1] == "1.0000");
    CHECK(mean_row[8] == "");  // no aggregate wind_k
    CHECK(std_row[0] == "std");
    CHECK(std_row[1] == "0.0000");
}

TEST_CASE("svg builders emit self-contained markup") {
    SUBCASE("bar chart escapes labels and titles") {
        const std::string svg =
            report::bar_chart_svg({"a<b", "c"}, {0.5, 1.0}, "alpha & beta");
        CHECK(svg.rfind("<svg ", 0) == 0);
        CHECK(svg.substr(svg.size() - 7) == "</svg>\n");
        CHECK(svg.find("a&lt;b") != std::string::npos);
        CHECK(svg.find("alpha &amp; beta") != std::string::npos);
        CHECK(svg.find("a<b") == std::string::npos);
    }
    SUBCASE("empty series still render") {
        CHECK(report::bar_chart_svg({}, {}, "none").rfind("<svg ", 0) == 0);
        CHECK(report::line_chart_svg({}, {}, "x", "none").rfind("<svg ", 0) == 0);
    }
    SUBCASE("line chart connects the points") {
        const std::string svg =
            report::line_chart_svg({4, 8, 16}, {0.7, 0.8, 0.9}, "grid_n", "accuracy");
        CHECK(svg.find("<polyline") != std::string::npos);
        CHECK(count_of(svg, "<circle") == 3);
        CHECK(svg.find("grid_n") != std::string::npos);
    }
    SUBCASE("heatmap draws one cell per grid entry") {
        const std::string svg = report::grid_heatmap_svg({0.1, 0.2, 0.3, 0.4}, 2, "imp");
        CHECK(count_of(svg, "rgb(") == 4);
        CHECK_THROWS_AS(report::grid_heatmap_svg({0.1, 0.2, 0.3}, 2, "bad"), ValueError);
        CHECK_THROWS_AS(report::grid_heatmap_svg({}, 0, "bad"), ValueError);
    }
}

TEST_CASE("render_report materializes tables and plots") {
    const eval::ExperimentReport report = toy_report();
    ttest::TempDir dir("render");
    const auto json_path = dir.path / "report.json";
    eval::write_report(report, json_path);

    const auto out = dir.path / "out";
    report::render_report(json_path, out);
    for (const char* name : {"confusion_window.csv", "confusion_session.csv", "metrics.csv",
                             "accuracy_by_fold.svg", "recall_by_class.svg", "importance.svg"}) {
        CHECK(std::filesystem::exists(out / name));
    }
    CHECK(ttest::read_file(out / "metrics.csv") == report::metrics_csv(report));
    CHECK(ttest::read_file(out / "confusion_window.csv") ==
          report::confusion_csv(report.window_confusion));
    CHECK(ttest::read_file(out / "recall_by_class.svg").rfind("<svg ", 0) == 0);

    SUBCASE("importance plot is skipped when the report has no grid") {
        auto j = json::parse(ttest::read_file(json_path));
        j.erase("importance");
        ttest::write_text(dir.path / "margin.json", j.dump(2) + "\n");
        const auto out2 = dir.path / "out2";
        report::render_report(dir.path / "margin.json", out2);
        CHECK(std::filesystem::exists(out2 / "metrics.csv"));
        CHECK(!std::filesystem::exists(out2 / "importance.svg"));
    }
    SUBCASE("unreadable input is a parse error") {
        CHECK_THROWS_AS(report::render_report(dir.path / "absent.json", out), ParseError);
        ttest::write_text(dir.path / "garbage.json", "{not json");
        CHECK_THROWS_AS(report::render_report(dir.path / "garbage.json", out), ParseError);
    }
}

TEST_CASE("render_sweep orders points by the varying knob") {
    ttest::TempDir dir("sweep");
    const auto stub = [&](const std::string& name, int grid_n, int window_s, double acc,
                          double f1) {
        json j;
        j["config"]["grid_n"] = grid_n;
        j["config"]["window_s"] = window_s;
        j["aggregate"]["window_accuracy"]["mean"] = acc;
        j["aggregate"]["window_weighted_f1"]["mean"] = f1;
        const auto path = dir.path / name;
        ttest::write_text(path, j.dump(2) + "\n");
        return path;
    };

    SUBCASE("grid sweep") {
        const auto g16 = stub("g16.json", 16, 30, 0.9, 0.88);
        const auto g4 = stub("g4.json", 4, 30, 0.8, 0.75);
        const auto out = dir.path / "out";
        report::render_sweep({g16, g4}, out);  // deliberately unsorted input
        CHECK(ttest::read_file(out / "sweep.csv") ==
              "grid_n,window_accuracy_mean,window_weighted_f1_mean\n"
              "4,0.8000,0.7500\n"
              "16,0.9000,0.8800\n");
        CHECK(ttest::read_file(out / "sweep.svg").rfind("<svg ", 0) == 0);
    }
    SUBCASE("window sweep when grid_n is constant") {
        const auto w10 = stub("w10.json", 16, 10, 0.92, 0.9);
        const auto w60 = stub("w60.json", 16, 60, 0.95, 0.93);
        const auto out = dir.path / "outw";
        report::render_sweep({w60, w10}, out);
        const auto lines = lines_of(ttest::read_file(out / "sweep.csv"));
        REQUIRE(lines.size() == 3);
        CHECK(lines[0] == "window_s,window_accuracy_mean,window_weighted_f1_mean");
        CHECK(lines[1].rfind("10,", 0) == 0);
        CHECK(lines[2].rfind("60,", 0) == 0);
    }
    SUBCASE("degenerate inputs") {
        CHECK_THROWS_AS(report::render_sweep({}, dir.path / "o"), ValueError);
        CHECK_THROWS_AS(report::render_sweep({dir.path / "missing.json"}, dir.path / "o"),
                        ParseError);
    }
}
