#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "thermaltap/classify.hpp"
#include "thermaltap/eval.hpp"
#include "thermaltap/features.hpp"
#include "thermaltap/frame_store.hpp"
#include "thermaltap/normalize.hpp"
#include "thermaltap/report.hpp"
#include "thermaltap/roi.hpp"
#include "thermaltap/synth.hpp"

namespace py = pybind11;
using namespace thermaltap;

namespace {

Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw ValueError("empty matrix");
    Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows[0].size()) throw ShapeError("ragged matrix");
        for (size_t c = 0; c < rows[r].size(); ++c) {
            m.at(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
        }
    }
    return m;
}

BitGrid to_bits(const std::vector<std::vector<int>>& rows) {
    if (rows.empty()) throw ValueError("empty mask");
    BitGrid g(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows[0].size()) throw ShapeError("ragged mask");
        for (size_t c = 0; c < rows[r].size(); ++c) {
            g.at(static_cast<int>(r), static_cast<int>(c)) = rows[r][c] ? 1 : 0;
        }
    }
    return g;
}

std::vector<std::vector<int>> from_bits(const BitGrid& g) {
    std::vector<std::vector<int>> out(g.height(), std::vector<int>(g.width()));
    for (int r = 0; r < g.height(); ++r) {
        for (int c = 0; c < g.width(); ++c) out[r][c] = g.at(r, c);
    }
    return out;
}

py::dict quality_dict(const roi::MaskQuality& q) {
    py::dict d;
    d["component_area"] = q.component_area;
    d["aspect_ratio"] = q.aspect_ratio;
    d["solidity"] = q.solidity;
    d["valid"] = q.valid;
    return d;
}

features::WindowPhase parse_phase(const std::string& phase) {
    if (phase == "steady") return features::WindowPhase::steady;
    if (phase == "full") return features::WindowPhase::full;
    throw ConfigError("unknown phase: " + phase);
}

}  // namespace

PYBIND11_MODULE(_thermaltap, m) {
    m.doc() = "thermal side-channel analysis toolkit";
    m.attr("__version__") = kToolkitVersion;

    py::register_exception<Error>(m, "ThermaltapError");

    m.def(
        "generate_dataset",
        [](const std::filesystem::path& out_dir, const std::vector<std::string>& devices,
           const std::vector<std::string>& apps, int indoor, int outdoor, int duration,
           double noise, bool emit_masks, uint64_t seed) {
            synth::SuiteSpec spec;
            spec.devices = devices;
            spec.apps = apps;
            spec.indoor_sessions_per_app = indoor;
            spec.outdoor_sessions_per_app = outdoor;
            spec.duration_s = duration;
            spec.noise_std = noise;
            spec.emit_masks = emit_masks;
            synth::generate_dataset(spec, seed, out_dir);
        },
        py::arg("out_dir"), py::arg("devices") = std::vector<std::string>{"quest3"},
        py::arg("apps") = std::vector<std::string>{}, py::arg("indoor") = 8,
        py::arg("outdoor") = 0, py::arg("duration") = 600, py::arg("noise") = 0.04,
        py::arg("emit_masks") = true, py::arg("seed") = 0);

    m.def("default_app_labels", &synth::default_app_labels);
    m.def("list_sessions",
          [](const std::filesystem::path& d) { return frames::list_sessions(d); });

    m.def(
        "segment_frame",
        [](const std::vector<std::vector<double>>& temps, double ambient, double contrast) {
            roi::SegmenterConfig cfg;
            cfg.contrast_c = contrast;
            const auto mask = roi::segment_classical(to_matrix(temps), ambient, cfg);
            const auto q = roi::mask_geometry(mask.bits, {});
            return py::make_tuple(from_bits(mask.bits), quality_dict(q));
        },
        py::arg("temps"), py::arg("ambient"), py::arg("contrast") = 3.0);

    m.def("mask_quality", [](const std::vector<std::vector<int>>& mask) {
        return quality_dict(roi::mask_geometry(to_bits(mask), {}));
    });

    m.def("seg_metrics", [](const std::vector<std::vector<int>>& pred,
                            const std::vector<std::vector<int>>& truth) {
        const auto s = eval::seg_metrics(to_bits(pred), to_bits(truth));
        py::dict d;
        d["dice"] = s.dice;
        d["iou"] = s.iou;
        d["hd95"] = s.hd95;
        d["asd"] = s.asd;
        return d;
    });

    m.def("feature_names", &features::feature_names, py::arg("n"),
          py::arg("lags") = features::kDefaultLags);

    m.def(
        "extract",
        [](const std::filesystem::path& dataset, int grid, int window, int stride,
           const std::vector<int>& lags, const std::string& phase) {
            features::ExtractConfig cfg;
            cfg.grid.n = grid;
            cfg.window_s = window;
            cfg.stride_s = stride > 0 ? stride : window;
            cfg.lags = lags;
            cfg.phase = parse_phase(phase);
            const auto fm = features::extract_dataset(dataset, cfg);
            py::dict d;
            d["names"] = fm.names;
            d["rows"] = fm.rows;
            d["labels"] = fm.labels;
            d["session_ids"] = fm.session_ids;
            d["window_starts"] = fm.window_starts;
            return d;
        },
        py::arg("dataset"), py::arg("grid") = 16, py::arg("window") = 10, py::arg("stride") = 0,
        py::arg("lags") = features::kDefaultLags, py::arg("phase") = "steady");

    m.def(
        "extract_csv",
        [](const std::filesystem::path& dataset, const std::filesystem::path& out, int grid,
           int window, int stride, const std::vector<int>& lags, const std::string& phase) {
            features::ExtractConfig cfg;
            cfg.grid.n = grid;
            cfg.window_s = window;
            cfg.stride_s = stride > 0 ? stride : window;
            cfg.lags = lags;
            cfg.phase = parse_phase(phase);
            const auto fm = features::extract_dataset(dataset, cfg);
            features::write_feature_csv(fm, out);
            return fm.rows.size();
        },
        py::arg("dataset"), py::arg("out"), py::arg("grid") = 16, py::arg("window") = 10,
        py::arg("stride") = 0, py::arg("lags") = features::kDefaultLags,
        py::arg("phase") = "steady");

    m.def(
        "train",
        [](const std::filesystem::path& features_csv, const std::filesystem::path& model_out,
           const std::string& backend, int top_k, int trees, int depth, int min_leaf,
           uint64_t seed) {
            const auto fm = features::load_feature_csv(features_csv);
            classify::TrainConfig cfg;
            cfg.backend = classify::backend_from_string(backend);
            cfg.top_k = top_k;
            cfg.forest.trees = trees;
            cfg.forest.max_depth = depth;
            cfg.forest.min_leaf = min_leaf;
            std::vector<size_t> rows(fm.rows.size());
            for (size_t i = 0; i < rows.size(); ++i) rows[i] = i;
            const auto model = classify::train_two_stage(fm, rows, cfg, seed);
            classify::save_model(model, model_out);
        },
        py::arg("features_csv"), py::arg("model_out"), py::arg("backend") = "forest",
        py::arg("top_k") = classify::kDefaultTopK, py::arg("trees") = 300, py::arg("depth") = 24,
        py::arg("min_leaf") = 2, py::arg("seed") = 0);

    m.def(
        "infer",
        [](const std::filesystem::path& model_path, const std::filesystem::path& features_csv) {
            const auto model = classify::load_model(model_path);
            const auto fm = features::load_feature_csv(features_csv);
            std::map<std::string, std::vector<size_t>> by_session;
            for (size_t r = 0; r < fm.rows.size(); ++r) {
                by_session[fm.session_ids[r]].push_back(r);
            }
            py::list out;
            for (const auto& [sid, rows] : by_session) {
                const auto inf = classify::two_stage_infer(fm, rows, model);
                py::dict d;
                d["session_id"] = sid;
                d["label"] = inf.label;
                py::list windows;
                for (const auto& rec : inf.windows) {
                    py::dict w;
                    w["window_start"] = rec.window_start;
                    w["stage1_active"] = rec.stage1_active;
                    w["stage2_label"] = rec.stage2_label;
                    windows.append(w);
                }
                d["windows"] = windows;
                out.append(d);
            }
            return out;
        },
        py::arg("model"), py::arg("features_csv"));

    m.def(
        "evaluate",
        [](const std::filesystem::path& dataset, const std::string& protocol, int grid,
           int window, const std::string& backend, const std::vector<std::string>& normalize,
           int few_shot, bool permute_labels, const std::string& phase, int trees,
           uint64_t seed) {
            eval::RunConfig cfg;
            cfg.dataset = dataset;
            cfg.protocol = protocol;
            cfg.grid_n = grid;
            cfg.window_s = window;
            cfg.train.backend = classify::backend_from_string(backend);
            cfg.train.forest.trees = trees;
            cfg.few_shot_count = few_shot;
            cfg.permute_labels = permute_labels;
            cfg.phase = parse_phase(phase);
            cfg.seed = seed;
            for (const auto& flag : normalize) {
                if (flag == "ambient") {
                    cfg.norm_ambient = true;
                } else if (flag == "wind") {
                    cfg.norm_wind = true;
                } else if (flag == "delta_residual") {
                    cfg.norm_delta_residual = true;
                } else if (flag == "headset_baseline") {
                    cfg.norm_headset_baseline = true;
                } else {
                    throw ConfigError("unknown normalization flag: " + flag);
                }
            }
            return eval::report_to_json(eval::run_experiment(cfg));
        },
        py::arg("dataset"), py::arg("protocol") = "loso", py::arg("grid") = 16,
        py::arg("window") = 10, py::arg("backend") = "forest",
        py::arg("normalize") = std::vector<std::string>{}, py::arg("few_shot") = 0,
        py::arg("permute_labels") = false, py::arg("phase") = "steady", py::arg("trees") = 300,
        py::arg("seed") = 0);

    m.def("render_report", [](const std::filesystem::path& report_json,
                              const std::filesystem::path& out_dir) {
        report::render_report(report_json, out_dir);
    });

    m.def("anova_f", &classify::anova_f, py::arg("column"), py::arg("group_ids"),
          py::arg("group_count"));
}
