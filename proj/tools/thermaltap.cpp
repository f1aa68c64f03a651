// thermaltap: thermal side-channel analysis toolkit, single CLI entry point.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "thermaltap/classify.hpp"
#include "thermaltap/eval.hpp"
#include "thermaltap/features.hpp"
#include "thermaltap/frame_store.hpp"
#include "thermaltap/normalize.hpp"
#include "thermaltap/report.hpp"
#include "thermaltap/roi.hpp"
#include "thermaltap/synth.hpp"

namespace fs = std::filesystem;
using namespace thermaltap;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        size_t pos = 0;
        const int v = std::stoi(item, &pos);
        if (pos != item.size()) throw CLI::ValidationError("not an integer list: " + text);
        out.push_back(v);
    }
    if (out.empty()) throw CLI::ValidationError("empty integer list");
    return out;
}

synth::SuiteSpec preset_suite(const std::string& name) {
    synth::SuiteSpec spec;
    spec.name = name;
    if (name == "default" || name == "e1") {
        // 7 labels x 8 indoor sessions on one device
    } else if (name == "e2") {
        spec.outdoor_sessions_per_app = 4;
    } else if (name == "e3") {
        spec.devices = {"quest3", "quest2", "vive_focus"};
        spec.indoor_sessions_per_app = 4;
    } else {
        throw ConfigError("unknown preset: " + name + " (expected default, e1, e2 or e3)");
    }
    return spec;
}

struct EvalArgs {
    std::string dataset;
    std::string out = ".";
    std::string protocol = "loso";
    std::string grids = "16";
    std::string windows = "10";
    int stride = 0;
    std::string lags = "5,30";
    std::string phase = "steady";
    std::string backend = "forest";
    std::string normalize;
    int few_shot = 0;
    int trees = 300;
    int depth = 24;
    int min_leaf = 2;
    int top_k = classify::kDefaultTopK;
    uint64_t seed = 0;
    bool permute = false;
    int jobs = 0;
};

eval::RunConfig base_config(const EvalArgs& a) {
    eval::RunConfig c;
    c.dataset = a.dataset;
    c.stride_s = a.stride;
    c.lags = parse_int_list(a.lags);
    if (a.phase == "steady") {
        c.phase = features::WindowPhase::steady;
    } else if (a.phase == "full") {
        c.phase = features::WindowPhase::full;
    } else {
        throw ConfigError("unknown phase: " + a.phase);
    }
    c.train.backend = classify::backend_from_string(a.backend);
    c.train.top_k = a.top_k;
    c.train.forest.trees = a.trees;
    c.train.forest.max_depth = a.depth;
    c.train.forest.min_leaf = a.min_leaf;
    c.protocol = a.protocol;
    c.few_shot_count = a.few_shot;
    c.seed = a.seed;
    c.permute_labels = a.permute;
    if (!a.normalize.empty()) {
        std::stringstream ss(a.normalize);
        std::string flag;
        while (std::getline(ss, flag, ',')) {
            if (flag == "ambient") {
                c.norm_ambient = true;
            } else if (flag == "wind") {
                c.norm_wind = true;
            } else if (flag == "delta_residual") {
                c.norm_delta_residual = true;
            } else if (flag == "headset_baseline") {
                c.norm_headset_baseline = true;
            } else if (!flag.empty()) {
                throw ConfigError("unknown normalization flag: " + flag);
            }
        }
    }
    return c;
}

int run_eval(const EvalArgs& args) {
    const auto grids = parse_int_list(args.grids);
    const auto windows = parse_int_list(args.windows);
    const fs::path out_dir(args.out);
    fs::create_directories(out_dir);

    std::vector<fs::path> reports;
    for (int n : grids) {
        for (int w : windows) {
            eval::RunConfig config = base_config(args);
            config.grid_n = n;
            config.window_s = w;
            const auto report = eval::run_experiment(config);
            fs::path path;
            if (grids.size() == 1 && windows.size() == 1) {
                path = out_dir / "report.json";
            } else {
                char name[64];
                std::snprintf(name, sizeof name, "report_g%d_w%d.json", n, w);
                path = out_dir / name;
            }
            eval::write_report(report, path);
            report::render_report(path, out_dir / path.stem());
            std::cout << path.string() << ": window accuracy "
                      << report.window_accuracy_mean << ", weighted F1 "
                      << report.window_weighted_f1_mean << "\n";
            reports.push_back(path);
        }
    }
    if (reports.size() > 1) report::render_sweep(reports, out_dir);
    return kExitOk;
}

int run_train(const std::string& features_csv, const std::string& out,
              const std::string& backend, int top_k, int trees, int depth, int min_leaf,
              uint64_t seed) {
    const auto m = features::load_feature_csv(features_csv);
    classify::TrainConfig config;
    config.backend = classify::backend_from_string(backend);
    config.top_k = top_k;
    config.forest.trees = trees;
    config.forest.max_depth = depth;
    config.forest.min_leaf = min_leaf;
    std::vector<size_t> rows(m.rows.size());
    for (size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    const auto model = classify::train_two_stage(m, rows, config, seed);
    classify::save_model(model, out);
    std::cout << "model written to " << out << " (" << m.rows.size() << " windows, "
              << model.preprocess.selected.size() << " features)\n";
    return kExitOk;
}

int run_infer(const std::string& model_path, const std::string& features_csv,
              const std::string& out) {
    const auto model = classify::load_model(model_path);
    const auto m = features::load_feature_csv(features_csv);
    std::map<std::string, std::vector<size_t>> by_session;
    for (size_t r = 0; r < m.rows.size(); ++r) by_session[m.session_ids[r]].push_back(r);

    std::ostringstream csv;
    csv << "session_id,window_start,session_label,stage1_active,window_label\n";
    for (const auto& [sid, rows] : by_session) {
        const auto inf = classify::two_stage_infer(m, rows, model);
        const bool idle = inf.label == frames::kIdleLabel;
        for (const auto& rec : inf.windows) {
            const std::string final_label =
                idle || !rec.stage1_active ? frames::kIdleLabel : rec.stage2_label;
            csv << sid << ',' << rec.window_start << ',' << inf.label << ','
                << (rec.stage1_active ? 1 : 0) << ',' << final_label << '\n';
        }
        std::cout << sid << ": " << inf.label << "\n";
    }
    std::ofstream f(out, std::ios::binary);
    if (!f) throw Error("cannot write " + out);
    const std::string text = csv.str();
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"thermal side-channel analysis toolkit"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string suite_path, preset = "default", synth_out;
    uint64_t synth_seed = 0;
    synth_cmd->add_option("--suite", suite_path, "suite spec JSON (overrides --preset)");
    synth_cmd->add_option("--preset", preset, "built-in suite: default|e1|e2|e3");
    synth_cmd->add_option("--out", synth_out, "output dataset directory")->required();
    synth_cmd->add_option("--seed", synth_seed, "root seed")->envname("THERMALTAP_SEED");

    // segment
    auto* seg_cmd = app.add_subcommand("segment", "segment one radiometric frame");
    std::string seg_frame, seg_out;
    double seg_ambient = 0.0, seg_contrast = 3.0;
    bool seg_has_ambient = false;
    seg_cmd->add_option("--frame", seg_frame, "frame CSV path")->required();
    seg_cmd->add_option("--ambient", seg_ambient, "ambient temperature (deg C)")
        ->each([&](const std::string&) { seg_has_ambient = true; });
    seg_cmd->add_option("--contrast", seg_contrast, "threshold above ambient (deg C)");
    seg_cmd->add_option("--out", seg_out, "output mask CSV")->required();

    // extract
    auto* ext_cmd = app.add_subcommand("extract", "extract window features from a dataset");
    std::string ext_dataset, ext_out, ext_lags = "5,30", ext_phase = "full";
    int ext_grid = 16, ext_window = 10, ext_stride = 0;
    ext_cmd->add_option("--dataset", ext_dataset, "dataset directory")->required();
    ext_cmd->add_option("--grid", ext_grid, "grid resolution n");
    ext_cmd->add_option("--window", ext_window, "window length (s)");
    ext_cmd->add_option("--stride", ext_stride, "window stride (s), 0 = window");
    ext_cmd->add_option("--lags", ext_lags, "delta lags (s), comma separated");
    ext_cmd->add_option("--phase", ext_phase, "windows to keep: full|steady");
    ext_cmd->add_option("--out", ext_out, "output feature CSV")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "train a two-stage model on a feature CSV");
    std::string train_features, train_out, train_backend = "forest";
    int train_topk = classify::kDefaultTopK, train_trees = 300, train_depth = 24,
        train_minleaf = 2;
    uint64_t train_seed = 0;
    train_cmd->add_option("--features", train_features, "feature CSV from extract")->required();
    train_cmd->add_option("--backend", train_backend, "forest|margin");
    train_cmd->add_option("--top-k", train_topk, "ANOVA top-K features");
    train_cmd->add_option("--trees", train_trees, "forest size");
    train_cmd->add_option("--depth", train_depth, "max tree depth");
    train_cmd->add_option("--min-leaf", train_minleaf, "min samples per leaf");
    train_cmd->add_option("--seed", train_seed, "root seed")->envname("THERMALTAP_SEED");
    train_cmd->add_option("--out", train_out, "output model JSON")->required();

    // infer
    auto* infer_cmd = app.add_subcommand("infer", "apply a model to a feature CSV");
    std::string infer_model, infer_features, infer_out;
    infer_cmd->add_option("--model", infer_model, "model JSON")->required();
    infer_cmd->add_option("--features", infer_features, "feature CSV")->required();
    infer_cmd->add_option("--out", infer_out, "predictions CSV")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "run a cross-validation experiment");
    EvalArgs ev;
    eval_cmd->add_option("--dataset", ev.dataset, "dataset directory")->required();
    eval_cmd->add_option("--out", ev.out, "output directory");
    eval_cmd->add_option("--protocol", ev.protocol, "loso|lodo|pooled|transfer");
    eval_cmd->add_option("--grid", ev.grids, "grid n, comma list sweeps");
    eval_cmd->add_option("--window", ev.windows, "window length (s), comma list sweeps");
    eval_cmd->add_option("--stride", ev.stride, "window stride (s), 0 = window");
    eval_cmd->add_option("--lags", ev.lags, "delta lags (s)");
    eval_cmd->add_option("--phase", ev.phase, "windows to keep: full|steady");
    eval_cmd->add_option("--backend", ev.backend, "forest|margin");
    eval_cmd->add_option("--normalize", ev.normalize,
                         "comma list of ambient,wind,delta_residual,headset_baseline");
    eval_cmd->add_option("--few-shot", ev.few_shot, "adaptation sessions per class (transfer)");
    eval_cmd->add_option("--trees", ev.trees, "forest size");
    eval_cmd->add_option("--depth", ev.depth, "max tree depth");
    eval_cmd->add_option("--min-leaf", ev.min_leaf, "min samples per leaf");
    eval_cmd->add_option("--top-k", ev.top_k, "ANOVA top-K features");
    eval_cmd->add_option("--seed", ev.seed, "root seed")->envname("THERMALTAP_SEED");
    eval_cmd->add_flag("--permute-labels", ev.permute, "diagnostic: shuffle training labels");
    eval_cmd->add_option("--jobs", ev.jobs, "worker parallelism cap (folds run serially)");

    // report
    auto* rep_cmd = app.add_subcommand("report", "render report JSON into CSV/SVG");
    std::vector<std::string> rep_inputs;
    std::string rep_out = ".";
    rep_cmd->add_option("--in", rep_inputs, "report.json paths")->required();
    rep_cmd->add_option("--out", rep_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (synth_cmd->parsed()) {
            synth::SuiteSpec spec;
            if (!suite_path.empty()) {
                spec = synth::load_suite_spec(suite_path);
            } else {
                spec = preset_suite(preset);
            }
            synth::generate_dataset(spec, synth_seed, synth_out);
            int sessions = static_cast<int>(spec.devices.size()) *
                           static_cast<int>((spec.apps.empty() ? synth::default_app_labels()
                                                               : spec.apps)
                                                .size()) *
                           (spec.indoor_sessions_per_app + spec.outdoor_sessions_per_app);
            std::cout << sessions << " sessions written to " << synth_out << "\n";
            return kExitOk;
        }
        if (seg_cmd->parsed()) {
            const auto frame = frames::load_frame(seg_frame);
            roi::SegmenterConfig cfg;
            cfg.contrast_c = seg_contrast;
            double ambient = seg_ambient;
            if (!seg_has_ambient) {
                // fall back to the frame's cold fraction
                auto vals = frame.temps.raw();
                std::nth_element(vals.begin(), vals.begin() + vals.size() / 10, vals.end());
                ambient = vals[vals.size() / 10];
            }
            const auto mask = roi::segment_classical(frame.temps, ambient, cfg);
            const auto quality = roi::mask_geometry(mask.bits, {});
            roi::write_mask_csv(mask.bits, seg_out);
            nlohmann::json j;
            j["component_area"] = quality.component_area;
            j["aspect_ratio"] = quality.aspect_ratio;
            j["solidity"] = quality.solidity;
            j["valid"] = quality.valid;
            std::cout << j.dump(2) << "\n";
            return quality.valid ? kExitOk : kExitData;
        }
        if (ext_cmd->parsed()) {
            features::ExtractConfig cfg;
            cfg.grid.n = ext_grid;
            cfg.window_s = ext_window;
            cfg.stride_s = ext_stride > 0 ? ext_stride : ext_window;
            cfg.lags = parse_int_list(ext_lags);
            if (ext_phase == "steady") {
                cfg.phase = features::WindowPhase::steady;
            } else if (ext_phase != "full") {
                throw ConfigError("unknown phase: " + ext_phase);
            }
            const auto m = features::extract_dataset(ext_dataset, cfg);
            features::write_feature_csv(m, ext_out);
            std::cout << m.rows.size() << " windows x " << m.names.size() << " features -> "
                      << ext_out << "\n";
            return kExitOk;
        }
        if (train_cmd->parsed()) {
            return run_train(train_features, train_out, train_backend, train_topk, train_trees,
                             train_depth, train_minleaf, train_seed);
        }
        if (infer_cmd->parsed()) {
            return run_infer(infer_model, infer_features, infer_out);
        }
        if (eval_cmd->parsed()) {
            return run_eval(ev);
        }
        if (rep_cmd->parsed()) {
            std::vector<fs::path> paths(rep_inputs.begin(), rep_inputs.end());
            for (const auto& p : paths) {
                report::render_report(p, fs::path(rep_out) / p.stem());
            }
            if (paths.size() > 1) report::render_sweep(paths, rep_out);
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const PlanError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
