#include "thermaltap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "thermaltap/normalize.hpp"
#include "thermaltap/rng.hpp"

namespace thermaltap::eval {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---- Fold planning ----

FoldPlan plan_loso(const std::vector<SessionMeta>& sessions) {
    if (sessions.size() < 2) throw PlanError("LOSO needs at least two sessions");
    std::vector<std::string> ids;
    for (const auto& s : sessions) ids.push_back(s.session_id);
    std::sort(ids.begin(), ids.end());

    FoldPlan plan;
    plan.protocol = "loso";
    for (const auto& held_out : ids) {
        Fold fold;
        fold.fold_id = held_out;
        fold.test.push_back(held_out);
        for (const auto& id : ids) {
            if (id != held_out) fold.train.push_back(id);
        }
        plan.folds.push_back(std::move(fold));
    }
    return plan;
}

FoldPlan plan_lodo(const std::vector<SessionMeta>& sessions) {
    if (sessions.size() < 2) throw PlanError("LODO needs at least two sessions");
    std::map<std::string, std::vector<std::string>> by_device;
    for (const auto& s : sessions) by_device[s.device_model].push_back(s.session_id);
    if (by_device.size() < 2) throw PlanError("LODO needs at least two device models");

    FoldPlan plan;
    plan.protocol = "lodo";
    for (auto& [device, ids] : by_device) {
        std::sort(ids.begin(), ids.end());
        Fold fold;
        fold.fold_id = device;
        fold.test = ids;
        for (const auto& [other, other_ids] : by_device) {
            if (other == device) continue;
            fold.train.insert(fold.train.end(), other_ids.begin(), other_ids.end());
        }
        std::sort(fold.train.begin(), fold.train.end());
        plan.folds.push_back(std::move(fold));
    }
    return plan;
}

FoldPlan plan_transfer(const std::vector<SessionMeta>& sessions, int few_shot_count,
                       uint64_t seed) {
    if (few_shot_count < 0) throw PlanError("few_shot_count must be nonnegative");
    std::vector<std::string> indoor;
    std::map<std::string, std::vector<std::string>> outdoor_by_app;
    for (const auto& s : sessions) {
        if (s.environment == "indoor") {
            indoor.push_back(s.session_id);
        } else {
            outdoor_by_app[s.app_label].push_back(s.session_id);
        }
    }
    if (indoor.empty()) throw PlanError("transfer protocol needs indoor sessions");
    if (outdoor_by_app.empty()) throw PlanError("transfer protocol needs outdoor sessions");
    std::sort(indoor.begin(), indoor.end());

    Fold fold;
    fold.fold_id = few_shot_count == 0 ? "zero_shot" : "few_shot_" + std::to_string(few_shot_count);
    fold.train = indoor;
    uint64_t class_index = 0;
    for (auto& [app, ids] : outdoor_by_app) {
        std::sort(ids.begin(), ids.end());
        if (few_shot_count >= static_cast<int>(ids.size())) {
            throw PlanError("few_shot_count " + std::to_string(few_shot_count) +
                            " must be below the outdoor session count for app " + app);
        }
        Rng rng(derive_seed(seed, 0x78666572ULL, class_index++));
        rng.shuffle(ids);
        for (int i = 0; i < few_shot_count; ++i) fold.adaptation.push_back(ids[i]);
        for (size_t i = few_shot_count; i < ids.size(); ++i) fold.test.push_back(ids[i]);
    }
    std::sort(fold.adaptation.begin(), fold.adaptation.end());
    std::sort(fold.test.begin(), fold.test.end());

    FoldPlan plan;
    plan.protocol = "transfer";
    plan.folds.push_back(std::move(fold));
    return plan;
}

void check_fold_hygiene(const FoldPlan& plan) {
    for (const auto& fold : plan.folds) {
        const std::set<std::string> test(fold.test.begin(), fold.test.end());
        for (const auto& id : fold.train) {
            if (test.count(id)) {
                throw PlanError("fold " + fold.fold_id + ": session " + id +
                                " appears in both train and test");
            }
        }
        for (const auto& id : fold.adaptation) {
            if (test.count(id)) {
                throw PlanError("fold " + fold.fold_id + ": adaptation session " + id +
                                " appears in test");
            }
        }
    }
}

FoldPlan plan_for(const RunConfig& config, const std::vector<SessionMeta>& sessions) {
    FoldPlan plan;
    if (config.protocol == "loso" || config.protocol == "pooled") {
        plan = plan_loso(sessions);
        plan.protocol = config.protocol;
    } else if (config.protocol == "lodo") {
        plan = plan_lodo(sessions);
    } else if (config.protocol == "transfer") {
        plan = plan_transfer(sessions, config.few_shot_count, config.seed);
    } else {
        throw PlanError("unknown protocol: " + config.protocol);
    }
    check_fold_hygiene(plan);
    return plan;
}

// ---- Classification metrics ----

int64_t ConfusionMatrix::total() const {
    int64_t t = 0;
    for (int64_t c : counts) t += c;
    return t;
}

int64_t ConfusionMatrix::trace() const {
    int64_t t = 0;
    for (size_t i = 0; i < classes.size(); ++i) t += at(static_cast<int>(i), static_cast<int>(i));
    return t;
}

namespace {

std::unordered_map<std::string, int> class_lookup(const std::vector<std::string>& classes) {
    std::unordered_map<std::string, int> idx;
    for (size_t i = 0; i < classes.size(); ++i) idx[classes[i]] = static_cast<int>(i);
    return idx;
}

}  // namespace

ConfusionMatrix confusion_matrix(const std::vector<std::string>& truth,
                                 const std::vector<std::string>& pred,
                                 const std::vector<std::string>& classes) {
    if (truth.size() != pred.size()) throw MetricsError("truth/pred length mismatch");
    ConfusionMatrix cm;
    cm.classes = classes;
    cm.counts.assign(classes.size() * classes.size(), 0);
    const auto idx = class_lookup(classes);
    for (size_t i = 0; i < truth.size(); ++i) {
        const auto t = idx.find(truth[i]);
        const auto p = idx.find(pred[i]);
        if (t == idx.end() || p == idx.end()) {
            throw MetricsError("label outside the declared class list: " +
                               (t == idx.end() ? truth[i] : pred[i]));
        }
        cm.counts[static_cast<size_t>(t->second) * classes.size() + p->second] += 1;
    }
    return cm;
}

MetricsBlock classification_metrics(const std::vector<std::string>& truth,
                                    const std::vector<std::string>& pred,
                                    const std::vector<std::string>& classes) {
    if (truth.empty()) throw MetricsError("empty prediction set");
    if (truth.size() != pred.size()) throw MetricsError("truth/pred length mismatch");

    MetricsBlock block;
    block.total = static_cast<int64_t>(truth.size());
    int64_t correct = 0;
    for (size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] == pred[i]) ++correct;
    }
    block.accuracy = static_cast<double>(correct) / block.total;

    double weighted = 0.0;
    int64_t support_total = 0;
    for (const auto& cls : classes) {
        int64_t tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < truth.size(); ++i) {
            const bool t = truth[i] == cls, p = pred[i] == cls;
            if (t && p) ++tp;
            if (!t && p) ++fp;
            if (t && !p) ++fn;
        }
        ClassMetrics m;
        m.label = cls;
        m.support = tp + fn;
        m.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        m.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
        m.f1 = m.precision + m.recall > 0.0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
        if (m.support > 0) {
            weighted += m.support * m.f1;
            support_total += m.support;
        }
        block.per_class.push_back(std::move(m));
    }
    block.weighted_f1 = support_total > 0 ? weighted / support_total : 0.0;
    return block;
}

// ---- Segmentation metrics ----

namespace {

std::vector<std::pair<int, int>> boundary_pixels(const BitGrid& mask) {
    std::vector<std::pair<int, int>> out;
    const int h = mask.height(), w = mask.width();
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (!mask.at(r, c)) continue;
            const bool edge = r == 0 || r == h - 1 || c == 0 || c == w - 1 ||
                              !mask.at(r - 1, c) || !mask.at(r + 1, c) || !mask.at(r, c - 1) ||
                              !mask.at(r, c + 1);
            if (edge) out.emplace_back(r, c);
        }
    }
    return out;
}

void nearest_distances(const std::vector<std::pair<int, int>>& from,
                       const std::vector<std::pair<int, int>>& to, std::vector<double>& out) {
    for (const auto& [r, c] : from) {
        long best = std::numeric_limits<long>::max();
        for (const auto& [r2, c2] : to) {
            const long dr = r - r2, dc = c - c2;
            best = std::min(best, dr * dr + dc * dc);
        }
        out.push_back(std::sqrt(static_cast<double>(best)));
    }
}

}  // namespace

SegMetrics seg_metrics(const BitGrid& pred_mask, const BitGrid& true_mask) {
    if (!pred_mask.same_shape(true_mask)) throw ShapeError("mask dimensions differ");

    long a = 0, b = 0, both = 0;
    for (size_t i = 0; i < pred_mask.size(); ++i) {
        const bool pa = pred_mask.raw()[i] != 0, pb = true_mask.raw()[i] != 0;
        a += pa;
        b += pb;
        both += pa && pb;
    }

    SegMetrics m;
    if (a == 0 && b == 0) {
        m.dice = m.iou = 1.0;
        m.hd95 = m.asd = 0.0;
        return m;
    }
    if (a == 0 || b == 0) {
        m.dice = m.iou = 0.0;
        m.hd95 = m.asd = std::numeric_limits<double>::infinity();
        return m;
    }
    m.dice = 2.0 * both / (a + b);
    m.iou = static_cast<double>(both) / (a + b - both);

    const auto ba = boundary_pixels(pred_mask);
    const auto bb = boundary_pixels(true_mask);
    std::vector<double> dists;
    dists.reserve(ba.size() + bb.size());
    nearest_distances(ba, bb, dists);
    nearest_distances(bb, ba, dists);
    std::sort(dists.begin(), dists.end());
    const size_t n = dists.size();
    // nearest-rank 95th percentile
    const size_t rank = static_cast<size_t>(std::ceil(0.95 * n));
    m.hd95 = dists[std::min(n - 1, rank > 0 ? rank - 1 : 0)];
    m.asd = std::accumulate(dists.begin(), dists.end(), 0.0) / n;
    return m;
}

// ---- Experiment orchestration ----

std::vector<SessionMeta> dataset_sessions(const fs::path& dataset_dir) {
    std::vector<SessionMeta> out;
    for (const auto& id : frames::list_sessions(dataset_dir)) {
        const auto manifest = frames::load_manifest(dataset_dir / id / "manifest.json");
        SessionMeta meta;
        meta.session_id = manifest.session_id;
        meta.device_model = manifest.device_model;
        meta.app_label = manifest.app_label;
        meta.environment = manifest.environment;
        if (meta.session_id != id) {
            throw ValueError("manifest session_id " + meta.session_id +
                             " does not match directory " + id);
        }
        out.push_back(std::move(meta));
    }
    return out;
}

namespace {

struct FlagGrid {
    std::vector<uint8_t> top, bottom;
};

FlagGrid grid_flags(const std::vector<double>& cells) {
    std::vector<size_t> order(cells.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t x, size_t y) {
        if (cells[x] != cells[y]) return cells[x] > cells[y];
        return x < y;
    });
    FlagGrid f;
    f.top.assign(cells.size(), 0);
    f.bottom.assign(cells.size(), 0);
    const size_t k = std::max<size_t>(1, static_cast<size_t>(std::round(cells.size() * 0.2)));
    for (size_t i = 0; i < k && i < cells.size(); ++i) {
        f.top[order[i]] = 1;
        f.bottom[order[cells.size() - 1 - i]] = 1;
    }
    return f;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / v.size());
}

// nullopt when the class has no support in this fold (kept out of the mean)
std::optional<double> recall_of(const MetricsBlock& block, const std::string& label) {
    for (const auto& c : block.per_class) {
        if (c.label == label && c.support > 0) return c.recall;
    }
    return std::nullopt;
}

}  // namespace

ExperimentReport run_experiment(const RunConfig& config) {
    features::ExtractConfig ex;
    ex.grid.n = config.grid_n;
    ex.grid.min_cell_coverage = config.min_cell_coverage;
    ex.window_s = config.window_s;
    ex.stride_s = config.stride_s > 0 ? config.stride_s : config.window_s;
    ex.lags = config.lags;
    ex.phase = config.phase;
    const auto matrix = features::extract_dataset(config.dataset, ex);
    const auto sessions = dataset_sessions(config.dataset);
    return run_experiment(config, matrix, sessions);
}

ExperimentReport run_experiment(const RunConfig& config, const features::FeatureMatrix& matrix,
                                const std::vector<SessionMeta>& sessions) {
    if (matrix.rows.empty()) throw EmptySessionError("no windows survived extraction");
    const FoldPlan plan = plan_for(config, sessions);

    std::map<std::string, std::vector<size_t>> rows_by_session;
    for (size_t r = 0; r < matrix.rows.size(); ++r) {
        rows_by_session[matrix.session_ids[r]].push_back(r);
    }

    // global class list: every label in the data
    std::set<std::string> class_set(matrix.labels.begin(), matrix.labels.end());
    class_set.insert(frames::kIdleLabel);
    const std::vector<std::string> classes(class_set.begin(), class_set.end());
    const std::vector<std::string> stage1_classes = {"active", frames::kIdleLabel};

    ExperimentReport report;
    report.toolkit_version = kToolkitVersion;
    report.config = config;
    report.classes = classes;
    report.window_confusion.classes = classes;
    report.window_confusion.counts.assign(classes.size() * classes.size(), 0);
    report.session_confusion.classes = classes;
    report.session_confusion.counts.assign(classes.size() * classes.size(), 0);

    const bool needs_copy = config.norm_ambient || config.norm_wind ||
                            config.norm_delta_residual || config.norm_headset_baseline ||
                            config.permute_labels;

    std::vector<double> acc_win, acc_act, f1_win, f1_act, acc_sess, rec_active, rec_home;
    std::vector<double> importance_sum;

    for (size_t fold_index = 0; fold_index < plan.folds.size(); ++fold_index) {
        const Fold& fold = plan.folds[fold_index];

        std::vector<size_t> train_rows, test_rows;
        for (const auto& id : fold.train) {
            const auto it = rows_by_session.find(id);
            if (it == rows_by_session.end()) continue;  // session lost every window
            train_rows.insert(train_rows.end(), it->second.begin(), it->second.end());
        }
        for (const auto& id : fold.adaptation) {
            const auto it = rows_by_session.find(id);
            if (it == rows_by_session.end()) continue;
            train_rows.insert(train_rows.end(), it->second.begin(), it->second.end());
        }
        if (train_rows.empty()) {
            throw EmptySessionError("fold " + fold.fold_id + ": no training windows");
        }

        features::FeatureMatrix local;
        const features::FeatureMatrix* work = &matrix;
        double wind_k = 0.0;
        if (needs_copy) {
            local = matrix;
            if (config.norm_ambient) normalize::apply_ambient(local);
            if (config.norm_wind) {
                const auto wind = normalize::fit_wind_coefficient(local, train_rows);
                wind_k = wind.k;
                normalize::apply_wind(local, wind);
            }
            if (config.norm_delta_residual) {
                const auto table = normalize::fit_delta_table(local, train_rows);
                normalize::apply_delta_residual(local, table, train_rows);
            }
            if (config.norm_headset_baseline) {
                std::set<std::string> devices;
                for (size_t r : train_rows) devices.insert(local.device_models[r]);
                std::vector<normalize::HeadsetBaseline> baselines;
                for (const auto& d : devices) {
                    baselines.push_back(normalize::fit_headset_baseline(local, train_rows, d));
                }
                normalize::apply_headset_baseline(local, baselines);
            }
            if (config.permute_labels) {
                Rng rng(derive_seed(config.seed, 0x7065726dULL, fold_index));
                std::vector<std::string> shuffled;
                shuffled.reserve(train_rows.size());
                for (size_t r : train_rows) shuffled.push_back(local.labels[r]);
                rng.shuffle(shuffled);
                for (size_t i = 0; i < train_rows.size(); ++i) {
                    local.labels[train_rows[i]] = shuffled[i];
                }
            }
            work = &local;
        }

        const auto model = classify::train_two_stage(
            *work, train_rows, config.train, derive_seed(config.seed, 0x666f6c64ULL, fold_index));

        std::vector<std::string> win_truth, win_pred, sess_truth, sess_pred;
        std::vector<std::string> s1_truth, s1_pred;
        for (const auto& id : fold.test) {
            const auto it = rows_by_session.find(id);
            if (it == rows_by_session.end()) {
                throw SessionUnscorableError("fold " + fold.fold_id + ": test session " + id +
                                             " has no surviving windows");
            }
            const auto inference = classify::two_stage_infer(*work, it->second, model);
            const bool session_idle = inference.label == frames::kIdleLabel;
            sess_truth.push_back(work->labels[it->second.front()]);
            sess_pred.push_back(inference.label);
            for (size_t w = 0; w < inference.windows.size(); ++w) {
                const auto& rec = inference.windows[w];
                const std::string& truth = work->labels[it->second[w]];
                std::string final_label;
                if (session_idle || !rec.stage1_active) {
                    final_label = frames::kIdleLabel;
                } else {
                    final_label = rec.stage2_label;
                }
                win_truth.push_back(truth);
                win_pred.push_back(final_label);
                s1_truth.push_back(truth == frames::kIdleLabel ? frames::kIdleLabel : "active");
                s1_pred.push_back(rec.stage1_active ? "active" : frames::kIdleLabel);
            }
        }

        FoldResult fr;
        fr.fold_id = fold.fold_id;
        fr.window = classification_metrics(win_truth, win_pred, classes);
        fr.session = classification_metrics(sess_truth, sess_pred, classes);
        fr.stage1 = classification_metrics(s1_truth, s1_pred, stage1_classes);
        fr.window_confusion = confusion_matrix(win_truth, win_pred, classes);
        fr.session_confusion = confusion_matrix(sess_truth, sess_pred, classes);
        fr.wind_k = wind_k;

        std::vector<std::string> act_truth, act_pred;
        for (size_t i = 0; i < win_truth.size(); ++i) {
            if (win_truth[i] != frames::kIdleLabel) {
                act_truth.push_back(win_truth[i]);
                act_pred.push_back(win_pred[i]);
            }
        }
        if (!act_truth.empty()) {
            fr.window_active = classification_metrics(act_truth, act_pred, classes);
        }

        if (config.train.backend == classify::Backend::forest) {
            const auto imp = classify::feature_importance(*model.stage2.forest);
            std::vector<std::string> names;
            for (int sel : model.preprocess.selected) names.push_back(work->names[sel]);
            const auto grid = classify::map_to_grid(imp, names, work->n);
            fr.importance_grid = grid.cell;
            if (importance_sum.empty()) importance_sum.assign(grid.cell.size(), 0.0);
            for (size_t i = 0; i < grid.cell.size(); ++i) importance_sum[i] += grid.cell[i];
        }

        for (size_t i = 0; i < report.window_confusion.counts.size(); ++i) {
            report.window_confusion.counts[i] += fr.window_confusion.counts[i];
            report.session_confusion.counts[i] += fr.session_confusion.counts[i];
        }

        acc_win.push_back(fr.window.accuracy);
        f1_win.push_back(fr.window.weighted_f1);
        if (!act_truth.empty()) {
            acc_act.push_back(fr.window_active.accuracy);
            f1_act.push_back(fr.window_active.weighted_f1);
        }
        acc_sess.push_back(fr.session.accuracy);
        if (const auto r = recall_of(fr.stage1, "active")) rec_active.push_back(*r);
        if (const auto r = recall_of(fr.stage1, frames::kIdleLabel)) rec_home.push_back(*r);

        report.folds.push_back(std::move(fr));
    }

    report.window_accuracy_mean = mean_of(acc_win);
    report.window_accuracy_std = std_of(acc_win);
    report.window_active_accuracy_mean = mean_of(acc_act);
    report.window_active_accuracy_std = std_of(acc_act);
    report.window_weighted_f1_mean = mean_of(f1_win);
    report.window_weighted_f1_std = std_of(f1_win);
    report.window_active_weighted_f1_mean = mean_of(f1_act);
    report.window_active_weighted_f1_std = std_of(f1_act);
    report.session_accuracy_mean = mean_of(acc_sess);
    report.session_accuracy_std = std_of(acc_sess);
    report.stage1_active_recall_mean = mean_of(rec_active);
    report.stage1_active_recall_std = std_of(rec_active);
    report.stage1_home_recall_mean = mean_of(rec_home);
    report.stage1_home_recall_std = std_of(rec_home);

    if (!importance_sum.empty()) {
        report.importance.n = matrix.n;
        report.importance.cell = importance_sum;
        for (double& v : report.importance.cell) v /= plan.folds.size();
        const auto flags = grid_flags(report.importance.cell);
        report.importance.top20 = flags.top;
        report.importance.bottom20 = flags.bottom;
    }
    return report;
}

// ---- Report serialization ----

namespace {

json block_to_json(const MetricsBlock& b) {
    json per_class = json::array();
    for (const auto& c : b.per_class) {
        per_class.push_back({{"label", c.label},
                             {"precision", c.precision},
                             {"recall", c.recall},
                             {"f1", c.f1},
                             {"support", c.support}});
    }
    return {{"accuracy", b.accuracy},
            {"weighted_f1", b.weighted_f1},
            {"total", b.total},
            {"per_class", per_class}};
}

json confusion_to_json(const ConfusionMatrix& cm) {
    return {{"classes", cm.classes}, {"counts", cm.counts}};
}

json config_to_json(const RunConfig& c) {
    return {{"dataset", c.dataset.string()},
            {"grid_n", c.grid_n},
            {"min_cell_coverage", c.min_cell_coverage},
            {"window_s", c.window_s},
            {"stride_s", c.stride_s},
            {"lags", c.lags},
            {"phase", c.phase == features::WindowPhase::steady ? "steady" : "full"},
            {"backend", classify::to_string(c.train.backend)},
            {"top_k", c.train.top_k},
            {"forest",
             {{"trees", c.train.forest.trees},
              {"max_depth", c.train.forest.max_depth},
              {"min_leaf", c.train.forest.min_leaf},
              {"features_per_split", c.train.forest.features_per_split},
              {"max_bins", c.train.forest.max_bins}}},
            {"margin", {{"lambda", c.train.margin.lambda}, {"epochs", c.train.margin.epochs}}},
            {"normalize",
             {{"ambient", c.norm_ambient},
              {"wind", c.norm_wind},
              {"delta_residual", c.norm_delta_residual},
              {"headset_baseline", c.norm_headset_baseline}}},
            {"protocol", c.protocol},
            {"few_shot_count", c.few_shot_count},
            {"seed", c.seed},
            {"permute_labels", c.permute_labels}};
}

}  // namespace

std::string report_to_json(const ExperimentReport& report) {
    json j;
    j["schema"] = "thermaltap-report-1";
    j["toolkit_version"] = report.toolkit_version;
    j["config"] = config_to_json(report.config);
    j["classes"] = report.classes;
    j["aggregate"] = {
        {"window_accuracy",
         {{"mean", report.window_accuracy_mean}, {"std", report.window_accuracy_std}}},
        {"window_active_accuracy",
         {{"mean", report.window_active_accuracy_mean},
          {"std", report.window_active_accuracy_std}}},
        {"window_weighted_f1",
         {{"mean", report.window_weighted_f1_mean}, {"std", report.window_weighted_f1_std}}},
        {"window_active_weighted_f1",
         {{"mean", report.window_active_weighted_f1_mean},
          {"std", report.window_active_weighted_f1_std}}},
        {"session_accuracy",
         {{"mean", report.session_accuracy_mean}, {"std", report.session_accuracy_std}}},
        {"stage1_active_recall",
         {{"mean", report.stage1_active_recall_mean}, {"std", report.stage1_active_recall_std}}},
        {"stage1_home_recall",
         {{"mean", report.stage1_home_recall_mean}, {"std", report.stage1_home_recall_std}}}};
    j["window_confusion"] = confusion_to_json(report.window_confusion);
    j["session_confusion"] = confusion_to_json(report.session_confusion);
    if (!report.importance.cell.empty()) {
        j["importance"] = {{"n", report.importance.n},
                           {"cell", report.importance.cell},
                           {"top20", report.importance.top20},
                           {"bottom20", report.importance.bottom20}};
    }
    json folds = json::array();
    for (const auto& f : report.folds) {
        json fj;
        fj["fold_id"] = f.fold_id;
        fj["window"] = block_to_json(f.window);
        fj["window_active"] = block_to_json(f.window_active);
        fj["session"] = block_to_json(f.session);
        fj["stage1"] = block_to_json(f.stage1);
        fj["window_confusion"] = confusion_to_json(f.window_confusion);
        fj["session_confusion"] = confusion_to_json(f.session_confusion);
        fj["wind_k"] = f.wind_k;
        if (!f.importance_grid.empty()) fj["importance_grid"] = f.importance_grid;
        folds.push_back(std::move(fj));
    }
    j["folds"] = folds;
    return j.dump(2) + "\n";
}

void write_report(const ExperimentReport& report, const fs::path& path) {
    const std::string text = report_to_json(report);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
}

}  // namespace thermaltap::eval
