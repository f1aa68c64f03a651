#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "thermaltap/classify.hpp"
#include "thermaltap/features.hpp"

namespace thermaltap::eval {

struct SessionMeta {
    std::string session_id;
    std::string device_model;
    std::string app_label;
    std::string environment;
};

struct Fold {
    std::string fold_id;
    std::vector<std::string> train;
    std::vector<std::string> test;
    std::vector<std::string> adaptation;  // few-shot additions to train
};

struct FoldPlan {
    std::string protocol;
    std::vector<Fold> folds;
};

FoldPlan plan_loso(const std::vector<SessionMeta>& sessions);
FoldPlan plan_lodo(const std::vector<SessionMeta>& sessions);
// Zero-shot when few_shot_count = 0; otherwise few_shot_count outdoor
// sessions per class move into the training side, chosen by session-id sort
// shuffled under seed.
FoldPlan plan_transfer(const std::vector<SessionMeta>& sessions, int few_shot_count,
                       uint64_t seed);
void check_fold_hygiene(const FoldPlan& plan);

struct ConfusionMatrix {
    std::vector<std::string> classes;
    std::vector<int64_t> counts;  // truth-major C x C

    int64_t at(int truth, int pred) const {
        return counts[static_cast<size_t>(truth) * classes.size() + pred];
    }
    int64_t total() const;
    int64_t trace() const;
};

struct ClassMetrics {
    std::string label;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    int64_t support = 0;
};

struct MetricsBlock {
    std::vector<ClassMetrics> per_class;
    double accuracy = 0.0;
    double weighted_f1 = 0.0;
    int64_t total = 0;
};

MetricsBlock classification_metrics(const std::vector<std::string>& truth,
                                    const std::vector<std::string>& pred,
                                    const std::vector<std::string>& classes);
ConfusionMatrix confusion_matrix(const std::vector<std::string>& truth,
                                 const std::vector<std::string>& pred,
                                 const std::vector<std::string>& classes);

struct SegMetrics {
    double dice = 0.0;
    double iou = 0.0;
    double hd95 = 0.0;
    double asd = 0.0;
};

SegMetrics seg_metrics(const BitGrid& pred_mask, const BitGrid& true_mask);

struct RunConfig {
    std::filesystem::path dataset;
    int grid_n = 16;
    double min_cell_coverage = 0.5;
    int window_s = 10;
    int stride_s = 0;  // 0 -> window_s
    std::vector<int> lags = features::kDefaultLags;
    features::WindowPhase phase = features::WindowPhase::steady;
    classify::TrainConfig train;
    bool norm_ambient = false;
    bool norm_wind = false;
    bool norm_delta_residual = false;
    bool norm_headset_baseline = false;
    std::string protocol = "loso";  // loso | lodo | pooled | transfer
    int few_shot_count = 0;
    uint64_t seed = 0;
    bool permute_labels = false;  // diagnostic: shuffle training labels
};

struct FoldResult {
    std::string fold_id;
    MetricsBlock window;            // final labels over all test windows
    MetricsBlock window_active;     // restricted to truth-active windows
    MetricsBlock session;
    MetricsBlock stage1;            // binary active/home, window level
    ConfusionMatrix window_confusion;
    ConfusionMatrix session_confusion;
    double wind_k = 0.0;
    std::vector<double> importance_grid;  // n*n, empty for margin backend
};

struct ExperimentReport {
    std::string toolkit_version;
    RunConfig config;
    std::vector<std::string> classes;
    std::vector<FoldResult> folds;
    // Aggregates across folds (mean / std of the fold-level scalars).
    double window_accuracy_mean = 0.0, window_accuracy_std = 0.0;
    double window_active_accuracy_mean = 0.0, window_active_accuracy_std = 0.0;
    double window_weighted_f1_mean = 0.0, window_weighted_f1_std = 0.0;
    double window_active_weighted_f1_mean = 0.0, window_active_weighted_f1_std = 0.0;
    double session_accuracy_mean = 0.0, session_accuracy_std = 0.0;
    double stage1_active_recall_mean = 0.0, stage1_active_recall_std = 0.0;
    double stage1_home_recall_mean = 0.0, stage1_home_recall_std = 0.0;
    ConfusionMatrix window_confusion;   // summed over folds
    ConfusionMatrix session_confusion;  // summed over folds
    classify::GridImportance importance;  // mean over folds (forest only)
};

FoldPlan plan_for(const RunConfig& config, const std::vector<SessionMeta>& sessions);

ExperimentReport run_experiment(const RunConfig& config);
// Variant reusing an already extracted matrix (sweeps, tests).
ExperimentReport run_experiment(const RunConfig& config, const features::FeatureMatrix& matrix,
                                const std::vector<SessionMeta>& sessions);

std::vector<SessionMeta> dataset_sessions(const std::filesystem::path& dataset_dir);

std::string report_to_json(const ExperimentReport& report);
void write_report(const ExperimentReport& report, const std::filesystem::path& path);

}  // namespace thermaltap::eval
