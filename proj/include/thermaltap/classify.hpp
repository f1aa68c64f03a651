#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "thermaltap/features.hpp"

namespace thermaltap::classify {

inline const char* kModelVersion = "thermaltap-model-1";
inline constexpr double kVarianceThreshold = 0.0016;  // (40 mK)^2
inline constexpr int kDefaultTopK = 512;

// Fitted on the training split only; apply() is pure.
struct PreprocessState {
    int input_width = 0;
    std::vector<double> medians;   // impute values, one per input column
    std::vector<uint8_t> keep;     // raw-variance filter survivors
    std::vector<double> mean;      // standardization stats (input index space)
    std::vector<double> std;
    std::vector<int> selected;     // final columns, ascending input index
};

PreprocessState fit_preprocess(const std::vector<std::vector<double>>& X,
                               const std::vector<std::string>& labels,
                               int top_k = kDefaultTopK);
std::vector<double> apply_preprocess(const PreprocessState& s, const std::vector<double>& row);
std::vector<std::vector<double>> apply_preprocess(const PreprocessState& s,
                                                  const std::vector<std::vector<double>>& X);

// One-way ANOVA F for a single column; +inf sentinel when within-group
// variance is zero but between-group is not.
double anova_f(const std::vector<double>& column, const std::vector<int>& group_ids,
               int group_count);

struct ForestParams {
    int trees = 300;
    int max_depth = 24;
    int min_leaf = 2;
    int features_per_split = 0;  // 0 -> ceil(sqrt(d))
    int max_bins = 256;          // split-finding quantization (exact when distinct <= bins)
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int leaf_offset = -1;  // into Tree::leaf_dist
};

struct Tree {
    std::vector<TreeNode> nodes;
    std::vector<double> leaf_dist;  // leaves x classes, row-major
};

struct ForestModel {
    std::vector<std::string> classes;
    ForestParams params;
    uint64_t seed = 0;
    int num_features = 0;
    std::vector<Tree> trees;
    std::vector<double> split_gain;  // impurity decrease per feature, accumulated at fit
};

ForestModel train_forest(const std::vector<std::vector<double>>& X,
                         const std::vector<std::string>& y, const ForestParams& params,
                         uint64_t seed);
std::vector<double> forest_scores(const ForestModel& m, const std::vector<double>& row);

struct MarginParams {
    double lambda = 1e-4;
    int epochs = 40;
};

struct MarginModel {
    std::vector<std::string> classes;
    MarginParams params;
    uint64_t seed = 0;
    int num_features = 0;
    std::vector<std::vector<double>> weights;  // classes x features
    std::vector<double> biases;
};

MarginModel train_margin(const std::vector<std::vector<double>>& X,
                         const std::vector<std::string>& y, const MarginParams& params,
                         uint64_t seed);
std::vector<double> margin_scores(const MarginModel& m, const std::vector<double>& row);

enum class Backend { forest, margin };
Backend backend_from_string(const std::string& name);
std::string to_string(Backend b);

// Either backend behind one score interface.
struct ClassifierModel {
    Backend backend = Backend::forest;
    std::optional<ForestModel> forest;
    std::optional<MarginModel> margin;

    const std::vector<std::string>& classes() const;
    std::vector<double> scores(const std::vector<double>& row) const;
    std::string predict(const std::vector<double>& row) const;
};

struct TwoStageModel {
    std::string version = kModelVersion;
    PreprocessState preprocess;
    ClassifierModel stage1;  // classes {active, home}
    ClassifierModel stage2;  // active app labels only
};

struct TrainConfig {
    Backend backend = Backend::forest;
    int top_k = kDefaultTopK;
    ForestParams forest;
    MarginParams margin;
};

TwoStageModel train_two_stage(const features::FeatureMatrix& m,
                              const std::vector<size_t>& train_rows, const TrainConfig& config,
                              uint64_t seed);

struct PredictionRecord {
    std::string session_id;
    int window_start = 0;
    bool stage1_active = false;
    std::string stage2_label;           // empty when session verdict is idle
    std::vector<double> stage2_scores;  // aligned to stage2 classes
};

struct SessionInference {
    std::string session_id;
    std::string label;  // final verdict after voting
    std::vector<PredictionRecord> windows;
};

// Windows of one session -> stage-1 majority, then stage-2 plurality with
// mean-score then lexicographic tie-breaks.
SessionInference two_stage_infer(const features::FeatureMatrix& m,
                                 const std::vector<size_t>& session_rows,
                                 const TwoStageModel& model);

// Mean decrease in Gini impurity, normalized to sum 1 over model inputs.
std::vector<double> feature_importance(const ForestModel& m);

struct GridImportance {
    int n = 0;
    std::vector<double> cell;      // n*n summed importance
    std::vector<uint8_t> top20;    // cells in the top 20% by importance
    std::vector<uint8_t> bottom20;
};

// Sums each selected feature's importance into its (i, j) cell; context
// features carry no cell and are skipped.
GridImportance map_to_grid(const std::vector<double>& importances,
                           const std::vector<std::string>& selected_names, int n);

void save_model(const TwoStageModel& m, const std::filesystem::path& path);
TwoStageModel load_model(const std::filesystem::path& path);

}  // namespace thermaltap::classify
