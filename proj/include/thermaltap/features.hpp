#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "thermaltap/frame_store.hpp"
#include "thermaltap/roi.hpp"

namespace thermaltap::features {

struct GridSpec {
    int n = 16;
    double min_cell_coverage = 0.5;
};

inline const std::vector<int> kDefaultLags = {5, 30};

struct CellStats {
    double min = missing();
    double max = missing();
    double mean = missing();
    double std = missing();
    bool present = false;
};

// Per-frame grid summary; valid=false means the whole frame is a missing
// observation (failed mask) and carries no data.
struct FrameFeatures {
    int64_t timestamp_ms = 0;
    int frame_index = -1;
    int n = 0;
    std::vector<CellStats> cells;    // n*n row-major
    std::vector<double> gradient;    // n*n, missing() where undefined
    bool valid = false;
};

// Ordered valid frames of one observation window.
struct ThermalSignature {
    std::vector<FrameFeatures> frames;
};

struct FeatureVector {
    std::vector<double> values;
};

// Window rows + metadata; the schema column order is feature_names(n, lags).
struct FeatureMatrix {
    std::vector<std::string> names;
    std::vector<std::vector<double>> rows;
    std::vector<std::string> labels;
    std::vector<std::string> session_ids;
    std::vector<std::string> device_models;
    std::vector<std::string> environments;
    std::vector<int> window_starts;
    int n = 0;
    std::vector<int> lags;
};

std::vector<CellStats> cell_stats(const Matrix& temps, const BitGrid& mask, const GridSpec& grid);

std::vector<double> spatial_gradient(const std::vector<double>& mean_grid, int n);

std::vector<double> temporal_delta(const std::vector<double>& cell_mean_series, int lag_s);

// Fixed, deterministic column schema: per cell 5 channels x {mean, slope},
// then per lag the window-mean deltas, then the three context means.
std::vector<std::string> feature_names(int n, const std::vector<int>& lags);

// Structured view of one schema column name.
struct ParsedName {
    enum class Kind { cell, delta, context };
    Kind kind = Kind::context;
    int i = -1, j = -1;  // grid cell, when applicable
    int lag = 0;         // delta columns only
    std::string stat;    // min | max | mean | std | grad (cell columns)
    std::string agg;     // mean | slope (cell columns)
};
ParsedName parse_feature_name(const std::string& name);

// Compute FrameFeatures for every frame of a session. Mask resolution per
// frame: ingested masks/mask_<ts>.csv when present, else the classical
// segmenter on the aligned ambient (frame 10th percentile when unaligned).
std::vector<FrameFeatures> frame_features(const frames::SessionRecording& rec,
                                          const GridSpec& grid,
                                          const roi::SegmenterConfig& seg = {},
                                          const roi::ValidationLimits& limits = {});

// Window reduction; nullopt when more than half the window's frames are
// missing (the window is dropped).
std::optional<FeatureVector> assemble_window_features(const frames::ObservationWindow& window,
                                                      const std::vector<FrameFeatures>& session_frames,
                                                      const std::vector<std::optional<frames::SensorSample>>& env,
                                                      const std::vector<int>& lags);

enum class WindowPhase { full, steady };

struct ExtractConfig {
    GridSpec grid;
    int window_s = 10;
    int stride_s = 10;
    std::vector<int> lags = kDefaultLags;
    roi::SegmenterConfig segmenter;
    roi::ValidationLimits limits;
    WindowPhase phase = WindowPhase::full;
};

// Session -> labeled window rows (appended to out).
void extract_session(const frames::SessionRecording& rec, const ExtractConfig& config,
                     FeatureMatrix& out);

FeatureMatrix extract_dataset(const std::filesystem::path& dataset_dir, const ExtractConfig& config,
                              const std::vector<std::string>& session_ids = {});

void write_feature_csv(const FeatureMatrix& m, const std::filesystem::path& path);
FeatureMatrix load_feature_csv(const std::filesystem::path& path);

}  // namespace thermaltap::features
