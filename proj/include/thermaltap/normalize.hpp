#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "thermaltap/features.hpp"

namespace thermaltap::normalize {

// (app_label, cell index i*n+j, lag) -> expected indoor delta.
struct DeltaBaselineTable {
    int n = 0;
    std::vector<int> lags;
    std::map<std::tuple<std::string, int, int>, double> expected;
};

struct HeadsetBaseline {
    std::string device_model;
    int n = 0;
    std::vector<double> cell_mean;  // n*n, missing() where no idle sample
    std::vector<int> sample_count;  // n*n
};

struct WindModel {
    double k = 0.0;
    bool low_spread_warning = false;
};

// Scalar formulas.
double ambient_correct(double cell_temp, double ambient_c);
double wind_correct(double delta, double air_velocity, double k);
double delta_residual(double observed_delta, const DeltaBaselineTable& table,
                      const std::string& app_label, int cell, int lag);

// Least-squares k from training windows: bins rows by air velocity and fits
// delta * (1 + k v) ~ const per (app, column) group; k clamped to [0, 2].
WindModel fit_wind_coefficient(const features::FeatureMatrix& m,
                               const std::vector<size_t>& row_indices);

DeltaBaselineTable fit_delta_table(const features::FeatureMatrix& m,
                                   const std::vector<size_t>& row_indices);

HeadsetBaseline fit_headset_baseline(const features::FeatureMatrix& m,
                                     const std::vector<size_t>& row_indices,
                                     const std::string& device_model);

// Column-group transforms over a feature matrix (rows edited in place).
// Returns the number of rows left uncorrected for lack of an aligned
// environmental value.
size_t apply_ambient(features::FeatureMatrix& m);
void apply_wind(features::FeatureMatrix& m, const WindModel& model);
// Training rows subtract their own label's profile; other rows (unknown app)
// subtract the across-app mean profile.
void apply_delta_residual(features::FeatureMatrix& m, const DeltaBaselineTable& table,
                          const std::vector<size_t>& labeled_rows);
// Returns the number of cell values passed through because the baseline cell
// itself was missing.
size_t apply_headset_baseline(features::FeatureMatrix& m,
                              const std::vector<HeadsetBaseline>& baselines);

// Appendix-style diagnostic: Sim_app / Sim_dev over group centroids.
struct SignatureRatio {
    double sim_app = 0.0;
    double sim_dev = 0.0;
    std::optional<double> r;  // nullopt when sim_dev == 0
};
SignatureRatio signature_ratio(const std::vector<std::vector<double>>& vectors,
                               const std::vector<std::string>& app_labels,
                               const std::vector<std::string>& device_models);

void save_delta_table(const DeltaBaselineTable& t, const std::filesystem::path& path);
DeltaBaselineTable load_delta_table(const std::filesystem::path& path);
void save_headset_baselines(const std::vector<HeadsetBaseline>& b, const std::filesystem::path& path);
std::vector<HeadsetBaseline> load_headset_baselines(const std::filesystem::path& path);

}  // namespace thermaltap::normalize
