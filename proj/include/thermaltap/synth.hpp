#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "thermaltap/frame_store.hpp"

namespace thermaltap::synth {

struct SourceRegion {
    int row0 = 0, col0 = 0, row1 = 0, col1 = 0;  // inclusive, frame coordinates
    double peak = 0.0;                           // °C/s at modulation 1.0
    bool idle = false;                           // may run during the baseline phase
};

struct FanCurve {
    double trigger_c = 45.0;   // engage above this max chassis temperature
    double duty = 0.0;         // extra loss coefficient while on (1/s)
    double period_s = 20.0;    // square-pulse cycle
    double hysteresis_c = 2.0;
};

struct DeviceProfile {
    std::string model;
    int frame_height = 64, frame_width = 112;
    int chassis_height = 48, chassis_width = 96;
    int corner_cut = 10;        // diagonal corner trim, keeps the shape headset-like
    double alpha = 0.12;        // thermal diffusivity (unit grid)
    double h = 0.02;            // ambient coupling (1/s)
    double c_v = 0.006;         // convective coupling per (m/s)
    FanCurve fan;
    double offset_amplitude = 0.0;  // static resting-pattern scale (°C)
    std::vector<SourceRegion> sources;
};

struct SourceSchedule {
    double baseline = 0.0;  // modulation level per phase
    double heat_up = 0.0;
    double steady = 0.0;
    double cool_down = 0.0;
    double pulse_amp = 0.0;      // steady-phase square-pulse depth (relative)
    double pulse_period_s = 0.0;
};

struct AppWorkloadProfile {
    std::string app_label;
    std::vector<SourceSchedule> schedule;  // one per device source
    double jitter = 0.0;                   // relative AR(1) modulation noise
};

struct EnvModel {
    std::string environment = "indoor";  // indoor | outdoor
    double ambient_c = 22.0;
    double ambient_drift_c = 0.0;  // slow half-period drift amplitude
    double wind_mean = 0.0;
    double wind_gust = 0.0;        // AR(1) gust amplitude
    bool solar_patch = false;      // slowly moving side patch source
    double solar_peak = 0.0;       // °C/s
    double humidity_pct = 45.0;
    double distance_cm = 60.0;
};

struct SimConfig {
    int duration_s = 600;
    double noise_std = 0.04;  // output sensor noise (°C)
    EnvModel env;
    int64_t start_epoch_ms = 0;
    int substeps_override = 0;  // 0 = auto from the CFL bound
    uint64_t seed = 0;
};

// Phase starts relative to session start, in seconds.
struct PhaseLayout {
    int baseline_s = 0;
    int heat_up_s = 120;
    int steady_s = 300;
    int cool_down_s = 540;
};

BitGrid chassis_mask(const DeviceProfile& device);

struct SimResult {
    frames::SessionManifest manifest;
    std::vector<int64_t> timestamps_ms;
    std::vector<Matrix> frames;
    std::vector<frames::SensorSample> sensors;
    BitGrid mask;
};

SimResult simulate_session(const DeviceProfile& device, const AppWorkloadProfile& app,
                           const SimConfig& config, const std::string& session_id,
                           const PhaseLayout& phases = {});

void write_session(const SimResult& result, const std::filesystem::path& session_dir,
                   bool emit_masks = true);

// Built-in profiles. Devices: quest3, quest2, vive_focus. Apps: the 7-label
// default roster (home + two low, one low-medium, one medium, two high).
DeviceProfile device_profile(const std::string& model);
AppWorkloadProfile app_profile(const std::string& label, const DeviceProfile& device);
std::vector<std::string> default_app_labels();

struct SuiteSpec {
    std::string name = "default";
    std::vector<std::string> devices = {"quest3"};
    std::vector<std::string> apps;  // empty -> built-in roster
    int indoor_sessions_per_app = 8;
    int outdoor_sessions_per_app = 0;
    int duration_s = 600;
    double noise_std = 0.04;
    bool emit_masks = true;
};

SuiteSpec load_suite_spec(const std::filesystem::path& path);
void save_suite_spec(const SuiteSpec& spec, const std::filesystem::path& path);

void generate_dataset(const SuiteSpec& spec, uint64_t seed,
                      const std::filesystem::path& out_dir);

}  // namespace thermaltap::synth
