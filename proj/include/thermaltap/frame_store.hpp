#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "thermaltap/common.hpp"

namespace thermaltap::frames {

/// One timestamped matrix of absolute per-pixel temperatures in deg C.
struct RadiometricFrame {
    int64_t timestamp_ms = 0;
    Matrix temps;                 // height x width, finite values
    int frame_index = -1;         // ordinal within session, set on alignment
    bool plausibility_warning = false;  // any value outside [-40, 150] C

    int height() const { return temps.height(); }
    int width() const { return temps.width(); }
};

struct SensorSample {
    int64_t timestamp_ms = 0;
    double ambient_c = 0.0;
    double humidity_pct = 0.0;
    double air_velocity_mps = 0.0;
    double distance_cm = 0.0;
};

struct PhaseMarks {
    int64_t baseline_ms = 0;
    int64_t heat_up_ms = 0;
    int64_t steady_ms = 0;
    int64_t cool_down_ms = 0;
};

inline constexpr const char* kIdleLabel = "home";

struct SessionManifest {
    std::string session_id;
    std::string device_model;
    std::string app_label;
    std::string environment;      // "indoor" or "outdoor"
    PhaseMarks phase_marks;
    double sample_rate_hz = 1.0;
};

/// Frames joined to their nearest environmental sample. Immutable after
/// construction; safe to share read-only across workers.
struct SessionRecording {
    SessionManifest manifest;
    std::vector<RadiometricFrame> frames;
    std::vector<std::optional<SensorSample>> env;  // per frame, nullopt when in gaps
    std::vector<int> gaps;                          // frame indices without env join
    std::map<int64_t, std::filesystem::path> mask_files;  // timestamp -> ingested mask
};

struct ObservationWindow {
    std::string session_id;
    int start_index = 0;
    int length = 0;               // frames; seconds at 1 Hz
    std::string label;
};

// ---- Frame CSV (one row per pixel row, 6 fractional digits) ----

RadiometricFrame load_frame(const std::filesystem::path& path);
void write_frame_csv(const Matrix& temps, const std::filesystem::path& path);

/// Parses `frame_<epochms>.csv` / `mask_<epochms>.csv` names.
std::optional<int64_t> timestamp_from_filename(const std::string& filename);

// ---- Sensor log CSV ----

std::vector<SensorSample> load_sensor_log(const std::filesystem::path& path);
void write_sensor_log(const std::vector<SensorSample>& samples, const std::filesystem::path& path);

// ---- Manifest JSON ----

SessionManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const SessionManifest& m, const std::filesystem::path& path);

// ---- Session assembly ----

inline constexpr int64_t kDefaultAlignToleranceMs = 500;

/// Joins each frame to the nearest sensor sample by timestamp (ties toward
/// the earlier sample). Frames with no sample within tolerance are listed
/// in gaps. Pure function of its inputs.
SessionRecording align_session(std::vector<RadiometricFrame> frames,
                               const std::vector<SensorSample>& sensor_log,
                               SessionManifest manifest,
                               int64_t tolerance_ms = kDefaultAlignToleranceMs);

/// Loads `<dir>/manifest.json`, `frames/frame_*.csv`, `sensors.csv` and
/// records any `masks/mask_*.csv` paths for the ROI stage.
SessionRecording load_session(const std::filesystem::path& session_dir,
                              int64_t tolerance_ms = kDefaultAlignToleranceMs);

/// Session ids of every subdirectory holding a manifest.json, sorted.
std::vector<std::string> list_sessions(const std::filesystem::path& dataset_dir);

/// Fixed-duration contiguous windows. Trailing partial window dropped;
/// window longer than the session yields an empty list.
std::vector<ObservationWindow> window_session(const SessionRecording& rec,
                                              int window_s, int stride_s);

}  // namespace thermaltap::frames
