#include "thermaltap/frame_store.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace thermaltap::frames {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Parses one CSV line of doubles into out; returns count.
size_t parse_row(const char* begin, const char* end, std::vector<double>& out) {
    const size_t start = out.size();
    const char* p = begin;
    while (p < end) {
        double v = 0.0;
        auto [next, ec] = std::from_chars(p, end, v);
        if (ec != std::errc()) {
            // from_chars rejects "nan"/"inf" spellings in some libcs; treat
            // any unparsable token as a value error upstream.
            break;
        }
        out.push_back(v);
        p = next;
        if (p < end && *p == ',') ++p;
    }
    return out.size() - start;
}

// Fixed-point "%.6f" for plain temperature magnitudes; much faster than
// snprintf in the frame-writing hot path.
void append_fixed6(std::string& out, double v) {
    if (!std::isfinite(v)) throw ValueError("non-finite value in frame write");
    if (v < 0) {
        out.push_back('-');
        v = -v;
    }
    // round to 6 fractional digits
    const double scaled = v * 1e6 + 0.5;
    if (scaled >= 9.2e18) throw ValueError("value too large for frame write");
    uint64_t n = static_cast<uint64_t>(scaled);
    const uint64_t whole = n / 1000000;
    const uint64_t frac = n % 1000000;
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof(buf), whole);
    out.append(buf, r.ptr);
    out.push_back('.');
    char fbuf[6];
    uint64_t f = frac;
    for (int i = 5; i >= 0; --i) {
        fbuf[i] = static_cast<char>('0' + f % 10);
        f /= 10;
    }
    out.append(fbuf, 6);
}

}  // namespace

RadiometricFrame load_frame(const fs::path& path) {
    const std::string content = read_file(path);
    RadiometricFrame frame;
    if (auto ts = timestamp_from_filename(path.filename().string())) frame.timestamp_ms = *ts;

    std::vector<double> values;
    values.reserve(content.size() / 6);
    int width = -1;
    int row = 0;
    const char* p = content.data();
    const char* end = p + content.size();
    while (p < end) {
        const char* line_end = std::find(p, end, '\n');
        const char* effective_end = line_end;
        if (effective_end > p && effective_end[-1] == '\r') --effective_end;
        if (effective_end > p) {
            const size_t before = values.size();
            const size_t count = parse_row(p, effective_end, values);
            // detect unparsable tokens (NaN spellings, garbage): count of commas+1
            const size_t expected = static_cast<size_t>(std::count(p, effective_end, ',')) + 1;
            if (count != expected) {
                throw ValueError("non-numeric cell at row " + std::to_string(row) + ", col " +
                                 std::to_string(count) + " in " + path.string());
            }
            for (size_t i = before; i < values.size(); ++i) {
                if (!std::isfinite(values[i])) {
                    throw ValueError("non-finite cell at row " + std::to_string(row) + ", col " +
                                     std::to_string(i - before) + " in " + path.string());
                }
            }
            if (width < 0) {
                width = static_cast<int>(count);
            } else if (static_cast<int>(count) != width) {
                throw ParseError("ragged CSV: row " + std::to_string(row) + " has " +
                                 std::to_string(count) + " values, expected " +
                                 std::to_string(width) + " in " + path.string());
            }
            ++row;
        }
        p = line_end == end ? end : line_end + 1;
    }
    if (row == 0 || width <= 0) throw ParseError("empty frame CSV: " + path.string());
    if (row < 16 || width < 16) {
        throw ValueError("frame too small (" + std::to_string(row) + "x" + std::to_string(width) +
                         ", need >= 16x16): " + path.string());
    }

    frame.temps = Matrix(row, width);
    frame.temps.raw() = std::move(values);
    for (double v : frame.temps.raw()) {
        if (v < -40.0 || v > 150.0) {
            frame.plausibility_warning = true;
            break;
        }
    }
    return frame;
}

void write_frame_csv(const Matrix& temps, const fs::path& path) {
    std::string out;
    out.reserve(temps.size() * 11);
    for (int r = 0; r < temps.height(); ++r) {
        for (int c = 0; c < temps.width(); ++c) {
            if (c) out.push_back(',');
            append_fixed6(out, temps.at(r, c));
        }
        out.push_back('\n');
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

std::optional<int64_t> timestamp_from_filename(const std::string& filename) {
    const auto underscore = filename.rfind('_');
    const auto dot = filename.rfind('.');
    if (underscore == std::string::npos || dot == std::string::npos || dot <= underscore + 1) {
        return std::nullopt;
    }
    int64_t ts = 0;
    const char* first = filename.data() + underscore + 1;
    const char* last = filename.data() + dot;
    auto [p, ec] = std::from_chars(first, last, ts);
    if (ec != std::errc() || p != last) return std::nullopt;
    return ts;
}

std::vector<SensorSample> load_sensor_log(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open sensor log: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty sensor log: " + path.string());

    std::vector<SensorSample> samples;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> fields;
        parse_row(line.data(), line.data() + line.size(), fields);
        if (fields.size() != 5) {
            throw ParseError("sensor log line " + std::to_string(lineno) + ": expected 5 fields");
        }
        SensorSample s;
        s.timestamp_ms = static_cast<int64_t>(fields[0]);
        s.ambient_c = fields[1];
        s.humidity_pct = fields[2];
        s.air_velocity_mps = fields[3];
        s.distance_cm = fields[4];
        if (s.humidity_pct < 0.0 || s.humidity_pct > 100.0) {
            throw ValueError("humidity out of range at sensor log line " + std::to_string(lineno));
        }
        if (s.air_velocity_mps < 0.0) {
            throw ValueError("negative air velocity at sensor log line " + std::to_string(lineno));
        }
        if (s.distance_cm <= 0.0) {
            throw ValueError("non-positive distance at sensor log line " + std::to_string(lineno));
        }
        if (!samples.empty() && s.timestamp_ms <= samples.back().timestamp_ms) {
            throw OrderError("sensor timestamps not strictly increasing at line " +
                             std::to_string(lineno));
        }
        samples.push_back(s);
    }
    return samples;
}

void write_sensor_log(const std::vector<SensorSample>& samples, const fs::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    f << "timestamp_ms,ambient_c,humidity_pct,air_velocity_mps,distance_cm\n";
    char buf[160];
    for (const auto& s : samples) {
        const int n = std::snprintf(buf, sizeof(buf), "%lld,%.4f,%.4f,%.4f,%.4f\n",
                                    static_cast<long long>(s.timestamp_ms), s.ambient_c,
                                    s.humidity_pct, s.air_velocity_mps, s.distance_cm);
        f.write(buf, n);
    }
}

SessionManifest load_manifest(const fs::path& path) {
    json j;
    try {
        std::ifstream in(path);
        if (!in) throw ParseError("cannot open manifest: " + path.string());
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("manifest parse failure in " + path.string() + ": " + e.what());
    }
    SessionManifest m;
    try {
        m.session_id = j.at("session_id").get<std::string>();
        m.device_model = j.at("device_model").get<std::string>();
        m.app_label = j.at("app_label").get<std::string>();
        m.environment = j.at("environment").get<std::string>();
        const auto& marks = j.at("phase_marks_ms");
        m.phase_marks.baseline_ms = marks.at("baseline").get<int64_t>();
        m.phase_marks.heat_up_ms = marks.at("heat_up").get<int64_t>();
        m.phase_marks.steady_ms = marks.at("steady").get<int64_t>();
        m.phase_marks.cool_down_ms = marks.at("cool_down").get<int64_t>();
        m.sample_rate_hz = j.value("sample_rate_hz", 1.0);
    } catch (const json::exception& e) {
        throw ParseError("manifest field error in " + path.string() + ": " + e.what());
    }
    if (m.app_label.empty()) throw ValueError("empty app_label in " + path.string());
    if (m.environment != "indoor" && m.environment != "outdoor") {
        throw ValueError("environment must be indoor or outdoor in " + path.string());
    }
    const auto& pm = m.phase_marks;
    if (!(pm.baseline_ms < pm.heat_up_ms && pm.heat_up_ms < pm.steady_ms &&
          pm.steady_ms < pm.cool_down_ms)) {
        throw OrderError("phase marks not strictly increasing in " + path.string());
    }
    if (m.sample_rate_hz <= 0.0) throw ValueError("sample_rate_hz must be positive");
    return m;
}

void write_manifest(const SessionManifest& m, const fs::path& path) {
    json j;
    j["session_id"] = m.session_id;
    j["device_model"] = m.device_model;
    j["app_label"] = m.app_label;
    j["environment"] = m.environment;
    j["phase_marks_ms"] = {{"baseline", m.phase_marks.baseline_ms},
                           {"heat_up", m.phase_marks.heat_up_ms},
                           {"steady", m.phase_marks.steady_ms},
                           {"cool_down", m.phase_marks.cool_down_ms}};
    j["sample_rate_hz"] = m.sample_rate_hz;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    f << j.dump(2) << "\n";
}

SessionRecording align_session(std::vector<RadiometricFrame> frames,
                               const std::vector<SensorSample>& sensor_log,
                               SessionManifest manifest, int64_t tolerance_ms) {
    if (frames.empty()) throw EmptySessionError("no frames for session " + manifest.session_id);
    if (sensor_log.empty()) throw EmptySessionError("no sensor samples for session " + manifest.session_id);
    for (size_t i = 1; i < frames.size(); ++i) {
        if (frames[i].timestamp_ms <= frames[i - 1].timestamp_ms) {
            throw OrderError("frame timestamps not strictly increasing at index " +
                             std::to_string(i));
        }
    }

    SessionRecording rec;
    rec.manifest = std::move(manifest);
    rec.frames = std::move(frames);
    rec.env.resize(rec.frames.size());

    for (size_t i = 0; i < rec.frames.size(); ++i) {
        rec.frames[i].frame_index = static_cast<int>(i);
        const int64_t t = rec.frames[i].timestamp_ms;
        auto it = std::lower_bound(sensor_log.begin(), sensor_log.end(), t,
                                   [](const SensorSample& s, int64_t ts) { return s.timestamp_ms < ts; });
        // candidates: *it (first sample >= t) and the one before it; ties go earlier
        const SensorSample* best = nullptr;
        int64_t best_dist = tolerance_ms + 1;
        if (it != sensor_log.begin()) {
            const int64_t d = t - (it - 1)->timestamp_ms;
            if (d <= tolerance_ms) {
                best = &*(it - 1);
                best_dist = d;
            }
        }
        if (it != sensor_log.end()) {
            const int64_t d = it->timestamp_ms - t;
            if (d <= tolerance_ms && d < best_dist) {
                best = &*it;
            }
        }
        if (best) {
            rec.env[i] = *best;
        } else {
            rec.env[i] = std::nullopt;
            rec.gaps.push_back(static_cast<int>(i));
        }
    }
    return rec;
}

SessionRecording load_session(const fs::path& session_dir, int64_t tolerance_ms) {
    const auto manifest = load_manifest(session_dir / "manifest.json");
    const auto frames_dir = session_dir / "frames";
    if (!fs::exists(frames_dir)) throw EmptySessionError("missing frames/ in " + session_dir.string());

    std::vector<fs::path> frame_paths;
    for (const auto& entry : fs::directory_iterator(frames_dir)) {
        if (entry.path().extension() == ".csv") frame_paths.push_back(entry.path());
    }
    std::sort(frame_paths.begin(), frame_paths.end());

    std::vector<RadiometricFrame> frames;
    frames.reserve(frame_paths.size());
    for (const auto& p : frame_paths) frames.push_back(load_frame(p));
    std::sort(frames.begin(), frames.end(),
              [](const RadiometricFrame& a, const RadiometricFrame& b) {
                  return a.timestamp_ms < b.timestamp_ms;
              });

    const auto sensors = load_sensor_log(session_dir / "sensors.csv");
    auto rec = align_session(std::move(frames), sensors, manifest, tolerance_ms);

    const auto masks_dir = session_dir / "masks";
    if (fs::exists(masks_dir)) {
        for (const auto& entry : fs::directory_iterator(masks_dir)) {
            if (entry.path().extension() != ".csv") continue;
            if (auto ts = timestamp_from_filename(entry.path().filename().string())) {
                rec.mask_files[*ts] = entry.path();
            }
        }
    }
    return rec;
}

std::vector<std::string> list_sessions(const fs::path& dataset_dir) {
    if (!fs::exists(dataset_dir)) throw ParseError("dataset directory not found: " + dataset_dir.string());
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(dataset_dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) {
            ids.push_back(entry.path().filename().string());
        }
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<ObservationWindow> window_session(const SessionRecording& rec, int window_s,
                                              int stride_s) {
    if (window_s < 1 || stride_s < 1) throw ValueError("window and stride must be >= 1");
    std::vector<ObservationWindow> windows;
    const int n = static_cast<int>(rec.frames.size());
    for (int start = 0; start + window_s <= n; start += stride_s) {
        ObservationWindow w;
        w.session_id = rec.manifest.session_id;
        w.start_index = start;
        w.length = window_s;
        w.label = rec.manifest.app_label;
        windows.push_back(std::move(w));
    }
    return windows;
}

}  // namespace thermaltap::frames
