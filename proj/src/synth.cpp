#include "thermaltap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "thermaltap/rng.hpp"
#include "thermaltap/roi.hpp"

namespace thermaltap::synth {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// AR(1) with unit stationary variance at scale 1.
struct Ar1 {
    double phi = 0.9;
    double state = 0.0;
    double step(Rng& rng) {
        state = phi * state + std::sqrt(1.0 - phi * phi) * rng.normal();
        return state;
    }
};

// Static per-device emissivity/resting pattern: a few low-frequency cosines.
Matrix offset_field(const DeviceProfile& device) {
    Matrix field(device.frame_height, device.frame_width, 0.0);
    if (device.offset_amplitude == 0.0) return field;
    Rng rng(derive_seed(0x6f66667365744cULL, fnv1a(device.model)));
    for (int k = 0; k < 3; ++k) {
        const double fr = rng.uniform(0.5, 2.0) / device.frame_height;
        const double fc = rng.uniform(0.5, 2.0) / device.frame_width;
        const double phase = rng.uniform(0.0, 6.283185307179586);
        const double amp = device.offset_amplitude * rng.uniform(0.2, 0.45);
        for (int r = 0; r < device.frame_height; ++r) {
            for (int c = 0; c < device.frame_width; ++c) {
                field.at(r, c) += amp * std::cos(6.283185307179586 * (fr * r + fc * c) + phase);
            }
        }
    }
    return field;
}

double phase_modulation(const SourceSchedule& s, int t, const PhaseLayout& ph) {
    if (t < ph.heat_up_s) return s.baseline;
    if (t < ph.steady_s) {
        const double frac = static_cast<double>(t - ph.heat_up_s) / (ph.steady_s - ph.heat_up_s);
        return s.baseline + frac * (s.heat_up - s.baseline);
    }
    if (t < ph.cool_down_s) {
        double m = s.steady;
        if (s.pulse_amp > 0.0 && s.pulse_period_s > 0.0) {
            const double cycle = std::fmod(static_cast<double>(t - ph.steady_s), s.pulse_period_s);
            m *= cycle < 0.5 * s.pulse_period_s ? 1.0 + s.pulse_amp : 1.0 - s.pulse_amp;
        }
        return m;
    }
    return s.cool_down;
}

}  // namespace

BitGrid chassis_mask(const DeviceProfile& device) {
    BitGrid mask(device.frame_height, device.frame_width, 0);
    const int r0 = (device.frame_height - device.chassis_height) / 2;
    const int c0 = (device.frame_width - device.chassis_width) / 2;
    for (int r = 0; r < device.chassis_height; ++r) {
        for (int c = 0; c < device.chassis_width; ++c) {
            const int rr = device.chassis_height - 1 - r;
            const int cc = device.chassis_width - 1 - c;
            if (r + c < device.corner_cut || r + cc < device.corner_cut ||
                rr + c < device.corner_cut || rr + cc < device.corner_cut) {
                continue;
            }
            mask.at(r0 + r, c0 + c) = 1;
        }
    }
    return mask;
}

SimResult simulate_session(const DeviceProfile& device, const AppWorkloadProfile& app,
                           const SimConfig& config, const std::string& session_id,
                           const PhaseLayout& phases) {
    const int H = device.frame_height, W = device.frame_width;
    if (device.chassis_height > H || device.chassis_width > W) {
        throw ConfigError("chassis larger than the frame");
    }
    if (app.schedule.size() != device.sources.size()) {
        throw ConfigError("app schedule count does not match the device source count");
    }
    for (size_t i = 0; i < device.sources.size(); ++i) {
        if (!device.sources[i].idle && app.schedule[i].baseline != 0.0) {
            throw ConfigError("non-idle source cannot run during the baseline phase");
        }
    }

    int substeps = std::max(1, static_cast<int>(std::ceil(device.alpha / 0.2)));
    if (config.substeps_override > 0) {
        substeps = config.substeps_override;
        if (device.alpha / substeps > 0.2 + 1e-12) {
            throw ConfigError("substeps_override violates the diffusion stability bound");
        }
    }
    const double dt = 1.0 / substeps;

    const BitGrid mask = chassis_mask(device);
    const Matrix offsets = offset_field(device);

    Rng rng(derive_seed(config.seed, 0x73696dULL));
    Rng noise_rng(derive_seed(config.seed, 0x6e6f697365ULL));
    Rng sensor_rng(derive_seed(config.seed, 0x73656e73ULL));

    // Solar patch: center drifts linearly along the chassis during the session.
    double solar_r = 0.0, solar_c = 0.0, solar_dr = 0.0, solar_dc = 0.0;
    if (config.env.solar_patch) {
        solar_r = rng.uniform(0.25, 0.75) * H;
        solar_c = rng.uniform(0.2, 0.8) * W;
        solar_dr = rng.uniform(-6.0, 6.0) / config.duration_s;
        solar_dc = rng.uniform(-12.0, 12.0) / config.duration_s;
    }

    std::vector<Ar1> jitters(device.sources.size());
    Ar1 gust;
    bool fan_on = false;

    Matrix T(H, W, config.env.ambient_c);
    Matrix S(H, W, 0.0);
    Matrix next(H, W, 0.0);

    SimResult out;
    out.mask = mask;
    out.manifest.session_id = session_id;
    out.manifest.device_model = device.model;
    out.manifest.app_label = app.app_label;
    out.manifest.environment = config.env.environment;
    out.manifest.sample_rate_hz = 1.0;
    out.manifest.phase_marks.baseline_ms = config.start_epoch_ms + phases.baseline_s * 1000LL;
    out.manifest.phase_marks.heat_up_ms = config.start_epoch_ms + phases.heat_up_s * 1000LL;
    out.manifest.phase_marks.steady_ms = config.start_epoch_ms + phases.steady_s * 1000LL;
    out.manifest.phase_marks.cool_down_ms = config.start_epoch_ms + phases.cool_down_s * 1000LL;

    for (int t = 0; t < config.duration_s; ++t) {
        const double phase01 = static_cast<double>(t) / std::max(1, config.duration_s - 1);
        const double ambient =
            config.env.ambient_c + config.env.ambient_drift_c * std::sin(3.141592653589793 * phase01);
        const double wind = std::max(
            0.0, config.env.wind_mean +
                     (config.env.wind_gust > 0.0 ? config.env.wind_gust * gust.step(rng) : 0.0));

        // Rebuild the source field once per emitted frame.
        std::fill(S.raw().begin(), S.raw().end(), 0.0);
        for (size_t si = 0; si < device.sources.size(); ++si) {
            const auto& src = device.sources[si];
            double m = phase_modulation(app.schedule[si], t, phases);
            if (app.jitter > 0.0 && m > 0.0) m *= 1.0 + app.jitter * jitters[si].step(rng);
            m = std::max(0.0, m);
            if (m == 0.0) continue;
            const double power = src.peak * m;
            for (int r = std::max(0, src.row0); r <= std::min(H - 1, src.row1); ++r) {
                for (int c = std::max(0, src.col0); c <= std::min(W - 1, src.col1); ++c) {
                    if (mask.at(r, c)) S.at(r, c) += power;
                }
            }
        }
        if (config.env.solar_patch && config.env.solar_peak > 0.0) {
            const double cr = solar_r + solar_dr * t;
            const double cc = solar_c + solar_dc * t;
            const double inv2s2 = 1.0 / (2.0 * 6.0 * 6.0);
            for (int r = 0; r < H; ++r) {
                for (int c = 0; c < W; ++c) {
                    if (!mask.at(r, c)) continue;
                    const double d2 = (r - cr) * (r - cr) + (c - cc) * (c - cc);
                    S.at(r, c) += config.env.solar_peak * std::exp(-d2 * inv2s2);
                }
            }
        }

        // Fan hysteresis on the pre-step chassis maximum.
        double t_max = -1e300;
        for (size_t i = 0; i < T.size(); ++i) {
            if (mask.raw()[i] && T.raw()[i] > t_max) t_max = T.raw()[i];
        }
        if (device.fan.duty > 0.0) {
            if (!fan_on && t_max >= device.fan.trigger_c) fan_on = true;
            if (fan_on && t_max < device.fan.trigger_c - device.fan.hysteresis_c) fan_on = false;
        }
        double fan_loss = 0.0;
        if (fan_on) {
            const double cycle = std::fmod(static_cast<double>(t), device.fan.period_s);
            fan_loss = device.fan.duty * (cycle < 0.5 * device.fan.period_s ? 1.0 : 0.6);
        }
        const double loss = device.h + device.c_v * wind + fan_loss;

        for (int step = 0; step < substeps; ++step) {
            for (int r = 0; r < H; ++r) {
                for (int c = 0; c < W; ++c) {
                    if (!mask.at(r, c)) {
                        next.at(r, c) = ambient;
                        continue;
                    }
                    const double tc = T.at(r, c);
                    double lap = 0.0;
                    if (r > 0 && mask.at(r - 1, c)) lap += T.at(r - 1, c) - tc;
                    if (r + 1 < H && mask.at(r + 1, c)) lap += T.at(r + 1, c) - tc;
                    if (c > 0 && mask.at(r, c - 1)) lap += T.at(r, c - 1) - tc;
                    if (c + 1 < W && mask.at(r, c + 1)) lap += T.at(r, c + 1) - tc;
                    next.at(r, c) =
                        tc + dt * (device.alpha * lap + S.at(r, c) - loss * (tc - ambient));
                }
            }
            std::swap(T, next);
        }

        const int64_t ts = config.start_epoch_ms + 1000LL * t;
        Matrix frame = T;
        for (size_t i = 0; i < frame.size(); ++i) {
            if (mask.raw()[i]) frame.raw()[i] += offsets.raw()[i];
            if (config.noise_std > 0.0) frame.raw()[i] += config.noise_std * noise_rng.normal();
        }
        out.timestamps_ms.push_back(ts);
        out.frames.push_back(std::move(frame));

        frames::SensorSample sample;
        sample.timestamp_ms = ts + static_cast<int64_t>(sensor_rng.below(301)) - 150;
        sample.ambient_c = ambient + 0.01 * sensor_rng.normal();
        sample.humidity_pct =
            std::clamp(config.env.humidity_pct + 0.1 * sensor_rng.normal(), 0.0, 100.0);
        sample.air_velocity_mps = std::max(0.0, wind + 0.01 * sensor_rng.normal());
        sample.distance_cm = std::max(1.0, config.env.distance_cm + 0.1 * sensor_rng.normal());
        out.sensors.push_back(sample);
    }
    return out;
}

void write_session(const SimResult& result, const fs::path& session_dir, bool emit_masks) {
    fs::create_directories(session_dir / "frames");
    if (emit_masks) fs::create_directories(session_dir / "masks");
    frames::write_manifest(result.manifest, session_dir / "manifest.json");
    frames::write_sensor_log(result.sensors, session_dir / "sensors.csv");
    char name[64];
    for (size_t i = 0; i < result.frames.size(); ++i) {
        const int64_t ts = result.timestamps_ms[i];
        std::snprintf(name, sizeof name, "frame_%lld.csv", static_cast<long long>(ts));
        frames::write_frame_csv(result.frames[i], session_dir / "frames" / name);
        if (emit_masks) {
            std::snprintf(name, sizeof name, "mask_%lld.csv", static_cast<long long>(ts));
            roi::write_mask_csv(result.mask, session_dir / "masks" / name);
        }
    }
}

DeviceProfile device_profile(const std::string& model) {
    DeviceProfile d;
    d.model = model;
    if (model == "quest3") {
        // defaults; SoC as a two-die package left of center, battery right,
        // display strip on top
        d.sources = {{24, 39, 39, 42, 0.90, true},
                     {24, 45, 39, 48, 0.90, true},
                     {26, 64, 41, 83, 0.55, false},
                     {12, 24, 17, 87, 0.30, true}};
        d.fan = {49.0, 0.04, 20.0, 2.0};
        d.offset_amplitude = 0.6;
    } else if (model == "quest2") {
        d.frame_height = 60;
        d.frame_width = 104;
        d.chassis_height = 44;
        d.chassis_width = 88;
        d.corner_cut = 8;
        d.alpha = 0.10;
        d.h = 0.018;
        d.c_v = 0.0055;
        // mirrored internals: battery left, SoC dies right
        d.sources = {{22, 58, 37, 66, 0.95, true},
                     {22, 69, 37, 77, 0.95, true},
                     {24, 24, 39, 43, 0.50, false},
                     {42, 22, 47, 81, 0.28, true}};
        d.fan = {54.0, 0.03, 24.0, 2.0};
        d.offset_amplitude = 0.8;
    } else if (model == "vive_focus") {
        d.frame_height = 68;
        d.frame_width = 120;
        d.chassis_height = 52;
        d.chassis_width = 100;
        d.corner_cut = 12;
        d.alpha = 0.14;
        d.h = 0.022;
        d.c_v = 0.0065;
        d.sources = {{26, 44, 43, 56, 0.85, true},
                     {26, 59, 43, 71, 0.85, true},
                     {44, 20, 55, 99, 0.48, false},
                     {14, 28, 19, 91, 0.32, true}};
        d.fan = {48.0, 0.05, 15.0, 2.0};
        d.offset_amplitude = 0.7;
    } else {
        throw ConfigError("unknown device model: " + model);
    }
    return d;
}

std::vector<std::string> default_app_labels() {
    return {frames::kIdleLabel, "puzzle_lite", "board_hall",  "media_wall",
            "fit_trainer",      "race_arena",  "battle_rush"};
}

AppWorkloadProfile app_profile(const std::string& label, const DeviceProfile& device) {
    if (device.sources.size() != 4) {
        throw ConfigError("built-in app profiles expect four device sources");
    }
    // Schedules address the device roles in order: SoC die A, SoC die B,
    // battery, display. `split` is die A's share of the SoC load; race_arena
    // and battle_rush are deliberate mirror workloads (same totals and pulse,
    // opposite die) so only their heat placement tells them apart.
    // Baseline/cool-down sit at home-screen levels for every app.
    struct Levels {
        double soc, battery, display, split, pulse_amp, pulse_period, jitter;
    };
    Levels lv;
    if (label == frames::kIdleLabel) {
        lv = {0.05, 0.03, 0.12, 0.5, 0.0, 0.0, 0.01};
    } else if (label == "puzzle_lite") {
        lv = {0.30, 0.10, 0.35, 0.5, 0.15, 24.0, 0.03};
    } else if (label == "board_hall") {
        lv = {0.15, 0.28, 0.30, 0.5, 0.10, 16.0, 0.03};
    } else if (label == "media_wall") {
        lv = {0.40, 0.25, 0.55, 0.5, 0.05, 30.0, 0.02};
    } else if (label == "fit_trainer") {
        lv = {0.55, 0.40, 0.45, 0.5, 0.25, 12.0, 0.06};
    } else if (label == "race_arena") {
        lv = {0.82, 0.62, 0.49, 0.75, 0.25, 14.0, 0.06};
    } else if (label == "battle_rush") {
        lv = {0.82, 0.62, 0.49, 0.25, 0.25, 14.0, 0.06};
    } else {
        throw ConfigError("unknown app label: " + label);
    }

    const double idle_levels[4] = {0.025, 0.025, 0.0, 0.12};
    const double steady[4] = {lv.soc * lv.split, lv.soc * (1.0 - lv.split), lv.battery,
                              lv.display};
    AppWorkloadProfile app;
    app.app_label = label;
    app.jitter = lv.jitter;
    for (int i = 0; i < 4; ++i) {
        SourceSchedule s;
        s.baseline = idle_levels[i];
        s.heat_up = steady[i];
        s.steady = steady[i];
        s.cool_down = idle_levels[i];
        s.pulse_amp = lv.pulse_amp;
        s.pulse_period_s = lv.pulse_period;
        app.schedule.push_back(s);
    }
    return app;
}

SuiteSpec load_suite_spec(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open " + path.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    SuiteSpec spec;
    spec.name = j.value("name", spec.name);
    if (j.contains("devices")) spec.devices = j.at("devices").get<std::vector<std::string>>();
    if (j.contains("apps")) spec.apps = j.at("apps").get<std::vector<std::string>>();
    spec.indoor_sessions_per_app = j.value("indoor_sessions_per_app", spec.indoor_sessions_per_app);
    spec.outdoor_sessions_per_app =
        j.value("outdoor_sessions_per_app", spec.outdoor_sessions_per_app);
    spec.duration_s = j.value("duration_s", spec.duration_s);
    spec.noise_std = j.value("noise_std", spec.noise_std);
    spec.emit_masks = j.value("emit_masks", spec.emit_masks);
    if (spec.devices.empty()) throw ConfigError("suite needs at least one device");
    if (spec.indoor_sessions_per_app < 0 || spec.outdoor_sessions_per_app < 0 ||
        spec.indoor_sessions_per_app + spec.outdoor_sessions_per_app == 0) {
        throw ConfigError("suite needs a positive session count");
    }
    if (spec.duration_s <= 0) throw ConfigError("suite duration must be positive");
    return spec;
}

void save_suite_spec(const SuiteSpec& spec, const fs::path& path) {
    json j;
    j["name"] = spec.name;
    j["devices"] = spec.devices;
    j["apps"] = spec.apps;
    j["indoor_sessions_per_app"] = spec.indoor_sessions_per_app;
    j["outdoor_sessions_per_app"] = spec.outdoor_sessions_per_app;
    j["duration_s"] = spec.duration_s;
    j["noise_std"] = spec.noise_std;
    j["emit_masks"] = spec.emit_masks;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    f << j.dump(2) << "\n";
}

void generate_dataset(const SuiteSpec& spec, uint64_t seed, const fs::path& out_dir) {
    const auto apps = spec.apps.empty() ? default_app_labels() : spec.apps;
    fs::create_directories(out_dir);
    save_suite_spec(spec, out_dir / "suite.json");

    int64_t ordinal = 0;
    char suffix[32];
    for (const auto& model : spec.devices) {
        const DeviceProfile device = device_profile(model);
        for (const auto& label : apps) {
            const AppWorkloadProfile app = app_profile(label, device);
            const int total = spec.indoor_sessions_per_app + spec.outdoor_sessions_per_app;
            for (int s = 0; s < total; ++s) {
                const bool outdoor = s >= spec.indoor_sessions_per_app;
                Rng rng(derive_seed(seed, fnv1a(model), fnv1a(label), outdoor ? 1u : 0u,
                                    static_cast<uint64_t>(s)));
                SimConfig config;
                config.duration_s = spec.duration_s;
                config.noise_std = spec.noise_std;
                config.start_epoch_ms = 1700000000000LL + ordinal * 3600000LL;
                config.seed = rng.next_u64();
                config.env.environment = outdoor ? "outdoor" : "indoor";
                if (outdoor) {
                    config.env.ambient_c = rng.uniform(14.0, 30.0);
                    config.env.ambient_drift_c = rng.uniform(0.8, 2.5);
                    config.env.wind_mean = rng.uniform(0.3, 2.3);
                    config.env.wind_gust = 0.15;
                    config.env.solar_patch = rng.uniform01() < 0.5;
                    config.env.solar_peak = config.env.solar_patch ? rng.uniform(0.03, 0.10) : 0.0;
                    config.env.humidity_pct = rng.uniform(25.0, 75.0);
                } else {
                    config.env.ambient_c = rng.uniform(20.0, 25.0);
                    config.env.humidity_pct = rng.uniform(35.0, 55.0);
                }
                config.env.distance_cm = rng.uniform(50.0, 70.0);

                std::snprintf(suffix, sizeof suffix, "_s%02d", s);
                const std::string session_id =
                    model + "_" + label + "_" + config.env.environment + suffix;
                const SimResult result = simulate_session(device, app, config, session_id);
                write_session(result, out_dir / session_id, spec.emit_masks);
                ++ordinal;
            }
        }
    }
}

}  // namespace thermaltap::synth
