#include "thermaltap/features.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace thermaltap::features {

namespace fs = std::filesystem;

std::vector<CellStats> cell_stats(const Matrix& temps, const BitGrid& mask, const GridSpec& grid) {
    const int n = grid.n;
    std::vector<CellStats> cells(static_cast<size_t>(n) * n);
    if (temps.height() != mask.height() || temps.width() != mask.width()) {
        throw ShapeError("mask dimensions do not match frame");
    }

    int r0 = mask.height(), c0 = mask.width(), r1 = -1, c1 = -1;
    for (int r = 0; r < mask.height(); ++r) {
        for (int c = 0; c < mask.width(); ++c) {
            if (!mask.at(r, c)) continue;
            r0 = std::min(r0, r);
            c0 = std::min(c0, c);
            r1 = std::max(r1, r);
            c1 = std::max(c1, c);
        }
    }
    if (r1 < 0) return cells;  // empty mask: everything absent

    const int bh = r1 - r0 + 1, bw = c1 - c0 + 1;
    const int ch = bh / n, cw = bw / n;  // remainder rows/cols go to the last cell
    for (int i = 0; i < n; ++i) {
        const int rs = r0 + i * ch;
        const int re = i == n - 1 ? r1 + 1 : rs + ch;
        for (int j = 0; j < n; ++j) {
            const int cs = c0 + j * cw;
            const int ce = j == n - 1 ? c1 + 1 : cs + cw;
            CellStats& cell = cells[static_cast<size_t>(i) * n + j];
            const long area = static_cast<long>(re - rs) * (ce - cs);
            if (area <= 0) continue;

            long count = 0;
            double lo = 0.0, hi = 0.0, sum = 0.0;
            for (int r = rs; r < re; ++r) {
                for (int c = cs; c < ce; ++c) {
                    if (!mask.at(r, c)) continue;
                    const double v = temps.at(r, c);
                    if (count == 0) {
                        lo = hi = v;
                    } else {
                        lo = std::min(lo, v);
                        hi = std::max(hi, v);
                    }
                    sum += v;
                    ++count;
                }
            }
            if (count == 0 || static_cast<double>(count) / area < grid.min_cell_coverage) continue;

            const double mean = sum / count;
            double ss = 0.0;  // two-pass population variance
            for (int r = rs; r < re; ++r) {
                for (int c = cs; c < ce; ++c) {
                    if (!mask.at(r, c)) continue;
                    const double d = temps.at(r, c) - mean;
                    ss += d * d;
                }
            }
            cell.min = lo;
            cell.max = hi;
            cell.mean = mean;
            cell.std = std::sqrt(ss / count);
            cell.present = true;
        }
    }
    return cells;
}

std::vector<double> spatial_gradient(const std::vector<double>& mean_grid, int n) {
    std::vector<double> grad(mean_grid.size(), missing());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double v = mean_grid[static_cast<size_t>(i) * n + j];
            if (is_missing(v)) continue;
            double sum = 0.0;
            int count = 0;
            const int ni[4] = {i - 1, i + 1, i, i};
            const int nj[4] = {j, j, j - 1, j + 1};
            for (int k = 0; k < 4; ++k) {
                if (ni[k] < 0 || ni[k] >= n || nj[k] < 0 || nj[k] >= n) continue;
                const double u = mean_grid[static_cast<size_t>(ni[k]) * n + nj[k]];
                if (is_missing(u)) continue;
                sum += u;
                ++count;
            }
            if (count > 0) grad[static_cast<size_t>(i) * n + j] = v - sum / count;
        }
    }
    return grad;
}

std::vector<double> temporal_delta(const std::vector<double>& cell_mean_series, int lag_s) {
    if (lag_s < 1) throw ValueError("lag must be a positive integer of seconds");
    std::vector<double> out(cell_mean_series.size(), missing());
    for (size_t t = static_cast<size_t>(lag_s); t < cell_mean_series.size(); ++t) {
        const double now = cell_mean_series[t];
        const double then = cell_mean_series[t - lag_s];
        if (!is_missing(now) && !is_missing(then)) out[t] = now - then;
    }
    return out;
}

namespace {
const char* kStatNames[5] = {"min", "max", "mean", "std", "grad"};
}

std::vector<std::string> feature_names(int n, const std::vector<int>& lags) {
    std::vector<std::string> names;
    names.reserve(static_cast<size_t>(n) * n * (10 + lags.size()) + 3);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const std::string base = "cell_" + std::to_string(i) + "_" + std::to_string(j) + "_";
            for (const char* stat : kStatNames) {
                names.push_back(base + stat + "_mean");
                names.push_back(base + stat + "_slope");
            }
        }
    }
    for (int lag : lags) {
        const std::string prefix = "delta" + std::to_string(lag) + "_";
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                names.push_back(prefix + std::to_string(i) + "_" + std::to_string(j));
            }
        }
    }
    names.push_back("ambient_c_mean");
    names.push_back("air_velocity_mean");
    names.push_back("distance_cm_mean");
    return names;
}

ParsedName parse_feature_name(const std::string& name) {
    ParsedName p;
    auto fields = [](const std::string& s) {
        std::vector<std::string> out;
        size_t pos = 0;
        while (pos <= s.size()) {
            const size_t next = s.find('_', pos);
            if (next == std::string::npos) {
                out.push_back(s.substr(pos));
                break;
            }
            out.push_back(s.substr(pos, next - pos));
            pos = next + 1;
        }
        return out;
    };
    if (name.rfind("cell_", 0) == 0) {
        const auto f = fields(name);
        if (f.size() != 5) throw ValueError("malformed feature name: " + name);
        p.kind = ParsedName::Kind::cell;
        p.i = std::stoi(f[1]);
        p.j = std::stoi(f[2]);
        p.stat = f[3];
        p.agg = f[4];
        return p;
    }
    if (name.rfind("delta", 0) == 0) {
        const auto f = fields(name);
        if (f.size() != 3) throw ValueError("malformed feature name: " + name);
        p.kind = ParsedName::Kind::delta;
        p.lag = std::stoi(f[0].substr(5));
        p.i = std::stoi(f[1]);
        p.j = std::stoi(f[2]);
        return p;
    }
    p.kind = ParsedName::Kind::context;
    return p;
}

std::vector<FrameFeatures> frame_features(const frames::SessionRecording& rec,
                                          const GridSpec& grid, const roi::SegmenterConfig& seg,
                                          const roi::ValidationLimits& limits) {
    std::vector<FrameFeatures> out(rec.frames.size());
    for (size_t idx = 0; idx < rec.frames.size(); ++idx) {
        const auto& frame = rec.frames[idx];
        FrameFeatures& ff = out[idx];
        ff.timestamp_ms = frame.timestamp_ms;
        ff.frame_index = static_cast<int>(idx);
        ff.n = grid.n;

        roi::Mask mask;
        const auto ingested = rec.mask_files.find(frame.timestamp_ms);
        if (ingested != rec.mask_files.end()) {
            mask.bits = roi::load_mask(ingested->second);
            mask.source = roi::MaskSource::ingested;
            if (mask.bits.height() != frame.height() || mask.bits.width() != frame.width()) {
                throw ShapeError("ingested mask shape mismatch at timestamp " +
                                 std::to_string(frame.timestamp_ms));
            }
        } else {
            double ambient;
            if (rec.env[idx].has_value()) {
                ambient = rec.env[idx]->ambient_c;
            } else {
                // no aligned sample: fall back to the frame's 10th percentile
                std::vector<double> v = frame.temps.raw();
                const size_t k = v.size() / 10;
                std::nth_element(v.begin(), v.begin() + k, v.end());
                ambient = v[k];
            }
            mask = roi::segment_classical(frame.temps, ambient, seg);
        }

        const roi::MaskQuality q = roi::mask_geometry(mask.bits, limits);
        if (!q.valid) continue;  // missing observation, stays invalid

        ff.cells = cell_stats(frame.temps, mask.bits, grid);
        std::vector<double> means(ff.cells.size(), missing());
        for (size_t k = 0; k < ff.cells.size(); ++k) {
            if (ff.cells[k].present) means[k] = ff.cells[k].mean;
        }
        ff.gradient = spatial_gradient(means, grid.n);
        ff.valid = true;
    }
    return out;
}

namespace {

// Per-session delta series, shared by every window of the session.
struct DeltaCache {
    std::vector<std::vector<double>> series;  // [lag_index * cells + cell] -> per-frame delta
};

DeltaCache build_delta_cache(const std::vector<FrameFeatures>& session_frames, int n,
                             const std::vector<int>& lags) {
    const size_t cells = static_cast<size_t>(n) * n;
    DeltaCache cache;
    cache.series.resize(lags.size() * cells);
    std::vector<double> session_means(session_frames.size());
    for (size_t cell = 0; cell < cells; ++cell) {
        for (size_t t = 0; t < session_frames.size(); ++t) {
            const FrameFeatures& ff = session_frames[t];
            session_means[t] = ff.valid && ff.cells[cell].present ? ff.cells[cell].mean : missing();
        }
        for (size_t li = 0; li < lags.size(); ++li) {
            cache.series[li * cells + cell] = temporal_delta(session_means, lags[li]);
        }
    }
    return cache;
}

// Mean and least-squares slope over the defined entries of a series sampled
// at 1 Hz (x = offset in seconds).
void mean_and_slope(const std::vector<double>& series, double& out_mean, double& out_slope) {
    double sx = 0.0, sy = 0.0;
    int count = 0;
    for (size_t t = 0; t < series.size(); ++t) {
        if (is_missing(series[t])) continue;
        sx += static_cast<double>(t);
        sy += series[t];
        ++count;
    }
    if (count == 0) {
        out_mean = missing();
        out_slope = missing();
        return;
    }
    const double mx = sx / count, my = sy / count;
    out_mean = my;
    if (count < 2) {
        out_slope = missing();
        return;
    }
    double sxx = 0.0, sxy = 0.0;
    for (size_t t = 0; t < series.size(); ++t) {
        if (is_missing(series[t])) continue;
        const double dx = static_cast<double>(t) - mx;
        sxx += dx * dx;
        sxy += dx * (series[t] - my);
    }
    out_slope = sxx > 0.0 ? sxy / sxx : missing();
}

std::optional<FeatureVector> assemble_impl(
    const frames::ObservationWindow& window, const std::vector<FrameFeatures>& session_frames,
    const std::vector<std::optional<frames::SensorSample>>& env, const std::vector<int>& lags,
    const DeltaCache& cache) {
    const int start = window.start_index, len = window.length;
    if (start < 0 || len < 1 || static_cast<size_t>(start + len) > session_frames.size()) {
        throw ValueError("window out of session bounds");
    }
    int valid = 0;
    for (int t = start; t < start + len; ++t) {
        if (session_frames[t].valid) ++valid;
    }
    if (valid * 2 < len) return std::nullopt;  // window dropped

    const int n = session_frames[start].n;
    const size_t cells = static_cast<size_t>(n) * n;
    FeatureVector fv;
    fv.values.reserve(cells * (10 + lags.size()) + 3);

    std::vector<double> series(len);
    for (size_t cell = 0; cell < cells; ++cell) {
        for (int stat = 0; stat < 5; ++stat) {
            for (int t = 0; t < len; ++t) {
                const FrameFeatures& ff = session_frames[start + t];
                double v = missing();
                if (ff.valid) {
                    switch (stat) {
                        case 0: v = ff.cells[cell].present ? ff.cells[cell].min : missing(); break;
                        case 1: v = ff.cells[cell].present ? ff.cells[cell].max : missing(); break;
                        case 2: v = ff.cells[cell].present ? ff.cells[cell].mean : missing(); break;
                        case 3: v = ff.cells[cell].present ? ff.cells[cell].std : missing(); break;
                        case 4: v = ff.gradient[cell]; break;
                    }
                }
                series[t] = v;
            }
            double m, s;
            mean_and_slope(series, m, s);
            fv.values.push_back(m);
            fv.values.push_back(s);
        }
    }

    // Deltas run on the session-level mean series so long lags stay defined
    // inside short windows.
    for (size_t li = 0; li < lags.size(); ++li) {
        for (size_t cell = 0; cell < cells; ++cell) {
            const std::vector<double>& deltas = cache.series[li * cells + cell];
            double sum = 0.0;
            int count = 0;
            for (int t = start; t < start + len; ++t) {
                if (!is_missing(deltas[t])) {
                    sum += deltas[t];
                    ++count;
                }
            }
            fv.values.push_back(count > 0 ? sum / count : missing());
        }
    }

    double amb = 0.0, vel = 0.0, dist = 0.0;
    int env_count = 0;
    for (int t = start; t < start + len; ++t) {
        if (!env[t].has_value()) continue;
        amb += env[t]->ambient_c;
        vel += env[t]->air_velocity_mps;
        dist += env[t]->distance_cm;
        ++env_count;
    }
    fv.values.push_back(env_count ? amb / env_count : missing());
    fv.values.push_back(env_count ? vel / env_count : missing());
    fv.values.push_back(env_count ? dist / env_count : missing());
    return fv;
}

}  // namespace

std::optional<FeatureVector> assemble_window_features(
    const frames::ObservationWindow& window, const std::vector<FrameFeatures>& session_frames,
    const std::vector<std::optional<frames::SensorSample>>& env, const std::vector<int>& lags) {
    if (session_frames.empty()) throw ValueError("empty session");
    const DeltaCache cache = build_delta_cache(session_frames, session_frames.front().n, lags);
    return assemble_impl(window, session_frames, env, lags, cache);
}

void extract_session(const frames::SessionRecording& rec, const ExtractConfig& config,
                     FeatureMatrix& out) {
    if (out.names.empty()) {
        out.names = feature_names(config.grid.n, config.lags);
        out.n = config.grid.n;
        out.lags = config.lags;
    }
    const auto frames_f = frame_features(rec, config.grid, config.segmenter, config.limits);
    const DeltaCache cache = build_delta_cache(frames_f, config.grid.n, config.lags);
    const int stride = config.stride_s > 0 ? config.stride_s : config.window_s;
    auto windows = window_session(rec, config.window_s, stride);

    for (const auto& w : windows) {
        if (config.phase == WindowPhase::steady) {
            const int64_t first_ts = rec.frames[w.start_index].timestamp_ms;
            const int64_t last_ts = rec.frames[w.start_index + w.length - 1].timestamp_ms;
            if (first_ts < rec.manifest.phase_marks.steady_ms ||
                last_ts >= rec.manifest.phase_marks.cool_down_ms) {
                continue;
            }
        }
        auto fv = assemble_impl(w, frames_f, rec.env, config.lags, cache);
        if (!fv) continue;
        out.rows.push_back(std::move(fv->values));
        out.labels.push_back(w.label);
        out.session_ids.push_back(w.session_id);
        out.device_models.push_back(rec.manifest.device_model);
        out.environments.push_back(rec.manifest.environment);
        out.window_starts.push_back(w.start_index);
    }
}

FeatureMatrix extract_dataset(const fs::path& dataset_dir, const ExtractConfig& config,
                              const std::vector<std::string>& session_ids) {
    FeatureMatrix out;
    out.names = feature_names(config.grid.n, config.lags);
    out.n = config.grid.n;
    out.lags = config.lags;
    const auto ids = session_ids.empty() ? frames::list_sessions(dataset_dir) : session_ids;
    for (const auto& id : ids) {
        const auto rec = frames::load_session(dataset_dir / id);
        extract_session(rec, config, out);
    }
    return out;
}

namespace {

void append_double(std::string& out, double v) {
    if (is_missing(v)) return;  // empty field
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, r.ptr);
}

}  // namespace

void write_feature_csv(const FeatureMatrix& m, const fs::path& path) {
    std::string out = "session_id,window_start,label,device_model,environment";
    for (const auto& name : m.names) {
        out.push_back(',');
        out += name;
    }
    out.push_back('\n');
    for (size_t r = 0; r < m.rows.size(); ++r) {
        out += m.session_ids[r];
        out.push_back(',');
        out += std::to_string(m.window_starts[r]);
        out.push_back(',');
        out += m.labels[r];
        out.push_back(',');
        out += m.device_models[r];
        out.push_back(',');
        out += m.environments[r];
        for (double v : m.rows[r]) {
            out.push_back(',');
            append_double(out, v);
        }
        out.push_back('\n');
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

FeatureMatrix load_feature_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open feature CSV: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty feature CSV: " + path.string());

    FeatureMatrix m;
    {
        size_t pos = 0;
        int field = 0;
        while (pos <= line.size()) {
            size_t next = line.find(',', pos);
            if (next == std::string::npos) next = line.size();
            if (field >= 5) m.names.push_back(line.substr(pos, next - pos));
            pos = next + 1;
            ++field;
        }
        if (field < 6) throw ParseError("feature CSV header too short");
    }
    for (const auto& name : m.names) {
        const auto p = parse_feature_name(name);
        if (p.kind == ParsedName::Kind::cell) m.n = std::max(m.n, p.i + 1);
        if (p.kind == ParsedName::Kind::delta &&
            std::find(m.lags.begin(), m.lags.end(), p.lag) == m.lags.end()) {
            m.lags.push_back(p.lag);
        }
    }

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        row.reserve(m.names.size());
        size_t pos = 0;
        int field = 0;
        std::string session, label, device, environment;
        int window_start = 0;
        while (pos <= line.size()) {
            size_t next = line.find(',', pos);
            if (next == std::string::npos) next = line.size();
            const std::string_view token(line.data() + pos, next - pos);
            switch (field) {
                case 0: session = std::string(token); break;
                case 1: window_start = token.empty() ? 0 : std::stoi(std::string(token)); break;
                case 2: label = std::string(token); break;
                case 3: device = std::string(token); break;
                case 4: environment = std::string(token); break;
                default: {
                    if (token.empty()) {
                        row.push_back(missing());
                    } else {
                        double v = 0.0;
                        const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
                        if (res.ec != std::errc()) {
                            throw ParseError("bad numeric field in feature CSV");
                        }
                        row.push_back(v);
                    }
                }
            }
            pos = next + 1;
            ++field;
        }
        if (row.size() != m.names.size()) throw ParseError("feature CSV row width mismatch");
        m.rows.push_back(std::move(row));
        m.session_ids.push_back(std::move(session));
        m.labels.push_back(std::move(label));
        m.device_models.push_back(std::move(device));
        m.environments.push_back(std::move(environment));
        m.window_starts.push_back(window_start);
    }
    return m;
}

}  // namespace thermaltap::features
