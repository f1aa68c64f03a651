#include "thermaltap/normalize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_set>

#include <json.hpp>

namespace thermaltap::normalize {

namespace fs = std::filesystem;
using features::FeatureMatrix;
using features::ParsedName;
using json = nlohmann::json;

double ambient_correct(double cell_temp, double ambient_c) { return cell_temp - ambient_c; }

double wind_correct(double delta, double air_velocity, double k) {
    return delta * (1.0 + k * air_velocity);
}

double delta_residual(double observed_delta, const DeltaBaselineTable& table,
                      const std::string& app_label, int cell, int lag) {
    const auto it = table.expected.find({app_label, cell, lag});
    if (it == table.expected.end()) return missing();
    return observed_delta - it->second;
}

namespace {

// Column groups shared by the matrix-level transforms.
struct Schema {
    std::vector<size_t> level_cols;             // cell_*_{min,max,mean}_mean
    std::vector<size_t> wind_cols;              // slopes and deltas
    std::vector<std::pair<size_t, std::pair<int, int>>> delta_cols;  // col -> (cell, lag)
    // cell level columns grouped per cell for baseline subtraction
    std::vector<std::pair<size_t, int>> level_by_cell;  // col -> cell index
    size_t ambient_col = SIZE_MAX;
    size_t velocity_col = SIZE_MAX;
};

Schema build_schema(const FeatureMatrix& m) {
    Schema s;
    for (size_t c = 0; c < m.names.size(); ++c) {
        const auto& name = m.names[c];
        if (name == "ambient_c_mean") {
            s.ambient_col = c;
            continue;
        }
        if (name == "air_velocity_mean") {
            s.velocity_col = c;
            continue;
        }
        const ParsedName p = features::parse_feature_name(name);
        if (p.kind == ParsedName::Kind::cell) {
            const bool level_stat = p.stat == "min" || p.stat == "max" || p.stat == "mean";
            if (level_stat && p.agg == "mean") {
                s.level_cols.push_back(c);
                s.level_by_cell.emplace_back(c, p.i * m.n + p.j);
            }
            if (p.agg == "slope") s.wind_cols.push_back(c);
        } else if (p.kind == ParsedName::Kind::delta) {
            s.wind_cols.push_back(c);
            s.delta_cols.emplace_back(c, std::make_pair(p.i * m.n + p.j, p.lag));
        }
    }
    if (s.ambient_col == SIZE_MAX || s.velocity_col == SIZE_MAX) {
        throw ValueError("feature matrix lacks context columns");
    }
    return s;
}

}  // namespace

size_t apply_ambient(FeatureMatrix& m) {
    const Schema s = build_schema(m);
    size_t uncorrected = 0;
    for (auto& row : m.rows) {
        const double amb = row[s.ambient_col];
        if (is_missing(amb)) {
            ++uncorrected;
            continue;
        }
        for (size_t c : s.level_cols) {
            if (!is_missing(row[c])) row[c] = ambient_correct(row[c], amb);
        }
    }
    return uncorrected;
}

void apply_wind(FeatureMatrix& m, const WindModel& model) {
    const Schema s = build_schema(m);
    for (auto& row : m.rows) {
        const double v = row[s.velocity_col];
        if (is_missing(v)) continue;
        const double factor = 1.0 + model.k * v;
        for (size_t c : s.wind_cols) {
            if (!is_missing(row[c])) row[c] *= factor;
        }
    }
}

WindModel fit_wind_coefficient(const FeatureMatrix& m, const std::vector<size_t>& row_indices) {
    const Schema s = build_schema(m);
    WindModel model;

    double vmin = 0.0, vmax = 0.0;
    bool any = false;
    for (size_t r : row_indices) {
        const double v = m.rows[r][s.velocity_col];
        if (is_missing(v)) continue;
        if (!any) {
            vmin = vmax = v;
            any = true;
        } else {
            vmin = std::min(vmin, v);
            vmax = std::max(vmax, v);
        }
    }
    if (!any || vmax - vmin < 0.2) {
        model.k = 0.0;
        model.low_spread_warning = true;
        return model;
    }

    constexpr int kBins = 4;
    const double width = (vmax - vmin) / kBins;
    auto bin_of = [&](double v) {
        return std::min(kBins - 1, static_cast<int>((v - vmin) / width));
    };

    // Per (app, delta column): bin means of delta and velocity, then a
    // least-squares slope of delta against delta*velocity with the per-group
    // intercept eliminated.
    std::set<std::string> apps;
    for (size_t r : row_indices) apps.insert(m.labels[r]);

    double num = 0.0, den = 0.0;
    for (const auto& app : apps) {
        for (const auto& [col, cell_lag] : s.delta_cols) {
            (void)cell_lag;
            double sum_d[kBins] = {}, sum_v[kBins] = {};
            int count[kBins] = {};
            for (size_t r : row_indices) {
                if (m.labels[r] != app) continue;
                const double v = m.rows[r][s.velocity_col];
                const double d = m.rows[r][col];
                if (is_missing(v) || is_missing(d)) continue;
                const int b = bin_of(v);
                sum_d[b] += d;
                sum_v[b] += v;
                ++count[b];
            }
            std::vector<std::pair<double, double>> points;  // (delta, delta*v) per bin
            double peak = 0.0;
            for (int b = 0; b < kBins; ++b) {
                if (!count[b]) continue;
                const double db = sum_d[b] / count[b];
                const double vb = sum_v[b] / count[b];
                points.emplace_back(db, db * vb);
                peak = std::max(peak, std::abs(db));
            }
            if (points.size() < 2 || peak < 0.005) continue;  // uninformative channel
            double dmean = 0.0, xmean = 0.0;
            for (const auto& [d, x] : points) {
                dmean += d;
                xmean += x;
            }
            dmean /= points.size();
            xmean /= points.size();
            for (const auto& [d, x] : points) {
                num += (d - dmean) * (x - xmean);
                den += (x - xmean) * (x - xmean);
            }
        }
    }
    if (den <= 0.0) {
        model.k = 0.0;
        model.low_spread_warning = true;
        return model;
    }
    model.k = std::clamp(-num / den, 0.0, 2.0);
    return model;
}

DeltaBaselineTable fit_delta_table(const FeatureMatrix& m, const std::vector<size_t>& row_indices) {
    const Schema s = build_schema(m);
    DeltaBaselineTable table;
    table.n = m.n;
    table.lags = m.lags;
    std::map<std::tuple<std::string, int, int>, std::pair<double, long>> acc;
    for (size_t r : row_indices) {
        for (const auto& [col, cell_lag] : s.delta_cols) {
            const double d = m.rows[r][col];
            if (is_missing(d)) continue;
            auto& slot = acc[{m.labels[r], cell_lag.first, cell_lag.second}];
            slot.first += d;
            slot.second += 1;
        }
    }
    for (const auto& [key, slot] : acc) {
        table.expected[key] = slot.first / slot.second;
    }
    return table;
}

void apply_delta_residual(FeatureMatrix& m, const DeltaBaselineTable& table,
                          const std::vector<size_t>& labeled_rows) {
    const Schema s = build_schema(m);
    const std::unordered_set<size_t> labeled(labeled_rows.begin(), labeled_rows.end());

    std::set<std::string> apps;
    for (const auto& [key, value] : table.expected) {
        (void)value;
        apps.insert(std::get<0>(key));
    }

    // Across-app mean profile for rows whose app hypothesis is unknown.
    std::map<std::pair<int, int>, double> mean_profile;
    for (const auto& [col, cell_lag] : s.delta_cols) {
        (void)col;
        double sum = 0.0;
        int count = 0;
        for (const auto& app : apps) {
            const auto it = table.expected.find({app, cell_lag.first, cell_lag.second});
            if (it != table.expected.end()) {
                sum += it->second;
                ++count;
            }
        }
        if (count) mean_profile[cell_lag] = sum / count;
    }

    for (size_t r = 0; r < m.rows.size(); ++r) {
        const bool use_own_label = labeled.count(r) > 0;
        for (const auto& [col, cell_lag] : s.delta_cols) {
            double& v = m.rows[r][col];
            if (is_missing(v)) continue;
            if (use_own_label) {
                v = delta_residual(v, table, m.labels[r], cell_lag.first, cell_lag.second);
            } else {
                const auto it = mean_profile.find(cell_lag);
                v = it != mean_profile.end() ? v - it->second : missing();
            }
        }
    }
}

HeadsetBaseline fit_headset_baseline(const FeatureMatrix& m,
                                     const std::vector<size_t>& row_indices,
                                     const std::string& device_model) {
    const Schema s = build_schema(m);
    HeadsetBaseline b;
    b.device_model = device_model;
    b.n = m.n;
    const size_t cells = static_cast<size_t>(m.n) * m.n;
    b.cell_mean.assign(cells, missing());
    b.sample_count.assign(cells, 0);

    // baseline over the plain cell mean channel only
    std::vector<std::pair<size_t, int>> mean_cols;
    for (const auto& [col, cell] : s.level_by_cell) {
        if (features::parse_feature_name(m.names[col]).stat == "mean") {
            mean_cols.emplace_back(col, cell);
        }
    }

    std::vector<double> sums(cells, 0.0);
    for (size_t r : row_indices) {
        if (m.labels[r] != frames::kIdleLabel || m.device_models[r] != device_model) continue;
        for (const auto& [col, cell] : mean_cols) {
            const double v = m.rows[r][col];
            if (is_missing(v)) continue;
            sums[cell] += v;
            b.sample_count[cell] += 1;
        }
    }
    for (size_t c = 0; c < cells; ++c) {
        if (b.sample_count[c] > 0) b.cell_mean[c] = sums[c] / b.sample_count[c];
    }
    return b;
}

size_t apply_headset_baseline(FeatureMatrix& m, const std::vector<HeadsetBaseline>& baselines) {
    const Schema s = build_schema(m);
    size_t passed_through = 0;
    for (size_t r = 0; r < m.rows.size(); ++r) {
        const HeadsetBaseline* b = nullptr;
        for (const auto& cand : baselines) {
            if (cand.device_model == m.device_models[r]) {
                b = &cand;
                break;
            }
        }
        if (!b) throw BaselineMissingError("no headset baseline for device " + m.device_models[r]);
        for (const auto& [col, cell] : s.level_by_cell) {
            double& v = m.rows[r][col];
            if (is_missing(v)) continue;
            const double base = b->cell_mean[cell];
            if (is_missing(base)) {
                ++passed_through;
                continue;
            }
            v -= base;
        }
    }
    return passed_through;
}

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na <= 0.0 || nb <= 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

SignatureRatio signature_ratio(const std::vector<std::vector<double>>& vectors,
                               const std::vector<std::string>& app_labels,
                               const std::vector<std::string>& device_models) {
    if (vectors.size() != app_labels.size() || vectors.size() != device_models.size()) {
        throw ValueError("signature_ratio inputs must be parallel");
    }
    std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, int>> groups;
    for (size_t i = 0; i < vectors.size(); ++i) {
        for (double v : vectors[i]) {
            if (is_missing(v)) throw ValueError("signature_ratio requires imputed vectors");
        }
        auto& slot = groups[{app_labels[i], device_models[i]}];
        if (slot.first.empty()) slot.first.assign(vectors[i].size(), 0.0);
        for (size_t d = 0; d < vectors[i].size(); ++d) slot.first[d] += vectors[i][d];
        slot.second += 1;
    }
    std::set<std::string> apps, devices;
    for (auto& [key, slot] : groups) {
        apps.insert(key.first);
        devices.insert(key.second);
        for (double& v : slot.first) v /= slot.second;
    }
    if (apps.size() < 2 || devices.size() < 2) {
        throw ValueError("signature_ratio needs at least two apps and two devices");
    }

    double sim_app = 0.0, sim_dev = 0.0;
    long app_pairs = 0, dev_pairs = 0;
    for (auto it1 = groups.begin(); it1 != groups.end(); ++it1) {
        for (auto it2 = std::next(it1); it2 != groups.end(); ++it2) {
            const bool same_app = it1->first.first == it2->first.first;
            const bool same_dev = it1->first.second == it2->first.second;
            if (same_app && !same_dev) {
                sim_app += cosine(it1->second.first, it2->second.first);
                ++app_pairs;
            } else if (!same_app && same_dev) {
                sim_dev += cosine(it1->second.first, it2->second.first);
                ++dev_pairs;
            }
        }
    }
    SignatureRatio out;
    out.sim_app = app_pairs ? sim_app / app_pairs : 0.0;
    out.sim_dev = dev_pairs ? sim_dev / dev_pairs : 0.0;
    if (out.sim_dev != 0.0) out.r = out.sim_app / out.sim_dev;
    return out;
}

void save_delta_table(const DeltaBaselineTable& t, const fs::path& path) {
    json j;
    j["n"] = t.n;
    j["lags"] = t.lags;
    json entries = json::object();
    for (const auto& [key, value] : t.expected) {
        const auto& [app, cell, lag] = key;
        entries[app + "|" + std::to_string(cell) + "|" + std::to_string(lag)] = value;
    }
    j["expected"] = entries;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    f << j.dump(2) << "\n";
}

DeltaBaselineTable load_delta_table(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open delta table: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("delta table parse failure: " + std::string(e.what()));
    }
    DeltaBaselineTable t;
    t.n = j.at("n").get<int>();
    t.lags = j.at("lags").get<std::vector<int>>();
    for (const auto& [key, value] : j.at("expected").items()) {
        const size_t p1 = key.rfind('|');
        const size_t p0 = key.rfind('|', p1 - 1);
        if (p0 == std::string::npos || p1 == std::string::npos) {
            throw ParseError("bad delta table key: " + key);
        }
        t.expected[{key.substr(0, p0), std::stoi(key.substr(p0 + 1, p1 - p0 - 1)),
                    std::stoi(key.substr(p1 + 1))}] = value.get<double>();
    }
    return t;
}

void save_headset_baselines(const std::vector<HeadsetBaseline>& baselines, const fs::path& path) {
    json arr = json::array();
    for (const auto& b : baselines) {
        json j;
        j["device_model"] = b.device_model;
        j["n"] = b.n;
        json cells = json::array();
        for (double v : b.cell_mean) {
            if (is_missing(v)) {
                cells.push_back(nullptr);
            } else {
                cells.push_back(v);
            }
        }
        j["cell_mean"] = cells;
        j["sample_count"] = b.sample_count;
        arr.push_back(j);
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    f << arr.dump(2) << "\n";
}

std::vector<HeadsetBaseline> load_headset_baselines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open baseline store: " + path.string());
    json arr;
    try {
        in >> arr;
    } catch (const json::exception& e) {
        throw ParseError("baseline store parse failure: " + std::string(e.what()));
    }
    std::vector<HeadsetBaseline> out;
    for (const auto& j : arr) {
        HeadsetBaseline b;
        b.device_model = j.at("device_model").get<std::string>();
        b.n = j.at("n").get<int>();
        for (const auto& cell : j.at("cell_mean")) {
            b.cell_mean.push_back(cell.is_null() ? missing() : cell.get<double>());
        }
        b.sample_count = j.at("sample_count").get<std::vector<int>>();
        out.push_back(std::move(b));
    }
    return out;
}

}  // namespace thermaltap::normalize
