#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "thermaltap/features.hpp"
#include "thermaltap/rng.hpp"
#include "test_support.hpp"

using namespace thermaltap;
using namespace thermaltap::features;
using ttest::rect_mask;

TEST_CASE("cell_stats") {
    SUBCASE("constant cell fully inside the mask") {
        Matrix temps(20, 20, 30.0);
        const auto cells = cell_stats(temps, rect_mask(20, 20, 0, 0, 20, 20), {4, 0.5});
        REQUIRE(cells.size() == 16);
        for (const auto& c : cells) {
            REQUIRE(c.present);
            CHECK(c.min == 30.0);
            CHECK(c.max == 30.0);
            CHECK(c.mean == 30.0);
            CHECK(c.std == 0.0);
        }
    }
    SUBCASE("cell at 40% coverage is absent, at exactly 50% it is present") {
        Matrix temps(12, 12, 25.0);
        // single-cell grid over a 10x10 bounding box with 40 masked pixels
        BitGrid forty = rect_mask(12, 12, 1, 1, 10, 4);
        forty.at(1, 10) = 1;   // stretch bbox to 10x10
        forty.at(10, 4) = 0;   // keep the count at 40
        REQUIRE(ttest::mask_area(forty) == 40);
        CHECK_FALSE(cell_stats(temps, forty, {1, 0.5})[0].present);

        BitGrid fifty = rect_mask(12, 12, 1, 1, 10, 5);
        fifty.at(1, 10) = 1;
        fifty.at(10, 5) = 0;
        REQUIRE(ttest::mask_area(fifty) == 50);
        CHECK(cell_stats(temps, fifty, {1, 0.5})[0].present);
    }
    SUBCASE("population std of {28, 30, 32} against a direct two-pass oracle") {
        Matrix temps(16, 16, 0.0);
        temps.at(5, 5) = 28.0;
        temps.at(5, 6) = 30.0;
        temps.at(5, 7) = 32.0;
        BitGrid mask(16, 16);
        mask.at(5, 5) = mask.at(5, 6) = mask.at(5, 7) = 1;

        const auto cells = cell_stats(temps, mask, {1, 0.5});
        REQUIRE(cells[0].present);
        CHECK(cells[0].min == 28.0);
        CHECK(cells[0].max == 32.0);
        CHECK(cells[0].mean == 30.0);

        const double vals[3] = {28.0, 30.0, 32.0};
        double mean = (vals[0] + vals[1] + vals[2]) / 3.0;
        double ss = 0.0;
        for (double v : vals) ss += (v - mean) * (v - mean);
        const double oracle = std::sqrt(ss / 3.0);
        CHECK(cells[0].std == doctest::Approx(oracle).epsilon(1e-15));
        CHECK(cells[0].std == doctest::Approx(std::sqrt(8.0 / 3.0)).epsilon(1e-12));
    }
    SUBCASE("remainder rows and columns go to the last cell") {
        // 10x10 bbox on a 3x3 grid: edges {0,3,6,10} in both axes
        Matrix temps(16, 20, 0.0);
        const int r0 = 2, c0 = 5;
        for (int r = 0; r < 10; ++r) {
            for (int c = 0; c < 10; ++c) temps.at(r0 + r, c0 + c) = r * 10.0 + c;
        }
        const BitGrid mask = rect_mask(16, 20, r0, c0, 10, 10);
        const auto cells = cell_stats(temps, mask, {3, 0.5});

        const int edges[4] = {0, 3, 6, 10};
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                double lo = 1e9, hi = -1e9, sum = 0.0;
                int count = 0;
                for (int r = edges[i]; r < edges[i + 1]; ++r) {
                    for (int c = edges[j]; c < edges[j + 1]; ++c) {
                        const double v = r * 10.0 + c;
                        lo = std::min(lo, v);
                        hi = std::max(hi, v);
                        sum += v;
                        ++count;
                    }
                }
                const auto& cell = cells[i * 3 + j];
                REQUIRE(cell.present);
                CHECK(cell.min == lo);
                CHECK(cell.max == hi);
                CHECK(cell.mean == doctest::Approx(sum / count).epsilon(1e-12));
            }
        }
    }
    SUBCASE("mismatched shapes are rejected") {
        CHECK_THROWS_AS(cell_stats(Matrix(8, 8, 0.0), BitGrid(8, 9), {2, 0.5}), ShapeError);
    }
}

TEST_CASE("lowering min_cell_coverage never loses present cells") {
    Rng rng(37);
    for (int rep = 0; rep < 30; ++rep) {
        Matrix temps(24, 24, 21.0);
        BitGrid mask(24, 24);
        for (auto& v : mask.raw()) v = rng.uniform01() < 0.5 ? 1 : 0;

        const auto strict = cell_stats(temps, mask, {4, 0.5});
        const auto loose = cell_stats(temps, mask, {4, 0.3});
        for (size_t i = 0; i < strict.size(); ++i) {
            if (strict[i].present) CHECK(loose[i].present);
        }
    }
}

TEST_CASE("spatial_gradient") {
    SUBCASE("uniform grid is all zeros") {
        const std::vector<double> grid(16, 30.0);
        for (double g : spatial_gradient(grid, 4)) CHECK(g == 0.0);
    }
    SUBCASE("center 35 over four 30-neighbors gives 5") {
        std::vector<double> grid(9, 30.0);
        grid[4] = 35.0;
        const auto g = spatial_gradient(grid, 3);
        CHECK(g[4] == doctest::Approx(5.0).epsilon(1e-12));
    }
    SUBCASE("corner 32 with valid neighbors 30 and 34 gives 0") {
        // n=2: cell (0,0)=32 has neighbors (0,1)=30 and (1,0)=34
        const std::vector<double> grid = {32.0, 30.0, 34.0, 31.0};
        const auto g = spatial_gradient(grid, 2);
        CHECK(g[0] == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("missing neighbors are excluded; isolated cells stay missing") {
        std::vector<double> grid = {32.0, missing(), missing(), 30.0};
        auto g = spatial_gradient(grid, 2);
        CHECK(is_missing(g[0]));  // both neighbors of (0,0) missing
        CHECK(is_missing(g[1]));
        CHECK(is_missing(g[2]));
        CHECK(is_missing(g[3]));

        grid = {32.0, 30.0, missing(), 31.0};
        g = spatial_gradient(grid, 2);
        CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-12));  // only (0,1) valid
    }
    SUBCASE("additive offsets cancel") {
        Rng rng(41);
        std::vector<double> grid(25);
        for (double& v : grid) v = rng.uniform(18.0, 40.0);
        grid[7] = missing();
        const double offset = 13.625;
        std::vector<double> shifted = grid;
        for (double& v : shifted) {
            if (!is_missing(v)) v += offset;
        }
        const auto ga = spatial_gradient(grid, 5);
        const auto gb = spatial_gradient(shifted, 5);
        for (size_t i = 0; i < ga.size(); ++i) {
            if (is_missing(ga[i])) {
                CHECK(is_missing(gb[i]));
            } else {
                CHECK(gb[i] == doctest::Approx(ga[i]).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("temporal_delta") {
    SUBCASE("linear ramp 0.1 deg/s") {
        std::vector<double> series(100);
        for (int t = 0; t < 100; ++t) series[t] = 20.0 + 0.1 * t;

        const auto d5 = temporal_delta(series, 5);
        const auto d30 = temporal_delta(series, 30);
        for (int t = 0; t < 100; ++t) {
            if (t < 5) {
                CHECK(is_missing(d5[t]));
            } else {
                CHECK(d5[t] == doctest::Approx(0.5).epsilon(1e-9));
            }
            if (t < 30) {
                CHECK(is_missing(d30[t]));
            } else {
                CHECK(d30[t] == doctest::Approx(3.0).epsilon(1e-9));
            }
        }
    }
    SUBCASE("constant series gives zero deltas") {
        const std::vector<double> series(50, 24.5);
        const auto d = temporal_delta(series, 5);
        for (int t = 5; t < 50; ++t) CHECK(d[t] == 0.0);
    }
    SUBCASE("series shorter than the lag is all missing") {
        const auto d = temporal_delta({1.0, 2.0, 3.0, 4.0}, 5);
        for (double v : d) CHECK(is_missing(v));
    }
    SUBCASE("affine series gives slope times lag") {
        std::vector<double> series(60);
        for (int t = 0; t < 60; ++t) series[t] = 5.0 + 0.37 * t;
        const auto d = temporal_delta(series, 7);
        for (int t = 7; t < 60; ++t) CHECK(d[t] == doctest::Approx(0.37 * 7).epsilon(1e-9));
    }
    SUBCASE("missing endpoints propagate") {
        std::vector<double> series(20, 1.0);
        series[3] = missing();
        const auto d = temporal_delta(series, 5);
        CHECK(is_missing(d[8]));
        CHECK(d[9] == 0.0);
    }
    SUBCASE("invalid lag") {
        CHECK_THROWS_AS(temporal_delta({1.0, 2.0}, 0), ValueError);
    }
}

TEST_CASE("feature name schema") {
    SUBCASE("n=16 with lags {5,30} enumerates 3075 unique names") {
        const auto names = feature_names(16, {5, 30});
        CHECK(names.size() == 3075);
        CHECK(names.size() == 5u * 256 * 2 + 2u * 256 + 3);
        const std::set<std::string> unique(names.begin(), names.end());
        CHECK(unique.size() == names.size());
    }
    SUBCASE("every name parses back to its constituents") {
        const auto names = feature_names(4, {5, 30});
        for (const auto& name : names) {
            const ParsedName p = parse_feature_name(name);
            switch (p.kind) {
                case ParsedName::Kind::cell:
                    CHECK(name == "cell_" + std::to_string(p.i) + "_" + std::to_string(p.j) +
                                      "_" + p.stat + "_" + p.agg);
                    break;
                case ParsedName::Kind::delta:
                    CHECK(name == "delta" + std::to_string(p.lag) + "_" + std::to_string(p.i) +
                                      "_" + std::to_string(p.j));
                    break;
                case ParsedName::Kind::context:
                    CHECK((name == "ambient_c_mean" || name == "air_velocity_mean" ||
                           name == "distance_cm_mean"));
                    break;
            }
        }
    }
    SUBCASE("ordering is a pure function of n and lags") {
        CHECK(feature_names(8, {5, 30}) == feature_names(8, {5, 30}));
    }
}

namespace {

// Hand-built per-frame features: every cell present with min=max=mean=value,
// std 0; gradients all zero.
FrameFeatures flat_frame(int n, double value, int index, bool valid = true) {
    FrameFeatures ff;
    ff.timestamp_ms = 1000LL * index;
    ff.frame_index = index;
    ff.n = n;
    ff.valid = valid;
    ff.cells.assign(static_cast<size_t>(n) * n, CellStats{});
    ff.gradient.assign(static_cast<size_t>(n) * n, valid ? 0.0 : missing());
    if (valid) {
        for (auto& c : ff.cells) {
            c.min = c.max = c.mean = value;
            c.std = 0.0;
            c.present = true;
        }
    }
    return ff;
}

frames::SensorSample env_sample(int64_t ts, double amb, double vel, double dist) {
    frames::SensorSample s;
    s.timestamp_ms = ts;
    s.ambient_c = amb;
    s.humidity_pct = 45.0;
    s.air_velocity_mps = vel;
    s.distance_cm = dist;
    return s;
}

}  // namespace

TEST_CASE("assemble_window_features") {
    const int n = 2;
    const std::vector<int> lags = {5, 30};
    const auto names = feature_names(n, lags);

    std::vector<std::optional<frames::SensorSample>> env;
    for (int t = 0; t < 50; ++t) env.push_back(env_sample(1000LL * t, 21.0, 0.4, 55.0));

    SUBCASE("identical frames: means carry the value, slopes and deltas vanish") {
        std::vector<FrameFeatures> session;
        for (int t = 0; t < 50; ++t) session.push_back(flat_frame(n, 26.5, t));

        frames::ObservationWindow w{"s", 32, 8, "app"};
        const auto fv = assemble_window_features(w, session, env, lags);
        REQUIRE(fv.has_value());
        REQUIRE(fv->values.size() == names.size());

        CHECK(fv->values[ttest::col_of_names(names, "cell_0_0_mean_mean")] == 26.5);
        CHECK(fv->values[ttest::col_of_names(names, "cell_1_1_min_mean")] == 26.5);
        CHECK(fv->values[ttest::col_of_names(names, "cell_0_1_mean_slope")] == 0.0);
        CHECK(fv->values[ttest::col_of_names(names, "cell_0_0_std_mean")] == 0.0);
        CHECK(fv->values[ttest::col_of_names(names, "delta5_0_0")] == 0.0);
        CHECK(fv->values[ttest::col_of_names(names, "delta30_1_1")] == 0.0);
        CHECK(fv->values[ttest::col_of_names(names, "ambient_c_mean")] == 21.0);
        CHECK(fv->values[ttest::col_of_names(names, "air_velocity_mean")] ==
              doctest::Approx(0.4).epsilon(1e-12));
        CHECK(fv->values[ttest::col_of_names(names, "distance_cm_mean")] == 55.0);
    }
    SUBCASE("0.1 deg/s ramp: slopes 0.1, window deltas 0.5 and 3.0") {
        std::vector<FrameFeatures> session;
        for (int t = 0; t < 50; ++t) session.push_back(flat_frame(n, 20.0 + 0.1 * t, t));

        frames::ObservationWindow w{"s", 35, 10, "app"};
        const auto fv = assemble_window_features(w, session, env, lags);
        REQUIRE(fv.has_value());
        for (const char* col : {"cell_0_0_mean_slope", "cell_1_0_min_slope",
                                "cell_0_1_max_slope"}) {
            CHECK(fv->values[ttest::col_of_names(names, col)] ==
                  doctest::Approx(0.1).epsilon(1e-9));
        }
        CHECK(fv->values[ttest::col_of_names(names, "delta5_0_0")] ==
              doctest::Approx(0.5).epsilon(1e-9));
        CHECK(fv->values[ttest::col_of_names(names, "delta30_0_1")] ==
              doctest::Approx(3.0).epsilon(1e-9));
    }
    SUBCASE("deltas are missing when the window precedes the lag horizon") {
        std::vector<FrameFeatures> session;
        for (int t = 0; t < 50; ++t) session.push_back(flat_frame(n, 25.0, t));
        frames::ObservationWindow w{"s", 0, 10, "app"};
        const auto fv = assemble_window_features(w, session, env, lags);
        REQUIRE(fv.has_value());
        CHECK(is_missing(fv->values[ttest::col_of_names(names, "delta30_0_0")]));
        CHECK_FALSE(is_missing(fv->values[ttest::col_of_names(names, "delta5_0_0")]));
    }
    SUBCASE("a window with more than half its frames missing is dropped") {
        std::vector<FrameFeatures> session;
        for (int t = 0; t < 50; ++t) {
            const bool valid = !(t >= 10 && t < 16);  // 6 of the 10 window frames invalid
            session.push_back(flat_frame(n, 25.0, t, valid));
        }
        CHECK_FALSE(assemble_window_features({"s", 10, 10, "app"}, session, env, lags).has_value());
        // exactly half missing is kept
        session[15] = flat_frame(n, 25.0, 15);
        CHECK(assemble_window_features({"s", 10, 10, "app"}, session, env, lags).has_value());
    }
    SUBCASE("env gaps shrink the context mean; all-gap windows leave it missing") {
        std::vector<FrameFeatures> session;
        for (int t = 0; t < 50; ++t) session.push_back(flat_frame(n, 25.0, t));
        std::vector<std::optional<frames::SensorSample>> holey = env;
        holey[40] = std::nullopt;
        holey[41] = env_sample(41000, 30.0, 0.4, 55.0);
        auto fv = assemble_window_features({"s", 40, 2, "app"}, session, holey, lags);
        REQUIRE(fv.has_value());
        CHECK(fv->values[ttest::col_of_names(names, "ambient_c_mean")] == 30.0);

        for (int t = 40; t < 42; ++t) holey[t] = std::nullopt;
        fv = assemble_window_features({"s", 40, 2, "app"}, session, holey, lags);
        REQUIRE(fv.has_value());
        CHECK(is_missing(fv->values[ttest::col_of_names(names, "ambient_c_mean")]));
    }
    SUBCASE("out-of-bounds windows are rejected") {
        std::vector<FrameFeatures> session;
        for (int t = 0; t < 20; ++t) session.push_back(flat_frame(n, 25.0, t));
        CHECK_THROWS_AS(assemble_window_features({"s", 15, 10, "app"}, session, env, lags),
                        ValueError);
    }
}

namespace {

// On-disk session whose warm rectangle ramps at 0.1 deg/s over a 20 deg
// background, giving a clean mask and exactly linear cell means.
void write_ramp_session(const std::filesystem::path& root, int duration_s) {
    const auto sdir = root / "ramp";
    std::filesystem::create_directories(sdir / "frames");
    const int64_t t0 = 1700000000000LL;
    frames::write_manifest(ttest::make_manifest("ramp", "fit_trainer", "quest3", "indoor", t0),
                           sdir / "manifest.json");
    std::vector<frames::SensorSample> sensors;
    for (int t = 0; t < duration_s; ++t) {
        Matrix temps(16, 24, 20.0);
        for (int r = 3; r < 13; ++r) {
            for (int c = 4; c < 19; ++c) temps.at(r, c) = 28.0 + 0.1 * t;
        }
        frames::write_frame_csv(temps,
                                sdir / "frames" /
                                    ("frame_" + std::to_string(t0 + 1000LL * t) + ".csv"));
        sensors.push_back(env_sample(t0 + 1000LL * t, 20.0, 0.0, 60.0));
    }
    frames::write_sensor_log(sensors, sdir / "sensors.csv");
}

}  // namespace

TEST_CASE("session extraction end to end") {
    ttest::TempDir dir("extract");
    write_ramp_session(dir.path, 50);
    const auto rec = frames::load_session(dir.path / "ramp");

    ExtractConfig config;
    config.grid.n = 2;
    config.window_s = 10;
    config.stride_s = 10;
    config.phase = WindowPhase::full;

    FeatureMatrix m;
    extract_session(rec, config, m);
    REQUIRE(m.rows.size() == 5);
    CHECK(m.labels[0] == "fit_trainer");
    CHECK(m.session_ids[0] == "ramp");
    CHECK(m.device_models[0] == "quest3");
    CHECK(m.environments[0] == "indoor");
    CHECK(m.window_starts == std::vector<int>({0, 10, 20, 30, 40}));

    const size_t slope = ttest::col_of(m, "cell_0_0_mean_slope");
    const size_t d5 = ttest::col_of(m, "delta5_0_0");
    for (const auto& row : m.rows) {
        CHECK(row[slope] == doctest::Approx(0.1).epsilon(1e-9));
    }
    CHECK(m.rows[4][d5] == doctest::Approx(0.5).epsilon(1e-9));

    SUBCASE("two extractions of the same session are bit-identical") {
        FeatureMatrix again;
        extract_session(rec, config, again);
        REQUIRE(again.rows.size() == m.rows.size());
        for (size_t r = 0; r < m.rows.size(); ++r) {
            for (size_t c = 0; c < m.rows[r].size(); ++c) {
                const double a = m.rows[r][c], b = again.rows[r][c];
                CHECK(((is_missing(a) && is_missing(b)) || a == b));
            }
        }
    }
    SUBCASE("steady phase keeps only windows inside the steady marks") {
        // phase marks put steady at +300s; a 50 s session has no steady windows
        ExtractConfig steady = config;
        steady.phase = WindowPhase::steady;
        FeatureMatrix s;
        extract_session(rec, steady, s);
        CHECK(s.rows.empty());
    }
}

TEST_CASE("feature CSV round trip preserves values and missing cells") {
    ttest::TempDir dir("feature_csv");
    FeatureMatrix m = ttest::blank_matrix(2, {5, 30}, 3);
    m.rows[0][0] = 1.25;
    m.rows[1][1] = missing();
    m.rows[2][5] = -3.5;
    m.labels = {"a", "b", "home"};
    m.session_ids = {"s1", "s1", "s2"};
    m.device_models = {"quest3", "quest3", "quest2"};
    m.environments = {"indoor", "indoor", "outdoor"};
    m.window_starts = {0, 10, 20};

    const auto path = dir.path / "features.csv";
    write_feature_csv(m, path);
    const FeatureMatrix back = load_feature_csv(path);

    CHECK(back.names == m.names);
    CHECK(back.n == m.n);
    CHECK(back.lags == m.lags);
    CHECK(back.labels == m.labels);
    CHECK(back.session_ids == m.session_ids);
    CHECK(back.device_models == m.device_models);
    CHECK(back.environments == m.environments);
    CHECK(back.window_starts == m.window_starts);
    REQUIRE(back.rows.size() == m.rows.size());
    for (size_t r = 0; r < m.rows.size(); ++r) {
        for (size_t c = 0; c < m.rows[r].size(); ++c) {
            const double a = m.rows[r][c], b = back.rows[r][c];
            CHECK(((is_missing(a) && is_missing(b)) || a == b));
        }
    }
}
