#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "thermaltap/normalize.hpp"
#include "test_support.hpp"

using namespace thermaltap;
using namespace thermaltap::normalize;
using features::FeatureMatrix;

namespace {

void set_col(FeatureMatrix& m, size_t row, const std::string& name, double value) {
    m.rows[row][ttest::col_of(m, name)] = value;
}

double get_col(const FeatureMatrix& m, size_t row, const std::string& name) {
    return m.rows[row][ttest::col_of(m, name)];
}

std::vector<size_t> all_rows(const FeatureMatrix& m) {
    std::vector<size_t> idx(m.rows.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
}

}  // namespace

TEST_CASE("scalar correction formulas") {
    CHECK(ambient_correct(35.0, 20.0) == 15.0);
    CHECK(ambient_correct(21.5, 21.5) == 0.0);

    CHECK(wind_correct(2.0, 1.5, 0.1) == doctest::Approx(2.3).epsilon(1e-12));
    CHECK(wind_correct(-1.0, 2.0, 0.25) == doctest::Approx(-1.5).epsilon(1e-12));
    CHECK(wind_correct(0.9, 0.0, 1.7) == 0.9);  // still air is a no-op

    DeltaBaselineTable table;
    table.n = 2;
    table.lags = {5, 30};
    table.expected[{"appA", 0, 5}] = 1.2;
    CHECK(delta_residual(2.0, table, "appA", 0, 5) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(is_missing(delta_residual(2.0, table, "appB", 0, 5)));
    CHECK(is_missing(delta_residual(2.0, table, "appA", 1, 5)));
}

TEST_CASE("apply_ambient corrects level columns only") {
    FeatureMatrix m = ttest::blank_matrix(2, {5, 30}, 2);
    set_col(m, 0, "cell_0_0_mean_mean", 30.0);
    set_col(m, 0, "cell_0_0_min_mean", 28.0);
    set_col(m, 0, "cell_0_0_max_mean", 33.0);
    set_col(m, 0, "cell_0_0_std_mean", 7.0);
    set_col(m, 0, "cell_0_0_grad_mean", 1.5);
    set_col(m, 0, "cell_0_0_mean_slope", 0.2);
    set_col(m, 0, "delta5_0_0", 0.6);
    set_col(m, 0, "ambient_c_mean", 22.0);
    set_col(m, 1, "cell_0_0_mean_mean", 30.0);
    set_col(m, 1, "ambient_c_mean", missing());

    const size_t uncorrected = apply_ambient(m);
    CHECK(uncorrected == 1);
    CHECK(get_col(m, 0, "cell_0_0_mean_mean") == doctest::Approx(8.0).epsilon(1e-12));
    CHECK(get_col(m, 0, "cell_0_0_min_mean") == doctest::Approx(6.0).epsilon(1e-12));
    CHECK(get_col(m, 0, "cell_0_0_max_mean") == doctest::Approx(11.0).epsilon(1e-12));
    // spread, gradient, slope and delta channels are ambient-invariant
    CHECK(get_col(m, 0, "cell_0_0_std_mean") == 7.0);
    CHECK(get_col(m, 0, "cell_0_0_grad_mean") == 1.5);
    CHECK(get_col(m, 0, "cell_0_0_mean_slope") == 0.2);
    CHECK(get_col(m, 0, "delta5_0_0") == 0.6);
    // row without an ambient reading is left alone
    CHECK(get_col(m, 1, "cell_0_0_mean_mean") == 30.0);
}

TEST_CASE("apply_wind scales rate channels by 1 + k v") {
    FeatureMatrix m = ttest::blank_matrix(2, {5, 30}, 2);
    set_col(m, 0, "cell_0_0_mean_slope", 0.1);
    set_col(m, 0, "delta5_0_0", 0.8);
    set_col(m, 0, "cell_0_0_mean_mean", 30.0);
    set_col(m, 0, "air_velocity_mean", 2.0);
    set_col(m, 1, "delta5_0_0", 0.8);
    set_col(m, 1, "air_velocity_mean", missing());

    apply_wind(m, WindModel{0.5, false});
    CHECK(get_col(m, 0, "cell_0_0_mean_slope") == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(get_col(m, 0, "delta5_0_0") == doctest::Approx(1.6).epsilon(1e-12));
    CHECK(get_col(m, 0, "cell_0_0_mean_mean") == 30.0);  // levels untouched
    CHECK(get_col(m, 1, "delta5_0_0") == 0.8);           // no velocity, no correction
}

TEST_CASE("fit_wind_coefficient") {
    SUBCASE("recovers k=0.3 from a two-level attenuation profile") {
        // delta(v) = 2.0 / (1 + 0.3 v): 2.0 in still air, 1.25 at 2 m/s.
        FeatureMatrix m = ttest::blank_matrix(2, {5, 30}, 6);
        for (size_t r = 0; r < 6; ++r) {
            const bool windy = r >= 3;
            set_col(m, r, "air_velocity_mean", windy ? 2.0 : 0.0);
            set_col(m, r, "delta5_0_0", windy ? 1.25 : 2.0);
        }
        const WindModel model = fit_wind_coefficient(m, all_rows(m));
        CHECK_FALSE(model.low_spread_warning);
        CHECK(model.k == doctest::Approx(0.3).epsilon(1e-9));
    }
    SUBCASE("velocity spread under 0.2 m/s refuses to fit") {
        FeatureMatrix m = ttest::blank_matrix(2, {5, 30}, 4);
        for (size_t r = 0; r < 4; ++r) {
            set_col(m, r, "air_velocity_mean", 0.05 + 0.025 * static_cast<double>(r));
            set_col(m, r, "delta5_0_0", 2.0 - 0.3 * static_cast<double>(r));
        }
        const WindModel model = fit_wind_coefficient(m, all_rows(m));
        CHECK(model.k == 0.0);
        CHECK(model.low_spread_warning);
    }
    SUBCASE("deltas that grow with wind clamp at k=0") {
        FeatureMatrix m = ttest::blank_matrix(2, {5, 30}, 6);
        for (size_t r = 0; r < 6; ++r) {
            const bool windy = r >= 3;
            set_col(m, r, "air_velocity_mean", windy ? 2.0 : 0.0);
            set_col(m, r, "delta5_0_0", windy ? 2.0 : 1.0);
        }
        const WindModel model = fit_wind_coefficient(m, all_rows(m));
        CHECK(model.k == 0.0);
        CHECK_FALSE(model.low_spread_warning);
    }
    SUBCASE("flat near-zero delta channels are uninformative") {
        FeatureMatrix m = ttest::blank_matrix(2, {5, 30}, 6);
        for (size_t r = 0; r < 6; ++r) {
            set_col(m, r, "air_velocity_mean", r >= 3 ? 2.0 : 0.0);
            set_col(m, r, "delta5_0_0", r >= 3 ? 0.001 : 0.004);
        }
        const WindModel model = fit_wind_coefficient(m, all_rows(m));
        CHECK(model.k == 0.0);
        CHECK(model.low_spread_warning);  // nothing usable survives the peak filter
    }
}

TEST_CASE("delta baseline table") {
    FeatureMatrix m = ttest::blank_matrix(2, {5, 30}, 3);
    m.labels = {"appA", "appA", "appB"};
    set_col(m, 0, "delta5_0_0", 1.0);
    set_col(m, 1, "delta5_0_0", 2.0);
    set_col(m, 2, "delta5_0_0", 3.0);

    const DeltaBaselineTable table = fit_delta_table(m, all_rows(m));
    CHECK(table.n == 2);
    CHECK(table.expected.at({"appA", 0, 5}) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(table.expected.at({"appB", 0, 5}) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(table.expected.at({"appA", 3, 30}) == 0.0);

    SUBCASE("labeled rows subtract their own profile") {
        FeatureMatrix t = m;
        apply_delta_residual(t, table, all_rows(t));
        CHECK(get_col(t, 0, "delta5_0_0") == doctest::Approx(-0.5).epsilon(1e-12));
        CHECK(get_col(t, 1, "delta5_0_0") == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(get_col(t, 2, "delta5_0_0") == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("unlabeled rows subtract the across-app mean profile") {
        FeatureMatrix t = m;
        apply_delta_residual(t, table, {0, 1});
        // row 2 is scored without an app hypothesis: mean(1.5, 3.0) = 2.25
        CHECK(get_col(t, 2, "delta5_0_0") == doctest::Approx(3.0 - 2.25).epsilon(1e-12));
    }
    SUBCASE("missing deltas remain missing") {
        FeatureMatrix t = m;
        set_col(t, 0, "delta30_1_1", missing());
        apply_delta_residual(t, table, all_rows(t));
        CHECK(is_missing(get_col(t, 0, "delta30_1_1")));
    }
    SUBCASE("JSON round trip preserves every entry") {
        ttest::TempDir dir("delta_table");
        const auto path = dir.path / "table.json";
        save_delta_table(table, path);
        const DeltaBaselineTable back = load_delta_table(path);
        CHECK(back.n == table.n);
        CHECK(back.lags == table.lags);
        CHECK(back.expected == table.expected);
    }
}

TEST_CASE("headset baseline") {
    FeatureMatrix m = ttest::blank_matrix(2, {5, 30}, 5);
    m.labels = {"home", "home", "fit_trainer", "home", "home"};
    m.device_models = {"quest3", "quest3", "quest3", "vive_focus", "quest3"};
    set_col(m, 0, "cell_0_0_mean_mean", 27.0);
    set_col(m, 1, "cell_0_0_mean_mean", 28.0);
    set_col(m, 2, "cell_0_0_mean_mean", 41.0);  // active, must not contaminate
    set_col(m, 3, "cell_0_0_mean_mean", 99.0);  // other device
    set_col(m, 4, "cell_0_0_mean_mean", missing());

    const HeadsetBaseline b = fit_headset_baseline(m, all_rows(m), "quest3");
    CHECK(b.device_model == "quest3");
    CHECK(b.cell_mean[0] == doctest::Approx(27.5).epsilon(1e-12));
    CHECK(b.sample_count[0] == 2);
    CHECK(b.cell_mean[3] == 0.0);  // blank idle rows average to zero
    CHECK(b.sample_count[3] == 3);

    SUBCASE("application subtracts the idle profile from every level channel") {
        FeatureMatrix t = ttest::blank_matrix(2, {5, 30}, 1);
        t.device_models = {"quest3"};
        set_col(t, 0, "cell_0_0_mean_mean", 30.0);
        set_col(t, 0, "cell_0_0_min_mean", 29.0);
        set_col(t, 0, "cell_0_0_std_mean", 0.4);
        const size_t passed = apply_headset_baseline(t, {b});
        CHECK(passed == 0);
        CHECK(get_col(t, 0, "cell_0_0_mean_mean") == doctest::Approx(2.5).epsilon(1e-12));
        CHECK(get_col(t, 0, "cell_0_0_min_mean") == doctest::Approx(1.5).epsilon(1e-12));
        CHECK(get_col(t, 0, "cell_0_0_std_mean") == 0.4);  // spread is device-invariant
    }
    SUBCASE("rows for a device with no stored baseline are an error") {
        FeatureMatrix t = ttest::blank_matrix(2, {5, 30}, 1);
        t.device_models = {"mystery9"};
        CHECK_THROWS_AS(apply_headset_baseline(t, {b}), BaselineMissingError);
    }
    SUBCASE("cells the baseline never observed pass through unchanged") {
        HeadsetBaseline partial;
        partial.device_model = "dev0";
        partial.n = 2;
        partial.cell_mean = {missing(), 0.0, 0.0, 0.0};
        partial.sample_count = {0, 1, 1, 1};
        FeatureMatrix t = ttest::blank_matrix(2, {5, 30}, 1);
        set_col(t, 0, "cell_0_0_mean_mean", 5.0);
        const size_t passed = apply_headset_baseline(t, {partial});
        CHECK(passed == 3);  // min, max and mean channels of cell (0,0)
        CHECK(get_col(t, 0, "cell_0_0_mean_mean") == 5.0);
    }
    SUBCASE("JSON round trip keeps missing cells missing") {
        ttest::TempDir dir("baselines");
        HeadsetBaseline partial;
        partial.device_model = "dev0";
        partial.n = 2;
        partial.cell_mean = {missing(), 1.25, -0.5, 0.0};
        partial.sample_count = {0, 4, 4, 4};
        const auto path = dir.path / "baselines.json";
        save_headset_baselines({b, partial}, path);
        const auto back = load_headset_baselines(path);
        REQUIRE(back.size() == 2);
        CHECK(back[0].device_model == "quest3");
        CHECK(back[0].cell_mean[0] == doctest::Approx(27.5).epsilon(1e-12));
        CHECK(back[0].sample_count == b.sample_count);
        CHECK(is_missing(back[1].cell_mean[0]));
        CHECK(back[1].cell_mean[1] == 1.25);
        CHECK(back[1].sample_count[0] == 0);
    }
}

TEST_CASE("signature_ratio") {
    SUBCASE("app-specific signatures dominate device signatures") {
        const std::vector<std::vector<double>> vecs = {
            {1.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}, {0.0, 1.0}};
        const std::vector<std::string> apps = {"appA", "appA", "appB", "appB"};
        const std::vector<std::string> devs = {"dev1", "dev2", "dev1", "dev2"};
        const SignatureRatio sr = signature_ratio(vecs, apps, devs);
        CHECK(sr.sim_app == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(sr.sim_dev == doctest::Approx(0.0).epsilon(1e-12));
        CHECK_FALSE(sr.r.has_value());  // ratio undefined at sim_dev == 0
    }
    SUBCASE("centroids are averaged before comparison and r = sim_app / sim_dev") {
        // (appA, dev1) holds two rows whose centroid (2,2) is parallel to
        // (appA, dev2)'s (1,1) even though neither row is.
        const std::vector<std::vector<double>> vecs = {
            {3.0, 1.0}, {1.0, 3.0}, {1.0, 1.0}, {1.0, 0.0}, {1.0, 0.0}};
        const std::vector<std::string> apps = {"appA", "appA", "appA", "appB", "appB"};
        const std::vector<std::string> devs = {"dev1", "dev1", "dev2", "dev1", "dev2"};
        const SignatureRatio sr = signature_ratio(vecs, apps, devs);
        CHECK(sr.sim_app == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(sr.sim_dev == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
        REQUIRE(sr.r.has_value());
        CHECK(*sr.r == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    }
    SUBCASE("degenerate designs are rejected") {
        CHECK_THROWS_AS(signature_ratio({{1.0}, {2.0}}, {"appA", "appA"}, {"dev1", "dev2"}),
                        ValueError);
        CHECK_THROWS_AS(signature_ratio({{1.0}, {2.0}}, {"appA", "appB"}, {"dev1", "dev1"}),
                        ValueError);
        CHECK_THROWS_AS(signature_ratio({{1.0}, {missing()}, {2.0}, {3.0}},
                                        {"appA", "appA", "appB", "appB"},
                                        {"dev1", "dev2", "dev1", "dev2"}),
                        ValueError);
        CHECK_THROWS_AS(signature_ratio({{1.0}}, {"appA", "appB"}, {"dev1"}), ValueError);
    }
}
