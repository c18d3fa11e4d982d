#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <vector>

#include "sag/csv.hpp"
#include "sag/dates.hpp"
#include "sag/errors.hpp"
#include "sag/synth.hpp"

using sag::Date;
using sag::LakeConfig;
using sag::LakeProfiles;
using sag::SynthBasin;
using sag::SynthConfig;

namespace {

std::vector<Date> year_calendar(int days) {
    std::vector<Date> cal;
    const Date start = Date::from_iso("2000-01-01");
    for (int t = 0; t < days; ++t) cal.push_back(start.plus_days(t));
    return cal;
}

SynthConfig small_config(std::uint64_t seed = 3) {
    SynthConfig cfg;
    cfg.n_segments = 8;
    cfg.n_reservoirs = 2;
    cfg.n_days = 120;
    cfg.seed = seed;
    return cfg;
}

/// The segment a reservoir's outflow edge feeds directly.
int direct_downstream(const sag::NetworkTopology& topo, int reservoir) {
    for (const sag::DirectEdge& e : topo.direct_edges()) {
        if (e.edge_class == sag::EdgeClass::kResToSeg &&
            e.source.index == reservoir) {
            return e.target.index;
        }
    }
    return -1;
}

}  // namespace

TEST_CASE("lake layers are rate-limited and ordered when stratified") {
    LakeConfig cfg;
    const auto cal = year_calendar(365);
    std::vector<double> air(365);
    for (int t = 0; t < 365; ++t) {
        // Strong seasonal swing plus a few shock days.
        air[t] = 12.0 + 14.0 * std::sin(2.0 * std::numbers::pi *
                                        (t - 100) / 365.0);
        if (t % 37 == 0) air[t] += 9.0;
    }
    const LakeProfiles lake = toy_lake_profiles(cfg, air, cal);
    REQUIRE(lake.surface.size() == 365);
    REQUIRE(lake.bottom.size() == 365);

    for (int t = 1; t < 365; ++t) {
        CHECK(std::abs(lake.surface[t] - lake.surface[t - 1]) <=
              cfg.max_daily_change_c + 1e-12);
        CHECK(std::abs(lake.bottom[t] - lake.bottom[t - 1]) <=
              cfg.max_daily_change_c + 1e-12);
    }
    for (int t = 0; t < 365; ++t) {
        const int doy = cal[t].day_of_year();
        if (doy >= cfg.stratified_start_doy && doy <= cfg.stratified_end_doy) {
            CHECK(lake.bottom[t] <= lake.surface[t] + 1e-9);
        }
        CHECK(lake.surface[t] >= 0.5);
        CHECK(lake.surface[t] <= 38.0);
        CHECK(lake.bottom[t] >= 0.5);
        CHECK(lake.bottom[t] <= 38.0);
    }
}

TEST_CASE("outside stratification the water column is homogeneous") {
    LakeConfig cfg;
    const auto cal = year_calendar(90);  // January-March: mixed season
    std::vector<double> air(90, 10.0);
    const LakeProfiles lake = toy_lake_profiles(cfg, air, cal);
    for (int t = 0; t < 90; ++t) {
        REQUIRE(cal[t].day_of_year() < cfg.stratified_start_doy);
        CHECK(lake.bottom[t] == doctest::Approx(lake.surface[t]));
    }

    // Day zero has no previous value to rate-limit against: the surface takes
    // its target directly, seeded from the first day's air temperature.
    std::vector<double> hot(3, 30.0);
    const LakeProfiles first = toy_lake_profiles(cfg, hot, year_calendar(3));
    const double expect0 =
        cfg.surface_mean_c + cfg.surface_follow * (30.0 - cfg.surface_mean_c);
    CHECK(first.surface[0] == doctest::Approx(expect0));

    // Bad sizing is rejected before any state is touched.
    CHECK_THROWS_AS(
        (void)toy_lake_profiles(cfg, std::vector<double>{1.0}, cal),
        sag::ShapeMismatch);
}

TEST_CASE("generated basins are deterministic in every array") {
    const SynthBasin a = synth_basin(small_config(77));
    const SynthBasin b = synth_basin(small_config(77));
    CHECK(a.topology.direct_edges().size() == b.topology.direct_edges().size());
    REQUIRE(a.dataset.n_days() == b.dataset.n_days());
    REQUIRE(a.dataset.observations.size() == b.dataset.observations.size());
    for (std::size_t i = 0; i < a.dataset.observations.size(); ++i) {
        CHECK(a.dataset.observations[i].segment ==
              b.dataset.observations[i].segment);
        CHECK(a.dataset.observations[i].day == b.dataset.observations[i].day);
        CHECK(a.dataset.observations[i].temp_c ==
              b.dataset.observations[i].temp_c);
    }
    for (int i = 0; i < a.dataset.n_segments(); ++i) {
        for (int t = 0; t < a.dataset.n_days(); ++t) {
            for (int f = 0; f < a.dataset.n_features(); ++f) {
                CHECK(a.dataset.drivers(i, t, f) == b.dataset.drivers(i, t, f));
            }
            CHECK(a.truth.true_temp(i, t) == b.truth.true_temp(i, t));
        }
    }
    const SynthBasin c = synth_basin(small_config(78));
    bool any_differs = false;
    for (int t = 0; t < c.dataset.n_days() && !any_differs; ++t) {
        any_differs = c.truth.true_temp(0, t) != a.truth.true_temp(0, t);
    }
    CHECK(any_differs);
}

TEST_CASE("generated basins pass dataset validation and have sane shapes") {
    const SynthConfig cfg = small_config();
    const SynthBasin basin = synth_basin(cfg);
    CHECK_NOTHROW(basin.dataset.validate());
    CHECK(basin.dataset.n_segments() == 8);
    CHECK(basin.dataset.n_reservoirs() == 2);
    CHECK(basin.dataset.n_days() == 120);
    CHECK(basin.dataset.n_features() == 10);
    CHECK(basin.dataset.n_layers() == 2);
    CHECK(basin.dataset.has_release_data == std::vector<std::uint8_t>{1, 1});
    CHECK_FALSE(basin.dataset.observations.empty());
    CHECK(basin.truth.true_temp.rows() == 8);
    CHECK(basin.truth.release_active.rows() == 2);

    // Every reservoir is spliced onto a river edge: water comes in from at
    // least one segment and feeds a non-empty downstream set.
    for (int k = 0; k < 2; ++k) {
        CHECK_FALSE(basin.topology.upstream_segments_of_reservoir(k).empty());
        CHECK_FALSE(basin.topology.downstream_segments_of_reservoir(k).empty());
        CHECK(direct_downstream(basin.topology, k) >= 0);
    }
}

TEST_CASE("an unreachable release threshold never triggers the policy") {
    SynthConfig cfg = small_config(12);
    cfg.release_threshold_c = 44.0;  // hotter than any plausible forecast
    cfg.random_release_prob = 0.0;
    const SynthBasin basin = synth_basin(cfg);
    for (int k = 0; k < basin.dataset.n_reservoirs(); ++k) {
        for (int t = 0; t < basin.dataset.n_days(); ++t) {
            CHECK(basin.truth.release_active(k, t) == 0.0);
            // Quiescent operation: normal surface draw, trickle bottom draw.
            CHECK(basin.dataset.release_flows(k, t, 0) ==
                  doctest::Approx(cfg.base_release_flow));
            CHECK(basin.dataset.release_flows(k, t, 1) ==
                  doctest::Approx(0.08 * cfg.base_release_flow));
        }
    }
    // With the policy never firing, reservoirs pass their inflow through
    // and the managed world is exactly the unmanaged one.
    for (int i = 0; i < basin.dataset.n_segments(); ++i) {
        for (int t = 0; t < basin.dataset.n_days(); ++t) {
            CHECK(basin.truth.true_temp(i, t) ==
                  basin.truth.counterfactual_temp(i, t));
        }
    }
}

TEST_CASE("triggered releases cool the managed world below the counterfactual") {
    SynthConfig cfg;
    cfg.n_segments = 10;
    cfg.n_reservoirs = 1;
    cfg.n_days = 730;  // two summers' worth of release seasons
    cfg.seed = 21;
    cfg.release_threshold_c = 15.0;
    cfg.random_release_prob = 0.0;
    const SynthBasin basin = synth_basin(cfg);

    const int probe = direct_downstream(basin.topology, 0);
    REQUIRE(probe >= 0);

    double managed_sum = 0.0, counter_sum = 0.0;
    int active_days = 0;
    for (int t = 0; t < cfg.n_days; ++t) {
        if (basin.truth.release_active(0, t) == 0.0) continue;
        ++active_days;
        managed_sum += basin.truth.true_temp(probe, t);
        counter_sum += basin.truth.counterfactual_temp(probe, t);
    }
    REQUIRE(active_days > 20);
    CHECK(managed_sum / active_days < counter_sum / active_days - 0.2);

    // Segments with no reservoir upstream never see a policy effect: their
    // managed and counterfactual temperatures are the same computation.
    const auto& downstream = basin.topology.downstream_segments_of_reservoir(0);
    for (int i = 0; i < cfg.n_segments; ++i) {
        if (std::find(downstream.begin(), downstream.end(), i) !=
            downstream.end()) {
            continue;
        }
        for (int t = 0; t < cfg.n_days; ++t) {
            CHECK(basin.truth.true_temp(i, t) ==
                  basin.truth.counterfactual_temp(i, t));
        }
    }
}

TEST_CASE("observations sample the managed world with bounded noise") {
    SynthConfig cfg = small_config(61);
    cfg.obs_noise_c = 0.0;
    const SynthBasin clean = synth_basin(cfg);
    for (const sag::Observation& o : clean.dataset.observations) {
        CHECK(o.temp_c ==
              doctest::Approx(clean.truth.true_temp(o.segment, o.day)));
    }

    cfg.obs_noise_c = 0.3;
    const SynthBasin noisy = synth_basin(cfg);
    double worst = 0.0;
    for (const sag::Observation& o : noisy.dataset.observations) {
        worst = std::max(worst, std::abs(o.temp_c - noisy.truth.true_temp(
                                                        o.segment, o.day)));
    }
    CHECK(worst > 0.0);
    CHECK(worst < 3.0);  // ten sigma: noise, not corruption
}

TEST_CASE("merged basins stack networks side by side") {
    SynthConfig ca = small_config(31);
    SynthConfig cb = small_config(32);
    cb.n_segments = 6;
    cb.n_reservoirs = 1;
    const SynthBasin a = synth_basin(ca);
    SynthBasin b = synth_basin(cb);
    strip_release_data(b.dataset);
    CHECK(b.dataset.has_release_data == std::vector<std::uint8_t>{0});

    const SynthBasin joint = merge_basins(a, b);
    CHECK_NOTHROW(joint.dataset.validate());
    CHECK(joint.dataset.n_segments() == 14);
    CHECK(joint.dataset.n_reservoirs() == 3);
    CHECK(joint.dataset.has_release_data ==
          std::vector<std::uint8_t>{1, 1, 0});
    CHECK(joint.topology.segment_count() == 14);

    // Basin B's arrays landed at shifted indices.
    for (int t = 0; t < joint.dataset.n_days(); ++t) {
        CHECK(joint.dataset.drivers(8, t, 0) ==
              doctest::Approx(b.dataset.drivers(0, t, 0)));
        CHECK(joint.truth.true_temp(8 + 3, t) ==
              doctest::Approx(b.truth.true_temp(3, t)));
        CHECK(joint.dataset.depth_temps(2, t, 1) ==
              doctest::Approx(b.dataset.depth_temps(0, t, 1)));
    }
    // No edge crosses between the two networks.
    for (const sag::DirectEdge& e : joint.topology.direct_edges()) {
        const bool src_a = (e.source.kind == sag::NodeKind::kSegment)
                               ? e.source.index < 8
                               : e.source.index < 2;
        const bool dst_a = (e.target.kind == sag::NodeKind::kSegment)
                               ? e.target.index < 8
                               : e.target.index < 2;
        CHECK(src_a == dst_a);
    }
    CHECK(joint.dataset.observations.size() ==
          a.dataset.observations.size() + b.dataset.observations.size());

    // Calendars must line up day for day.
    SynthConfig shifted = cb;
    shifted.start_date = ca.start_date.plus_days(1);
    const SynthBasin off = synth_basin(shifted);
    CHECK_THROWS_AS((void)merge_basins(a, off), sag::DataError);
}

TEST_CASE("a basin without reservoirs generates and validates") {
    SynthConfig cfg = small_config(41);
    cfg.n_reservoirs = 0;
    const SynthBasin basin = synth_basin(cfg);
    CHECK_NOTHROW(basin.dataset.validate());
    CHECK(basin.dataset.n_reservoirs() == 0);
    CHECK(basin.topology.all_downstream_segments().empty());
    for (int i = 0; i < cfg.n_segments; ++i) {
        for (int t = 0; t < cfg.n_days; ++t) {
            CHECK(basin.truth.true_temp(i, t) ==
                  basin.truth.counterfactual_temp(i, t));
        }
    }
}

TEST_CASE("configuration bounds are enforced") {
    SynthConfig cfg = small_config();
    cfg.n_segments = 1;
    CHECK_THROWS_AS((void)synth_basin(cfg), sag::ConfigError);

    SynthConfig cfg2 = small_config();
    cfg2.n_reservoirs = 7;  // more than the interior edges of 8 segments
    CHECK_THROWS_AS((void)synth_basin(cfg2), sag::ConfigError);

    SynthConfig cfg3 = small_config();
    cfg3.obs_density_min = 0.9;
    cfg3.obs_density_max = 0.2;
    CHECK_THROWS_AS(cfg3.validate(), sag::ConfigError);

    SynthConfig cfg4 = small_config();
    cfg4.release_threshold_c = 80.0;  // outside the plausible range
    CHECK_THROWS_AS(cfg4.validate(), sag::ConfigError);

    LakeConfig lake;
    lake.max_daily_change_c = 0.0;
    CHECK_THROWS_AS(lake.validate(), sag::ConfigError);
}

TEST_CASE("the latent truth serializes beside the dataset") {
    const SynthBasin basin = synth_basin(small_config(55));
    const auto path =
        std::filesystem::temp_directory_path() / "sag_test_truth.csv";
    save_truth_csv(path, basin.truth, basin.dataset.calendar);
    sag::CsvTable table = sag::read_csv(path);
    CHECK(table.header ==
          std::vector<std::string>{"segment_id", "date", "true_temp_c",
                                   "counterfactual_temp_c"});
    CHECK(table.rows.size() ==
          static_cast<std::size_t>(8) * basin.dataset.n_days());
    CHECK(table.rows.front()[1] == basin.dataset.calendar.front().iso());
    std::filesystem::remove(path);
}
