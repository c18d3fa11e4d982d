#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "sag/dataset.hpp"
#include "sag/dates.hpp"
#include "sag/errors.hpp"
#include "sag/graph.hpp"

using sag::Array3;
using sag::BasinDataset;
using sag::Date;
using sag::DirectEdge;
using sag::EdgeClass;
using sag::NetworkTopology;
using sag::NodeId;
using sag::Tensor;

namespace {

/// 2 segments feeding through 1 reservoir, 4 days, 3 features, 2 layers.
struct Fixture {
    NetworkTopology topo = NetworkTopology::build(
        2, 1,
        {{NodeId::segment(0), NodeId::reservoir(0), EdgeClass::kSegToRes,
          1500.0},
         {NodeId::reservoir(0), NodeId::segment(1), EdgeClass::kResToSeg,
          2500.0}});
    BasinDataset data;

    Fixture() {
        const Date start = Date::from_iso("2001-03-01");
        for (int t = 0; t < 4; ++t) data.calendar.push_back(start.plus_days(t));
        data.drivers = Array3(2, 4, 3);
        for (int i = 0; i < 2; ++i) {
            for (int t = 0; t < 4; ++t) {
                data.drivers(i, t, 0) = 10.0 + i + 0.5 * t;
                data.drivers(i, t, 1) = -1.0 + 0.25 * t * i;
                data.drivers(i, t, 2) = 7.0;  // constant: zero variance
            }
        }
        data.observations = {{0, 0, 5.5}, {0, 2, 6.25}, {1, 3, 9.0}};
        data.reservoir_meta = Tensor(1, 5);
        for (int f = 0; f < 5; ++f) data.reservoir_meta(0, f) = 40.0 + 3.0 * f;
        data.release_flows = Array3(1, 4, 2);
        data.depth_temps = Array3(1, 4, 2);
        for (int t = 0; t < 4; ++t) {
            data.release_flows(0, t, 0) = 12.0 + t;
            data.release_flows(0, t, 1) = 0.5 * t;
            data.depth_temps(0, t, 0) = 14.0 - t;
            data.depth_temps(0, t, 1) = 6.0 + 0.1 * t;
        }
        data.has_release_data = {1};
    }
};

}  // namespace

TEST_CASE("the fixture passes validation and day_index works") {
    Fixture fx;
    CHECK_NOTHROW(fx.data.validate());
    CHECK(fx.data.n_segments() == 2);
    CHECK(fx.data.n_reservoirs() == 1);
    CHECK(fx.data.n_layers() == 2);
    CHECK(fx.data.day_index(Date::from_iso("2001-03-03")) == 2);
    CHECK(fx.data.day_index(Date::from_iso("2001-02-28")) == -1);
    CHECK(fx.data.day_index(Date::from_iso("2001-03-05")) == -1);
}

TEST_CASE("validation rejects each structural defect") {
    SUBCASE("calendar gap") {
        Fixture fx;
        fx.data.calendar[2] = fx.data.calendar[2].plus_days(3);
        CHECK_THROWS_AS(fx.data.validate(), sag::CalendarGap);
    }
    SUBCASE("observation outside the dataset") {
        Fixture fx;
        fx.data.observations.push_back({7, 0, 5.0});
        CHECK_THROWS_AS(fx.data.validate(), sag::OrphanObservation);
    }
    SUBCASE("observation on a day outside the calendar") {
        Fixture fx;
        fx.data.observations.push_back({0, 99, 5.0});
        CHECK_THROWS_AS(fx.data.validate(), sag::OrphanObservation);
    }
    SUBCASE("implausible observation temperature") {
        Fixture fx;
        fx.data.observations.push_back({0, 1, 60.0});
        CHECK_THROWS_AS(fx.data.validate(), sag::DataError);
    }
    SUBCASE("non-finite driver") {
        Fixture fx;
        fx.data.drivers(1, 2, 0) = std::nan("");
        CHECK_THROWS_AS(fx.data.validate(), sag::DataError);
    }
    SUBCASE("negative release flow") {
        Fixture fx;
        fx.data.release_flows(0, 1, 0) = -3.0;
        CHECK_THROWS_AS(fx.data.validate(), sag::DataError);
    }
    SUBCASE("implausible depth temperature") {
        Fixture fx;
        fx.data.depth_temps(0, 1, 1) = 99.0;
        CHECK_THROWS_AS(fx.data.validate(), sag::DataError);
    }
    SUBCASE("flagged reservoir with empty series") {
        Fixture fx;
        fx.data.release_flows = Array3(1, 4, 0);
        fx.data.depth_temps = Array3(1, 4, 0);
        CHECK_THROWS_AS(fx.data.validate(), sag::PartialReleaseData);
    }
    SUBCASE("flow and profile shapes disagree") {
        Fixture fx;
        fx.data.depth_temps = Array3(1, 4, 1);
        CHECK_THROWS_AS(fx.data.validate(), sag::PartialReleaseData);
    }
    SUBCASE("availability flags sized wrong") {
        Fixture fx;
        fx.data.has_release_data = {1, 0};
        CHECK_THROWS_AS(fx.data.validate(), sag::DataError);
    }
}

TEST_CASE("a dataset survives the directory round trip") {
    Fixture fx;
    const auto dir =
        std::filesystem::temp_directory_path() / "sag_test_dataset_roundtrip";
    std::filesystem::remove_all(dir);
    save_dataset(dir, fx.topo, fx.data);

    const sag::LoadedBasin loaded = sag::load_dataset(dir);
    const BasinDataset& got = loaded.dataset;
    CHECK(got.n_segments() == 2);
    CHECK(got.n_days() == 4);
    CHECK(got.n_features() == 3);
    CHECK(got.n_reservoirs() == 1);
    CHECK(got.n_layers() == 2);
    CHECK(got.calendar.front() == Date::from_iso("2001-03-01"));
    for (int i = 0; i < 2; ++i) {
        for (int t = 0; t < 4; ++t) {
            for (int f = 0; f < 3; ++f) {
                CHECK(got.drivers(i, t, f) ==
                      doctest::Approx(fx.data.drivers(i, t, f)));
            }
        }
    }
    REQUIRE(got.observations.size() == 3);
    CHECK(got.observations[1].segment == 0);
    CHECK(got.observations[1].day == 2);
    CHECK(got.observations[1].temp_c == doctest::Approx(6.25));
    CHECK(got.has_release_data == std::vector<std::uint8_t>{1});
    for (int t = 0; t < 4; ++t) {
        for (int d = 0; d < 2; ++d) {
            CHECK(got.release_flows(0, t, d) ==
                  doctest::Approx(fx.data.release_flows(0, t, d)));
            CHECK(got.depth_temps(0, t, d) ==
                  doctest::Approx(fx.data.depth_temps(0, t, d)));
        }
    }
    CHECK(loaded.topology.direct_edges().size() == 2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("a dataset without operation data omits the operation files") {
    Fixture fx;
    fx.data.has_release_data = {0};
    const auto dir =
        std::filesystem::temp_directory_path() / "sag_test_dataset_no_release";
    std::filesystem::remove_all(dir);
    save_dataset(dir, fx.topo, fx.data);
    CHECK_FALSE(std::filesystem::exists(dir / "release.csv"));
    CHECK_FALSE(std::filesystem::exists(dir / "profiles.csv"));

    const sag::LoadedBasin loaded = sag::load_dataset(dir);
    CHECK(loaded.dataset.has_release_data == std::vector<std::uint8_t>{0});
    CHECK(loaded.dataset.n_layers() == 0);
    std::filesystem::remove_all(dir);

    CHECK_THROWS_AS((void)sag::load_dataset(dir / "missing"), sag::IoError);
}

TEST_CASE("operation files must come as a pair") {
    Fixture fx;
    const auto dir =
        std::filesystem::temp_directory_path() / "sag_test_dataset_halfpair";
    std::filesystem::remove_all(dir);
    save_dataset(dir, fx.topo, fx.data);
    std::filesystem::remove(dir / "profiles.csv");
    CHECK_THROWS_AS((void)sag::load_dataset(dir), sag::PartialReleaseData);
    std::filesystem::remove_all(dir);
}

TEST_CASE("driver standardization uses train statistics only") {
    Fixture fx;
    const sag::StandardizedBasin std_basin =
        standardize_drivers(fx.data, 0, 2);

    // Feature 0 train values: 10, 10.5 (segment 0), 11, 11.5 (segment 1).
    const double mean = (10.0 + 10.5 + 11.0 + 11.5) / 4.0;
    double var = 0.0;
    for (double v : {10.0, 10.5, 11.0, 11.5}) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / 4.0);
    CHECK(std_basin.stats.mean[0] == doctest::Approx(mean));
    CHECK(std_basin.stats.stddev[0] == doctest::Approx(sd));

    // Applied across the whole calendar, including days outside the range.
    for (int i = 0; i < 2; ++i) {
        for (int t = 0; t < 4; ++t) {
            CHECK(std_basin.data.drivers(i, t, 0) ==
                  doctest::Approx((fx.data.drivers(i, t, 0) - mean) / sd));
        }
    }

    // The constant feature is reported and falls back to unit scale.
    CHECK(std_basin.zero_variance_features == std::vector<int>{2});
    CHECK(std_basin.stats.stddev[2] == 1.0);
    CHECK(std_basin.data.drivers(0, 3, 2) == doctest::Approx(0.0));

    // Re-applying the stored stats reproduces the standardized values.
    const BasinDataset reapplied = apply_driver_stats(fx.data, std_basin.stats);
    for (int i = 0; i < 2; ++i) {
        for (int t = 0; t < 4; ++t) {
            for (int f = 0; f < 3; ++f) {
                CHECK(reapplied.drivers(i, t, f) ==
                      doctest::Approx(std_basin.data.drivers(i, t, f)));
            }
        }
    }

    CHECK_THROWS_AS((void)standardize_drivers(fx.data, 2, 2), sag::ConfigError);
    CHECK_THROWS_AS((void)standardize_drivers(fx.data, 0, 99),
                    sag::ConfigError);
}

TEST_CASE("reservoir attributes are standardized per column") {
    Tensor meta(3, 5);
    for (int k = 0; k < 3; ++k) {
        for (int f = 0; f < 5; ++f) {
            meta(k, f) = (f == 4) ? 900.0 : 10.0 * (k + 1) + f;
        }
    }
    const Tensor out = sag::standardize_reservoir_meta(meta);
    for (int f = 0; f < 4; ++f) {
        double mean = 0.0;
        for (int k = 0; k < 3; ++k) mean += out(k, f);
        CHECK(mean == doctest::Approx(0.0));
        double var = 0.0;
        for (int k = 0; k < 3; ++k) var += out(k, f) * out(k, f);
        CHECK(var / 3.0 == doctest::Approx(1.0));
    }
    // The constant column (and any single-reservoir column) maps to zeros.
    for (int k = 0; k < 3; ++k) CHECK(out(k, 4) == 0.0);
    const Tensor single = sag::standardize_reservoir_meta(Tensor(1, 5, 123.0));
    for (std::size_t i = 0; i < single.size(); ++i) CHECK(single[i] == 0.0);
}

TEST_CASE("operation reads are counted through dataset copies") {
    Fixture fx;
    CHECK(fx.data.access->flow_reads.load() == 0);
    (void)fx.data.release_flow(0, 1, 0);
    (void)fx.data.release_flow(0, 2, 1);
    (void)fx.data.depth_temp(0, 0, 0);
    CHECK(fx.data.access->flow_reads.load() == 2);
    CHECK(fx.data.access->profile_reads.load() == 1);

    // Standardization returns a copy that shares the same counters.
    const sag::StandardizedBasin sb = standardize_drivers(fx.data, 0, 3);
    (void)sb.data.release_flow(0, 0, 0);
    CHECK(fx.data.access->flow_reads.load() == 3);
}
