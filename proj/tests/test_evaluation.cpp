#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "sag/csv.hpp"
#include "sag/errors.hpp"
#include "sag/evaluation.hpp"
#include "sag/synth.hpp"

using sag::BasinDataset;
using sag::EvalReport;
using sag::IndexRange;
using sag::ObservationGrid;
using sag::ReleaseAssignment;
using sag::SagConfig;
using sag::Tensor;
using sag::Variant;
using sag::variant_from_name;
using sag::variant_name;

namespace {

/// A dataset whose reservoir flags we can edit freely.
BasinDataset flagged_dataset(std::vector<std::uint8_t> flags) {
    sag::SynthConfig cfg;
    cfg.n_segments = 8;
    cfg.n_reservoirs = static_cast<int>(flags.size());
    cfg.n_days = 30;
    cfg.seed = 5;
    BasinDataset data = synth_basin(cfg).dataset;
    data.has_release_data = std::move(flags);
    return data;
}

}  // namespace

TEST_CASE("variant names round-trip and reject strangers") {
    const std::vector<Variant> all = {Variant::kRnn, Variant::kSagPp,
                                      Variant::kSagFlow, Variant::kSagSim,
                                      Variant::kSagPpx};
    for (Variant v : all) {
        CHECK(variant_from_name(variant_name(v)) == v);
    }
    CHECK(variant_name(Variant::kRnn) == "RNN");
    CHECK(variant_name(Variant::kSagSim) == "SAG-sim");
    CHECK_THROWS_AS((void)variant_from_name("SAG"), sag::ConfigError);
    CHECK_THROWS_AS((void)variant_from_name(""), sag::ConfigError);
}

TEST_CASE("each variant maps to the release assignment it promises") {
    const BasinDataset mixed = flagged_dataset({1, 0});
    const BasinDataset full = flagged_dataset({1, 1});

    // Forecast-only families ignore what the dataset offers.
    for (Variant v : {Variant::kRnn, Variant::kSagPp}) {
        const ReleaseAssignment a = assignment_for_variant(v, mixed);
        CHECK(a.use_data == std::vector<std::uint8_t>{0, 0});
    }
    // Data-only families demand complete records.
    for (Variant v : {Variant::kSagFlow, Variant::kSagSim}) {
        const ReleaseAssignment a = assignment_for_variant(v, full);
        CHECK(a.use_data == std::vector<std::uint8_t>{1, 1});
        CHECK_THROWS_AS((void)assignment_for_variant(v, mixed), sag::DataError);
    }
    // The mixed family takes whatever each reservoir has.
    const ReleaseAssignment a = assignment_for_variant(Variant::kSagPpx, mixed);
    CHECK(a.use_data == std::vector<std::uint8_t>{1, 0});
    CHECK(a.data_count() == 1);
    CHECK(a.forecast_count() == 1);
}

TEST_CASE("model dimensions follow the dataset and the variant") {
    const BasinDataset data = flagged_dataset({1});
    const SagConfig sim = config_for_variant(Variant::kSagSim, data, 12);
    CHECK(sim.hidden_dim == 12);
    CHECK(sim.input_dim == data.n_features());
    CHECK(sim.meta_dim == 5);
    CHECK(sim.release_layers == data.n_layers());
    CHECK(sim.use_flow_temperature);

    const SagConfig flow = config_for_variant(Variant::kSagFlow, data, 12);
    CHECK_FALSE(flow.use_flow_temperature);
    CHECK(flow.release_layers == sim.release_layers);
}

TEST_CASE("scoring separates scopes and drops thin segments") {
    const int n = 3, days = 20;
    const IndexRange test{8, 20};
    Tensor preds(n, days);
    ObservationGrid grid;
    grid.values = Tensor(n, days);
    grid.mask = Tensor(n, days);

    // Segment 0: eight test observations, each off by +1; plus earlier
    // observations with wild errors that must not count.
    for (int t = 8; t <= 15; ++t) {
        grid.mask(0, t) = 1.0;
        grid.values(0, t) = 10.0;
        preds(0, t) = 11.0;
    }
    for (int t = 2; t <= 5; ++t) {
        grid.mask(0, t) = 1.0;
        grid.values(0, t) = 10.0;
        preds(0, t) = 500.0;
    }
    // Segment 1: exactly five test observations — too thin for its own row.
    for (int t = 8; t <= 12; ++t) {
        grid.mask(1, t) = 1.0;
        grid.values(1, t) = 12.0;
        preds(1, t) = 10.0;
    }
    // Segment 2 (downstream scope): six observations, each off by 0.5.
    for (int t = 14; t <= 19; ++t) {
        grid.mask(2, t) = 1.0;
        grid.values(2, t) = 8.0;
        preds(2, t) = 8.5;
    }

    const EvalReport r =
        score_predictions("SAG-sim", 9, preds, grid, test, {2});
    CHECK(r.variant == "SAG-sim");
    CHECK(r.seed == 9);
    CHECK(r.overall.n_obs == 19);
    const double sse = 8.0 * 1.0 + 5.0 * 4.0 + 6.0 * 0.25;
    CHECK(r.overall.rmse == doctest::Approx(std::sqrt(sse / 19.0)));
    CHECK(r.downstream.n_obs == 6);
    CHECK(r.downstream.rmse == doctest::Approx(0.5));
    REQUIRE(r.segments.size() == 2);
    CHECK(r.segments[0].segment == 0);
    CHECK(r.segments[0].rmse == doctest::Approx(1.0));
    CHECK(r.segments[0].n_obs == 8);
    CHECK(r.segments[1].segment == 2);
    CHECK(r.segments[1].rmse == doctest::Approx(0.5));

    SUBCASE("an empty downstream scope stays silent") {
        const EvalReport e =
            score_predictions("RNN", 1, preds, grid, test, {});
        CHECK(e.downstream.n_obs == 0);
        CHECK(e.downstream.rmse == 0.0);
    }
    SUBCASE("a window with no observations is an error") {
        CHECK_THROWS_AS((void)score_predictions("RNN", 1, preds, grid,
                                                IndexRange{6, 8}, {}),
                        sag::DataError);
    }
    SUBCASE("shape disagreements are rejected") {
        CHECK_THROWS_AS((void)score_predictions("RNN", 1, Tensor(n, days - 1),
                                                grid, test, {}),
                        sag::ShapeMismatch);
    }
}

TEST_CASE("access isolation flags both trespassing and dead paths") {
    const ReleaseAssignment none = ReleaseAssignment::all_forecast(2);
    const ReleaseAssignment full = ReleaseAssignment::all_data(2);

    // Forecast-only variants must never touch operation records.
    CHECK_NOTHROW(verify_access_isolation(Variant::kRnn, none, 0, 0));
    CHECK_NOTHROW(verify_access_isolation(Variant::kSagPp, none, 0, 0));
    CHECK_THROWS_AS(verify_access_isolation(Variant::kRnn, none, 3, 0),
                    sag::Error);
    CHECK_THROWS_AS(verify_access_isolation(Variant::kSagPp, none, 0, 2),
                    sag::Error);

    // The flow variant reads flows, never depth temperatures.
    CHECK_NOTHROW(verify_access_isolation(Variant::kSagFlow, full, 40, 0));
    CHECK_THROWS_AS(verify_access_isolation(Variant::kSagFlow, full, 40, 1),
                    sag::Error);
    CHECK_THROWS_AS(verify_access_isolation(Variant::kSagFlow, full, 0, 0),
                    sag::Error);

    // The simulation variant needs both tables; silence means the
    // embedding path never executed.
    CHECK_NOTHROW(verify_access_isolation(Variant::kSagSim, full, 40, 40));
    CHECK_THROWS_AS(verify_access_isolation(Variant::kSagSim, full, 40, 0),
                    sag::Error);
    CHECK_THROWS_AS(verify_access_isolation(Variant::kSagSim, full, 0, 40),
                    sag::Error);

    // Mixed with nothing assigned to data behaves like forecast-only.
    CHECK_NOTHROW(verify_access_isolation(Variant::kSagPpx, none, 0, 0));
    CHECK_THROWS_AS(verify_access_isolation(Variant::kSagPpx, none, 1, 0),
                    sag::Error);
    CHECK_NOTHROW(verify_access_isolation(Variant::kSagPpx, full, 7, 7));
}

TEST_CASE("report CSVs carry every scope with exact aggregation") {
    std::vector<EvalReport> reports(4);
    reports[0].variant = "RNN";
    reports[0].seed = 1;
    reports[0].overall = {2.0, 100};
    reports[1].variant = "RNN";
    reports[1].seed = 2;
    reports[1].overall = {4.0, 100};
    reports[2].variant = "SAG-sim";
    reports[2].seed = 1;
    reports[2].overall = {1.0, 100};
    reports[2].downstream = {0.5, 30};
    reports[2].segments.push_back({3, 0.25, 7});
    reports[3].variant = "SAG-sim";
    reports[3].seed = 2;
    reports[3].overall = {1.0, 100};
    reports[3].downstream = {1.5, 30};

    const auto dir = std::filesystem::temp_directory_path();
    const auto report_path = dir / "sag_test_report.csv";
    const auto summary_path = dir / "sag_test_summary.csv";
    save_report_csv(report_path, reports);
    save_report_summary_csv(summary_path, reports);

    sag::CsvTable rep = sag::read_csv(report_path);
    CHECK(rep.header ==
          std::vector<std::string>{"variant", "seed", "scope", "segment_id",
                                   "rmse", "n_obs"});
    // RNN contributes one row per seed (no downstream scope, no segment
    // rows); SAG-sim seed 1 adds overall + downstream + one segment row,
    // seed 2 adds overall + downstream.
    REQUIRE(rep.rows.size() == 7);
    CHECK(rep.rows[0] ==
          std::vector<std::string>{"RNN", "1", "overall", "", "2", "100"});
    CHECK(rep.rows[1][0] == "RNN");
    CHECK(rep.rows[1][1] == "2");
    CHECK(rep.rows[2][2] == "overall");   // SAG-sim seed 1
    CHECK(rep.rows[3][2] == "downstream");
    CHECK(rep.rows[3][3] == "");
    CHECK(rep.rows[4][2] == "segment");
    CHECK(rep.rows[4][3] == "3");
    CHECK(std::stod(rep.rows[4][4]) == doctest::Approx(0.25));
    CHECK(rep.rows[5][2] == "overall");     // SAG-sim seed 2
    CHECK(rep.rows[6][2] == "downstream");

    sag::CsvTable sum = sag::read_csv(summary_path);
    CHECK(sum.header == std::vector<std::string>{"variant", "scope",
                                                 "mean_rmse", "std_rmse"});
    REQUIRE(sum.rows.size() == 3);  // RNN never saw downstream data
    CHECK(sum.rows[0][0] == "RNN");
    CHECK(sum.rows[0][1] == "overall");
    CHECK(std::stod(sum.rows[0][2]) == doctest::Approx(3.0));
    CHECK(std::stod(sum.rows[0][3]) == doctest::Approx(1.0));  // population
    CHECK(sum.rows[1][0] == "SAG-sim");
    CHECK(std::stod(sum.rows[1][2]) == doctest::Approx(1.0));
    CHECK(std::stod(sum.rows[1][3]) == doctest::Approx(0.0));
    CHECK(sum.rows[2][1] == "downstream");
    CHECK(std::stod(sum.rows[2][2]) == doctest::Approx(1.0));
    CHECK(std::stod(sum.rows[2][3]) == doctest::Approx(0.5));

    std::filesystem::remove(report_path);
    std::filesystem::remove(summary_path);
}

TEST_CASE("single runs train, predict, score and stay inside their lane") {
    sag::SynthConfig cfg;
    cfg.n_segments = 4;
    cfg.n_reservoirs = 1;
    cfg.n_days = 60;
    cfg.seed = 9;
    cfg.obs_density_min = 0.8;
    cfg.obs_density_max = 0.9;
    const sag::SynthBasin basin = synth_basin(cfg);
    const sag::LoadedBasin loaded{basin.topology, basin.dataset};

    sag::TrainConfig tc;
    tc.epochs = 2;
    tc.bptt_window = 20;

    SUBCASE("the baseline never touches reservoir tables") {
        const sag::RunResult r =
            run_single(Variant::kRnn, loaded, tc, 11, 6);
        CHECK(r.report.variant == "RNN");
        CHECK(r.report.seed == 11);
        CHECK(r.report.overall.n_obs > 0);
        CHECK(r.report.overall.rmse > 0.0);
        CHECK(r.history.size() == 2);
        CHECK_FALSE(r.checkpoint.main_params.empty());
        CHECK(r.checkpoint.forecaster_params.empty());
        CHECK(r.checkpoint.variant == "RNN");
    }
    SUBCASE("a data-driven run reads its tables and records the assignment") {
        const sag::RunResult r =
            run_single(Variant::kSagPpx, loaded, tc, 11, 6);
        CHECK(r.report.variant == "SAG-ppX");
        CHECK(r.checkpoint.use_data_release == std::vector<std::uint8_t>{1});
        // All reservoirs have records, so no forecaster stage ran.
        CHECK(r.checkpoint.forecaster_params.empty());
        CHECK(r.history.size() == 2);
        CHECK(r.report.downstream.n_obs > 0);
    }
    SUBCASE("experiments run the variant x seed matrix in declared order") {
        const std::vector<sag::RunResult> grid_results = run_experiment(
            loaded, {Variant::kRnn, Variant::kSagPpx}, {3, 4}, tc, 5);
        REQUIRE(grid_results.size() == 4);
        CHECK(grid_results[0].report.variant == "RNN");
        CHECK(grid_results[0].report.seed == 3);
        CHECK(grid_results[1].report.variant == "RNN");
        CHECK(grid_results[1].report.seed == 4);
        CHECK(grid_results[2].report.variant == "SAG-ppX");
        CHECK(grid_results[2].report.seed == 3);
        CHECK(grid_results[3].report.seed == 4);
    }
    SUBCASE("worker count rejects a malformed SAG_THREADS") {
        ::setenv("SAG_THREADS", "many", 1);
        CHECK_THROWS_AS((void)run_experiment(loaded, {Variant::kRnn}, {1}, tc,
                                             4),
                        sag::ConfigError);
        ::setenv("SAG_THREADS", "0", 1);
        CHECK_THROWS_AS((void)run_experiment(loaded, {Variant::kRnn}, {1}, tc,
                                             4),
                        sag::ConfigError);
        ::unsetenv("SAG_THREADS");
    }
    SUBCASE("an empty experiment is refused") {
        CHECK_THROWS_AS((void)run_experiment(loaded, {}, {1}, tc, 4),
                        sag::ConfigError);
    }
}
