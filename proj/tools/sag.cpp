// Command-line front end: dataset generation, training, evaluation, the
// finite-difference gradient check, and multi-seed experiments.
//
// stdout carries only each command's documented report (currently just the
// gradcheck summary); everything else lands in files under --out.  Progress
// notes go to stderr.  Exit codes: 0 success, 1 internal failure or a failed
// gradient check, 2 configuration, 3 I/O, 4 data, 5 numeric.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sag/baseline.hpp"
#include "sag/checkpoint.hpp"
#include "sag/csv.hpp"
#include "sag/dataset.hpp"
#include "sag/diagnostics.hpp"
#include "sag/errors.hpp"
#include "sag/evaluation.hpp"
#include "sag/graph.hpp"
#include "sag/model.hpp"
#include "sag/runconfig.hpp"
#include "sag/synth.hpp"
#include "sag/training.hpp"

namespace {

namespace fs = std::filesystem;

struct CommonOpts {
    std::string config_file;
    std::vector<std::string> overrides;
};

sag::RunConfig resolve_config(const CommonOpts& opts) {
    sag::RunConfig rc;
    if (!opts.config_file.empty()) {
        rc = sag::load_run_config(opts.config_file);
    }
    for (const std::string& entry : opts.overrides) {
        const auto eq = entry.find('=');
        if (eq == std::string::npos) {
            throw sag::ConfigError("--set expects key=value, got '" + entry +
                                   "'");
        }
        sag::apply_run_config_entry(rc, entry.substr(0, eq),
                                    entry.substr(eq + 1));
    }
    return rc;
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw sag::IoError("cannot create output directory " + dir + ": " +
                           ec.message());
    }
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto comma = text.find(',', pos);
        const std::string part =
            text.substr(pos, comma == std::string::npos ? std::string::npos
                                                        : comma - pos);
        if (part.empty()) {
            throw sag::ConfigError("--seeds: empty entry in '" + text + "'");
        }
        try {
            std::size_t used = 0;
            seeds.push_back(std::stoull(part, &used));
            if (used != part.size()) throw std::invalid_argument(part);
        } catch (const std::exception&) {
            throw sag::ConfigError("--seeds: cannot parse '" + part + "'");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return seeds;
}

std::vector<sag::Variant> parse_variant_list(const std::string& text) {
    std::vector<sag::Variant> variants;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto comma = text.find(',', pos);
        const std::string part =
            text.substr(pos, comma == std::string::npos ? std::string::npos
                                                        : comma - pos);
        variants.push_back(sag::variant_from_name(part));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return variants;
}

int cmd_synth(const CommonOpts& opts, const std::string& out_dir, bool joint) {
    sag::RunConfig rc = resolve_config(opts);
    ensure_out_dir(out_dir);

    sag::SynthBasin basin = sag::synth_basin(rc.synth);
    if (joint) {
        // Second network: same calendar, fresh seed, operation records
        // withheld — the layout the mixed-embedding variant trains on.
        sag::SynthConfig second = rc.synth;
        second.seed = rc.synth.seed + 1;
        sag::SynthBasin other = sag::synth_basin(second);
        sag::strip_release_data(other.dataset);
        basin = sag::merge_basins(basin, other);
    }
    sag::save_dataset(out_dir, basin.topology, basin.dataset);
    sag::save_truth_csv(fs::path(out_dir) / "truth.csv", basin.truth,
                        basin.dataset.calendar);
    sag::save_run_config(fs::path(out_dir) / "config_resolved.txt", rc);
    std::cerr << "synth: " << basin.dataset.n_segments() << " segments, "
              << basin.dataset.n_reservoirs() << " reservoirs, "
              << basin.dataset.n_days() << " days, "
              << basin.dataset.observations.size() << " observations -> "
              << out_dir << "\n";
    return 0;
}

int cmd_train(const CommonOpts& opts, const std::string& data_dir,
              const std::string& out_dir) {
    sag::RunConfig rc = resolve_config(opts);
    ensure_out_dir(out_dir);

    const sag::LoadedBasin basin = sag::load_dataset(data_dir);
    const sag::Variant variant = sag::variant_from_name(rc.variant);
    sag::RunResult run = sag::run_single(variant, basin, rc.train,
                                         rc.train.seed, rc.hidden_dim);
    sag::save_checkpoint(fs::path(out_dir) / "checkpoint.json", run.checkpoint);
    sag::save_history_csv(fs::path(out_dir) / "history.csv", run.history);
    sag::save_run_config(fs::path(out_dir) / "config_resolved.txt", rc);
    std::cerr << "train: " << rc.variant << " seed " << rc.train.seed
              << ", final loss "
              << (run.history.empty() ? 0.0 : run.history.back().train_loss)
              << " -> " << out_dir << "\n";
    return 0;
}

int cmd_eval(const std::string& data_dir, const std::string& checkpoint_path,
             const std::string& out_dir) {
    ensure_out_dir(out_dir);
    const sag::Checkpoint ck = sag::load_checkpoint(checkpoint_path);
    const sag::Variant variant = sag::variant_from_name(ck.variant);
    const sag::LoadedBasin basin = sag::load_dataset(data_dir);

    sag::BasinDataset data =
        sag::apply_driver_stats(basin.dataset, ck.driver_stats);
    const auto [train_days, test_days] = sag::chronological_split(
        data.n_days(), ck.train_config.train_fraction);

    sag::Tensor preds;
    if (variant == sag::Variant::kRnn) {
        sag::Rng rng(1);
        sag::LstmParams params = sag::LstmParams::init(
            ck.model_config.hidden_dim, ck.model_config.input_dim, rng);
        sag::restore_params(params.all(), ck.main_params);
        preds = sag::lstm_predict_series(params, data,
                                         ck.model_config.hidden_dim);
    } else {
        sag::ReleaseAssignment assignment;
        assignment.use_data = ck.use_data_release;
        if (assignment.n_reservoirs() != data.n_reservoirs()) {
            throw sag::DataError(
                "checkpoint covers " +
                std::to_string(assignment.n_reservoirs()) +
                " reservoirs, dataset has " +
                std::to_string(data.n_reservoirs()));
        }
        const sag::AdjacencyMatrix adj = sag::compute_adjacency(basin.topology);
        sag::SagCell cell(ck.model_config, basin.topology, adj,
                          sag::standardize_reservoir_meta(data.reservoir_meta));
        sag::Rng rng(1);
        sag::SagParams params = sag::SagParams::init(ck.model_config, rng);
        sag::restore_params(params.all(), ck.main_params);

        sag::ForecasterCache cache;
        const sag::ForecasterCache* cache_ptr = nullptr;
        if (assignment.forecast_count() > 0) {
            if (ck.forecaster_params.empty()) {
                throw sag::DataError("checkpoint needs forecaster weights for "
                                     "its forecast-driven reservoirs");
            }
            sag::Rng frng(1);
            sag::SagParams fparams =
                sag::SagParams::init(ck.model_config, frng);
            sag::restore_params(fparams.all(), ck.forecaster_params);
            cache = sag::build_forecaster_cache(cell, fparams, data);
            cache_ptr = &cache;
        }
        preds = sag::predict_series(cell, params, data, sag::CellMode::kMain,
                                    &assignment, cache_ptr);
    }

    const sag::ObservationGrid grid = sag::ObservationGrid::from(data);
    const sag::EvalReport report = sag::score_predictions(
        ck.variant, ck.seed, preds, grid, test_days,
        basin.topology.all_downstream_segments());
    sag::save_report_csv(fs::path(out_dir) / "report.csv", {report});
    sag::save_report_summary_csv(fs::path(out_dir) / "report_summary.csv",
                                 {report});
    std::cerr << "eval: " << ck.variant << " overall RMSE "
              << sag::fmt_double(report.overall.rmse) << " over "
              << report.overall.n_obs << " test observations -> " << out_dir
              << "\n";
    return 0;
}

int cmd_gradcheck(double eps, double tolerance) {
    const sag::GradCheckReport report = sag::run_reference_gradcheck(eps);
    for (const sag::GradCheckPass& pass : report.passes) {
        std::cout << pass.label << ": max relative error "
                  << sag::fmt_double(pass.result.max_rel_error) << " (worst: "
                  << pass.result.worst_param << "[" << pass.result.worst_index
                  << "])\n";
    }
    std::cout << "overall max relative error "
              << sag::fmt_double(report.max_rel_error) << ", tolerance "
              << sag::fmt_double(tolerance) << ": "
              << (report.within(tolerance) ? "PASS" : "FAIL") << "\n";
    return report.within(tolerance) ? 0 : 1;
}

int cmd_experiment(const CommonOpts& opts, const std::string& data_dir,
                   const std::string& out_dir, const std::string& variants_csv,
                   const std::string& seeds_csv) {
    sag::RunConfig rc = resolve_config(opts);
    ensure_out_dir(out_dir);
    const std::vector<sag::Variant> variants = parse_variant_list(variants_csv);
    const std::vector<std::uint64_t> seeds = parse_seed_list(seeds_csv);

    const sag::LoadedBasin basin = sag::load_dataset(data_dir);
    const std::vector<sag::RunResult> runs =
        sag::run_experiment(basin, variants, seeds, rc.train, rc.hidden_dim);

    std::vector<sag::EvalReport> reports;
    reports.reserve(runs.size());
    for (const sag::RunResult& r : runs) reports.push_back(r.report);
    sag::save_report_csv(fs::path(out_dir) / "report.csv", reports);
    sag::save_report_summary_csv(fs::path(out_dir) / "report_summary.csv",
                                 reports);
    sag::save_run_config(fs::path(out_dir) / "config_resolved.txt", rc);
    std::cerr << "experiment: " << runs.size() << " runs -> " << out_dir
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"State-aware graph model for stream temperature over "
                 "reservoir-regulated river networks"};
    app.require_subcommand(1);

    CommonOpts common;
    std::string data_dir, out_dir, checkpoint_path;
    std::string variant_flag, seeds_csv = "1,2,3";
    std::string variants_csv = "RNN,SAG-pp,SAG-flow,SAG-sim";
    bool joint = false;
    std::uint64_t seed_flag = 0;
    bool seed_given = false;
    double eps = 1e-5, tolerance = 1e-4;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_file,
                        "run configuration file (key = value lines)");
        sub->add_option("--set", common.overrides,
                        "override one config key, e.g. --set train.epochs=40");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic basin");
    synth->add_option("--out", out_dir, "output dataset directory")
        ->required();
    synth->add_flag("--joint", joint,
                    "append a second network with operation records withheld");
    add_common(synth);

    CLI::App* train = app.add_subcommand("train", "train one model variant");
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--out", out_dir, "output directory")->required();
    train->add_option("--variant", variant_flag,
                      "RNN, SAG-pp, SAG-flow, SAG-sim or SAG-ppX");
    train->add_option("--seed", seed_flag, "training seed")
        ->each([&](const std::string&) { seed_given = true; });
    add_common(train);

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--data", data_dir, "dataset directory")->required();
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")
        ->required();
    eval->add_option("--out", out_dir, "output directory")->required();

    CLI::App* gradcheck = app.add_subcommand(
        "gradcheck", "compare analytic gradients with finite differences");
    gradcheck->add_option("--eps", eps, "finite-difference step");
    gradcheck->add_option("--tolerance", tolerance,
                          "max relative error allowed");

    CLI::App* experiment = app.add_subcommand(
        "experiment", "train and score a variant x seed matrix");
    experiment->add_option("--data", data_dir, "dataset directory")
        ->required();
    experiment->add_option("--out", out_dir, "output directory")->required();
    experiment->add_option("--variants", variants_csv,
                           "comma-separated variant names");
    experiment->add_option("--seeds", seeds_csv, "comma-separated seeds");
    add_common(experiment);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(common, out_dir, joint);
        if (train->parsed()) {
            if (!variant_flag.empty()) {
                common.overrides.push_back("variant=" + variant_flag);
            }
            if (seed_given) {
                common.overrides.push_back("train.seed=" +
                                           std::to_string(seed_flag));
            }
            return cmd_train(common, data_dir, out_dir);
        }
        if (eval->parsed()) {
            return cmd_eval(data_dir, checkpoint_path, out_dir);
        }
        if (gradcheck->parsed()) return cmd_gradcheck(eps, tolerance);
        if (experiment->parsed()) {
            return cmd_experiment(common, data_dir, out_dir, variants_csv,
                                  seeds_csv);
        }
    } catch (const sag::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
