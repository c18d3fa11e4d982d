#include "sag/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <thread>
#include <utility>

#include "sag/baseline.hpp"
#include "sag/csv.hpp"
#include "sag/errors.hpp"

namespace sag {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::kRnn: return "RNN";
        case Variant::kSagPp: return "SAG-pp";
        case Variant::kSagFlow: return "SAG-flow";
        case Variant::kSagSim: return "SAG-sim";
        case Variant::kSagPpx: return "SAG-ppX";
    }
    throw ConfigError("unknown variant enum value");
}

Variant variant_from_name(const std::string& name) {
    for (Variant v : {Variant::kRnn, Variant::kSagPp, Variant::kSagFlow,
                      Variant::kSagSim, Variant::kSagPpx}) {
        if (variant_name(v) == name) return v;
    }
    throw ConfigError("unknown variant '" + name +
                      "' (expected RNN, SAG-pp, SAG-flow, SAG-sim or SAG-ppX)");
}

ReleaseAssignment assignment_for_variant(Variant v, const BasinDataset& data) {
    const int m = data.n_reservoirs();
    switch (v) {
        case Variant::kRnn:
        case Variant::kSagPp:
            return ReleaseAssignment::all_forecast(m);
        case Variant::kSagFlow:
        case Variant::kSagSim:
            for (int k = 0; k < m; ++k) {
                if (!data.has_release_data[k]) {
                    throw DataError(variant_name(v) + " needs operation "
                                    "records for every reservoir; reservoir " +
                                    std::to_string(k) + " has none");
                }
            }
            return ReleaseAssignment::all_data(m);
        case Variant::kSagPpx: {
            ReleaseAssignment a;
            a.use_data.assign(data.has_release_data.begin(),
                              data.has_release_data.end());
            return a;
        }
    }
    throw ConfigError("unknown variant enum value");
}

SagConfig config_for_variant(Variant v, const BasinDataset& data,
                             int hidden_dim) {
    SagConfig c;
    c.hidden_dim = hidden_dim;
    c.input_dim = data.n_features();
    c.meta_dim = static_cast<int>(data.reservoir_meta.cols());
    if (c.meta_dim == 0) c.meta_dim = 5;
    c.release_layers = std::max(1, data.n_layers());
    c.use_flow_temperature = (v != Variant::kSagFlow);
    c.validate();
    return c;
}

EvalReport score_predictions(const std::string& variant, std::uint64_t seed,
                             const Tensor& predictions,
                             const ObservationGrid& grid, IndexRange days,
                             const std::vector<int>& downstream) {
    if (!predictions.same_shape(grid.mask)) {
        throw ShapeMismatch("score_predictions: predictions are " +
                            predictions.shape_str() + ", observations are " +
                            grid.mask.shape_str());
    }
    const int n = static_cast<int>(predictions.rows());
    std::vector<bool> is_dn(n, false);
    for (int i : downstream) is_dn[i] = true;

    EvalReport report;
    report.variant = variant;
    report.seed = seed;
    double sse_all = 0.0, sse_dn = 0.0;
    std::vector<double> sse_seg(n, 0.0);
    std::vector<int> n_seg(n, 0);
    for (int i = 0; i < n; ++i) {
        for (int t = days.begin; t < days.end; ++t) {
            if (!grid.observed(i, t)) continue;
            const double err = predictions(i, t) - grid.values(i, t);
            sse_seg[i] += err * err;
            ++n_seg[i];
        }
        sse_all += sse_seg[i];
        report.overall.n_obs += n_seg[i];
        if (is_dn[i]) {
            sse_dn += sse_seg[i];
            report.downstream.n_obs += n_seg[i];
        }
    }
    if (report.overall.n_obs == 0) {
        throw DataError("score_predictions: no observations in the scored "
                        "period");
    }
    report.overall.rmse = std::sqrt(sse_all / report.overall.n_obs);
    if (report.downstream.n_obs > 0) {
        report.downstream.rmse = std::sqrt(sse_dn / report.downstream.n_obs);
    }
    for (int i = 0; i < n; ++i) {
        if (n_seg[i] <= kMinSegmentObs) continue;
        report.segments.push_back({i, std::sqrt(sse_seg[i] / n_seg[i]),
                                   n_seg[i]});
    }
    return report;
}

void verify_access_isolation(Variant v, const ReleaseAssignment& assignment,
                             std::uint64_t flow_reads,
                             std::uint64_t profile_reads) {
    const bool any_data = assignment.data_count() > 0;
    bool may_flow = false, may_profile = false;
    switch (v) {
        case Variant::kRnn:
        case Variant::kSagPp:
            break;
        case Variant::kSagFlow:
            may_flow = any_data;
            break;
        case Variant::kSagSim:
        case Variant::kSagPpx:
            may_flow = any_data;
            may_profile = any_data;
            break;
    }
    if (!may_flow && flow_reads > 0) {
        throw Error(variant_name(v) + " read release flows " +
                    std::to_string(flow_reads) + " times; it must not");
    }
    if (!may_profile && profile_reads > 0) {
        throw Error(variant_name(v) + " read depth temperatures " +
                    std::to_string(profile_reads) + " times; it must not");
    }
    if (may_flow && flow_reads == 0) {
        throw Error(variant_name(v) + " never read release flows; its "
                    "embedding path cannot have run");
    }
    if (may_profile && profile_reads == 0) {
        throw Error(variant_name(v) + " never read depth temperatures; its "
                    "embedding path cannot have run");
    }
}

RunResult run_single(Variant v, const LoadedBasin& basin,
                     const TrainConfig& base_config, std::uint64_t seed,
                     int hidden_dim) {
    TrainConfig tc = base_config;
    tc.seed = seed;
    tc.validate();

    const auto [train_days, test_days] =
        chronological_split(basin.dataset.n_days(), tc.train_fraction);
    StandardizedBasin stdz =
        standardize_drivers(basin.dataset, train_days.begin, train_days.end);
    BasinDataset data = std::move(stdz.data);
    // Fresh counters: this run's reads only, shared with nobody.
    data.access = std::make_shared<ReleaseAccessCounters>();

    const ReleaseAssignment assignment = assignment_for_variant(v, data);
    const SagConfig mc = config_for_variant(v, data, hidden_dim);

    RunResult out;
    out.checkpoint.variant = variant_name(v);
    out.checkpoint.seed = seed;
    out.checkpoint.model_config = mc;
    out.checkpoint.train_config = tc;
    out.checkpoint.driver_stats = stdz.stats;

    Tensor preds;
    if (v == Variant::kRnn) {
        LstmTrainResult r = train_lstm_baseline(data, tc, hidden_dim);
        out.history = std::move(r.history);
        preds = lstm_predict_series(r.params, data, hidden_dim);
        out.checkpoint.main_params =
            snapshot_params(std::as_const(r.params).all());
    } else {
        const AdjacencyMatrix adj = compute_adjacency(basin.topology);
        ForecasterResult fr;
        const ForecasterCache* cache = nullptr;
        if (assignment.forecast_count() > 0) {
            fr = train_forecaster(data, basin.topology, adj, mc, tc);
            cache = &fr.cache;
            out.history = fr.history;
            out.checkpoint.forecaster_params =
                snapshot_params(std::as_const(fr.params).all());
        }
        SagTrainResult mr =
            train_sag(data, basin.topology, adj, mc, tc, assignment, cache);
        out.history.insert(out.history.end(), mr.history.begin(),
                           mr.history.end());
        out.zero_flow_days = mr.zero_flow_days;
        out.checkpoint.use_data_release = assignment.use_data;
        out.checkpoint.main_params =
            snapshot_params(std::as_const(mr.params).all());

        SagCell cell(mc, basin.topology, adj,
                     standardize_reservoir_meta(data.reservoir_meta));
        preds = predict_series(cell, mr.params, data, CellMode::kMain,
                               &assignment, cache);
    }

    verify_access_isolation(
        v, assignment, data.access->flow_reads.load(std::memory_order_relaxed),
        data.access->profile_reads.load(std::memory_order_relaxed));

    const ObservationGrid grid = ObservationGrid::from(data);
    out.report =
        score_predictions(variant_name(v), seed, preds, grid, test_days,
                          basin.topology.all_downstream_segments());
    return out;
}

namespace {

std::size_t worker_count(std::size_t jobs) {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SAG_THREADS")) {
        int parsed = 0;
        const auto [ptr, ec] =
            std::from_chars(env, env + std::string_view(env).size(), parsed);
        if (ec != std::errc() || *ptr != '\0' || parsed < 1) {
            throw ConfigError("SAG_THREADS must be a positive integer, got '" +
                              std::string(env) + "'");
        }
        n = static_cast<std::size_t>(parsed);
    }
    return std::min(n, std::max<std::size_t>(jobs, 1));
}

}  // namespace

std::vector<RunResult> run_experiment(const LoadedBasin& basin,
                                      const std::vector<Variant>& variants,
                                      const std::vector<std::uint64_t>& seeds,
                                      const TrainConfig& base_config,
                                      int hidden_dim) {
    if (variants.empty() || seeds.empty()) {
        throw ConfigError("experiment needs at least one variant and one seed");
    }
    struct Job {
        Variant variant;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (Variant v : variants) {
        for (std::uint64_t s : seeds) jobs.push_back({v, s});
    }
    std::vector<RunResult> results(jobs.size());
    std::vector<std::exception_ptr> failures(jobs.size());
    std::atomic<std::size_t> next{0};

    auto work = [&] {
        while (true) {
            const std::size_t j = next.fetch_add(1);
            if (j >= jobs.size()) return;
            try {
                results[j] = run_single(jobs[j].variant, basin, base_config,
                                        jobs[j].seed, hidden_dim);
            } catch (...) {
                failures[j] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t workers = worker_count(jobs.size());
    for (std::size_t w = 0; w + 1 < workers; ++w) pool.emplace_back(work);
    work();
    for (std::thread& t : pool) t.join();

    for (const std::exception_ptr& e : failures) {
        if (e) std::rethrow_exception(e);
    }
    return results;
}

void save_report_csv(const std::filesystem::path& path,
                     const std::vector<EvalReport>& reports) {
    CsvWriter out(path,
                  {"variant", "seed", "scope", "segment_id", "rmse", "n_obs"});
    for (const EvalReport& r : reports) {
        const std::string seed = std::to_string(r.seed);
        out.row({r.variant, seed, "overall", "", fmt_double(r.overall.rmse),
                 std::to_string(r.overall.n_obs)});
        if (r.downstream.n_obs > 0) {
            out.row({r.variant, seed, "downstream", "",
                     fmt_double(r.downstream.rmse),
                     std::to_string(r.downstream.n_obs)});
        }
        for (const SegmentScore& s : r.segments) {
            out.row({r.variant, seed, "segment", std::to_string(s.segment),
                     fmt_double(s.rmse), std::to_string(s.n_obs)});
        }
    }
    out.close();
}

void save_report_summary_csv(const std::filesystem::path& path,
                             const std::vector<EvalReport>& reports) {
    CsvWriter out(path, {"variant", "scope", "mean_rmse", "std_rmse"});
    std::vector<std::string> order;
    for (const EvalReport& r : reports) {
        if (std::find(order.begin(), order.end(), r.variant) == order.end()) {
            order.push_back(r.variant);
        }
    }
    for (const std::string& variant : order) {
        for (const char* scope : {"overall", "downstream"}) {
            std::vector<double> values;
            for (const EvalReport& r : reports) {
                if (r.variant != variant) continue;
                if (scope == std::string("overall")) {
                    values.push_back(r.overall.rmse);
                } else if (r.downstream.n_obs > 0) {
                    values.push_back(r.downstream.rmse);
                }
            }
            if (values.empty()) continue;
            double mean = 0.0;
            for (double x : values) mean += x;
            mean /= static_cast<double>(values.size());
            double var = 0.0;
            for (double x : values) var += (x - mean) * (x - mean);
            var /= static_cast<double>(values.size());
            out.row({variant, scope, fmt_double(mean),
                     fmt_double(std::sqrt(var))});
        }
    }
    out.close();
}

}  // namespace sag
