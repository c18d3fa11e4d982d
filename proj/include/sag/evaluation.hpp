#ifndef SAG_EVALUATION_HPP
#define SAG_EVALUATION_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sag/checkpoint.hpp"
#include "sag/dataset.hpp"
#include "sag/training.hpp"

namespace sag {

/**
 * The trained model families compared against each other.
 *
 *  - kRnn:     plain LSTM over all segments jointly, blind to the network
 *              structure and to every reservoir input.
 *  - kSagPp:   graph model, every reservoir embedded from the frozen
 *              forecaster (no operation records touched).
 *  - kSagFlow: graph model, every reservoir embedded from its release flows
 *              only (depth temperatures never read).
 *  - kSagSim:  graph model, release flows plus the flow-averaged simulated
 *              depth temperature.
 *  - kSagPpx:  mixed: reservoirs with operation records use them, the rest
 *              fall back to the forecaster embedding.
 */
enum class Variant { kRnn, kSagPp, kSagFlow, kSagSim, kSagPpx };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);  ///< ConfigError

/// Which reservoirs a variant drives from operation records.  Throws
/// DataError when the dataset cannot satisfy the variant's requirements.
ReleaseAssignment assignment_for_variant(Variant v, const BasinDataset& data);

/// Model dimensions implied by a dataset and variant (flow-only variants
/// drop the temperature component of the data embedding).
SagConfig config_for_variant(Variant v, const BasinDataset& data,
                             int hidden_dim);

/// RMSE and the observation count behind it.
struct Score {
    double rmse = 0.0;
    int n_obs = 0;
};

/// Per-segment test error; segments with too few observations are dropped.
struct SegmentScore {
    int segment = 0;
    double rmse = 0.0;
    int n_obs = 0;
};

/// Test-period errors of one trained model.
struct EvalReport {
    std::string variant;
    std::uint64_t seed = 0;
    Score overall;
    Score downstream;  ///< restricted to segments below some reservoir
    std::vector<SegmentScore> segments;
};

/// Only segments with more than this many test observations get their own
/// row in reports; aggregate scopes always count everything.
inline constexpr int kMinSegmentObs = 5;

/**
 * Score dense predictions against observations over `days`.  `downstream`
 * lists the segments counted in the downstream scope.
 */
EvalReport score_predictions(const std::string& variant, std::uint64_t seed,
                             const Tensor& predictions,
                             const ObservationGrid& grid, IndexRange days,
                             const std::vector<int>& downstream);

/// Everything produced by one train-and-evaluate run.
struct RunResult {
    EvalReport report;
    Checkpoint checkpoint;
    std::vector<EpochRecord> history;
    int zero_flow_days = 0;
};

/**
 * One complete run: split, standardize, train (two stages when the variant
 * needs the forecaster), predict, score the test period.  Each run draws
 * from its own seeded streams and its own access counters; afterwards the
 * counters are checked against the variant's declared data reach, so a
 * variant quietly reading tables it must not see fails loudly.
 */
RunResult run_single(Variant v, const LoadedBasin& basin,
                     const TrainConfig& base_config, std::uint64_t seed,
                     int hidden_dim);

/// Throws Error when read counters contradict the variant's data contract.
void verify_access_isolation(Variant v, const ReleaseAssignment& assignment,
                             std::uint64_t flow_reads,
                             std::uint64_t profile_reads);

/**
 * The variant x seed matrix, parallel across runs.  The SAG_THREADS
 * environment variable caps worker count (default: hardware concurrency).
 * Reports come back in variant-major, seed-minor order regardless of
 * scheduling; aggregation stays single-threaded.
 */
std::vector<RunResult> run_experiment(const LoadedBasin& basin,
                                      const std::vector<Variant>& variants,
                                      const std::vector<std::uint64_t>& seeds,
                                      const TrainConfig& base_config,
                                      int hidden_dim);

/// Rows: variant,seed,scope,segment_id,rmse,n_obs.  Aggregate scopes leave
/// segment_id empty; the downstream scope appears only when it has data.
void save_report_csv(const std::filesystem::path& path,
                     const std::vector<EvalReport>& reports);

/// Mean and population standard deviation over seeds, per variant and scope.
void save_report_summary_csv(const std::filesystem::path& path,
                             const std::vector<EvalReport>& reports);

}  // namespace sag

#endif  // SAG_EVALUATION_HPP
