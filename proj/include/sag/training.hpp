#ifndef SAG_TRAINING_HPP
#define SAG_TRAINING_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sag/dataset.hpp"
#include "sag/model.hpp"
#include "sag/tape.hpp"

namespace sag {

/// Optimization hyperparameters shared by every trained model here.
struct TrainConfig {
    double learning_rate = 0.002;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    int epochs = 60;
    int bptt_window = 100;   ///< days recorded per tape before a state cut
    std::uint64_t seed = 1;
    double train_fraction = 2.0 / 3.0;

    void validate() const;
};

/// Half-open day range [begin, end).
struct IndexRange {
    int begin = 0;
    int end = 0;
    int size() const { return end - begin; }
    bool contains(int t) const { return t >= begin && t < end; }
};

/**
 * Chronological split: the first floor(total * fraction) days train, the
 * rest test.  No shuffling, ever — evaluating on the future is the point.
 * Throws TooShort when either side would be empty.
 */
std::pair<IndexRange, IndexRange> chronological_split(int total_days,
                                                      double train_fraction);

/// Sparse observations regridded to dense N x T value and 0/1 mask arrays.
struct ObservationGrid {
    Tensor values;  // N x T, zero where unobserved
    Tensor mask;    // N x T, 1.0 where observed

    static ObservationGrid from(const BasinDataset& data);

    bool observed(int segment, int day) const {
        return mask(segment, day) != 0.0;
    }
    int count_in(IndexRange days) const;
};

/**
 * Mean squared error over masked entries only, recorded on the tape.
 * Unmasked entries are multiplied by exactly zero before the reduction, so
 * they cannot move the loss or any gradient by even one ulp.  Throws
 * EmptyMask when the mask selects nothing.
 */
Var masked_mse(Tape& tape, Var predictions, const Tensor& targets,
               const Tensor& mask);

/**
 * ADAM with bias correction.  One instance owns the moment estimates for a
 * fixed parameter list; step() consumes the accumulated gradients and
 * refuses non-finite ones.
 */
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<Parameter*> params, const TrainConfig& config);

    void step();
    void zero_grads();

private:
    std::vector<Parameter*> params_;
    std::vector<Tensor> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

/// One line of a training history.
struct EpochRecord {
    int epoch = 0;
    std::string stage;
    double train_loss = 0.0;
};

/**
 * Stage one: the release-blind forecaster.
 *
 * Trains the same cell in kForecaster mode on day-ahead pairs — drivers of
 * day t against observations of day t+1 — so its hidden state at day t
 * already reflects tomorrow.  Every segment downstream of any reservoir is
 * excluded from the loss: those temperatures carry the release signal the
 * forecaster must not learn to imitate.  The result is frozen; downstream
 * consumers only ever see the cached hidden states.
 *
 * Expects drivers already standardized with train-period statistics.
 */
struct ForecasterResult {
    SagParams params;
    ForecasterCache cache;   ///< hidden states for every calendar day
    Tensor loss_mask;        ///< N x T, exactly the pairs that trained it
    std::vector<EpochRecord> history;
};

ForecasterResult train_forecaster(const BasinDataset& data,
                                  const NetworkTopology& topo,
                                  const AdjacencyMatrix& adj,
                                  const SagConfig& model_config,
                                  const TrainConfig& train_config);

/**
 * Stage two: the full network against same-day observations on the train
 * period.  `assignment` says which reservoirs embed their operation records
 * and which rely on the frozen forecaster's cache; the cache may be null
 * only when no reservoir needs it.  Throws MissingReleaseData or
 * MissingCache before touching any weights.
 *
 * Expects drivers already standardized with train-period statistics.
 */
struct SagTrainResult {
    SagParams params;
    std::vector<EpochRecord> history;
    int zero_flow_days = 0;  ///< substituted flow-average days, first epoch
};

SagTrainResult train_sag(const BasinDataset& data,
                         const NetworkTopology& topo,
                         const AdjacencyMatrix& adj,
                         const SagConfig& model_config,
                         const TrainConfig& train_config,
                         const ReleaseAssignment& assignment,
                         const ForecasterCache* cache);

/// Derive stage-specific seeds from the run seed so the forecaster, the
/// main model and the baseline never share an initialization stream.
std::uint64_t stage_seed(std::uint64_t run_seed, std::uint64_t stage);

/// Write `epoch,stage,train_loss` rows.
void save_history_csv(const std::filesystem::path& path,
                      const std::vector<EpochRecord>& history);

}  // namespace sag

#endif  // SAG_TRAINING_HPP
