#include "sag/training.hpp"

#include <cmath>

#include "sag/csv.hpp"
#include "sag/errors.hpp"

namespace sag {

void TrainConfig::validate() const {
    if (learning_rate <= 0.0 || adam_beta1 < 0.0 || adam_beta1 >= 1.0 ||
        adam_beta2 < 0.0 || adam_beta2 >= 1.0 || adam_epsilon <= 0.0) {
        throw ConfigError("optimizer hyperparameters out of range");
    }
    if (epochs <= 0 || bptt_window <= 0) {
        throw ConfigError("epochs and bptt_window must be positive");
    }
    if (train_fraction <= 0.0 || train_fraction >= 1.0) {
        throw ConfigError("train_fraction must lie strictly inside (0, 1)");
    }
}

std::pair<IndexRange, IndexRange> chronological_split(int total_days,
                                                      double train_fraction) {
    if (train_fraction <= 0.0 || train_fraction >= 1.0) {
        throw ConfigError("train_fraction must lie strictly inside (0, 1)");
    }
    const int n_train =
        static_cast<int>(std::floor(total_days * train_fraction));
    if (n_train < 1 || n_train >= total_days) {
        throw TooShort("cannot split " + std::to_string(total_days) +
                       " days into non-empty train and test periods");
    }
    return {IndexRange{0, n_train}, IndexRange{n_train, total_days}};
}

ObservationGrid ObservationGrid::from(const BasinDataset& data) {
    ObservationGrid grid;
    grid.values = Tensor(data.n_segments(), data.n_days());
    grid.mask = Tensor(data.n_segments(), data.n_days());
    for (const Observation& o : data.observations) {
        grid.values(o.segment, o.day) = o.temp_c;
        grid.mask(o.segment, o.day) = 1.0;
    }
    return grid;
}

int ObservationGrid::count_in(IndexRange days) const {
    int n = 0;
    for (std::size_t i = 0; i < mask.rows(); ++i) {
        for (int t = days.begin; t < days.end; ++t) {
            n += (mask(i, t) != 0.0);
        }
    }
    return n;
}

Var masked_mse(Tape& tape, Var predictions, const Tensor& targets,
               const Tensor& mask) {
    const Tensor& preds = tape.value(predictions);
    if (!preds.same_shape(targets) || !preds.same_shape(mask)) {
        throw ShapeMismatch("masked_mse: predictions " + preds.shape_str() +
                            ", targets " + targets.shape_str() + ", mask " +
                            mask.shape_str());
    }
    double count = 0.0;
    for (double v : mask.data()) {
        if (v != 0.0 && v != 1.0) {
            throw Error("masked_mse: mask entries must be 0 or 1");
        }
        count += v;
    }
    if (count == 0.0) {
        throw EmptyMask("masked_mse: mask selects no entries");
    }
    Var diff = tape.subtract(predictions, tape.constant(targets));
    Var masked = tape.elementwise_mul(tape.square(diff), tape.constant(mask));
    return tape.elementwise_mul(tape.sum(masked),
                                tape.constant(Tensor::scalar(1.0 / count)));
}

AdamOptimizer::AdamOptimizer(std::vector<Parameter*> params,
                             const TrainConfig& config)
    : params_(std::move(params)),
      lr_(config.learning_rate),
      beta1_(config.adam_beta1),
      beta2_(config.adam_beta2),
      eps_(config.adam_epsilon) {
    config.validate();
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (Parameter* p : params_) {
        m_.emplace_back(p->value.rows(), p->value.cols());
        v_.emplace_back(p->value.rows(), p->value.cols());
    }
}

void AdamOptimizer::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        Parameter& p = *params_[pi];
        if (!p.grad.all_finite()) {
            throw NonFiniteGradient("non-finite gradient in '" + p.name + "'");
        }
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            m_[pi][i] = beta1_ * m_[pi][i] + (1.0 - beta1_) * g;
            v_[pi][i] = beta2_ * v_[pi][i] + (1.0 - beta2_) * g * g;
            const double mhat = m_[pi][i] / bc1;
            const double vhat = v_[pi][i] / bc2;
            p.value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void AdamOptimizer::zero_grads() {
    for (Parameter* p : params_) p->zero_grad();
}

std::uint64_t stage_seed(std::uint64_t run_seed, std::uint64_t stage) {
    // splitmix64 over (seed, stage) so stages get unrelated streams
    std::uint64_t z = run_seed * 0x9E3779B97F4A7C15ULL + stage;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace {

/**
 * Shared window-loop for both stages.  `targets_for(t)` maps a step to the
 * day whose observations grade it (same day for the main model, next day
 * for the forecaster); `column_mask` can retire whole segments.
 */
struct EpochLoss {
    double weighted_sum = 0.0;
    double count = 0.0;
    double mean() const { return count > 0.0 ? weighted_sum / count : 0.0; }
};

EpochLoss run_training_epoch(const SagCell& cell, SagParams& params,
                             AdamOptimizer& adam, const BasinDataset& data,
                             const ObservationGrid& grid, IndexRange train,
                             int window, CellMode mode, int target_shift,
                             const std::vector<char>& segment_excluded,
                             const ReleaseAssignment* assignment,
                             const ForecasterCache* cache,
                             int* zero_flow_days) {
    const int n = cell.n_segments();
    EpochLoss epoch;
    EpisodeState state = EpisodeState::zeros(cell.config().hidden_dim, n,
                                             cell.n_reservoirs());
    Tape tape;
    for (int t0 = train.begin; t0 < train.end; t0 += window) {
        const int t1 = std::min(train.end, t0 + window);
        tape.reset();
        WindowResult w = run_window(tape, cell, params, data, t0, t1, state,
                                    mode, assignment, cache);
        if (zero_flow_days) *zero_flow_days += w.zero_flow_days;
        state = w.state;

        Tensor targets(t1 - t0, n);
        Tensor mask(t1 - t0, n);
        double selected = 0.0;
        for (int t = t0; t < t1; ++t) {
            const int target_day = t + target_shift;
            if (target_day >= train.end) continue;  // graded inside train only
            for (int i = 0; i < n; ++i) {
                if (segment_excluded[i] || !grid.observed(i, target_day)) {
                    continue;
                }
                targets(t - t0, i) = grid.values(i, target_day);
                mask(t - t0, i) = 1.0;
                selected += 1.0;
            }
        }
        if (selected == 0.0) continue;  // nothing to grade in this window

        Var loss = masked_mse(tape, w.preds, targets, mask);
        const double loss_value = tape.scalar_value(loss);
        if (!std::isfinite(loss_value)) {
            throw NumericError("training loss became non-finite");
        }
        adam.zero_grads();
        tape.backward(loss);
        adam.step();
        epoch.weighted_sum += loss_value * selected;
        epoch.count += selected;
    }
    return epoch;
}

}  // namespace

ForecasterResult train_forecaster(const BasinDataset& data,
                                  const NetworkTopology& topo,
                                  const AdjacencyMatrix& adj,
                                  const SagConfig& model_config,
                                  const TrainConfig& train_config) {
    train_config.validate();
    auto [train, test] =
        chronological_split(data.n_days(), train_config.train_fraction);
    (void)test;

    const Tensor meta = standardize_reservoir_meta(data.reservoir_meta);
    SagCell cell(model_config, topo, adj, meta);
    Rng rng(stage_seed(train_config.seed, 1));

    ForecasterResult result;
    result.params = SagParams::init(model_config, rng);

    // Segments fed by any reservoir never grade the forecaster: their
    // observed temperatures contain the release influence it must stay
    // blind to.
    std::vector<char> excluded(cell.n_segments(), 0);
    for (int i : topo.all_downstream_segments()) excluded[i] = 1;

    const ObservationGrid grid = ObservationGrid::from(data);
    result.loss_mask = Tensor(cell.n_segments(), data.n_days());
    for (int t = train.begin; t + 1 < train.end; ++t) {
        for (int i = 0; i < cell.n_segments(); ++i) {
            if (!excluded[i] && grid.observed(i, t + 1)) {
                result.loss_mask(i, t) = 1.0;
            }
        }
    }
    // A basin can be all-downstream in pathological setups; demand at
    // least one trainable pair so "trained forecaster" means something.
    bool any = false;
    for (double v : result.loss_mask.data()) any |= (v != 0.0);
    if (!any) {
        throw DataError(
            "no observation pairs remain for the forecaster after the "
            "downstream exclusion");
    }

    AdamOptimizer adam(result.params.all(), train_config);
    for (int epoch = 0; epoch < train_config.epochs; ++epoch) {
        EpochLoss loss = run_training_epoch(
            cell, result.params, adam, data, grid, train,
            train_config.bptt_window, CellMode::kForecaster,
            /*target_shift=*/1, excluded, nullptr, nullptr, nullptr);
        result.history.push_back({epoch, "forecaster", loss.mean()});
    }

    result.cache = build_forecaster_cache(cell, result.params, data,
                                          train_config.bptt_window);
    return result;
}

SagTrainResult train_sag(const BasinDataset& data,
                         const NetworkTopology& topo,
                         const AdjacencyMatrix& adj,
                         const SagConfig& model_config,
                         const TrainConfig& train_config,
                         const ReleaseAssignment& assignment,
                         const ForecasterCache* cache) {
    train_config.validate();
    if (assignment.n_reservoirs() != topo.reservoir_count()) {
        throw ConfigError("release assignment does not cover the network");
    }
    for (int k = 0; k < topo.reservoir_count(); ++k) {
        if (assignment.use_data[k] && !data.has_release_data[k]) {
            throw MissingReleaseData(
                "reservoir " + std::to_string(k) +
                " is assigned a data-driven embedding but the dataset has "
                "no operation records for it");
        }
        if (!assignment.use_data[k] &&
            topo.downstream_segments_of_reservoir(k).empty()) {
            throw EmptyDownstreamSet(
                "reservoir " + std::to_string(k) +
                " feeds no segment; a forecast-driven embedding is undefined");
        }
    }
    if (assignment.forecast_count() > 0) {
        if (cache == nullptr) {
            throw MissingCache(
                "the release assignment needs a forecaster cache and none "
                "was supplied");
        }
        if (static_cast<int>(cache->hidden.size()) != data.n_days()) {
            throw MissingCache("forecaster cache covers " +
                               std::to_string(cache->hidden.size()) +
                               " days, dataset has " +
                               std::to_string(data.n_days()));
        }
    }

    auto [train, test] =
        chronological_split(data.n_days(), train_config.train_fraction);
    (void)test;

    const Tensor meta = standardize_reservoir_meta(data.reservoir_meta);
    SagCell cell(model_config, topo, adj, meta);
    Rng rng(stage_seed(train_config.seed, 2));

    SagTrainResult result;
    result.params = SagParams::init(model_config, rng);

    const ObservationGrid grid = ObservationGrid::from(data);
    if (grid.count_in(train) == 0) {
        throw DataError("no observations inside the train period");
    }

    const std::vector<char> none(cell.n_segments(), 0);
    AdamOptimizer adam(result.params.all(), train_config);
    for (int epoch = 0; epoch < train_config.epochs; ++epoch) {
        int* zf = (epoch == 0) ? &result.zero_flow_days : nullptr;
        EpochLoss loss = run_training_epoch(
            cell, result.params, adam, data, grid, train,
            train_config.bptt_window, CellMode::kMain, /*target_shift=*/0,
            none, &assignment, cache, zf);
        result.history.push_back({epoch, "main", loss.mean()});
    }
    return result;
}

void save_history_csv(const std::filesystem::path& path,
                      const std::vector<EpochRecord>& history) {
    CsvWriter out(path, {"epoch", "stage", "train_loss"});
    for (const EpochRecord& r : history) {
        out.row({std::to_string(r.epoch), r.stage, fmt_double(r.train_loss)});
    }
    out.close();
}

}  // namespace sag
