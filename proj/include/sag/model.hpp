#ifndef SAG_MODEL_HPP
#define SAG_MODEL_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "sag/dataset.hpp"
#include "sag/graph.hpp"
#include "sag/rng.hpp"
#include "sag/tape.hpp"
#include "sag/tensor.hpp"

namespace sag {

/// Model dimensions and structural switches.
struct SagConfig {
    int hidden_dim = 20;       ///< width of stream and reservoir states
    int input_dim = 10;        ///< driver features per segment-day
    int meta_dim = 5;          ///< static reservoir attributes
    int release_layers = 2;    ///< depth layers in reservoir operation data
    int filter_layers = 1;     ///< depth of the two meta-attribute filters
    /// Data-driven release embeddings also see the flow-averaged temperature.
    bool use_flow_temperature = true;

    void validate() const;  ///< ConfigError on non-positive dimensions
};

/**
 * All trainable tensors of one network.
 *
 * Gradient state lives inside each Parameter.  `all()` returns a fixed
 * enumeration order that initialization, the optimizer, and checkpoints
 * share, so a seed fully determines every byte of a trained model.
 */
struct SagParams {
    // Reservoir state update: recurrence plus filtered inflow from streams.
    Parameter w_res_state, b_res_state;
    std::vector<Parameter> filter_in_w, filter_in_b;

    // Transfer from reservoirs into their downstream segments.
    Parameter w_trans_res, w_res_readout, b_trans_res;
    std::vector<Parameter> filter_out_w, filter_out_b;

    // Transfer between segments.
    Parameter w_trans_seg, b_trans_seg;

    // Candidate stream state.
    Parameter w_cand_h, u_cand_x, b_cand;

    // Gates: forget, input, reservoir-transfer, segment-transfer, output.
    Parameter w_forget_h, u_forget_x, b_forget;
    Parameter w_input_h, u_input_x, b_input;
    Parameter w_resgate_p, u_resgate_x, b_resgate;
    Parameter w_seggate_q, u_seggate_x, b_seggate;
    Parameter w_out_h, u_out_x, b_out;

    // Scalar prediction head.
    Parameter w_head, b_head;

    // Release embedding from a frozen forecaster's hidden states.
    Parameter w_forecast_embed, b_forecast_embed;

    // Release embedding from observed flows (and optionally temperature).
    Parameter w_data_embed, b_data_embed;

    /// Fresh parameters: uniform +-sqrt(6 / (fan_in + fan_out)), zero biases.
    static SagParams init(const SagConfig& config, Rng& rng);

    /// Every parameter in the canonical order.
    std::vector<Parameter*> all();
    std::vector<const Parameter*> all() const;

    void zero_grads();
};

/// Recurrent state carried across days; all zeros before the first day.
struct EpisodeState {
    Tensor stream;     // hidden_dim x n_segments
    Tensor hidden;     // hidden_dim x n_segments
    Tensor reservoir;  // hidden_dim x n_reservoirs
    Tensor release;    // hidden_dim x n_reservoirs, previous day's embedding

    static EpisodeState zeros(int hidden_dim, int n_segments,
                              int n_reservoirs);
};

/**
 * Which release-embedding source each reservoir uses.
 *
 * Data-driven reservoirs embed their published operation records; the rest
 * are covered by embeddings built from the frozen forecaster's hidden
 * states over their downstream segments.
 */
struct ReleaseAssignment {
    std::vector<std::uint8_t> use_data;  // 1 = data-driven, 0 = forecast-driven

    static ReleaseAssignment all_data(int n_reservoirs);
    static ReleaseAssignment all_forecast(int n_reservoirs);
    int n_reservoirs() const { return static_cast<int>(use_data.size()); }
    int data_count() const;
    int forecast_count() const;
};

/// Hidden states of the frozen forecaster, one tensor per calendar day.
struct ForecasterCache {
    std::vector<Tensor> hidden;  // each hidden_dim x n_segments
};

/**
 * One day's release-related inputs, already pulled out of the dataset and
 * rescaled for the embedding: flows as log1p(cfs), the flow-averaged depth
 * temperature as degrees Celsius divided by ten (see
 * gather_release_inputs).
 */
struct ReleaseInputs {
    const ReleaseAssignment* assignment = nullptr;
    Tensor flows;          // release_layers x n_reservoirs (data-driven cols)
    Tensor flow_avg_temp;  // 1 x n_reservoirs
    const Tensor* forecaster_hidden = nullptr;  // hidden_dim x n_segments
};

/**
 * Flow-weighted mean of per-layer depth temperatures.  When every flow is
 * zero the weighted form is undefined; the unweighted mean is substituted
 * and `zero_flow` (if given) is set.
 */
double flow_average_temperature(std::span<const double> flows,
                                std::span<const double> temps,
                                bool* zero_flow = nullptr);

/// Whether a step runs the full network or the release-blind forecaster.
enum class CellMode { kMain, kForecaster };

/**
 * The recurrent cell over one river network.
 *
 * Holds everything static: dimensions, pairwise weights arranged as dense
 * blocks so neighborhood sums become matrix products, and standardized
 * reservoir attributes.  States are hidden_dim x n matrices with one column
 * per segment (or reservoir), which keeps a whole day to a handful of tape
 * nodes regardless of network size.
 */
class SagCell {
public:
    SagCell(SagConfig config, const NetworkTopology& topo,
            const AdjacencyMatrix& adj, const Tensor& reservoir_meta);

    const SagConfig& config() const { return config_; }
    int n_segments() const { return n_; }
    int n_reservoirs() const { return m_; }

    /// Per-tape context: constant leaves plus the meta-filter activations.
    struct Bound {
        Tape* tape = nullptr;
        SagParams* params = nullptr;
        Var adj_seg_seg = kNoVar;   // N x N, row = upstream segment
        Var adj_seg_res = kNoVar;   // N x M, row = upstream segment
        Var adj_res_seg = kNoVar;   // M x N, row = upstream reservoir
        Var ones_seg = kNoVar;      // 1 x N
        Var ones_res = kNoVar;      // 1 x M
        Var filter_in = kNoVar;     // hidden_dim x M
        Var filter_out = kNoVar;    // hidden_dim x M
    };

    /// Record the static context for one tape.
    Bound bind(Tape& tape, SagParams& params) const;

    // ---- one day, piece by piece -----------------------------------------
    // All states are the previous day's unless the name says otherwise.

    /// Reservoir state: recurrence plus filtered, weighted stream inflow.
    Var update_reservoir_state(const Bound& b, Var reservoir_prev,
                               Var stream_prev) const;

    /// Influence arriving from upstream reservoirs, release embedding
    /// included.  `release_prev` is the previous day's embedding.
    Var transferred_from_reservoirs(const Bound& b, Var reservoir_prev,
                                    Var release_prev) const;

    /// Forecaster variant: same transfer with no release embedding at all.
    Var transferred_from_reservoirs_blind(const Bound& b,
                                          Var reservoir_prev) const;

    /// Influence arriving from upstream segments' hidden states.
    Var transferred_from_segments(const Bound& b, Var hidden_prev) const;

    struct Gates {
        Var forget = kNoVar, input = kNoVar, reservoir = kNoVar,
            segment = kNoVar, output = kNoVar;
    };

    /// All five sigmoid gates from the previous hidden state and drivers.
    Gates compute_gates(const Bound& b, Var hidden_prev, Var drivers,
                        Var transfer_res, Var transfer_seg) const;

    /// Candidate stream state from the previous hidden state and drivers.
    Var candidate_state(const Bound& b, Var hidden_prev, Var drivers) const;

    /// New stream state from the gated mix of memory, candidate, transfers.
    Var update_stream_state(const Bound& b, const Gates& g, Var stream_prev,
                            Var candidate, Var transfer_res,
                            Var transfer_seg) const;

    struct Prediction {
        Var hidden = kNoVar;  // hidden_dim x N
        Var preds = kNoVar;   // 1 x N, degrees Celsius
    };

    /// New hidden state and the scalar temperature read-out per segment.
    Prediction hidden_and_predict(const Bound& b, const Gates& g,
                                  Var stream_new) const;

    /// Forecast-driven embedding for reservoir k from the frozen
    /// forecaster's hidden states over k's downstream segments.  Linear on
    /// purpose: it has to anticipate, not squash.
    Var forecast_release_embedding(const Bound& b, Var forecaster_hidden,
                                   int k) const;

    /// Data-driven embedding from one reservoir's flows (and temperature).
    Var data_release_embedding(const Bound& b, Var flows_col,
                               Var flow_temp) const;

    /// Assemble the day's release embeddings, one column per reservoir.
    Var release_embeddings(const Bound& b, const ReleaseInputs& inputs) const;

    struct StepResult {
        Var stream = kNoVar, hidden = kNoVar;
        Var reservoir = kNoVar, release = kNoVar;  // kNoVar when unused
        Var preds = kNoVar;
    };

    /**
     * Advance the whole network one day.  In kMain mode with reservoirs
     * present, `release_prev` must be valid (MissingEmbedding otherwise) and
     * `inputs` must cover the day; kForecaster mode ignores release inputs
     * entirely.
     */
    StepResult step(const Bound& b, Var stream_prev, Var hidden_prev,
                    Var reservoir_prev, Var release_prev, Var drivers,
                    const ReleaseInputs& inputs, CellMode mode) const;

    /// Driver constant for one day, input_dim x N (column per segment).
    Tensor drivers_for_day(const BasinDataset& data, int day) const;

    /// Per-reservoir pairwise weight column over downstream segments (N x 1).
    const Tensor& downstream_weights(int k) const { return dn_cols_[k]; }

private:
    Var filter_chain(Tape& tape, std::vector<Parameter>& ws,
                     std::vector<Parameter>& bs, Var meta, Var ones) const;

    SagConfig config_;
    int n_ = 0, m_ = 0;
    Tensor adj_seg_seg_, adj_seg_res_, adj_res_seg_;
    Tensor meta_t_;                  // meta_dim x M, standardized
    Tensor ones_seg_, ones_res_;
    std::vector<Tensor> dn_cols_;    // per reservoir, N x 1
    std::vector<Tensor> selectors_;  // per reservoir, 1 x M one-hot
    std::vector<char> dn_empty_;     // reservoir feeds no segment
};

/**
 * Extract one day's release inputs from the dataset through the counted
 * accessors.  Only data-driven reservoirs are read; reading for a reservoir
 * without operation records raises MissingReleaseData.  `zero_flow_days`
 * (optional) is incremented when a zero-total-flow substitution happens.
 *
 * The flow-averaged temperature is computed from raw values, then flows and
 * temperature are rescaled (log1p, /10) so the embedding inputs sit at order
 * one like every other signal entering the cell; raw discharge would start
 * the reservoir transfer saturated.
 */
ReleaseInputs gather_release_inputs(const SagCell& cell,
                                    const BasinDataset& data, int day,
                                    const ReleaseAssignment& assignment,
                                    const ForecasterCache* cache,
                                    int* zero_flow_days = nullptr);

/// Output of one recorded window.
struct WindowResult {
    Var preds = kNoVar;           // n_days x N, one row per day
    EpisodeState state;           // detached values after the last day
    std::vector<Tensor> hidden;   // per-day hidden values, if requested
    int zero_flow_days = 0;
};

/**
 * Record `[t_begin, t_end)` on one tape, starting from `state0`, and return
 * the stacked predictions.  Gradient does not flow across window borders:
 * the returned state is plain numbers, which is what makes long series
 * trainable with bounded memory (truncated backpropagation through time).
 */
WindowResult run_window(Tape& tape, const SagCell& cell, SagParams& params,
                        const BasinDataset& data, int t_begin, int t_end,
                        const EpisodeState& state0, CellMode mode,
                        const ReleaseAssignment* assignment,
                        const ForecasterCache* cache,
                        bool collect_hidden = false);

/**
 * Predictions for the whole calendar, degrees Celsius, shaped N x T.
 * Runs the same chunked path as training so results are identical whether
 * or not gradients were wanted.
 */
Tensor predict_series(const SagCell& cell, SagParams& params,
                      const BasinDataset& data, CellMode mode,
                      const ReleaseAssignment* assignment,
                      const ForecasterCache* cache, int chunk_days = 100);

/**
 * Forecaster hidden states for every day, recorded without gradients and
 * cached as plain tensors.  Downstream consumers treat these as constants;
 * nothing can backpropagate into a frozen forecaster through the cache.
 */
ForecasterCache build_forecaster_cache(const SagCell& cell, SagParams& params,
                                       const BasinDataset& data,
                                       int chunk_days = 100);

}  // namespace sag

#endif  // SAG_MODEL_HPP
