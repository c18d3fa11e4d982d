#ifndef SAG_BASELINE_HPP
#define SAG_BASELINE_HPP

#include "sag/dataset.hpp"
#include "sag/tape.hpp"
#include "sag/training.hpp"

namespace sag {

/**
 * Reference model: one LSTM with weights shared across segments.
 *
 * Each segment evolves independently from its own drivers; no graph, no
 * reservoirs, no release information.  Everything the richer network adds
 * is measured against this.
 */
struct LstmParams {
    Parameter w_forget_h, u_forget_x, b_forget;
    Parameter w_input_h, u_input_x, b_input;
    Parameter w_cand_h, u_cand_x, b_cand;
    Parameter w_out_h, u_out_x, b_out;
    Parameter w_head, b_head;

    static LstmParams init(int hidden_dim, int input_dim, Rng& rng);
    std::vector<Parameter*> all();
    std::vector<const Parameter*> all() const;
};

struct LstmTrainResult {
    LstmParams params;
    std::vector<EpochRecord> history;
};

/// Train the baseline on the train period (drivers must be standardized).
LstmTrainResult train_lstm_baseline(const BasinDataset& data,
                                    const TrainConfig& train_config,
                                    int hidden_dim);

/// Predictions for the whole calendar, N x T, chunked like training.
Tensor lstm_predict_series(LstmParams& params, const BasinDataset& data,
                           int hidden_dim, int chunk_days = 100);

}  // namespace sag

#endif  // SAG_BASELINE_HPP
