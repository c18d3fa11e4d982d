#include "sag/baseline.hpp"

#include <cmath>

#include "sag/errors.hpp"

namespace sag {

namespace {

Parameter glorot(const std::string& name, int rows, int cols, Rng& rng) {
    const double bound = std::sqrt(6.0 / (rows + cols));
    Tensor t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = rng.uniform(-bound, bound);
    }
    return Parameter(name, std::move(t));
}

struct LstmStepState {
    Var cell = kNoVar;
    Var hidden = kNoVar;
};

/// One LSTM day over all segments at once (states are hidden_dim x N).
LstmStepState lstm_step(Tape& t, LstmParams& p, LstmStepState prev,
                        Var drivers, Var ones_seg, Var* preds) {
    auto affine = [&](Parameter& w, Parameter& u, Parameter& b) {
        return t.add(t.add(t.matmul(t.param(w), prev.hidden),
                           t.matmul(t.param(u), drivers)),
                     t.matmul(t.param(b), ones_seg));
    };
    Var forget = t.sigmoid(affine(p.w_forget_h, p.u_forget_x, p.b_forget));
    Var input = t.sigmoid(affine(p.w_input_h, p.u_input_x, p.b_input));
    Var cand = t.tanh(affine(p.w_cand_h, p.u_cand_x, p.b_cand));
    Var output = t.sigmoid(affine(p.w_out_h, p.u_out_x, p.b_out));

    LstmStepState next;
    next.cell = t.add(t.elementwise_mul(forget, prev.cell),
                      t.elementwise_mul(input, cand));
    next.hidden = t.elementwise_mul(output, t.tanh(next.cell));
    *preds = t.add(t.matmul(t.param(p.w_head), next.hidden),
                   t.matmul(t.param(p.b_head), ones_seg));
    return next;
}

Tensor drivers_for_day(const BasinDataset& data, int day) {
    Tensor x(data.n_features(), data.n_segments());
    for (int i = 0; i < data.n_segments(); ++i) {
        for (int f = 0; f < data.n_features(); ++f) {
            x(f, i) = data.drivers(i, day, f);
        }
    }
    return x;
}

struct LstmWindow {
    Var preds = kNoVar;      // days x N
    Tensor cell, hidden;     // detached final states
};

LstmWindow lstm_window(Tape& tape, LstmParams& p, const BasinDataset& data,
                       int t0, int t1, const Tensor& cell0,
                       const Tensor& hidden0) {
    const int n = data.n_segments();
    Var ones_seg = tape.constant(Tensor(1, n, 1.0));
    LstmStepState state{tape.constant(cell0), tape.constant(hidden0)};
    LstmWindow out;
    for (int t = t0; t < t1; ++t) {
        Var drivers = tape.constant(drivers_for_day(data, t));
        Var preds;
        state = lstm_step(tape, p, state, drivers, ones_seg, &preds);
        out.preds = (out.preds == kNoVar) ? preds
                                          : tape.concat_rows(out.preds, preds);
    }
    out.cell = tape.value(state.cell);
    out.hidden = tape.value(state.hidden);
    return out;
}

}  // namespace

LstmParams LstmParams::init(int hidden_dim, int input_dim, Rng& rng) {
    if (hidden_dim <= 0 || input_dim <= 0) {
        throw ConfigError("baseline dimensions must be positive");
    }
    const int d = hidden_dim, x = input_dim;
    LstmParams p;
    p.w_forget_h = glorot("w_forget_h", d, d, rng);
    p.u_forget_x = glorot("u_forget_x", d, x, rng);
    p.b_forget = Parameter("b_forget", Tensor(d, 1));
    p.w_input_h = glorot("w_input_h", d, d, rng);
    p.u_input_x = glorot("u_input_x", d, x, rng);
    p.b_input = Parameter("b_input", Tensor(d, 1));
    p.w_cand_h = glorot("w_cand_h", d, d, rng);
    p.u_cand_x = glorot("u_cand_x", d, x, rng);
    p.b_cand = Parameter("b_cand", Tensor(d, 1));
    p.w_out_h = glorot("w_out_h", d, d, rng);
    p.u_out_x = glorot("u_out_x", d, x, rng);
    p.b_out = Parameter("b_out", Tensor(d, 1));
    p.w_head = glorot("w_head", 1, d, rng);
    p.b_head = Parameter("b_head", Tensor(1, 1));
    return p;
}

std::vector<Parameter*> LstmParams::all() {
    return {&w_forget_h, &u_forget_x, &b_forget, &w_input_h, &u_input_x,
            &b_input,    &w_cand_h,   &u_cand_x, &b_cand,    &w_out_h,
            &u_out_x,    &b_out,      &w_head,   &b_head};
}

std::vector<const Parameter*> LstmParams::all() const {
    auto mutable_list = const_cast<LstmParams*>(this)->all();
    return {mutable_list.begin(), mutable_list.end()};
}

LstmTrainResult train_lstm_baseline(const BasinDataset& data,
                                    const TrainConfig& train_config,
                                    int hidden_dim) {
    train_config.validate();
    auto [train, test] =
        chronological_split(data.n_days(), train_config.train_fraction);
    (void)test;

    Rng rng(stage_seed(train_config.seed, 3));
    LstmTrainResult result;
    result.params = LstmParams::init(hidden_dim, data.n_features(), rng);

    const ObservationGrid grid = ObservationGrid::from(data);
    if (grid.count_in(train) == 0) {
        throw DataError("no observations inside the train period");
    }
    const int n = data.n_segments();

    AdamOptimizer adam(result.params.all(), train_config);
    Tape tape;
    for (int epoch = 0; epoch < train_config.epochs; ++epoch) {
        Tensor cell_state(hidden_dim, n);
        Tensor hidden_state(hidden_dim, n);
        double weighted = 0.0, count = 0.0;
        for (int t0 = train.begin; t0 < train.end;
             t0 += train_config.bptt_window) {
            const int t1 = std::min(train.end, t0 + train_config.bptt_window);
            tape.reset();
            LstmWindow w = lstm_window(tape, result.params, data, t0, t1,
                                       cell_state, hidden_state);
            cell_state = w.cell;
            hidden_state = w.hidden;

            Tensor targets(t1 - t0, n);
            Tensor mask(t1 - t0, n);
            double selected = 0.0;
            for (int t = t0; t < t1; ++t) {
                for (int i = 0; i < n; ++i) {
                    if (!grid.observed(i, t)) continue;
                    targets(t - t0, i) = grid.values(i, t);
                    mask(t - t0, i) = 1.0;
                    selected += 1.0;
                }
            }
            if (selected == 0.0) continue;

            Var loss = masked_mse(tape, w.preds, targets, mask);
            const double loss_value = tape.scalar_value(loss);
            if (!std::isfinite(loss_value)) {
                throw NumericError("baseline loss became non-finite");
            }
            adam.zero_grads();
            tape.backward(loss);
            adam.step();
            weighted += loss_value * selected;
            count += selected;
        }
        result.history.push_back(
            {epoch, "rnn", count > 0.0 ? weighted / count : 0.0});
    }
    return result;
}

Tensor lstm_predict_series(LstmParams& params, const BasinDataset& data,
                           int hidden_dim, int chunk_days) {
    if (chunk_days <= 0) throw ConfigError("chunk_days must be positive");
    const int n = data.n_segments();
    const int days = data.n_days();
    Tensor preds(n, days);
    Tensor cell_state(hidden_dim, n);
    Tensor hidden_state(hidden_dim, n);
    for (int t0 = 0; t0 < days; t0 += chunk_days) {
        const int t1 = std::min(days, t0 + chunk_days);
        Tape tape;
        LstmWindow w = lstm_window(tape, params, data, t0, t1, cell_state,
                                   hidden_state);
        const Tensor& block = tape.value(w.preds);
        for (int t = t0; t < t1; ++t) {
            for (int i = 0; i < n; ++i) preds(i, t) = block(t - t0, i);
        }
        cell_state = w.cell;
        hidden_state = w.hidden;
    }
    return preds;
}

}  // namespace sag
