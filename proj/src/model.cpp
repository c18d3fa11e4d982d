#include "sag/model.hpp"

#include <cmath>
#include <string>

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

Parameter zero_param(const std::string& name, int rows, int cols) {
    return Parameter(name, Tensor(rows, cols));
}

}  // namespace

void SagConfig::validate() const {
    if (hidden_dim <= 0 || input_dim <= 0 || meta_dim <= 0 ||
        release_layers <= 0 || filter_layers <= 0) {
        throw ConfigError("model dimensions must all be positive");
    }
}

SagParams SagParams::init(const SagConfig& config, Rng& rng) {
    config.validate();
    const int d = config.hidden_dim;
    const int x = config.input_dim;
    const int mm = config.meta_dim;
    const int embed_in =
        config.release_layers + (config.use_flow_temperature ? 1 : 0);

    SagParams p;
    p.w_res_state = glorot("w_res_state", d, d, rng);
    p.b_res_state = zero_param("b_res_state", d, 1);
    for (int l = 0; l < config.filter_layers; ++l) {
        const int in = (l == 0) ? mm : d;
        p.filter_in_w.push_back(
            glorot("filter_in_w" + std::to_string(l), d, in, rng));
        p.filter_in_b.push_back(
            zero_param("filter_in_b" + std::to_string(l), d, 1));
    }
    p.w_trans_res = glorot("w_trans_res", d, d, rng);
    p.w_res_readout = glorot("w_res_readout", d, d, rng);
    p.b_trans_res = zero_param("b_trans_res", d, 1);
    for (int l = 0; l < config.filter_layers; ++l) {
        const int in = (l == 0) ? mm : d;
        p.filter_out_w.push_back(
            glorot("filter_out_w" + std::to_string(l), d, in, rng));
        p.filter_out_b.push_back(
            zero_param("filter_out_b" + std::to_string(l), d, 1));
    }
    p.w_trans_seg = glorot("w_trans_seg", d, d, rng);
    p.b_trans_seg = zero_param("b_trans_seg", d, 1);

    p.w_cand_h = glorot("w_cand_h", d, d, rng);
    p.u_cand_x = glorot("u_cand_x", d, x, rng);
    p.b_cand = zero_param("b_cand", d, 1);

    p.w_forget_h = glorot("w_forget_h", d, d, rng);
    p.u_forget_x = glorot("u_forget_x", d, x, rng);
    p.b_forget = zero_param("b_forget", d, 1);
    p.w_input_h = glorot("w_input_h", d, d, rng);
    p.u_input_x = glorot("u_input_x", d, x, rng);
    p.b_input = zero_param("b_input", d, 1);
    p.w_resgate_p = glorot("w_resgate_p", d, d, rng);
    p.u_resgate_x = glorot("u_resgate_x", d, x, rng);
    p.b_resgate = zero_param("b_resgate", d, 1);
    p.w_seggate_q = glorot("w_seggate_q", d, d, rng);
    p.u_seggate_x = glorot("u_seggate_x", d, x, rng);
    p.b_seggate = zero_param("b_seggate", d, 1);
    p.w_out_h = glorot("w_out_h", d, d, rng);
    p.u_out_x = glorot("u_out_x", d, x, rng);
    p.b_out = zero_param("b_out", d, 1);

    p.w_head = glorot("w_head", 1, d, rng);
    p.b_head = zero_param("b_head", 1, 1);

    p.w_forecast_embed = glorot("w_forecast_embed", d, d, rng);
    p.b_forecast_embed = zero_param("b_forecast_embed", d, 1);
    p.w_data_embed = glorot("w_data_embed", d, embed_in, rng);
    p.b_data_embed = zero_param("b_data_embed", d, 1);
    return p;
}

std::vector<Parameter*> SagParams::all() {
    std::vector<Parameter*> out;
    out.push_back(&w_res_state);
    out.push_back(&b_res_state);
    for (auto& w : filter_in_w) out.push_back(&w);
    for (auto& b : filter_in_b) out.push_back(&b);
    out.push_back(&w_trans_res);
    out.push_back(&w_res_readout);
    out.push_back(&b_trans_res);
    for (auto& w : filter_out_w) out.push_back(&w);
    for (auto& b : filter_out_b) out.push_back(&b);
    out.push_back(&w_trans_seg);
    out.push_back(&b_trans_seg);
    out.push_back(&w_cand_h);
    out.push_back(&u_cand_x);
    out.push_back(&b_cand);
    out.push_back(&w_forget_h);
    out.push_back(&u_forget_x);
    out.push_back(&b_forget);
    out.push_back(&w_input_h);
    out.push_back(&u_input_x);
    out.push_back(&b_input);
    out.push_back(&w_resgate_p);
    out.push_back(&u_resgate_x);
    out.push_back(&b_resgate);
    out.push_back(&w_seggate_q);
    out.push_back(&u_seggate_x);
    out.push_back(&b_seggate);
    out.push_back(&w_out_h);
    out.push_back(&u_out_x);
    out.push_back(&b_out);
    out.push_back(&w_head);
    out.push_back(&b_head);
    out.push_back(&w_forecast_embed);
    out.push_back(&b_forecast_embed);
    out.push_back(&w_data_embed);
    out.push_back(&b_data_embed);
    return out;
}

std::vector<const Parameter*> SagParams::all() const {
    auto mutable_list = const_cast<SagParams*>(this)->all();
    return {mutable_list.begin(), mutable_list.end()};
}

void SagParams::zero_grads() {
    for (Parameter* p : all()) p->zero_grad();
}

EpisodeState EpisodeState::zeros(int hidden_dim, int n_segments,
                                 int n_reservoirs) {
    EpisodeState s;
    s.stream = Tensor(hidden_dim, n_segments);
    s.hidden = Tensor(hidden_dim, n_segments);
    s.reservoir = Tensor(hidden_dim, n_reservoirs);
    s.release = Tensor(hidden_dim, n_reservoirs);
    return s;
}

ReleaseAssignment ReleaseAssignment::all_data(int n_reservoirs) {
    ReleaseAssignment a;
    a.use_data.assign(n_reservoirs, 1);
    return a;
}

ReleaseAssignment ReleaseAssignment::all_forecast(int n_reservoirs) {
    ReleaseAssignment a;
    a.use_data.assign(n_reservoirs, 0);
    return a;
}

int ReleaseAssignment::data_count() const {
    int n = 0;
    for (auto f : use_data) n += (f != 0);
    return n;
}

int ReleaseAssignment::forecast_count() const {
    return n_reservoirs() - data_count();
}

double flow_average_temperature(std::span<const double> flows,
                                std::span<const double> temps,
                                bool* zero_flow) {
    if (flows.size() != temps.size() || flows.empty()) {
        throw ShapeMismatch("flow_average_temperature: " +
                            std::to_string(flows.size()) + " flows vs " +
                            std::to_string(temps.size()) + " temperatures");
    }
    double total = 0.0;
    double weighted = 0.0;
    for (std::size_t d = 0; d < flows.size(); ++d) {
        total += flows[d];
        weighted += flows[d] * temps[d];
    }
    if (total == 0.0) {
        if (zero_flow) *zero_flow = true;
        double mean = 0.0;
        for (double t : temps) mean += t;
        return mean / static_cast<double>(temps.size());
    }
    return weighted / total;
}

SagCell::SagCell(SagConfig config, const NetworkTopology& topo,
                 const AdjacencyMatrix& adj, const Tensor& reservoir_meta)
    : config_(config), n_(topo.segment_count()), m_(topo.reservoir_count()) {
    config_.validate();
    if (n_ <= 0) throw ConfigError("cell needs at least one segment");
    if (static_cast<int>(reservoir_meta.rows()) != m_ ||
        (m_ > 0 &&
         static_cast<int>(reservoir_meta.cols()) != config_.meta_dim)) {
        throw ConfigError("reservoir meta shape does not match the network");
    }
    if (static_cast<int>(adj.weights.rows()) != topo.node_count()) {
        throw ConfigError("pairwise weight matrix does not match the network");
    }

    adj_seg_seg_ = Tensor(n_, n_);
    for (int j = 0; j < n_; ++j) {
        for (int i = 0; i < n_; ++i) {
            adj_seg_seg_(j, i) = adj.weights(j, i);
        }
    }
    adj_seg_res_ = Tensor(n_, std::max(m_, 0));
    adj_res_seg_ = Tensor(std::max(m_, 0), n_);
    for (int k = 0; k < m_; ++k) {
        for (int i = 0; i < n_; ++i) {
            adj_seg_res_(i, k) = adj.weights(i, n_ + k);
            adj_res_seg_(k, i) = adj.weights(n_ + k, i);
        }
    }

    meta_t_ = Tensor(config_.meta_dim, std::max(m_, 0));
    for (int k = 0; k < m_; ++k) {
        for (int f = 0; f < config_.meta_dim; ++f) {
            meta_t_(f, k) = reservoir_meta(k, f);
        }
    }

    ones_seg_ = Tensor(1, n_, 1.0);
    ones_res_ = Tensor(1, std::max(m_, 0), 1.0);

    dn_cols_.resize(m_);
    selectors_.resize(m_);
    dn_empty_.assign(m_, 1);
    for (int k = 0; k < m_; ++k) {
        dn_cols_[k] = Tensor(n_, 1);
        for (int i = 0; i < n_; ++i) {
            dn_cols_[k](i, 0) = adj_res_seg_(k, i);
            if (adj_res_seg_(k, i) != 0.0) dn_empty_[k] = 0;
        }
        selectors_[k] = Tensor(1, m_);
        selectors_[k](0, k) = 1.0;
    }
}

Var SagCell::filter_chain(Tape& tape, std::vector<Parameter>& ws,
                          std::vector<Parameter>& bs, Var meta,
                          Var ones) const {
    Var value = meta;
    for (std::size_t l = 0; l < ws.size(); ++l) {
        Var pre = tape.add(tape.matmul(tape.param(ws[l]), value),
                           tape.matmul(tape.param(bs[l]), ones));
        value = tape.sigmoid(pre);
    }
    return value;
}

SagCell::Bound SagCell::bind(Tape& tape, SagParams& params) const {
    Bound b;
    b.tape = &tape;
    b.params = &params;
    b.adj_seg_seg = tape.constant(adj_seg_seg_);
    b.ones_seg = tape.constant(ones_seg_);
    if (m_ > 0) {
        b.adj_seg_res = tape.constant(adj_seg_res_);
        b.adj_res_seg = tape.constant(adj_res_seg_);
        b.ones_res = tape.constant(ones_res_);
        Var meta = tape.constant(meta_t_);
        b.filter_in = filter_chain(tape, params.filter_in_w,
                                   params.filter_in_b, meta, b.ones_res);
        b.filter_out = filter_chain(tape, params.filter_out_w,
                                    params.filter_out_b, meta, b.ones_res);
    }
    return b;
}

Var SagCell::update_reservoir_state(const Bound& b, Var reservoir_prev,
                                    Var stream_prev) const {
    if (m_ == 0) throw ConfigError("network has no reservoirs");
    Tape& t = *b.tape;
    SagParams& p = *b.params;
    Var inflow = t.matmul(stream_prev, b.adj_seg_res);
    Var gated = t.elementwise_mul(b.filter_in, inflow);
    Var pre = t.add(
        t.add(t.matmul(t.param(p.w_res_state), reservoir_prev), gated),
        t.matmul(t.param(p.b_res_state), b.ones_res));
    return t.tanh(pre);
}

Var SagCell::transferred_from_reservoirs(const Bound& b, Var reservoir_prev,
                                         Var release_prev) const {
    Tape& t = *b.tape;
    SagParams& p = *b.params;
    if (m_ == 0) {
        return t.tanh(t.matmul(t.param(p.b_trans_res), b.ones_seg));
    }
    Var readout =
        t.add(t.matmul(t.param(p.w_res_readout), reservoir_prev), release_prev);
    Var gated = t.elementwise_mul(b.filter_out, readout);
    Var summed = t.matmul(gated, b.adj_res_seg);
    Var pre = t.add(t.matmul(t.param(p.w_trans_res), summed),
                    t.matmul(t.param(p.b_trans_res), b.ones_seg));
    return t.tanh(pre);
}

Var SagCell::transferred_from_reservoirs_blind(const Bound& b,
                                               Var reservoir_prev) const {
    Tape& t = *b.tape;
    SagParams& p = *b.params;
    if (m_ == 0) {
        return t.tanh(t.matmul(t.param(p.b_trans_res), b.ones_seg));
    }
    Var readout = t.matmul(t.param(p.w_res_readout), reservoir_prev);
    Var gated = t.elementwise_mul(b.filter_out, readout);
    Var summed = t.matmul(gated, b.adj_res_seg);
    Var pre = t.add(t.matmul(t.param(p.w_trans_res), summed),
                    t.matmul(t.param(p.b_trans_res), b.ones_seg));
    return t.tanh(pre);
}

Var SagCell::transferred_from_segments(const Bound& b, Var hidden_prev) const {
    Tape& t = *b.tape;
    SagParams& p = *b.params;
    Var summed = t.matmul(hidden_prev, b.adj_seg_seg);
    Var pre = t.add(t.matmul(t.param(p.w_trans_seg), summed),
                    t.matmul(t.param(p.b_trans_seg), b.ones_seg));
    return t.tanh(pre);
}

SagCell::Gates SagCell::compute_gates(const Bound& b, Var hidden_prev,
                                      Var drivers, Var transfer_res,
                                      Var transfer_seg) const {
    Tape& t = *b.tape;
    SagParams& p = *b.params;
    auto gate = [&](Parameter& w, Var recur, Parameter& u, Parameter& bias) {
        Var pre = t.add(t.add(t.matmul(t.param(w), recur),
                              t.matmul(t.param(u), drivers)),
                        t.matmul(t.param(bias), b.ones_seg));
        return t.sigmoid(pre);
    };
    Gates g;
    g.forget = gate(p.w_forget_h, hidden_prev, p.u_forget_x, p.b_forget);
    g.input = gate(p.w_input_h, hidden_prev, p.u_input_x, p.b_input);
    g.reservoir = gate(p.w_resgate_p, transfer_res, p.u_resgate_x, p.b_resgate);
    g.segment = gate(p.w_seggate_q, transfer_seg, p.u_seggate_x, p.b_seggate);
    g.output = gate(p.w_out_h, hidden_prev, p.u_out_x, p.b_out);
    return g;
}

Var SagCell::candidate_state(const Bound& b, Var hidden_prev,
                             Var drivers) const {
    Tape& t = *b.tape;
    SagParams& p = *b.params;
    Var pre = t.add(t.add(t.matmul(t.param(p.w_cand_h), hidden_prev),
                          t.matmul(t.param(p.u_cand_x), drivers)),
                    t.matmul(t.param(p.b_cand), b.ones_seg));
    return t.tanh(pre);
}

Var SagCell::update_stream_state(const Bound& b, const Gates& g,
                                 Var stream_prev, Var candidate,
                                 Var transfer_res, Var transfer_seg) const {
    Tape& t = *b.tape;
    Var mix = t.add(t.add(t.elementwise_mul(g.forget, stream_prev),
                          t.elementwise_mul(g.input, candidate)),
                    t.add(t.elementwise_mul(g.reservoir, transfer_res),
                          t.elementwise_mul(g.segment, transfer_seg)));
    return t.tanh(mix);
}

SagCell::Prediction SagCell::hidden_and_predict(const Bound& b, const Gates& g,
                                                Var stream_new) const {
    Tape& t = *b.tape;
    SagParams& p = *b.params;
    Prediction out;
    out.hidden = t.elementwise_mul(g.output, t.tanh(stream_new));
    out.preds = t.add(t.matmul(t.param(p.w_head), out.hidden),
                      t.matmul(t.param(p.b_head), b.ones_seg));
    return out;
}

Var SagCell::forecast_release_embedding(const Bound& b, Var forecaster_hidden,
                                        int k) const {
    if (k < 0 || k >= m_) throw ConfigError("reservoir index out of range");
    if (dn_empty_[k]) {
        throw EmptyDownstreamSet(
            "reservoir " + std::to_string(k) +
            " feeds no segment; a forecast-driven embedding is undefined");
    }
    Tape& t = *b.tape;
    SagParams& p = *b.params;
    Var col = t.constant(dn_cols_[k]);
    Var pooled = t.matmul(forecaster_hidden, col);
    return t.add(t.matmul(t.param(p.w_forecast_embed), pooled),
                 t.param(p.b_forecast_embed));
}

Var SagCell::data_release_embedding(const Bound& b, Var flows_col,
                                    Var flow_temp) const {
    Tape& t = *b.tape;
    SagParams& p = *b.params;
    Var features = flows_col;
    if (config_.use_flow_temperature) {
        if (flow_temp == kNoVar) {
            throw ConfigError(
                "data_release_embedding: flow temperature required "
                "by this configuration");
        }
        features = t.concat_rows(flows_col, flow_temp);
    }
    return t.add(t.matmul(t.param(p.w_data_embed), features),
                 t.param(p.b_data_embed));
}

Var SagCell::release_embeddings(const Bound& b,
                                const ReleaseInputs& inputs) const {
    if (m_ == 0) throw ConfigError("network has no reservoirs");
    if (inputs.assignment == nullptr ||
        inputs.assignment->n_reservoirs() != m_) {
        throw ConfigError("release assignment does not cover the network");
    }
    Tape& t = *b.tape;
    Var forecaster_leaf = kNoVar;
    Var assembled = kNoVar;
    for (int k = 0; k < m_; ++k) {
        Var column;
        if (inputs.assignment->use_data[k]) {
            Tensor flows(config_.release_layers, 1);
            for (int d = 0; d < config_.release_layers; ++d) {
                flows(d, 0) = inputs.flows(d, k);
            }
            Var flows_var = t.constant(std::move(flows));
            Var temp_var = kNoVar;
            if (config_.use_flow_temperature) {
                temp_var = t.constant(Tensor::scalar(inputs.flow_avg_temp(0, k)));
            }
            column = data_release_embedding(b, flows_var, temp_var);
        } else {
            if (inputs.forecaster_hidden == nullptr) {
                throw MissingCache(
                    "forecast-driven reservoir " + std::to_string(k) +
                    " needs hidden states from a trained forecaster");
            }
            if (forecaster_leaf == kNoVar) {
                forecaster_leaf = t.constant(*inputs.forecaster_hidden);
            }
            column = forecast_release_embedding(b, forecaster_leaf, k);
        }
        Var placed = t.matmul(column, t.constant(selectors_[k]));
        assembled = (assembled == kNoVar) ? placed : t.add(assembled, placed);
    }
    return assembled;
}

SagCell::StepResult SagCell::step(const Bound& b, Var stream_prev,
                                  Var hidden_prev, Var reservoir_prev,
                                  Var release_prev, Var drivers,
                                  const ReleaseInputs& inputs,
                                  CellMode mode) const {
    StepResult out;
    Var transfer_res;
    if (mode == CellMode::kForecaster) {
        transfer_res = transferred_from_reservoirs_blind(b, reservoir_prev);
    } else {
        if (m_ > 0 && release_prev == kNoVar) {
            throw MissingEmbedding(
                "step: previous release embedding missing; reservoirs need "
                "one every day (zeros before the first)");
        }
        transfer_res =
            transferred_from_reservoirs(b, reservoir_prev, release_prev);
    }
    Var transfer_seg = transferred_from_segments(b, hidden_prev);
    Gates g = compute_gates(b, hidden_prev, drivers, transfer_res,
                            transfer_seg);
    Var candidate = candidate_state(b, hidden_prev, drivers);
    out.stream = update_stream_state(b, g, stream_prev, candidate,
                                     transfer_res, transfer_seg);
    Prediction pred = hidden_and_predict(b, g, out.stream);
    out.hidden = pred.hidden;
    out.preds = pred.preds;
    if (m_ > 0) {
        out.reservoir = update_reservoir_state(b, reservoir_prev, stream_prev);
        if (mode == CellMode::kMain) {
            out.release = release_embeddings(b, inputs);
        }
    }
    return out;
}

Tensor SagCell::drivers_for_day(const BasinDataset& data, int day) const {
    if (day < 0 || day >= data.n_days()) {
        throw ConfigError("drivers_for_day: day " + std::to_string(day) +
                          " outside the calendar");
    }
    if (data.n_segments() != n_) {
        throw DataError("dataset has " + std::to_string(data.n_segments()) +
                        " segments, network has " + std::to_string(n_));
    }
    if (data.n_features() != config_.input_dim) {
        throw DataError("dataset has " + std::to_string(data.n_features()) +
                        " driver features, model expects " +
                        std::to_string(config_.input_dim));
    }
    Tensor x(config_.input_dim, n_);
    for (int i = 0; i < n_; ++i) {
        for (int f = 0; f < config_.input_dim; ++f) {
            x(f, i) = data.drivers(i, day, f);
        }
    }
    return x;
}

ReleaseInputs gather_release_inputs(const SagCell& cell,
                                    const BasinDataset& data, int day,
                                    const ReleaseAssignment& assignment,
                                    const ForecasterCache* cache,
                                    int* zero_flow_days) {
    const int m = cell.n_reservoirs();
    if (assignment.n_reservoirs() != m) {
        throw ConfigError("release assignment covers " +
                          std::to_string(assignment.n_reservoirs()) +
                          " reservoirs, network has " + std::to_string(m));
    }
    const int layers = cell.config().release_layers;
    ReleaseInputs out;
    out.assignment = &assignment;
    out.flows = Tensor(layers, m);
    out.flow_avg_temp = Tensor(1, m);
    for (int k = 0; k < m; ++k) {
        if (!assignment.use_data[k]) continue;
        if (!data.has_release_data[k]) {
            throw MissingReleaseData(
                "reservoir " + std::to_string(k) +
                " is assigned a data-driven embedding but has no release "
                "records");
        }
        if (data.n_layers() != layers) {
            throw DataError("dataset has " + std::to_string(data.n_layers()) +
                            " release layers, model expects " +
                            std::to_string(layers));
        }
        std::vector<double> flows(layers);
        for (int d = 0; d < layers; ++d) {
            flows[d] = data.release_flow(k, day, d);
            // Discharge spans orders of magnitude (cfs) and would saturate
            // the downstream tanh transfers at initialization; the embedding
            // sees it log-compressed.  Fixed transforms rather than fitted
            // statistics keep training and later prediction trivially
            // consistent (nothing extra to carry in a checkpoint).
            out.flows(d, k) = std::log1p(flows[d]);
        }
        if (cell.config().use_flow_temperature) {
            std::vector<double> temps(layers);
            for (int d = 0; d < layers; ++d) {
                temps[d] = data.depth_temp(k, day, d);
            }
            bool zero_flow = false;
            // Raw flows weight the average; the result enters the embedding
            // scaled from tens of degrees Celsius down to order one.
            out.flow_avg_temp(0, k) =
                flow_average_temperature(flows, temps, &zero_flow) / 10.0;
            if (zero_flow && zero_flow_days) ++*zero_flow_days;
        }
    }
    if (assignment.forecast_count() > 0) {
        if (cache == nullptr) {
            throw MissingCache(
                "forecast-driven reservoirs need a forecaster cache");
        }
        if (day < 0 || day >= static_cast<int>(cache->hidden.size())) {
            throw MissingCache("forecaster cache does not cover day " +
                               std::to_string(day));
        }
        out.forecaster_hidden = &cache->hidden[day];
    }
    return out;
}

WindowResult run_window(Tape& tape, const SagCell& cell, SagParams& params,
                        const BasinDataset& data, int t_begin, int t_end,
                        const EpisodeState& state0, CellMode mode,
                        const ReleaseAssignment* assignment,
                        const ForecasterCache* cache, bool collect_hidden) {
    if (t_begin < 0 || t_end > data.n_days() || t_begin >= t_end) {
        throw ConfigError("run_window: bad day range [" +
                          std::to_string(t_begin) + ", " +
                          std::to_string(t_end) + ")");
    }
    const int m = cell.n_reservoirs();
    const bool with_release = (mode == CellMode::kMain && m > 0);
    if (with_release && assignment == nullptr) {
        throw ConfigError("run_window: a release assignment is required");
    }

    SagCell::Bound b = cell.bind(tape, params);
    Var stream = tape.constant(state0.stream);
    Var hidden = tape.constant(state0.hidden);
    Var reservoir = m > 0 ? tape.constant(state0.reservoir) : kNoVar;
    Var release = with_release ? tape.constant(state0.release) : kNoVar;

    WindowResult out;
    Var all_preds = kNoVar;
    for (int t = t_begin; t < t_end; ++t) {
        Var drivers = tape.constant(cell.drivers_for_day(data, t));
        ReleaseInputs inputs;
        if (with_release) {
            inputs = gather_release_inputs(cell, data, t, *assignment, cache,
                                           &out.zero_flow_days);
        }
        SagCell::StepResult step =
            cell.step(b, stream, hidden, reservoir, release, drivers, inputs,
                      mode);
        stream = step.stream;
        hidden = step.hidden;
        if (m > 0) reservoir = step.reservoir;
        if (with_release) release = step.release;
        all_preds = (all_preds == kNoVar)
                        ? step.preds
                        : tape.concat_rows(all_preds, step.preds);
        if (collect_hidden) out.hidden.push_back(tape.value(hidden));
    }
    out.preds = all_preds;
    out.state.stream = tape.value(stream);
    out.state.hidden = tape.value(hidden);
    out.state.reservoir =
        m > 0 ? tape.value(reservoir) : Tensor(cell.config().hidden_dim, 0);
    out.state.release = with_release
                            ? tape.value(release)
                            : Tensor(cell.config().hidden_dim, std::max(m, 0));
    return out;
}

Tensor predict_series(const SagCell& cell, SagParams& params,
                      const BasinDataset& data, CellMode mode,
                      const ReleaseAssignment* assignment,
                      const ForecasterCache* cache, int chunk_days) {
    if (chunk_days <= 0) throw ConfigError("chunk_days must be positive");
    const int n = cell.n_segments();
    const int days = data.n_days();
    Tensor preds(n, days);
    EpisodeState state = EpisodeState::zeros(cell.config().hidden_dim, n,
                                             cell.n_reservoirs());
    for (int t0 = 0; t0 < days; t0 += chunk_days) {
        const int t1 = std::min(days, t0 + chunk_days);
        Tape tape;
        WindowResult w = run_window(tape, cell, params, data, t0, t1, state,
                                    mode, assignment, cache);
        const Tensor& block = tape.value(w.preds);  // (t1 - t0) x n
        for (int t = t0; t < t1; ++t) {
            for (int i = 0; i < n; ++i) {
                preds(i, t) = block(t - t0, i);
            }
        }
        state = w.state;
    }
    return preds;
}

ForecasterCache build_forecaster_cache(const SagCell& cell, SagParams& params,
                                       const BasinDataset& data,
                                       int chunk_days) {
    if (chunk_days <= 0) throw ConfigError("chunk_days must be positive");
    ForecasterCache cache;
    const int days = data.n_days();
    cache.hidden.reserve(days);
    EpisodeState state = EpisodeState::zeros(
        cell.config().hidden_dim, cell.n_segments(), cell.n_reservoirs());
    for (int t0 = 0; t0 < days; t0 += chunk_days) {
        const int t1 = std::min(days, t0 + chunk_days);
        Tape tape;
        WindowResult w =
            run_window(tape, cell, params, data, t0, t1, state,
                       CellMode::kForecaster, nullptr, nullptr, true);
        for (Tensor& h : w.hidden) cache.hidden.push_back(std::move(h));
        state = w.state;
    }
    return cache;
}

}  // namespace sag
