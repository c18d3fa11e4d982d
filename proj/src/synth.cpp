#include "sag/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sag/csv.hpp"
#include "sag/errors.hpp"
#include "sag/rng.hpp"

namespace sag {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double clamp(double v, double lo, double hi) {
    return std::min(hi, std::max(lo, v));
}

/// Move from `prev` toward `target`, at most `rate` per day.
double limited_step(double prev, double target, double rate) {
    return prev + clamp(target - prev, -rate, rate);
}

/// Regional seasonal air temperature, degrees Celsius.  The summer peak
/// (26 C at the base elevation) is what makes the cold-release policy
/// bind: equilibrium water temperature then crosses thresholds in the
/// high teens for a realistic stretch of the year.
double seasonal_air(int doy) {
    return 14.0 + 12.0 * std::sin(kTwoPi * (doy - 105) / 365.0);
}

/// The latent process's equilibrium water temperature for a given air temp.
double equilibrium_temp(double air) {
    return std::max(0.5, 1.2 + 0.72 * air);
}

constexpr double kLapseRate = 0.0065;  // degrees lost per meter of elevation
constexpr double kBaseElevation = 180.0;

}  // namespace

void LakeConfig::validate() const {
    if (air_smoothing <= 0.0 || air_smoothing > 1.0) {
        throw ConfigError("lake air_smoothing must lie in (0, 1]");
    }
    if (surface_follow < 0.0 || surface_follow > 1.0) {
        throw ConfigError("lake surface_follow must lie in [0, 1]");
    }
    if (bottom_amplitude_c < 0.0 || bottom_lag_days < 0.0) {
        throw ConfigError("lake amplitude and lag must be non-negative");
    }
    if (stratified_start_doy < 0 || stratified_end_doy > 365 ||
        stratified_start_doy > stratified_end_doy) {
        throw ConfigError("lake stratified window must satisfy 0 <= start <= "
                          "end <= 365");
    }
    if (max_daily_change_c <= 0.0) {
        throw ConfigError("lake max_daily_change_c must be positive");
    }
    if (bottom_noise_c < 0.0 || bottom_noise_c > 5.0) {
        throw ConfigError("lake bottom_noise_c must lie in [0, 5]");
    }
    if (surface_mean_c < 0.0 || surface_mean_c > 35.0 || bottom_mean_c < 0.0 ||
        bottom_mean_c > 35.0) {
        throw ConfigError("lake mean temperatures must be physical");
    }
}

LakeProfiles toy_lake_profiles(const LakeConfig& config,
                               std::span<const double> air_temp_c,
                               std::span<const Date> calendar,
                               std::span<const double> bottom_anomaly_c) {
    config.validate();
    if (air_temp_c.size() != calendar.size() || air_temp_c.empty()) {
        throw ShapeMismatch("toy_lake_profiles: " +
                            std::to_string(air_temp_c.size()) +
                            " air values vs " +
                            std::to_string(calendar.size()) + " dates");
    }
    if (!bottom_anomaly_c.empty() &&
        bottom_anomaly_c.size() != calendar.size()) {
        throw ShapeMismatch("toy_lake_profiles: " +
                            std::to_string(bottom_anomaly_c.size()) +
                            " anomaly values vs " +
                            std::to_string(calendar.size()) + " dates");
    }
    const double rate = config.max_daily_change_c;
    auto stratified = [&](int doy) {
        return doy >= config.stratified_start_doy &&
               doy <= config.stratified_end_doy;
    };
    auto bottom_raw = [&](int doy) {
        return config.bottom_mean_c +
               config.bottom_amplitude_c *
                   std::sin(kTwoPi * (doy - 80.0 - config.bottom_lag_days) /
                            365.0);
    };

    LakeProfiles out;
    out.surface.resize(air_temp_c.size());
    out.bottom.resize(air_temp_c.size());

    double ema = air_temp_c[0];
    for (std::size_t t = 0; t < air_temp_c.size(); ++t) {
        const int doy = calendar[t].day_of_year();
        ema += config.air_smoothing * (air_temp_c[t] - ema);
        const double surface_target = clamp(
            config.surface_mean_c +
                config.surface_follow * (ema - config.surface_mean_c),
            0.5, 38.0);
        out.surface[t] = (t == 0) ? surface_target
                                  : limited_step(out.surface[t - 1],
                                                 surface_target, rate);

        // Stratified: the bottom hugs its seasonal curve (plus any internal
        // wobble) but never tops the surface.  Mixed season: the water
        // column homogenizes instead.
        const double anomaly =
            bottom_anomaly_c.empty() ? 0.0 : bottom_anomaly_c[t];
        const double bottom_target =
            stratified(doy)
                ? std::min(bottom_raw(doy) + anomaly, out.surface[t])
                : out.surface[t];
        out.bottom[t] = (t == 0) ? clamp(bottom_target, 0.5, 38.0)
                                 : clamp(limited_step(out.bottom[t - 1],
                                                      bottom_target, rate),
                                         0.5, 38.0);
    }
    return out;
}

void SynthConfig::validate() const {
    if (n_segments < 1) throw ConfigError("synth: need at least one segment");
    if (n_reservoirs < 0) throw ConfigError("synth: negative reservoir count");
    if (n_days < 10) throw ConfigError("synth: need at least 10 days");
    if (branching < 0.0 || branching > 1.0) {
        throw ConfigError("synth: branching must lie in [0, 1]");
    }
    if (distance_min_m <= 0.0 || distance_max_m < distance_min_m) {
        throw ConfigError("synth: distance range must satisfy 0 < min <= max");
    }
    if (obs_density_min <= 0.0 || obs_density_max > 1.0 ||
        obs_density_min > obs_density_max) {
        throw ConfigError("synth: observation density range must lie in "
                          "(0, 1] with min <= max");
    }
    if (obs_noise_c < 0.0) throw ConfigError("synth: negative noise");
    if (release_threshold_c < kMinPlausibleTempC ||
        release_threshold_c > kMaxPlausibleTempC) {
        throw ConfigError("synth: release threshold outside physical range");
    }
    if (cold_release_flow <= 0.0 || base_release_flow <= 0.0) {
        throw ConfigError("synth: release flows must be positive");
    }
    if (random_release_prob < 0.0 || random_release_prob >= 1.0) {
        throw ConfigError("synth: random_release_prob must lie in [0, 1)");
    }
    lake.validate();
}

SynthBasin synth_basin(const SynthConfig& config) {
    config.validate();
    const int n = config.n_segments;
    const int m = config.n_reservoirs;
    const int days = config.n_days;
    Rng rng(config.seed);

    // --- river tree: edges run from each segment toward the outlet (0) ----
    std::vector<int> parent(n, -1);
    for (int i = 1; i < n; ++i) {
        const bool branch = rng.uniform() < config.branching;
        parent[i] = (branch && i >= 2) ? rng.uniform_int(0, i - 2) : i - 1;
    }
    std::vector<int> hops(n, 0);
    for (int i = 1; i < n; ++i) hops[i] = hops[parent[i]] + 1;
    std::vector<int> n_upstream(n, 0);
    for (int i = 1; i < n; ++i) {
        for (int a = parent[i]; a != -1; a = parent[a]) ++n_upstream[a];
    }
    std::vector<double> edge_dist(n, 0.0);
    for (int i = 1; i < n; ++i) {
        edge_dist[i] = rng.uniform(config.distance_min_m, config.distance_max_m);
    }

    // --- splice reservoirs onto edges with real downstream reach ----------
    std::vector<int> candidates;
    for (int i = 1; i < n; ++i) {
        if (hops[parent[i]] >= 1) candidates.push_back(i);
    }
    std::sort(candidates.begin(), candidates.end(), [&](int a, int b) {
        return std::tie(hops[parent[b]], a) < std::tie(hops[parent[a]], b);
    });
    if (static_cast<int>(candidates.size()) < m) {
        throw ConfigError("synth: network too small to place " +
                          std::to_string(m) + " reservoirs");
    }
    std::vector<int> res_source(candidates.begin(), candidates.begin() + m);
    std::sort(res_source.begin(), res_source.end());
    std::vector<int> res_of_source(n, -1);
    for (int k = 0; k < m; ++k) res_of_source[res_source[k]] = k;

    std::vector<DirectEdge> edges;
    for (int i = 1; i < n; ++i) {
        const int k = res_of_source[i];
        if (k < 0) {
            edges.push_back({NodeId::segment(i), NodeId::segment(parent[i]),
                             EdgeClass::kSegToSeg, edge_dist[i]});
        } else {
            edges.push_back({NodeId::segment(i), NodeId::reservoir(k),
                             EdgeClass::kSegToRes, edge_dist[i] * 0.45});
            edges.push_back({NodeId::reservoir(k), NodeId::segment(parent[i]),
                             EdgeClass::kResToSeg, edge_dist[i] * 0.55});
        }
    }
    NetworkTopology topo = NetworkTopology::build(n, m, std::move(edges));

    // --- static segment attributes ----------------------------------------
    std::vector<double> elev(n), catchment(n);
    for (int i = 0; i < n; ++i) {
        // A gentle valley profile: headwaters sit cooler than the outlet
        // but not so high that the release policy can never trigger there.
        elev[i] = kBaseElevation + 35.0 * hops[i] + rng.uniform(-15.0, 15.0);
        catchment[i] = 30.0 + 11.0 * n_upstream[i] + rng.uniform(0.0, 6.0);
    }

    // --- reservoir metadata -------------------------------------------------
    BasinDataset data;
    data.reservoir_meta = Tensor(m, 5);
    for (int k = 0; k < m; ++k) {
        data.reservoir_meta(k, 0) = rng.uniform(25.0, 75.0);    // dam height
        data.reservoir_meta(k, 1) = rng.uniform(120.0, 800.0);  // dam length
        data.reservoir_meta(k, 2) = rng.uniform(18.0, 55.0);    // depth
        data.reservoir_meta(k, 3) = elev[res_source[k]] - 5.0;
        data.reservoir_meta(k, 4) = catchment[res_source[k]] + 20.0;
    }

    // --- weather: shared regional signal plus per-segment local noise ------
    data.calendar.resize(days);
    for (int t = 0; t < days; ++t) {
        data.calendar[t] = config.start_date.plus_days(t);
    }
    std::vector<double> regional(days);
    double reg_state = 0.0;
    for (int t = 0; t < days; ++t) {
        reg_state = 0.75 * reg_state + rng.normal(0.0, 1.1);
        regional[t] = reg_state;
    }
    std::vector<std::vector<double>> air(n, std::vector<double>(days));
    for (int i = 0; i < n; ++i) {
        double local = 0.0;
        for (int t = 0; t < days; ++t) {
            local = 0.6 * local + rng.normal(0.0, 0.8);
            const int doy = data.calendar[t].day_of_year();
            air[i][t] = seasonal_air(doy) -
                        kLapseRate * (elev[i] - kBaseElevation) +
                        regional[t] + local;
        }
    }

    data.drivers = Array3(n, days, 10);
    for (int i = 0; i < n; ++i) {
        double discharge_ar = 0.0;
        for (int t = 0; t < days; ++t) {
            const int doy = data.calendar[t].day_of_year();
            const double rain =
                (rng.uniform() < 0.25) ? rng.uniform(0.0, 18.0) : 0.0;
            discharge_ar = 0.8 * discharge_ar + rng.normal(0.0, 0.5);
            double airmean3 = 0.0;
            int nmean = 0;
            for (int dt = 0; dt <= 2 && t - dt >= 0; ++dt) {
                airmean3 += air[i][t - dt];
                ++nmean;
            }
            data.drivers(i, t, 0) = air[i][t];
            data.drivers(i, t, 1) =
                std::max(0.0, 520.0 +
                                  230.0 * std::sin(kTwoPi * (doy - 80) / 365.0) +
                                  rng.normal(0.0, 25.0));
            data.drivers(i, t, 2) = rain;
            data.drivers(i, t, 3) =
                std::max(0.4, 5.0 + 2.6 * std::sin(kTwoPi * (doy - 30) / 365.0) +
                                  0.25 * rain + discharge_ar);
            data.drivers(i, t, 4) =
                58.0 + 18.0 * std::sin(kTwoPi * (doy - 140) / 365.0) +
                rng.normal(0.0, 4.0);
            data.drivers(i, t, 5) = std::abs(rng.normal(3.0, 1.5));
            data.drivers(i, t, 6) = airmean3 / nmean;
            data.drivers(i, t, 7) = std::sin(kTwoPi * (doy - 80) / 365.0);
            data.drivers(i, t, 8) = catchment[i];
            data.drivers(i, t, 9) = rng.normal(0.0, 1.0);
        }
    }

    // --- lakes: profiles from the air above each reservoir's feed ---------
    std::vector<LakeProfiles> lakes(m);
    for (int k = 0; k < m; ++k) {
        const auto& ups = topo.upstream_segments_of_reservoir(k);
        std::vector<double> lake_air(days, 0.0);
        for (int t = 0; t < days; ++t) {
            if (ups.empty()) {
                lake_air[t] = seasonal_air(data.calendar[t].day_of_year()) +
                              regional[t];
            } else {
                for (int i : ups) lake_air[t] += air[i][t];
                lake_air[t] /= static_cast<double>(ups.size());
            }
        }
        // Slow internal wobble of the bottom layer, independent of the
        // weather: decorrelates over ~10 days with the configured
        // stationary spread.
        std::vector<double> anomaly(days, 0.0);
        const double innov = 0.44 * config.lake.bottom_noise_c;
        double wobble = 0.0;
        for (int t = 0; t < days; ++t) {
            wobble = 0.9 * wobble + rng.normal(0.0, innov);
            anomaly[t] = wobble;
        }
        lakes[k] = toy_lake_profiles(config.lake, lake_air, data.calendar,
                                     anomaly);
    }

    // --- release policy: anticipate tomorrow, pull cold water if hot ------
    std::vector<std::vector<char>> pulse(m, std::vector<char>(days, 0));
    for (int k = 0; k < m; ++k) {
        for (int t = 0; t < days; ++t) {
            pulse[k][t] = rng.uniform() < config.random_release_prob;
        }
    }
    GroundTruth truth;
    truth.true_temp = Tensor(n, days);
    truth.counterfactual_temp = Tensor(n, days);
    truth.release_active = Tensor(m, days);

    data.release_flows = Array3(m, days, 2);
    data.depth_temps = Array3(m, days, 2);
    data.has_release_data.assign(m, 1);

    std::vector<int> first_dn(m, -1);  // the segment each reservoir feeds
    for (const DirectEdge& e : topo.direct_edges()) {
        if (e.edge_class == EdgeClass::kResToSeg) {
            first_dn[e.source.index] = e.target.index;
        }
    }

    std::vector<double> release_temp(m, 0.0), res_out(m, 0.0),
        cf_res_out(m, 0.0);
    std::vector<double> local_temp(n, 0.0);
    // Direct upstream neighbors of each segment, as (is_reservoir, index).
    std::vector<std::vector<std::pair<bool, int>>> feeders(n);
    for (const DirectEdge& e : topo.direct_edges()) {
        if (e.target.kind != NodeKind::kSegment) continue;
        feeders[e.target.index].push_back(
            {e.source.kind == NodeKind::kReservoir, e.source.index});
    }

    for (int t = 0; t < days; ++t) {
        for (int k = 0; k < m; ++k) {
            const int dn = first_dn[k];
            const int doy_next =
                data.calendar[std::min(t + 1, days - 1)].day_of_year();
            const double anticipated_air =
                seasonal_air(doy_next) -
                kLapseRate * (elev[dn] - kBaseElevation) +
                0.75 * regional[t];
            const bool scheduled =
                equilibrium_temp(anticipated_air) > config.release_threshold_c;
            const bool triggered = scheduled || pulse[k][t];
            const double surface_flow = triggered
                                            ? 0.25 * config.base_release_flow
                                            : config.base_release_flow;
            const double bottom_flow = triggered
                                           ? config.cold_release_flow
                                           : 0.08 * config.base_release_flow;
            data.release_flows(k, t, 0) = surface_flow;
            data.release_flows(k, t, 1) = bottom_flow;
            data.depth_temps(k, t, 0) = lakes[k].surface[t];
            data.depth_temps(k, t, 1) = lakes[k].bottom[t];
            truth.release_active(k, t) = triggered ? 1.0 : 0.0;
            release_temp[k] = (surface_flow * lakes[k].surface[t] +
                               bottom_flow * lakes[k].bottom[t]) /
                              (surface_flow + bottom_flow);
        }

        // Segments in decreasing index order: every feeder has a higher
        // index (or is a reservoir), so upstream is always already done.
        for (int i = n - 1; i >= 0; --i) {
            const double eq = equilibrium_temp(air[i][t]);
            local_temp[i] = (t == 0) ? eq : local_temp[i] + 0.35 * (eq - local_temp[i]);

            double inflow = 0.0, inflow_cf = 0.0;
            if (!feeders[i].empty()) {
                for (const auto& [is_res, idx] : feeders[i]) {
                    inflow += is_res ? res_out[idx] : truth.true_temp(idx, t);
                    inflow_cf += is_res ? cf_res_out[idx]
                                        : truth.counterfactual_temp(idx, t);
                }
                inflow /= static_cast<double>(feeders[i].size());
                inflow_cf /= static_cast<double>(feeders[i].size());
                truth.true_temp(i, t) = 0.42 * local_temp[i] + 0.58 * inflow;
                truth.counterfactual_temp(i, t) =
                    0.42 * local_temp[i] + 0.58 * inflow_cf;
            } else {
                truth.true_temp(i, t) = local_temp[i];
                truth.counterfactual_temp(i, t) = local_temp[i];
            }
            // A reservoir only stamps its own thermal signature on the
            // river while actively releasing cold bottom water; on quiet
            // days (and always in the counterfactual world) it passes its
            // inflow through untouched.  The source segment has a higher
            // index, so both outflows are ready before any downstream
            // segment reads them today.
            const int k = res_of_source[i];
            if (k >= 0) {
                res_out[k] = truth.release_active(k, t) != 0.0
                                 ? release_temp[k]
                                 : truth.true_temp(i, t);
                cf_res_out[k] = truth.counterfactual_temp(i, t);
            }
        }
    }

    // --- sparse noisy observations of the managed world --------------------
    std::vector<double> density(n);
    for (int i = 0; i < n; ++i) {
        density[i] = rng.uniform(config.obs_density_min, config.obs_density_max);
    }
    for (int i = 0; i < n; ++i) {
        for (int t = 0; t < days; ++t) {
            if (rng.uniform() >= density[i]) continue;
            const double noise =
                config.obs_noise_c > 0.0 ? rng.normal(0.0, config.obs_noise_c)
                                         : 0.0;
            Observation o;
            o.segment = i;
            o.day = t;
            o.temp_c = clamp(truth.true_temp(i, t) + noise,
                             kMinPlausibleTempC + 0.1, kMaxPlausibleTempC - 0.1);
            data.observations.push_back(o);
        }
    }

    data.validate();
    return {std::move(topo), std::move(data), std::move(truth)};
}

SynthBasin merge_basins(const SynthBasin& a, const SynthBasin& b) {
    const BasinDataset& da = a.dataset;
    const BasinDataset& db = b.dataset;
    if (da.calendar.size() != db.calendar.size() ||
        da.calendar.front() != db.calendar.front()) {
        throw DataError("merge_basins: calendars differ");
    }
    if (da.n_features() != db.n_features()) {
        throw DataError("merge_basins: driver feature counts differ");
    }
    const int na = da.n_segments(), nb = db.n_segments();
    const int ma = da.n_reservoirs(), mb = db.n_reservoirs();
    const int days = da.n_days();
    const int la = da.n_layers(), lb = db.n_layers();
    if (la > 0 && lb > 0 && la != lb) {
        throw DataError("merge_basins: release layer counts differ");
    }
    const int layers = std::max(la, lb);

    std::vector<DirectEdge> edges = a.topology.direct_edges();
    for (DirectEdge e : b.topology.direct_edges()) {
        e.source.index += (e.source.kind == NodeKind::kSegment) ? na : ma;
        e.target.index += (e.target.kind == NodeKind::kSegment) ? na : ma;
        edges.push_back(e);
    }
    NetworkTopology topo =
        NetworkTopology::build(na + nb, ma + mb, std::move(edges));

    BasinDataset data;
    data.calendar = da.calendar;
    data.drivers = Array3(na + nb, days, da.n_features());
    for (int t = 0; t < days; ++t) {
        for (int f = 0; f < da.n_features(); ++f) {
            for (int i = 0; i < na; ++i) {
                data.drivers(i, t, f) = da.drivers(i, t, f);
            }
            for (int i = 0; i < nb; ++i) {
                data.drivers(na + i, t, f) = db.drivers(i, t, f);
            }
        }
    }
    data.observations = da.observations;
    for (Observation o : db.observations) {
        o.segment += na;
        data.observations.push_back(o);
    }
    std::sort(data.observations.begin(), data.observations.end(),
              [](const Observation& x, const Observation& y) {
                  return std::tie(x.segment, x.day) < std::tie(y.segment, y.day);
              });

    data.reservoir_meta = Tensor(ma + mb, 5);
    for (int k = 0; k < ma; ++k) {
        for (int f = 0; f < 5; ++f) {
            data.reservoir_meta(k, f) = da.reservoir_meta(k, f);
        }
    }
    for (int k = 0; k < mb; ++k) {
        for (int f = 0; f < 5; ++f) {
            data.reservoir_meta(ma + k, f) = db.reservoir_meta(k, f);
        }
    }
    data.release_flows = Array3(ma + mb, days, layers);
    data.depth_temps = Array3(ma + mb, days, layers);
    data.has_release_data.assign(ma + mb, 0);
    for (int k = 0; k < ma; ++k) {
        data.has_release_data[k] = da.has_release_data[k];
        for (int t = 0; t < days && la > 0; ++t) {
            for (int d = 0; d < la; ++d) {
                data.release_flows(k, t, d) = da.release_flows(k, t, d);
                data.depth_temps(k, t, d) = da.depth_temps(k, t, d);
            }
        }
    }
    for (int k = 0; k < mb; ++k) {
        data.has_release_data[ma + k] = db.has_release_data[k];
        for (int t = 0; t < days && lb > 0; ++t) {
            for (int d = 0; d < lb; ++d) {
                data.release_flows(ma + k, t, d) = db.release_flows(k, t, d);
                data.depth_temps(ma + k, t, d) = db.depth_temps(k, t, d);
            }
        }
    }

    GroundTruth truth;
    truth.true_temp = Tensor(na + nb, days);
    truth.counterfactual_temp = Tensor(na + nb, days);
    truth.release_active = Tensor(ma + mb, days);
    for (int t = 0; t < days; ++t) {
        for (int i = 0; i < na; ++i) {
            truth.true_temp(i, t) = a.truth.true_temp(i, t);
            truth.counterfactual_temp(i, t) = a.truth.counterfactual_temp(i, t);
        }
        for (int i = 0; i < nb; ++i) {
            truth.true_temp(na + i, t) = b.truth.true_temp(i, t);
            truth.counterfactual_temp(na + i, t) =
                b.truth.counterfactual_temp(i, t);
        }
        for (int k = 0; k < ma; ++k) {
            truth.release_active(k, t) = a.truth.release_active(k, t);
        }
        for (int k = 0; k < mb; ++k) {
            truth.release_active(ma + k, t) = b.truth.release_active(k, t);
        }
    }

    data.validate();
    return {std::move(topo), std::move(data), std::move(truth)};
}

void strip_release_data(BasinDataset& data) {
    std::fill(data.has_release_data.begin(), data.has_release_data.end(), 0);
}

void save_truth_csv(const std::filesystem::path& path, const GroundTruth& truth,
                    std::span<const Date> calendar) {
    CsvWriter out(path, {"segment_id", "date", "true_temp_c",
                         "counterfactual_temp_c"});
    for (std::size_t i = 0; i < truth.true_temp.rows(); ++i) {
        for (std::size_t t = 0; t < calendar.size(); ++t) {
            out.row({std::to_string(i), calendar[t].iso(),
                     fmt_double(truth.true_temp(i, t)),
                     fmt_double(truth.counterfactual_temp(i, t))});
        }
    }
    out.close();
}

}  // namespace sag
