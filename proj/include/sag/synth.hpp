#ifndef SAG_SYNTH_HPP
#define SAG_SYNTH_HPP

#include <cstdint>
#include <span>

#include "sag/dataset.hpp"
#include "sag/dates.hpp"
#include "sag/graph.hpp"

namespace sag {

/**
 * Toy stratified lake: stands in for a full lake simulator at desk scale.
 *
 * The surface layer chases smoothed air temperature; the bottom layer rides
 * a damped, lagged seasonal sinusoid and is capped by the surface during
 * the stratified window.  Both series are rate-limited to
 * max_daily_change_c per day, which is what makes them lake-like rather
 * than weather-like.
 */
struct LakeConfig {
    double surface_mean_c = 12.0;
    double surface_follow = 0.85;     ///< fraction of smoothed-air deviation kept
    double air_smoothing = 0.2;       ///< EMA coefficient toward daily air
    double bottom_mean_c = 7.0;
    double bottom_amplitude_c = 5.0;
    double bottom_lag_days = 50.0;
    int stratified_start_doy = 95;    ///< day-of-year window with cold bottom
    int stratified_end_doy = 305;
    double max_daily_change_c = 2.0;
    /// Standard deviation of the slow internal wobble on the stratified
    /// bottom layer (mixing events, inflow variation).  This part of the
    /// released temperature cannot be inferred from weather, so only a
    /// model that reads the depth profiles can account for it.
    double bottom_noise_c = 0.8;

    void validate() const;
};

/// Surface and bottom temperature series, one value per input day.
struct LakeProfiles {
    std::vector<double> surface;
    std::vector<double> bottom;
};

/**
 * `bottom_anomaly_c`, when non-empty, adds a per-day offset to the bottom
 * layer's stratified target (it must then match the calendar length).  The
 * surface cap, rate limits and physical clamps still apply afterwards.
 */
LakeProfiles toy_lake_profiles(const LakeConfig& config,
                               std::span<const double> air_temp_c,
                               std::span<const Date> calendar,
                               std::span<const double> bottom_anomaly_c = {});

/// Everything that shapes a generated basin.
struct SynthConfig {
    int n_segments = 20;
    int n_reservoirs = 2;
    int n_days = 1500;
    std::uint64_t seed = 1;

    double branching = 0.35;        ///< chance a segment starts a side branch
    double distance_min_m = 1000.0;
    double distance_max_m = 8000.0;

    double obs_density_min = 0.3;   ///< per-segment observation frequency
    double obs_density_max = 0.9;
    double obs_noise_c = 0.2;

    /// Cold water goes out the bottom gate when tomorrow's downstream
    /// temperature is headed past this threshold.
    double release_threshold_c = 19.0;
    double cold_release_flow = 60.0;
    double base_release_flow = 15.0;
    /// Unscheduled operational releases: visible in the flow records,
    /// invisible to any forecast.
    double random_release_prob = 0.08;

    Date start_date{10957};  // 2000-01-01
    LakeConfig lake;

    void validate() const;
};

/// Latent truth kept aside for evaluation; never part of the model inputs.
struct GroundTruth {
    Tensor true_temp;            // N x T, the process observations sample
    Tensor counterfactual_temp;  // N x T, same world with no reservoir policy
    Tensor release_active;       // M x T, 1 on triggered-release days
};

struct SynthBasin {
    NetworkTopology topology;
    BasinDataset dataset;
    GroundTruth truth;
};

/**
 * Generate a full synthetic basin: a random tree of segments draining to
 * one outlet, reservoirs spliced onto mid-network edges, seasonal drivers,
 * a latent advective temperature process, the threshold release policy, and
 * sparse noisy observations of the managed world.
 */
SynthBasin synth_basin(const SynthConfig& config);

/**
 * Concatenate two basins sharing a calendar into one dataset with two
 * disconnected river networks.  Segment, reservoir and observation indices
 * of `b` are shifted past `a`'s.
 */
SynthBasin merge_basins(const SynthBasin& a, const SynthBasin& b);

/// Drop the operation records' availability flags (the arrays stay, unread).
void strip_release_data(BasinDataset& data);

/// Write the latent truth beside a saved dataset.
void save_truth_csv(const std::filesystem::path& path, const GroundTruth& truth,
                    std::span<const Date> calendar);

}  // namespace sag

#endif  // SAG_SYNTH_HPP
