#ifndef SAG_DATASET_HPP
#define SAG_DATASET_HPP

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "sag/dates.hpp"
#include "sag/graph.hpp"
#include "sag/tensor.hpp"

namespace sag {

/// Dense rank-3 array of doubles, row-major in (i, j, k).
class Array3 {
public:
    Array3() = default;
    Array3(std::size_t d0, std::size_t d1, std::size_t d2)
        : d0_(d0), d1_(d1), d2_(d2), data_(d0 * d1 * d2, 0.0) {}

    std::size_t dim0() const { return d0_; }
    std::size_t dim1() const { return d1_; }
    std::size_t dim2() const { return d2_; }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * d1_ + j) * d2_ + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * d1_ + j) * d2_ + k];
    }

private:
    std::size_t d0_ = 0, d1_ = 0, d2_ = 0;
    std::vector<double> data_;
};

/// One temperature reading: segment, calendar index, degrees Celsius.
struct Observation {
    int segment = 0;
    int day = 0;
    double temp_c = 0.0;
};

/// Observed physical range for stream temperature, degrees Celsius.
inline constexpr double kMinPlausibleTempC = -5.0;
inline constexpr double kMaxPlausibleTempC = 45.0;

/**
 * Shared read counters for reservoir operation data.
 *
 * Model variants differ in which reservoir inputs they are allowed to touch;
 * experiments assert isolation by checking these counters.  They sit behind
 * a shared_ptr so dataset copies (standardization returns one) keep counting
 * into the same place, including across worker threads.
 */
struct ReleaseAccessCounters {
    std::atomic<std::uint64_t> flow_reads{0};
    std::atomic<std::uint64_t> profile_reads{0};
};

/**
 * One basin on one contiguous daily calendar.
 *
 * Shapes: drivers are segments x days x features, reservoir_meta is
 * reservoirs x meta features, release flows and depth temperatures are
 * reservoirs x days x depth layers.  Observations are sparse.  A reservoir
 * either has both operation series over the whole calendar or neither.
 */
struct BasinDataset {
    std::vector<Date> calendar;
    Array3 drivers;
    std::vector<Observation> observations;
    Tensor reservoir_meta;
    Array3 release_flows;
    Array3 depth_temps;
    std::vector<std::uint8_t> has_release_data;
    std::shared_ptr<ReleaseAccessCounters> access =
        std::make_shared<ReleaseAccessCounters>();

    int n_segments() const { return static_cast<int>(drivers.dim0()); }
    int n_days() const { return static_cast<int>(calendar.size()); }
    int n_features() const { return static_cast<int>(drivers.dim2()); }
    int n_reservoirs() const { return static_cast<int>(reservoir_meta.rows()); }
    int n_layers() const { return static_cast<int>(release_flows.dim2()); }

    /// Calendar index of a date; -1 when outside the calendar.
    int day_index(Date d) const;

    /// Counted read of one release flow value (reservoir, day, layer).
    double release_flow(int k, int t, int layer) const {
        access->flow_reads.fetch_add(1, std::memory_order_relaxed);
        return release_flows(k, t, layer);
    }

    /// Counted read of one simulated depth temperature.
    double depth_temp(int k, int t, int layer) const {
        access->profile_reads.fetch_add(1, std::memory_order_relaxed);
        return depth_temps(k, t, layer);
    }

    /// Check every structural invariant; throws the matching DataError.
    void validate() const;
};

/// A dataset together with the routing network it lives on.
struct LoadedBasin {
    NetworkTopology topology;
    BasinDataset dataset;
};

/**
 * Load a basin directory: edges.csv, drivers.csv, observations.csv,
 * reservoir_meta.csv, and optionally release.csv plus profiles.csv.
 * Validates everything load time; see BasinDataset::validate for the rules.
 */
LoadedBasin load_dataset(const std::filesystem::path& dir);

/// Write a basin directory in the exact format load_dataset reads.
void save_dataset(const std::filesystem::path& dir,
                  const NetworkTopology& topo, const BasinDataset& data);

/// Per-feature first and second moments over a day range.
struct DriverStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

/// Result of standardizing drivers with train-period statistics.
struct StandardizedBasin {
    BasinDataset data;
    DriverStats stats;
    std::vector<int> zero_variance_features;  // unit scale substituted
};

/**
 * Z-score every driver feature using statistics from days
 * [train_begin, train_end) only, applied over the whole calendar.  Features
 * with zero variance on the train period get unit scale and are reported so
 * callers can warn.
 */
StandardizedBasin standardize_drivers(const BasinDataset& data,
                                      int train_begin, int train_end);

/// Apply previously computed stats (checkpoint reuse at evaluation time).
BasinDataset apply_driver_stats(const BasinDataset& data,
                                const DriverStats& stats);

/**
 * Z-score static reservoir attributes column-wise across reservoirs.
 * Attributes live on very different scales (meters vs square kilometers);
 * without this the downstream sigmoid filters start out saturated.  A
 * zero-variance column (always the case with a single reservoir) maps to
 * zeros.
 */
Tensor standardize_reservoir_meta(const Tensor& meta);

}  // namespace sag

#endif  // SAG_DATASET_HPP
