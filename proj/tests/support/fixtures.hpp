#ifndef SAG_TESTS_SUPPORT_FIXTURES_HPP
#define SAG_TESTS_SUPPORT_FIXTURES_HPP

// Small hand-built networks and datasets shared by the behavioral tests.

#include <algorithm>
#include <vector>

#include "sag/dataset.hpp"
#include "sag/dates.hpp"
#include "sag/graph.hpp"
#include "sag/rng.hpp"

namespace fixtures {

inline sag::DirectEdge seg_seg(int a, int b, double d) {
    return {sag::NodeId::segment(a), sag::NodeId::segment(b),
            sag::EdgeClass::kSegToSeg, d};
}
inline sag::DirectEdge seg_res(int a, int k, double d) {
    return {sag::NodeId::segment(a), sag::NodeId::reservoir(k),
            sag::EdgeClass::kSegToRes, d};
}
inline sag::DirectEdge res_seg(int k, int b, double d) {
    return {sag::NodeId::reservoir(k), sag::NodeId::segment(b),
            sag::EdgeClass::kResToSeg, d};
}

/// 5 segments, 2 reservoirs, confluence at s2, outlet s4.
/// Downstream sets: res0 -> {1, 2, 4}, res1 -> {2, 4}.
inline sag::NetworkTopology forked_topology() {
    return sag::NetworkTopology::build(
        5, 2,
        {seg_res(0, 0, 1000.0), res_seg(0, 1, 2000.0), seg_seg(1, 2, 1500.0),
         seg_res(3, 1, 900.0), res_seg(1, 2, 1100.0), seg_seg(2, 4, 2200.0)});
}

struct BasinOptions {
    int days = 30;
    int features = 3;
    int layers = 2;
    /// Observation probability per segment-day; 1.0 means dense.
    double obs_density = 1.0;
    std::uint64_t seed = 99;
};

/**
 * A dataset whose observations are a fixed linear function of the drivers,
 * so a few epochs of training must push the loss down.  Operation records
 * are filled for every reservoir; callers can strip or zero them.
 */
inline sag::BasinDataset learnable_basin(const sag::NetworkTopology& topo,
                                         const BasinOptions& opt = {}) {
    sag::Rng rng(opt.seed);
    const int n = topo.segment_count();
    const int m = topo.reservoir_count();
    sag::BasinDataset data;
    const sag::Date start = sag::Date::from_iso("2010-01-01");
    for (int t = 0; t < opt.days; ++t) {
        data.calendar.push_back(start.plus_days(t));
    }
    data.drivers = sag::Array3(n, opt.days, opt.features);
    for (int i = 0; i < n; ++i) {
        for (int t = 0; t < opt.days; ++t) {
            for (int f = 0; f < opt.features; ++f) {
                data.drivers(i, t, f) = rng.normal(0.0, 1.0);
            }
            double y = 9.0 + 2.0 * data.drivers(i, t, 0) -
                       1.5 * data.drivers(i, t, 1);
            if (opt.features > 2) y += 0.5 * data.drivers(i, t, 2);
            y = std::clamp(y, -4.5, 44.5);
            if (rng.uniform() < opt.obs_density) {
                data.observations.push_back({i, t, y});
            }
        }
    }
    data.reservoir_meta = sag::Tensor(m, 5);
    for (std::size_t i = 0; i < data.reservoir_meta.size(); ++i) {
        data.reservoir_meta[i] = rng.uniform(20.0, 400.0);
    }
    data.release_flows = sag::Array3(m, opt.days, opt.layers);
    data.depth_temps = sag::Array3(m, opt.days, opt.layers);
    for (int k = 0; k < m; ++k) {
        for (int t = 0; t < opt.days; ++t) {
            for (int d = 0; d < opt.layers; ++d) {
                data.release_flows(k, t, d) = rng.uniform(0.5, 5.0);
                data.depth_temps(k, t, d) = rng.uniform(4.0, 18.0);
            }
        }
    }
    data.has_release_data.assign(m, 1);
    return data;
}

}  // namespace fixtures

#endif  // SAG_TESTS_SUPPORT_FIXTURES_HPP
