#include "sag/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>

#include "sag/csv.hpp"
#include "sag/errors.hpp"

namespace sag {

namespace {

const char* kMetaColumns[] = {"dam_height_m", "dam_length_m", "depth_m",
                              "elevation_m", "catchment_area_km2"};
constexpr int kMetaDim = 5;

/// Count contiguous columns named <prefix><first>, <prefix><first+1>, ...
int count_numbered_columns(const CsvTable& table, const std::string& prefix,
                           int first) {
    int n = 0;
    while (true) {
        const std::string name = prefix + std::to_string(first + n);
        bool found = false;
        for (const auto& h : table.header) {
            if (h == name) {
                found = true;
                break;
            }
        }
        if (!found) break;
        ++n;
    }
    if (n == 0) {
        throw SchemaError(table.source.string() + ": no '" + prefix +
                          std::to_string(first) + "' column");
    }
    return n;
}

void check_plausible_temp(double v, const std::string& context) {
    if (!std::isfinite(v) || v < kMinPlausibleTempC || v > kMaxPlausibleTempC) {
        throw DataError(context + ": temperature " + fmt_double(v) +
                        " outside plausible range [" +
                        fmt_double(kMinPlausibleTempC) + ", " +
                        fmt_double(kMaxPlausibleTempC) + "] C");
    }
}

struct LayerTable {
    // (reservoir, day index) -> per-layer values
    std::map<std::pair<int, int>, std::vector<double>> cells;
    int layers = 0;
};

LayerTable read_layer_csv(const std::filesystem::path& path,
                          const std::string& prefix, int n_reservoirs,
                          const std::vector<Date>& calendar) {
    CsvTable table = read_csv(path);
    LayerTable out;
    out.layers = count_numbered_columns(table, prefix, 1);
    const auto c_id = table.column("reservoir_id");
    const auto c_date = table.column("date");
    std::vector<std::size_t> c_layer(out.layers);
    for (int d = 0; d < out.layers; ++d) {
        c_layer[d] = table.column(prefix + std::to_string(d + 1));
    }

    const Date first = calendar.front();
    const int days = static_cast<int>(calendar.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::string ctx = path.string() + " row " + std::to_string(r + 2);
        const int k = cell_to_int(table.cell(r, c_id), ctx);
        if (k < 0 || k >= n_reservoirs) {
            throw SchemaError(ctx + ": unknown reservoir " + std::to_string(k));
        }
        const Date date = Date::from_iso(table.cell(r, c_date));
        const int t = first.days_until(date);
        if (t < 0 || t >= days) {
            throw PartialReleaseData(ctx + ": date " + date.iso() +
                                     " outside the basin calendar");
        }
        std::vector<double> values(out.layers);
        for (int d = 0; d < out.layers; ++d) {
            values[d] = cell_to_double(table.cell(r, c_layer[d]), ctx);
        }
        if (!out.cells.emplace(std::make_pair(k, t), std::move(values)).second) {
            throw SchemaError(ctx + ": duplicate entry for reservoir " +
                              std::to_string(k) + " on " + date.iso());
        }
    }
    return out;
}

}  // namespace

int BasinDataset::day_index(Date d) const {
    if (calendar.empty()) return -1;
    const int t = calendar.front().days_until(d);
    return (t >= 0 && t < n_days()) ? t : -1;
}

void BasinDataset::validate() const {
    if (calendar.empty()) throw DataError("dataset has an empty calendar");
    for (std::size_t t = 1; t < calendar.size(); ++t) {
        const int gap = calendar[t - 1].days_until(calendar[t]);
        if (gap != 1) {
            throw CalendarGap("calendar jumps from " + calendar[t - 1].iso() +
                              " to " + calendar[t].iso());
        }
    }
    if (drivers.dim0() == 0 || drivers.dim2() == 0) {
        throw DataError("driver array has no segments or no features");
    }
    if (drivers.dim1() != calendar.size()) {
        throw DataError("driver array covers " +
                        std::to_string(drivers.dim1()) + " days, calendar has " +
                        std::to_string(calendar.size()));
    }
    for (std::size_t i = 0; i < drivers.dim0(); ++i) {
        for (std::size_t t = 0; t < drivers.dim1(); ++t) {
            for (std::size_t f = 0; f < drivers.dim2(); ++f) {
                if (!std::isfinite(drivers(i, t, f))) {
                    throw DataError("non-finite driver value at segment " +
                                    std::to_string(i) + ", day " +
                                    std::to_string(t));
                }
            }
        }
    }
    for (const Observation& o : observations) {
        if (o.segment < 0 || o.segment >= n_segments() || o.day < 0 ||
            o.day >= n_days()) {
            throw OrphanObservation(
                "observation references segment " + std::to_string(o.segment) +
                ", day " + std::to_string(o.day) + " outside the dataset");
        }
        check_plausible_temp(o.temp_c, "observation at segment " +
                                           std::to_string(o.segment));
    }
    if (!reservoir_meta.empty() &&
        reservoir_meta.cols() != static_cast<std::size_t>(kMetaDim)) {
        throw DataError("reservoir meta has " +
                        std::to_string(reservoir_meta.cols()) +
                        " features, expected " + std::to_string(kMetaDim));
    }
    if (!reservoir_meta.all_finite()) {
        throw DataError("non-finite reservoir meta feature");
    }
    const auto m = static_cast<std::size_t>(n_reservoirs());
    if (has_release_data.size() != m) {
        throw DataError("release availability flags do not match reservoirs");
    }
    if (release_flows.dim0() != depth_temps.dim0() ||
        release_flows.dim1() != depth_temps.dim1() ||
        release_flows.dim2() != depth_temps.dim2()) {
        throw PartialReleaseData(
            "release flows and depth temperatures have different shapes");
    }
    for (std::size_t k = 0; k < m; ++k) {
        if (!has_release_data[k]) continue;
        if (release_flows.dim0() != m ||
            release_flows.dim1() != calendar.size() ||
            release_flows.dim2() == 0) {
            throw PartialReleaseData("reservoir " + std::to_string(k) +
                                     " flagged as having operation data but "
                                     "the series arrays are incomplete");
        }
        for (std::size_t t = 0; t < release_flows.dim1(); ++t) {
            for (std::size_t d = 0; d < release_flows.dim2(); ++d) {
                const double f = release_flows(k, t, d);
                if (!std::isfinite(f) || f < 0.0) {
                    throw DataError("reservoir " + std::to_string(k) +
                                    ": release flow must be finite and "
                                    "non-negative");
                }
                check_plausible_temp(depth_temps(k, t, d),
                                     "depth temperature at reservoir " +
                                         std::to_string(k));
            }
        }
    }
}

LoadedBasin load_dataset(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw IoError("dataset directory '" + dir.string() + "' not found");
    }

    // --- drivers: defines the segment count and the calendar --------------
    CsvTable dtable = read_csv(dir / "drivers.csv");
    const int n_features = count_numbered_columns(dtable, "feat_", 0);
    const auto c_seg = dtable.column("segment_id");
    const auto c_date = dtable.column("date");
    std::vector<std::size_t> c_feat(n_features);
    for (int f = 0; f < n_features; ++f) {
        c_feat[f] = dtable.column("feat_" + std::to_string(f));
    }

    std::set<int> seg_ids;
    std::set<int> serials;
    for (std::size_t r = 0; r < dtable.rows.size(); ++r) {
        const std::string ctx =
            dtable.source.string() + " row " + std::to_string(r + 2);
        seg_ids.insert(cell_to_int(dtable.cell(r, c_seg), ctx));
        serials.insert(Date::from_iso(dtable.cell(r, c_date)).serial);
    }
    if (seg_ids.empty()) {
        throw SchemaError(dtable.source.string() + ": no driver rows");
    }
    const int n = static_cast<int>(seg_ids.size());
    if (*seg_ids.begin() != 0 || *seg_ids.rbegin() != n - 1) {
        throw SchemaError(dtable.source.string() +
                          ": segment ids must be dense 0.." +
                          std::to_string(n - 1));
    }
    std::vector<Date> calendar;
    calendar.reserve(serials.size());
    for (int s : serials) calendar.push_back(Date{s});
    for (std::size_t t = 1; t < calendar.size(); ++t) {
        if (calendar[t - 1].days_until(calendar[t]) != 1) {
            throw CalendarGap("drivers.csv: calendar jumps from " +
                              calendar[t - 1].iso() + " to " +
                              calendar[t].iso());
        }
    }
    const int days = static_cast<int>(calendar.size());
    const Date first = calendar.front();

    BasinDataset data;
    data.calendar = calendar;
    data.drivers = Array3(n, days, n_features);
    std::vector<char> seen(static_cast<std::size_t>(n) * days, 0);
    for (std::size_t r = 0; r < dtable.rows.size(); ++r) {
        const std::string ctx =
            dtable.source.string() + " row " + std::to_string(r + 2);
        const int i = cell_to_int(dtable.cell(r, c_seg), ctx);
        const int t = first.days_until(Date::from_iso(dtable.cell(r, c_date)));
        char& mark = seen[static_cast<std::size_t>(i) * days + t];
        if (mark) {
            throw SchemaError(ctx + ": duplicate driver row for segment " +
                              std::to_string(i));
        }
        mark = 1;
        for (int f = 0; f < n_features; ++f) {
            data.drivers(i, t, f) =
                cell_to_double(dtable.cell(r, c_feat[f]), ctx);
        }
    }
    for (int i = 0; i < n; ++i) {
        for (int t = 0; t < days; ++t) {
            if (!seen[static_cast<std::size_t>(i) * days + t]) {
                throw SchemaError("drivers.csv: segment " + std::to_string(i) +
                                  " has no row for " + calendar[t].iso());
            }
        }
    }

    // --- reservoir metadata ------------------------------------------------
    CsvTable mtable = read_csv(dir / "reservoir_meta.csv");
    const auto c_rid = mtable.column("reservoir_id");
    std::vector<std::size_t> c_meta(kMetaDim);
    for (int f = 0; f < kMetaDim; ++f) {
        c_meta[f] = mtable.column(kMetaColumns[f]);
    }
    const int m = static_cast<int>(mtable.rows.size());
    data.reservoir_meta = Tensor(m, kMetaDim);
    std::vector<char> meta_seen(m, 0);
    for (std::size_t r = 0; r < mtable.rows.size(); ++r) {
        const std::string ctx =
            mtable.source.string() + " row " + std::to_string(r + 2);
        const int k = cell_to_int(mtable.cell(r, c_rid), ctx);
        if (k < 0 || k >= m || meta_seen[k]) {
            throw SchemaError(ctx + ": reservoir ids must be dense 0.." +
                              std::to_string(m - 1) + " without repeats");
        }
        meta_seen[k] = 1;
        for (int f = 0; f < kMetaDim; ++f) {
            data.reservoir_meta(k, f) =
                cell_to_double(mtable.cell(r, c_meta[f]), ctx);
        }
    }

    // --- observations -------------------------------------------------------
    CsvTable otable = read_csv(dir / "observations.csv");
    const auto oc_seg = otable.column("segment_id");
    const auto oc_date = otable.column("date");
    const auto oc_temp = otable.column("temp_c");
    for (std::size_t r = 0; r < otable.rows.size(); ++r) {
        const std::string ctx =
            otable.source.string() + " row " + std::to_string(r + 2);
        Observation o;
        o.segment = cell_to_int(otable.cell(r, oc_seg), ctx);
        const Date date = Date::from_iso(otable.cell(r, oc_date));
        o.day = first.days_until(date);
        o.temp_c = cell_to_double(otable.cell(r, oc_temp), ctx);
        if (o.segment < 0 || o.segment >= n) {
            throw OrphanObservation(ctx + ": unknown segment " +
                                    std::to_string(o.segment));
        }
        if (o.day < 0 || o.day >= days) {
            throw OrphanObservation(ctx + ": date " + date.iso() +
                                    " outside the basin calendar");
        }
        data.observations.push_back(o);
    }
    std::sort(data.observations.begin(), data.observations.end(),
              [](const Observation& a, const Observation& b) {
                  return std::tie(a.segment, a.day) < std::tie(b.segment, b.day);
              });

    // --- reservoir operations (optional, but all-or-nothing per reservoir) --
    const auto release_path = dir / "release.csv";
    const auto profiles_path = dir / "profiles.csv";
    const bool have_release = std::filesystem::exists(release_path);
    const bool have_profiles = std::filesystem::exists(profiles_path);
    if (have_release != have_profiles) {
        throw PartialReleaseData(
            "release.csv and profiles.csv must be present together");
    }
    data.has_release_data.assign(m, 0);
    if (have_release) {
        LayerTable flows = read_layer_csv(release_path, "flow_layer_", m,
                                          calendar);
        LayerTable temps = read_layer_csv(profiles_path, "temp_layer_", m,
                                          calendar);
        if (flows.layers != temps.layers) {
            throw SchemaError("release.csv has " +
                              std::to_string(flows.layers) +
                              " layers, profiles.csv has " +
                              std::to_string(temps.layers));
        }
        const int layers = flows.layers;
        data.release_flows = Array3(m, days, layers);
        data.depth_temps = Array3(m, days, layers);

        std::set<int> present;
        for (const auto& [key, _] : flows.cells) present.insert(key.first);
        for (const auto& [key, _] : temps.cells) present.insert(key.first);
        for (int k : present) {
            for (int t = 0; t < days; ++t) {
                auto fit = flows.cells.find({k, t});
                auto tit = temps.cells.find({k, t});
                if (fit == flows.cells.end() || tit == temps.cells.end()) {
                    throw PartialReleaseData(
                        "reservoir " + std::to_string(k) +
                        " is missing release flows or depth temperatures on " +
                        calendar[t].iso());
                }
                for (int d = 0; d < layers; ++d) {
                    data.release_flows(k, t, d) = fit->second[d];
                    data.depth_temps(k, t, d) = tit->second[d];
                }
            }
            data.has_release_data[k] = 1;
        }
    } else {
        data.release_flows = Array3(m, days, 0);
        data.depth_temps = Array3(m, days, 0);
    }

    data.validate();

    NetworkTopology topo = load_edges_csv(dir / "edges.csv", n, m);
    return {std::move(topo), std::move(data)};
}

void save_dataset(const std::filesystem::path& dir,
                  const NetworkTopology& topo, const BasinDataset& data) {
    std::filesystem::create_directories(dir);
    save_edges_csv(dir / "edges.csv", topo);

    {
        std::vector<std::string> header{"segment_id", "date"};
        for (int f = 0; f < data.n_features(); ++f) {
            header.push_back("feat_" + std::to_string(f));
        }
        CsvWriter out(dir / "drivers.csv", header);
        std::vector<std::string> row(header.size());
        for (int i = 0; i < data.n_segments(); ++i) {
            for (int t = 0; t < data.n_days(); ++t) {
                row[0] = std::to_string(i);
                row[1] = data.calendar[t].iso();
                for (int f = 0; f < data.n_features(); ++f) {
                    row[2 + f] = fmt_double(data.drivers(i, t, f));
                }
                out.row(row);
            }
        }
        out.close();
    }
    {
        CsvWriter out(dir / "observations.csv",
                      {"segment_id", "date", "temp_c"});
        for (const Observation& o : data.observations) {
            out.row({std::to_string(o.segment), data.calendar[o.day].iso(),
                     fmt_double(o.temp_c)});
        }
        out.close();
    }
    {
        std::vector<std::string> header{"reservoir_id"};
        for (const char* c : kMetaColumns) header.push_back(c);
        CsvWriter out(dir / "reservoir_meta.csv", header);
        for (int k = 0; k < data.n_reservoirs(); ++k) {
            std::vector<std::string> row{std::to_string(k)};
            for (int f = 0; f < kMetaDim; ++f) {
                row.push_back(fmt_double(data.reservoir_meta(k, f)));
            }
            out.row(row);
        }
        out.close();
    }

    bool any_release = false;
    for (std::uint8_t flag : data.has_release_data) any_release |= (flag != 0);
    if (!any_release) return;

    const int layers = data.n_layers();
    std::vector<std::string> fheader{"reservoir_id", "date"};
    std::vector<std::string> theader{"reservoir_id", "date"};
    for (int d = 0; d < layers; ++d) {
        fheader.push_back("flow_layer_" + std::to_string(d + 1));
        theader.push_back("temp_layer_" + std::to_string(d + 1));
    }
    CsvWriter fout(dir / "release.csv", fheader);
    CsvWriter tout(dir / "profiles.csv", theader);
    std::vector<std::string> frow(fheader.size()), trow(theader.size());
    for (int k = 0; k < data.n_reservoirs(); ++k) {
        if (!data.has_release_data[k]) continue;
        for (int t = 0; t < data.n_days(); ++t) {
            frow[0] = trow[0] = std::to_string(k);
            frow[1] = trow[1] = data.calendar[t].iso();
            for (int d = 0; d < layers; ++d) {
                frow[2 + d] = fmt_double(data.release_flows(k, t, d));
                trow[2 + d] = fmt_double(data.depth_temps(k, t, d));
            }
            fout.row(frow);
            tout.row(trow);
        }
    }
    fout.close();
    tout.close();
}

StandardizedBasin standardize_drivers(const BasinDataset& data,
                                      int train_begin, int train_end) {
    if (train_begin < 0 || train_end > data.n_days() ||
        train_begin >= train_end) {
        throw ConfigError("standardize_drivers: bad train range [" +
                          std::to_string(train_begin) + ", " +
                          std::to_string(train_end) + ")");
    }
    const int nf = data.n_features();
    DriverStats stats;
    stats.mean.assign(nf, 0.0);
    stats.stddev.assign(nf, 0.0);
    const double count =
        static_cast<double>(data.n_segments()) * (train_end - train_begin);
    for (int f = 0; f < nf; ++f) {
        double mean = 0.0;
        for (int i = 0; i < data.n_segments(); ++i) {
            for (int t = train_begin; t < train_end; ++t) {
                mean += data.drivers(i, t, f);
            }
        }
        mean /= count;
        double var = 0.0;
        for (int i = 0; i < data.n_segments(); ++i) {
            for (int t = train_begin; t < train_end; ++t) {
                const double d = data.drivers(i, t, f) - mean;
                var += d * d;
            }
        }
        var /= count;
        stats.mean[f] = mean;
        stats.stddev[f] = std::sqrt(var);
    }

    StandardizedBasin out;
    out.stats = stats;
    for (int f = 0; f < nf; ++f) {
        if (out.stats.stddev[f] <= 0.0) {
            out.stats.stddev[f] = 1.0;
            out.zero_variance_features.push_back(f);
        }
    }
    out.data = apply_driver_stats(data, out.stats);
    return out;
}

Tensor standardize_reservoir_meta(const Tensor& meta) {
    Tensor out = meta;
    const std::size_t m = meta.rows();
    if (m == 0) return out;
    for (std::size_t f = 0; f < meta.cols(); ++f) {
        double mean = 0.0;
        for (std::size_t k = 0; k < m; ++k) mean += meta(k, f);
        mean /= static_cast<double>(m);
        double var = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            var += (meta(k, f) - mean) * (meta(k, f) - mean);
        }
        var /= static_cast<double>(m);
        const double stddev = var > 0.0 ? std::sqrt(var) : 1.0;
        for (std::size_t k = 0; k < m; ++k) {
            out(k, f) = (meta(k, f) - mean) / stddev;
        }
    }
    return out;
}

BasinDataset apply_driver_stats(const BasinDataset& data,
                                const DriverStats& stats) {
    if (static_cast<int>(stats.mean.size()) != data.n_features() ||
        stats.mean.size() != stats.stddev.size()) {
        throw ConfigError("driver stats do not match the feature count");
    }
    BasinDataset out = data;  // shares the access counters
    for (int i = 0; i < out.n_segments(); ++i) {
        for (int t = 0; t < out.n_days(); ++t) {
            for (int f = 0; f < out.n_features(); ++f) {
                out.drivers(i, t, f) =
                    (out.drivers(i, t, f) - stats.mean[f]) / stats.stddev[f];
            }
        }
    }
    return out;
}

}  // namespace sag
