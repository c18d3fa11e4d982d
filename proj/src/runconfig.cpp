#include "sag/runconfig.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "sag/csv.hpp"
#include "sag/errors.hpp"

namespace sag {

namespace {

/// One documented key: how to print it and how to assign it.
struct KeySpec {
    std::string name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* begin = value.data();
    const char* end = begin + value.size();
    const auto [ptr, ec] = std::from_chars(begin, end, out);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError("config key '" + key + "': cannot parse '" + value +
                          "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '"
                      + value + "'");
}

// The single source of truth for the key set: rendering and parsing both
// walk this table, so they cannot drift apart.
const std::vector<KeySpec>& key_table() {
    static const std::vector<KeySpec> table = [] {
        std::vector<KeySpec> t;
        auto add = [&t](std::string name, auto getter, auto setter) {
            t.push_back({std::move(name), getter, setter});
        };
        auto num = [](double v) { return fmt_double(v); };

        add("variant",
            [](const RunConfig& c) { return c.variant; },
            [](RunConfig& c, const std::string& v) { c.variant = v; });
        add("model.hidden_dim",
            [](const RunConfig& c) { return std::to_string(c.hidden_dim); },
            [](RunConfig& c, const std::string& v) {
                c.hidden_dim = parse_number<int>("model.hidden_dim", v);
            });

        add("train.learning_rate",
            [num](const RunConfig& c) { return num(c.train.learning_rate); },
            [](RunConfig& c, const std::string& v) {
                c.train.learning_rate =
                    parse_number<double>("train.learning_rate", v);
            });
        add("train.adam_beta1",
            [num](const RunConfig& c) { return num(c.train.adam_beta1); },
            [](RunConfig& c, const std::string& v) {
                c.train.adam_beta1 = parse_number<double>("train.adam_beta1", v);
            });
        add("train.adam_beta2",
            [num](const RunConfig& c) { return num(c.train.adam_beta2); },
            [](RunConfig& c, const std::string& v) {
                c.train.adam_beta2 = parse_number<double>("train.adam_beta2", v);
            });
        add("train.adam_epsilon",
            [num](const RunConfig& c) { return num(c.train.adam_epsilon); },
            [](RunConfig& c, const std::string& v) {
                c.train.adam_epsilon =
                    parse_number<double>("train.adam_epsilon", v);
            });
        add("train.epochs",
            [](const RunConfig& c) { return std::to_string(c.train.epochs); },
            [](RunConfig& c, const std::string& v) {
                c.train.epochs = parse_number<int>("train.epochs", v);
            });
        add("train.bptt_window",
            [](const RunConfig& c) {
                return std::to_string(c.train.bptt_window);
            },
            [](RunConfig& c, const std::string& v) {
                c.train.bptt_window = parse_number<int>("train.bptt_window", v);
            });
        add("train.seed",
            [](const RunConfig& c) { return std::to_string(c.train.seed); },
            [](RunConfig& c, const std::string& v) {
                c.train.seed = parse_number<std::uint64_t>("train.seed", v);
            });
        add("train.train_fraction",
            [num](const RunConfig& c) { return num(c.train.train_fraction); },
            [](RunConfig& c, const std::string& v) {
                c.train.train_fraction =
                    parse_number<double>("train.train_fraction", v);
            });

        add("synth.n_segments",
            [](const RunConfig& c) {
                return std::to_string(c.synth.n_segments);
            },
            [](RunConfig& c, const std::string& v) {
                c.synth.n_segments = parse_number<int>("synth.n_segments", v);
            });
        add("synth.n_reservoirs",
            [](const RunConfig& c) {
                return std::to_string(c.synth.n_reservoirs);
            },
            [](RunConfig& c, const std::string& v) {
                c.synth.n_reservoirs =
                    parse_number<int>("synth.n_reservoirs", v);
            });
        add("synth.n_days",
            [](const RunConfig& c) { return std::to_string(c.synth.n_days); },
            [](RunConfig& c, const std::string& v) {
                c.synth.n_days = parse_number<int>("synth.n_days", v);
            });
        add("synth.seed",
            [](const RunConfig& c) { return std::to_string(c.synth.seed); },
            [](RunConfig& c, const std::string& v) {
                c.synth.seed = parse_number<std::uint64_t>("synth.seed", v);
            });
        add("synth.branching",
            [num](const RunConfig& c) { return num(c.synth.branching); },
            [](RunConfig& c, const std::string& v) {
                c.synth.branching = parse_number<double>("synth.branching", v);
            });
        add("synth.distance_min_m",
            [num](const RunConfig& c) { return num(c.synth.distance_min_m); },
            [](RunConfig& c, const std::string& v) {
                c.synth.distance_min_m =
                    parse_number<double>("synth.distance_min_m", v);
            });
        add("synth.distance_max_m",
            [num](const RunConfig& c) { return num(c.synth.distance_max_m); },
            [](RunConfig& c, const std::string& v) {
                c.synth.distance_max_m =
                    parse_number<double>("synth.distance_max_m", v);
            });
        add("synth.obs_density_min",
            [num](const RunConfig& c) { return num(c.synth.obs_density_min); },
            [](RunConfig& c, const std::string& v) {
                c.synth.obs_density_min =
                    parse_number<double>("synth.obs_density_min", v);
            });
        add("synth.obs_density_max",
            [num](const RunConfig& c) { return num(c.synth.obs_density_max); },
            [](RunConfig& c, const std::string& v) {
                c.synth.obs_density_max =
                    parse_number<double>("synth.obs_density_max", v);
            });
        add("synth.obs_noise_c",
            [num](const RunConfig& c) { return num(c.synth.obs_noise_c); },
            [](RunConfig& c, const std::string& v) {
                c.synth.obs_noise_c =
                    parse_number<double>("synth.obs_noise_c", v);
            });
        add("synth.release_threshold_c",
            [num](const RunConfig& c) {
                return num(c.synth.release_threshold_c);
            },
            [](RunConfig& c, const std::string& v) {
                c.synth.release_threshold_c =
                    parse_number<double>("synth.release_threshold_c", v);
            });
        add("synth.cold_release_flow",
            [num](const RunConfig& c) {
                return num(c.synth.cold_release_flow);
            },
            [](RunConfig& c, const std::string& v) {
                c.synth.cold_release_flow =
                    parse_number<double>("synth.cold_release_flow", v);
            });
        add("synth.base_release_flow",
            [num](const RunConfig& c) {
                return num(c.synth.base_release_flow);
            },
            [](RunConfig& c, const std::string& v) {
                c.synth.base_release_flow =
                    parse_number<double>("synth.base_release_flow", v);
            });
        add("synth.random_release_prob",
            [num](const RunConfig& c) {
                return num(c.synth.random_release_prob);
            },
            [](RunConfig& c, const std::string& v) {
                c.synth.random_release_prob =
                    parse_number<double>("synth.random_release_prob", v);
            });
        add("synth.start_date",
            [](const RunConfig& c) { return c.synth.start_date.iso(); },
            [](RunConfig& c, const std::string& v) {
                c.synth.start_date = Date::from_iso(v);
            });

        add("synth.lake.surface_mean_c",
            [num](const RunConfig& c) {
                return num(c.synth.lake.surface_mean_c);
            },
            [](RunConfig& c, const std::string& v) {
                c.synth.lake.surface_mean_c =
                    parse_number<double>("synth.lake.surface_mean_c", v);
            });
        add("synth.lake.surface_follow",
            [num](const RunConfig& c) {
                return num(c.synth.lake.surface_follow);
            },
            [](RunConfig& c, const std::string& v) {
                c.synth.lake.surface_follow =
                    parse_number<double>("synth.lake.surface_follow", v);
            });
        add("synth.lake.air_smoothing",
            [num](const RunConfig& c) {
                return num(c.synth.lake.air_smoothing);
            },
            [](RunConfig& c, const std::string& v) {
                c.synth.lake.air_smoothing =
                    parse_number<double>("synth.lake.air_smoothing", v);
            });
        add("synth.lake.bottom_mean_c",
            [num](const RunConfig& c) {
                return num(c.synth.lake.bottom_mean_c);
            },
            [](RunConfig& c, const std::string& v) {
                c.synth.lake.bottom_mean_c =
                    parse_number<double>("synth.lake.bottom_mean_c", v);
            });
        add("synth.lake.bottom_amplitude_c",
            [num](const RunConfig& c) {
                return num(c.synth.lake.bottom_amplitude_c);
            },
            [](RunConfig& c, const std::string& v) {
                c.synth.lake.bottom_amplitude_c =
                    parse_number<double>("synth.lake.bottom_amplitude_c", v);
            });
        add("synth.lake.bottom_lag_days",
            [num](const RunConfig& c) {
                return num(c.synth.lake.bottom_lag_days);
            },
            [](RunConfig& c, const std::string& v) {
                c.synth.lake.bottom_lag_days =
                    parse_number<double>("synth.lake.bottom_lag_days", v);
            });
        add("synth.lake.bottom_noise_c",
            [num](const RunConfig& c) {
                return num(c.synth.lake.bottom_noise_c);
            },
            [](RunConfig& c, const std::string& v) {
                c.synth.lake.bottom_noise_c =
                    parse_number<double>("synth.lake.bottom_noise_c", v);
            });
        add("synth.lake.stratified_start_doy",
            [](const RunConfig& c) {
                return std::to_string(c.synth.lake.stratified_start_doy);
            },
            [](RunConfig& c, const std::string& v) {
                c.synth.lake.stratified_start_doy =
                    parse_number<int>("synth.lake.stratified_start_doy", v);
            });
        add("synth.lake.stratified_end_doy",
            [](const RunConfig& c) {
                return std::to_string(c.synth.lake.stratified_end_doy);
            },
            [](RunConfig& c, const std::string& v) {
                c.synth.lake.stratified_end_doy =
                    parse_number<int>("synth.lake.stratified_end_doy", v);
            });
        add("synth.lake.max_daily_change_c",
            [num](const RunConfig& c) {
                return num(c.synth.lake.max_daily_change_c);
            },
            [](RunConfig& c, const std::string& v) {
                c.synth.lake.max_daily_change_c =
                    parse_number<double>("synth.lake.max_daily_change_c", v);
            });
        return t;
    }();
    return table;
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

void apply_run_config_entry(RunConfig& config, const std::string& key,
                            const std::string& value) {
    for (const KeySpec& spec : key_table()) {
        if (spec.name == key) {
            spec.set(config, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path.string());
    RunConfig config;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                              ": expected 'key = value'");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        try {
            apply_run_config_entry(config, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                              ": " + e.what());
        }
    }
    return config;
}

std::string render_run_config(const RunConfig& config) {
    std::ostringstream out;
    for (const KeySpec& spec : key_table()) {
        out << spec.name << " = " << spec.get(config) << "\n";
    }
    return out.str();
}

void save_run_config(const std::filesystem::path& path,
                     const RunConfig& config) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write config file: " + path.string());
    out << render_run_config(config);
    out.close();
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace sag
