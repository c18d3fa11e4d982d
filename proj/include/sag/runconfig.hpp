#ifndef SAG_RUNCONFIG_HPP
#define SAG_RUNCONFIG_HPP

#include <filesystem>
#include <string>

#include "sag/synth.hpp"
#include "sag/training.hpp"

namespace sag {

/**
 * Every knob a run can turn, with its default.  Configs live in flat
 * `key = value` text files; `# comments` and blank lines are allowed.  The
 * key set is closed — an unknown key is a ConfigError naming the line, so a
 * typo cannot silently fall back to a default.
 */
struct RunConfig {
    std::string variant = "SAG-pp";
    int hidden_dim = 20;
    TrainConfig train;
    SynthConfig synth;
};

/// Parse a config file over the documented key set.
RunConfig load_run_config(const std::filesystem::path& path);

/// Apply one `key=value` assignment (CLI overrides reuse the file parser).
void apply_run_config_entry(RunConfig& config, const std::string& key,
                            const std::string& value);

/// The full resolved key set, one `key = value` per line, parseable again.
std::string render_run_config(const RunConfig& config);

/// Write the resolved configuration next to a run's outputs.
void save_run_config(const std::filesystem::path& path,
                     const RunConfig& config);

}  // namespace sag

#endif  // SAG_RUNCONFIG_HPP
