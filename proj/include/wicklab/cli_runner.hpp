#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

namespace wicklab {

// Flat `key = value` stanzas under `[section]` headers.  Blank lines and
// lines starting with '#' or ';' are skipped; a duplicate key keeps the
// last value; an unknown section name is rejected at parse time, unknown
// keys when a subcommand reads its sections.
struct ConfigDoc {
    std::map<std::string, std::map<std::string, std::string>> sections;

    bool has(const std::string& section, const std::string& key) const;
    // Throws std::invalid_argument naming section and key when absent.
    const std::string& require(const std::string& section,
                               const std::string& key) const;
};

ConfigDoc parse_config_text(const std::string& text);
ConfigDoc parse_config_file(const std::string& path);

// One parsed invocation: subcommand, config, overrides from flags.
struct RunConfig {
    std::string subcommand;
    std::string config_path;
    std::string graph_path; // reduce-demo input
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    std::optional<double> theta_max;
};

// Exit codes: 0 pass, 1 configuration or input error, 2 check failure.
int cmd_bound_sweep(const RunConfig& run);
int cmd_reduce_demo(const RunConfig& run);
int cmd_converge(const RunConfig& run);
int cmd_sandwich_check(const RunConfig& run);

// Parses argv (subcommands bound-sweep | reduce-demo | converge |
// sandwich-check; flags --config --seed --out --jobs, bound-sweep also
// --theta-max) and dispatches.  All failures are reported on stderr and
// folded into the exit-code contract above.
int run_cli(int argc, const char* const* argv);

} // namespace wicklab
