#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace msrlab {

/// Bad tags, non-positive counts, unreadable config: anything that should
/// stop a run before computation starts. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    std::string experiment;       // properness | quasiconcavity | two-outcome-truthfulness |
                                  // deviation | insensitivity | ssm-properties | sybil |
                                  // loss-compare
    std::string rule_tag = "brier";
    std::optional<double> floor;  // rule default when absent
    std::optional<int> outcomes;  // default depends on the experiment
    std::uint64_t seed = 1;
    long trials = 100;
    double threshold = 1e-3;
    std::string expect;           // deviation only: "certificate" | "exhaustion";
                                  // default depends on outcome count
    std::string output_dir;      // empty: no files written
    int threads = 0;              // 0: hardware count (capped by MSRLAB_THREADS)
    bool gnuplot = false;         // also emit a plot script next to the CSV
};

/// Parses a config JSON object; unknown keys or tag values are rejected.
ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);

/// Full validation (tags, counts, rule construction); throws ConfigError.
void validate_config(const ExperimentConfig& cfg);

struct ExperimentResult {
    bool pass = false;
    std::string summary;                // one line, deterministic formatting
    std::vector<std::string> lines;     // per-property detail
    std::string csv;                    // one row per instance; "" when empty
    std::string certificate_json;       // "" when the run produced none
    std::string gnuplot_script;         // "" unless requested
};

/// Runs one experiment entirely in memory. Identical configs produce
/// byte-identical results regardless of thread count.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Writes csv/certificate/plot files under cfg.output_dir.
void write_outputs(const ExperimentConfig& cfg, const ExperimentResult& res);

/// Loads a certificate file and re-verifies it against a fresh oracle run.
/// Returns 0 on success, 1 on a failed numeric check; malformed files or
/// unknown tags throw ConfigError.
int verify_certificate_file(const std::string& path, std::string& detail);

struct ReplayReport {
    bool pass = false;
    double residual = 0.0; // worst reference / payoff mismatch seen
    std::string detail;
};

/// Replays a JSONL ledger through the engine named by the market config and
/// checks every recorded reference move (and, given an outcome, every
/// realized payoff) is reproduced exactly.
ReplayReport ledger_replay(const std::string& config_path, const std::string& ledger_path,
                           std::optional<int> outcome);

/// Index-ordered parallel map; body(i) must only touch slot i of any shared
/// output. Thread count is capped by the MSRLAB_THREADS environment
/// variable. Exceptions propagate to the caller.
void parallel_for(long n, int threads, const std::function<void(long)>& body);

} // namespace msrlab
