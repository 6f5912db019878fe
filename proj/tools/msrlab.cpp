#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "msrlab/experiments.hpp"

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw msrlab::ConfigError("cannot read " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    return buf.str();
}

struct RunFlags {
    std::string experiment;
    std::string config_path;
    std::string rule;
    double floor = 0.0;
    int k = 0;
    std::uint64_t seed = 0;
    long trials = 0;
    double threshold = 0.0;
    std::string expect;
    std::string out_dir;
    int threads = 0;
    bool gnuplot = false;
};

int do_run(const RunFlags& flags, const CLI::App& cmd) {
    msrlab::ExperimentConfig cfg;
    if (cmd.count("--config")) cfg = msrlab::config_from_json(slurp(flags.config_path));

    // flags override whatever the config file set
    if (!flags.experiment.empty()) cfg.experiment = flags.experiment;
    if (cmd.count("--rule")) cfg.rule_tag = flags.rule;
    if (cmd.count("--floor")) cfg.floor = flags.floor;
    if (cmd.count("--k")) cfg.outcomes = flags.k;
    if (cmd.count("--seed")) cfg.seed = flags.seed;
    if (cmd.count("--trials")) cfg.trials = flags.trials;
    if (cmd.count("--threshold")) cfg.threshold = flags.threshold;
    if (cmd.count("--expect")) cfg.expect = flags.expect;
    if (cmd.count("--out")) cfg.output_dir = flags.out_dir;
    if (cmd.count("--threads")) cfg.threads = flags.threads;
    if (cmd.count("--gnuplot-script")) cfg.gnuplot = true;

    msrlab::ExperimentResult res = msrlab::run_experiment(cfg);
    try {
        msrlab::write_outputs(cfg, res);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    std::cout << res.summary << "\n";
    for (const auto& line : res.lines) std::cout << line << "\n";
    return res.pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"market scoring rule and deposit-scaled mechanism laboratory"};
    app.require_subcommand(1);

    RunFlags flags;
    auto* run = app.add_subcommand("run", "run one experiment and write its artifacts");
    run->add_option("experiment", flags.experiment,
                    "experiment tag (properness, quasiconcavity, two-outcome-truthfulness, "
                    "deviation, insensitivity, ssm-properties, sybil, loss-compare)");
    run->add_option("--config", flags.config_path, "JSON config file; flags override its fields");
    run->add_option("--rule", flags.rule, "scoring rule tag: brier or log");
    run->add_option("--floor", flags.floor, "domain floor for the rule");
    run->add_option("--k", flags.k, "outcome count");
    run->add_option("--seed", flags.seed, "root random seed");
    run->add_option("--trials", flags.trials, "instance count / search budget");
    run->add_option("--threshold", flags.threshold, "deviation threshold");
    run->add_option("--expect", flags.expect, "deviation only: certificate or exhaustion");
    run->add_option("--out", flags.out_dir, "output directory for CSV / certificates");
    run->add_option("--threads", flags.threads, "worker threads (MSRLAB_THREADS caps this)");
    run->add_flag("--gnuplot-script", flags.gnuplot, "also emit a gnuplot script");

    std::string cert_path;
    auto* verify = app.add_subcommand("verify", "re-verify a stored certificate");
    verify->add_option("certificate", cert_path, "certificate JSON file")->required();

    std::string market_path, ledger_path;
    int outcome = -1;
    auto* replay = app.add_subcommand("ledger-replay",
                                      "replay a JSONL ledger and re-derive every payoff");
    replay->add_option("--market", market_path, "market config JSON")->required();
    replay->add_option("--ledger", ledger_path, "JSONL trade ledger")->required();
    replay->add_option("--outcome", outcome, "settle on this outcome and check payoffs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (run->parsed()) return do_run(flags, *run);
        if (verify->parsed()) {
            std::string detail;
            int rc = msrlab::verify_certificate_file(cert_path, detail);
            std::cout << (rc == 0 ? "verified: " : "FAILED: ") << detail << "\n";
            return rc;
        }
        if (replay->parsed()) {
            std::optional<int> oc;
            if (replay->count("--outcome")) oc = outcome;
            msrlab::ReplayReport rep = msrlab::ledger_replay(market_path, ledger_path, oc);
            std::cout << (rep.pass ? "replay ok: " : "replay FAILED: ") << rep.detail << "\n";
            return rep.pass ? 0 : 1;
        }
    } catch (const msrlab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
