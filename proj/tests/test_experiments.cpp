#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "msrlab/experiments.hpp"
#include "msrlab/lab.hpp"
#include "msrlab/ledger.hpp"
#include "msrlab/ssm.hpp"

#include "test_util.hpp"

using namespace msrlab;

TEST_SUITE_BEGIN("experiments");

TEST_CASE("config json round trip and strict keys") {
    ExperimentConfig cfg = config_from_json(
        "{\"experiment\":\"deviation\",\"rule\":\"log\",\"floor\":0.002,\"k\":3,"
        "\"seed\":42,\"trials\":250,\"threshold\":0.002,\"expect\":\"certificate\","
        "\"threads\":2,\"gnuplot\":true}");
    CHECK(cfg.experiment == "deviation");
    CHECK(cfg.rule_tag == "log");
    CHECK(cfg.floor == 0.002);
    CHECK(cfg.outcomes == 3);
    CHECK(cfg.seed == 42);
    CHECK(cfg.trials == 250);
    CHECK(cfg.threshold == 0.002);
    CHECK(cfg.expect == "certificate");
    CHECK(cfg.threads == 2);
    CHECK(cfg.gnuplot);

    ExperimentConfig back = config_from_json(config_to_json(cfg));
    CHECK(back.experiment == cfg.experiment);
    CHECK(back.floor == cfg.floor);
    CHECK(back.seed == cfg.seed);

    CHECK_THROWS_AS(config_from_json("{\"experiment\":\"properness\",\"color\":\"red\"}"),
                    ConfigError);
    CHECK_THROWS_AS(config_from_json("{\"experiment\":\"properness\",\"trials\":\"many\"}"),
                    ConfigError);
    CHECK_THROWS_AS(config_from_json("nonsense"), ConfigError);
}

TEST_CASE("validation rejects bad configurations") {
    auto cfg_for = [](const std::string& experiment) {
        ExperimentConfig cfg;
        cfg.experiment = experiment;
        return cfg;
    };

    CHECK_THROWS_AS(validate_config(cfg_for("levitation")), ConfigError);

    ExperimentConfig cfg = cfg_for("properness");
    cfg.rule_tag = "cubic";
    CHECK_THROWS_AS(validate_config(cfg), ConfigError);

    cfg = cfg_for("properness");
    cfg.outcomes = 1;
    CHECK_THROWS_AS(validate_config(cfg), ConfigError);
    cfg.outcomes = 9;
    CHECK_THROWS_AS(validate_config(cfg), ConfigError);

    cfg = cfg_for("properness");
    cfg.trials = 0;
    CHECK_THROWS_AS(validate_config(cfg), ConfigError);

    cfg = cfg_for("deviation");
    cfg.threshold = 0.0;
    CHECK_THROWS_AS(validate_config(cfg), ConfigError);

    cfg = cfg_for("properness");
    cfg.threads = -1;
    CHECK_THROWS_AS(validate_config(cfg), ConfigError);

    cfg = cfg_for("properness");
    cfg.expect = "certificate"; // only the deviation search takes an expectation
    CHECK_THROWS_AS(validate_config(cfg), ConfigError);

    cfg = cfg_for("deviation");
    cfg.expect = "banana";
    CHECK_THROWS_AS(validate_config(cfg), ConfigError);

    cfg = cfg_for("deviation");
    cfg.outcomes = 5;
    CHECK_THROWS_AS(validate_config(cfg), ConfigError);

    cfg = cfg_for("two-outcome-truthfulness");
    cfg.outcomes = 3;
    CHECK_THROWS_AS(validate_config(cfg), ConfigError);

    cfg = cfg_for("insensitivity");
    cfg.outcomes = 2;
    CHECK_THROWS_AS(validate_config(cfg), ConfigError);

    cfg = cfg_for("properness");
    cfg.rule_tag = "log";
    cfg.floor = 0.0; // the log rule needs a positive floor
    CHECK_THROWS_AS(validate_config(cfg), ConfigError);
}

TEST_CASE("runs are deterministic across repeats and thread counts") {
    ExperimentConfig cfg;
    cfg.experiment = "properness";
    cfg.trials = 5;
    cfg.threads = 1;
    ExperimentResult serial = run_experiment(cfg);
    CHECK(serial.pass);

    cfg.threads = 3;
    ExperimentResult parallel = run_experiment(cfg);
    CHECK(parallel.summary == serial.summary);
    CHECK(parallel.csv == serial.csv);
    CHECK(parallel.lines == serial.lines);
}

TEST_CASE("every experiment tag runs at desk scale") {
    for (const char* exp : {"properness", "quasiconcavity", "two-outcome-truthfulness",
                            "insensitivity", "ssm-properties", "sybil", "loss-compare"}) {
        ExperimentConfig cfg;
        cfg.experiment = exp;
        cfg.trials = 5;
        cfg.seed = 3;
        ExperimentResult res = run_experiment(cfg);
        CHECK(res.pass);
        CHECK(!res.summary.empty());
        CHECK(!res.csv.empty());
    }
}

TEST_CASE("deviation run expectations") {
    ExperimentConfig cfg;
    cfg.experiment = "deviation";
    cfg.seed = 7;
    cfg.trials = 100;
    ExperimentResult res = run_experiment(cfg);
    CHECK(res.pass); // k = 3 defaults to expecting a certificate
    CHECK(!res.certificate_json.empty());

    cfg.outcomes = 2;
    cfg.trials = 50;
    cfg.expect = "exhaustion";
    ExperimentResult control = run_experiment(cfg);
    CHECK(control.pass);
    CHECK(control.certificate_json.empty());

    // demanding a certificate from the two-outcome control must fail honestly
    cfg.expect = "certificate";
    ExperimentResult mismatch = run_experiment(cfg);
    CHECK(!mismatch.pass);
}

TEST_CASE("outputs land in the requested directory") {
    testutil::TempDir tmp;
    ExperimentConfig cfg;
    cfg.experiment = "deviation";
    cfg.seed = 7;
    cfg.trials = 100;
    cfg.output_dir = tmp.file("out");
    cfg.gnuplot = true;
    ExperimentResult res = run_experiment(cfg);
    CHECK(res.gnuplot_script.find("set terminal svg") != std::string::npos);
    write_outputs(cfg, res);

    CHECK(std::filesystem::exists(tmp.file("out/deviation.csv")));
    CHECK(std::filesystem::exists(tmp.file("out/deviation-certificate.json")));
    CHECK(std::filesystem::exists(tmp.file("out/deviation.gp")));

    std::string detail;
    CHECK(verify_certificate_file(tmp.file("out/deviation-certificate.json"), detail) == 0);

    // numeric tampering flips the verification result
    LoadedCertificate loaded =
        parse_certificate(testutil::slurp(tmp.file("out/deviation-certificate.json")));
    loaded.deviation->deviation *= 2.0;
    testutil::spew(tmp.file("tampered.json"),
                   deviation_certificate_to_json(*loaded.deviation));
    CHECK(verify_certificate_file(tmp.file("tampered.json"), detail) == 1);
    CHECK(!detail.empty());

    testutil::spew(tmp.file("garbage.json"), "{\"type\":\"deviation\"");
    CHECK_THROWS_AS(verify_certificate_file(tmp.file("garbage.json"), detail), ConfigError);
    CHECK_THROWS_AS(verify_certificate_file(tmp.file("missing.json"), detail), ConfigError);
}

TEST_CASE("ledger replay reproduces recorded markets") {
    testutil::TempDir tmp;

    MarketConfig mc;
    mc.rule_tag = "brier";
    mc.floor = 0.0;
    mc.initial = {0.5, 0.5};
    mc.mechanism = Mechanism::ssm;
    MarketState mkt = mc.open();
    ssm_trade(mkt, "a", 0.6, Distribution({0.8, 0.2}));
    ssm_trade(mkt, "b", 1.1, Distribution({0.3, 0.7}));
    settle(mkt, 1);

    testutil::spew(tmp.file("market.json"), market_config_to_json(mc));
    std::ostringstream ledger;
    write_ledger(ledger, mkt);
    testutil::spew(tmp.file("trades.jsonl"), ledger.str());

    ReplayReport rep = ledger_replay(tmp.file("market.json"), tmp.file("trades.jsonl"), 1);
    CHECK(rep.pass);
    CHECK(rep.residual <= 1e-12);

    ReplayReport no_outcome =
        ledger_replay(tmp.file("market.json"), tmp.file("trades.jsonl"), std::nullopt);
    CHECK(no_outcome.pass);

    // nudge one recorded post-reference off the scaled mixture
    std::vector<TradeRecord> records(mkt.ledger().begin(), mkt.ledger().end());
    std::vector<double> bent = records[1].post_reference.probs();
    bent[0] += 1e-6;
    bent[1] -= 1e-6;
    records[1].post_reference = Distribution(bent);
    std::ostringstream bad;
    for (const TradeRecord& rec : records) bad << trade_to_jsonl(rec, Mechanism::ssm) << '\n';
    testutil::spew(tmp.file("bent.jsonl"), bad.str());

    ReplayReport broken = ledger_replay(tmp.file("market.json"), tmp.file("bent.jsonl"), 1);
    CHECK(!broken.pass);
    CHECK(broken.residual == doctest::Approx(1e-6).epsilon(1e-3));

    CHECK_THROWS_AS(ledger_replay(tmp.file("nope.json"), tmp.file("trades.jsonl"), 1),
                    ConfigError);
    CHECK_THROWS_AS(ledger_replay(tmp.file("market.json"), tmp.file("nope.jsonl"), 1),
                    ConfigError);
}

TEST_CASE("parallel for covers every index exactly once") {
    std::vector<int> hits(512, 0);
    parallel_for(512, 4, [&](long i) { hits[static_cast<std::size_t>(i)] += 1; });
    for (int h : hits) CHECK(h == 1);

    std::atomic<int> before{0};
    CHECK_THROWS_AS(parallel_for(64, 4,
                                 [&](long i) {
                                     if (i == 13) throw std::runtime_error("boom");
                                     before.fetch_add(1);
                                 }),
                    std::runtime_error);
}

TEST_SUITE_END();
