#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

#include "msrlab/lab.hpp"
#include "msrlab/ledger.hpp"
#include "msrlab/ssm.hpp"

#include "test_util.hpp"

using namespace msrlab;

namespace {

// Exit-code contract under test: 0 success, 1 failed assertion, 2 bad
// configuration or unreadable input.

std::string cli_path() {
    const char* bin = std::getenv("MSRLAB_BIN");
    REQUIRE_MESSAGE(bin != nullptr, "MSRLAB_BIN must point at the msrlab binary");
    return bin;
}

int run_cli(const std::string& args, const std::string& stdout_file) {
    std::string cmd = "\"" + cli_path() + "\" " + args + " >" + stdout_file + " 2>&1";
    int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

} // namespace

TEST_CASE("run succeeds and writes outputs") {
    testutil::TempDir tmp;
    int code = run_cli("run properness --rule brier --trials 5 --out " + tmp.file("out"),
                       tmp.file("stdout.txt"));
    CHECK(code == 0);
    std::string out = testutil::slurp(tmp.file("stdout.txt"));
    CHECK(out.find("properness") != std::string::npos);
    CHECK(out.find("pass") != std::string::npos);
    CHECK(std::filesystem::exists(tmp.file("out/properness.csv")));
}

TEST_CASE("identical invocations produce identical bytes") {
    testutil::TempDir tmp;
    std::string flags = "run deviation --rule brier --k 3 --seed 7 --trials 100 ";
    CHECK(run_cli(flags + "--out " + tmp.file("a"), tmp.file("s1.txt")) == 0);
    CHECK(run_cli(flags + "--out " + tmp.file("b"), tmp.file("s2.txt")) == 0);
    CHECK(testutil::slurp(tmp.file("a/deviation.csv")) ==
          testutil::slurp(tmp.file("b/deviation.csv")));
    CHECK(testutil::slurp(tmp.file("a/deviation-certificate.json")) ==
          testutil::slurp(tmp.file("b/deviation-certificate.json")));
    CHECK(testutil::slurp(tmp.file("s1.txt")) == testutil::slurp(tmp.file("s2.txt")));
}

TEST_CASE("config file plus flag overrides") {
    testutil::TempDir tmp;
    testutil::spew(tmp.file("cfg.json"),
                   "{\"experiment\":\"properness\",\"rule\":\"log\",\"trials\":5}");
    CHECK(run_cli("run properness --config " + tmp.file("cfg.json"), tmp.file("o.txt")) == 0);
    std::string out = testutil::slurp(tmp.file("o.txt"));
    CHECK(out.find("rule=log") != std::string::npos);

    // the command line wins over the file
    CHECK(run_cli("run properness --config " + tmp.file("cfg.json") + " --rule brier",
                  tmp.file("o2.txt")) == 0);
    CHECK(testutil::slurp(tmp.file("o2.txt")).find("rule=brier") != std::string::npos);

    testutil::spew(tmp.file("bad.json"), "{\"experiment\":\"properness\",\"volume\":11}");
    CHECK(run_cli("run properness --config " + tmp.file("bad.json"), tmp.file("o3.txt")) == 2);
}

TEST_CASE("assertion failures exit 1 and bad configs exit 2") {
    testutil::TempDir tmp;
    // two outcomes cannot produce a deviation certificate
    CHECK(run_cli("run deviation --k 2 --trials 20 --expect certificate", tmp.file("a.txt")) ==
          1);
    CHECK(run_cli("run properness --rule cubic", tmp.file("b.txt")) == 2);
    CHECK(run_cli("run levitation", tmp.file("c.txt")) == 2);
    CHECK(run_cli("run properness --trials 0", tmp.file("d.txt")) == 2);
    CHECK(run_cli("run properness --config " + tmp.file("missing.json"), tmp.file("e.txt")) ==
          2);
    CHECK(run_cli("frobnicate", tmp.file("f.txt")) == 2);
}

TEST_CASE("verify accepts sound certificates and rejects tampering") {
    testutil::TempDir tmp;
    CHECK(run_cli("run deviation --rule brier --k 3 --seed 7 --trials 100 --out " +
                      tmp.file("out"),
                  tmp.file("run.txt")) == 0);
    std::string cert = tmp.file("out/deviation-certificate.json");
    CHECK(run_cli("verify " + cert, tmp.file("v1.txt")) == 0);
    CHECK(testutil::slurp(tmp.file("v1.txt")).find("verified") != std::string::npos);

    LoadedCertificate loaded = parse_certificate(testutil::slurp(cert));
    loaded.deviation->oracle_deviation *= 3.0;
    testutil::spew(tmp.file("tampered.json"),
                   deviation_certificate_to_json(*loaded.deviation));
    CHECK(run_cli("verify " + tmp.file("tampered.json"), tmp.file("v2.txt")) == 1);

    testutil::spew(tmp.file("broken.json"), "{\"type\":");
    CHECK(run_cli("verify " + tmp.file("broken.json"), tmp.file("v3.txt")) == 2);
    CHECK(run_cli("verify " + tmp.file("absent.json"), tmp.file("v4.txt")) == 2);
}

TEST_CASE("ledger replay through the command line") {
    testutil::TempDir tmp;
    MarketConfig mc;
    mc.rule_tag = "log";
    mc.floor = 1e-3;
    mc.initial = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    mc.mechanism = Mechanism::msr;
    MarketState mkt = mc.open();
    msr_trade(mkt, "a", Distribution({0.5, 0.3, 0.2}));
    msr_trade(mkt, "b", Distribution({0.2, 0.5, 0.3}));
    settle(mkt, 0);

    testutil::spew(tmp.file("market.json"), market_config_to_json(mc));
    std::ostringstream ledger;
    write_ledger(ledger, mkt);
    testutil::spew(tmp.file("trades.jsonl"), ledger.str());

    CHECK(run_cli("ledger-replay --market " + tmp.file("market.json") + " --ledger " +
                      tmp.file("trades.jsonl") + " --outcome 0",
                  tmp.file("r1.txt")) == 0);

    // corrupt one recorded payoff: replay must fail the settlement check
    std::vector<TradeRecord> records(mkt.ledger().begin(), mkt.ledger().end());
    *records[0].realized_payoff += 0.25;
    std::ostringstream bad;
    for (const TradeRecord& rec : records) bad << trade_to_jsonl(rec, Mechanism::msr) << '\n';
    testutil::spew(tmp.file("bent.jsonl"), bad.str());
    CHECK(run_cli("ledger-replay --market " + tmp.file("market.json") + " --ledger " +
                      tmp.file("bent.jsonl") + " --outcome 0",
                  tmp.file("r2.txt")) == 1);

    CHECK(run_cli("ledger-replay --market " + tmp.file("market.json") + " --ledger " +
                      tmp.file("gone.jsonl"),
                  tmp.file("r3.txt")) == 2);
}

TEST_CASE("help exits cleanly") {
    testutil::TempDir tmp;
    CHECK(run_cli("--help", tmp.file("h.txt")) == 0);
    CHECK(testutil::slurp(tmp.file("h.txt")).find("run") != std::string::npos);
}
