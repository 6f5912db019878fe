#include <doctest.h>

#include <cstdlib>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "msrlab/ledger.hpp"
#include "msrlab/ssm.hpp"

using namespace msrlab;

TEST_SUITE_BEGIN("ledger");

TEST_CASE("g17 formatting parses back to the identical bits") {
    for (double v : {0.1, 1.0 / 3.0, 0.69314718055994531, 1e-300, 2.2250738585072014e-308,
                     1.7976931348623157e308, -0.0, 123456789.123456789}) {
        std::string s = fmt_g17(v);
        double back = std::strtod(s.c_str(), nullptr);
        CHECK(back == v);
    }
}

TEST_CASE("trade lines round-trip bit for bit") {
    TradeRecord rec{"alice",
                    Distribution({0.8, 0.2}),
                    0.25,
                    Distribution({0.5, 0.5}),
                    Distribution({0.8, 0.2}),
                    1.0,
                    std::nullopt};
    std::string line = trade_to_jsonl(rec, Mechanism::msr);
    TradeRecord back = trade_from_jsonl(line, Mechanism::msr);
    CHECK(back.agent_id == rec.agent_id);
    CHECK(back.report == rec.report);
    CHECK(back.pre_reference == rec.pre_reference);
    CHECK(back.post_reference == rec.post_reference);
    CHECK(back.reported_budget == rec.reported_budget);
    CHECK(back.scale == rec.scale);
    CHECK(!back.realized_payoff);
    CHECK(trade_to_jsonl(back, Mechanism::msr) == line);

    rec.realized_payoff = -1.0 / 3.0;
    line = trade_to_jsonl(rec, Mechanism::msr);
    back = trade_from_jsonl(line, Mechanism::msr);
    CHECK(*back.realized_payoff == -1.0 / 3.0);
}

TEST_CASE("scaled trades carry deposit fields and are checked on read") {
    MarketState mkt =
        MarketState::create(make_rule("brier", 2), Distribution({0.5, 0.5}), Mechanism::ssm);
    ssm_trade(mkt, "a", 0.5, Distribution({0.7, 0.3}));
    std::string line = trade_to_jsonl(mkt.ledger()[0], Mechanism::ssm);
    CHECK(line.find("\"b_prime\":") != std::string::npos);
    CHECK(line.find("\"lambda\":") != std::string::npos);
    TradeRecord back = trade_from_jsonl(line, Mechanism::ssm);
    CHECK(back.scale == mkt.ledger()[0].scale);

    // ssm lines must agree with themselves
    std::string lied = line;
    auto pos = lied.find("\"lambda\":");
    lied.replace(pos, std::string("\"lambda\":").size(), "\"lambda\":9,\"unused\":");
    CHECK_THROWS_AS(trade_from_jsonl(lied, Mechanism::ssm), std::runtime_error);

    CHECK_THROWS_AS(trade_from_jsonl("{not json", Mechanism::msr), std::runtime_error);
    CHECK_THROWS_AS(trade_from_jsonl("{\"agent_id\":\"x\"}", Mechanism::msr),
                    std::runtime_error);
}

TEST_CASE("whole-ledger round trip is byte identical") {
    MarketState mkt =
        MarketState::create(make_rule("log", 3), Distribution::uniform(3), Mechanism::ssm);
    ssm_trade(mkt, "a", 0.7, Distribution({0.5, 0.3, 0.2}));
    ssm_trade(mkt, "b", 1.4, Distribution({0.2, 0.6, 0.2}));
    settle(mkt, 2);

    std::ostringstream first;
    write_ledger(first, mkt);
    std::istringstream in(first.str());
    std::vector<TradeRecord> records = read_ledger(in, Mechanism::ssm);
    REQUIRE(records.size() == 2);

    std::ostringstream second;
    for (const TradeRecord& rec : records) second << trade_to_jsonl(rec, Mechanism::ssm) << '\n';
    CHECK(second.str() == first.str());
}

TEST_CASE("market config round trip") {
    MarketConfig cfg;
    cfg.rule_tag = "log";
    cfg.floor = 1e-3;
    cfg.initial = {0.25, 0.25, 0.5};
    cfg.mechanism = Mechanism::ssm;

    MarketConfig back = market_config_from_json(market_config_to_json(cfg));
    CHECK(back.rule_tag == cfg.rule_tag);
    CHECK(back.floor == cfg.floor);
    CHECK(back.initial == cfg.initial);
    CHECK(back.mechanism == cfg.mechanism);

    MarketState mkt = back.open();
    CHECK(mkt.rule().tag() == "log");
    CHECK(mkt.mechanism() == Mechanism::ssm);
    CHECK(mkt.reference()[2] == 0.5);

    // floor defaults by rule when the field is missing
    MarketConfig defaulted = market_config_from_json(
        "{\"rule\":\"log\",\"initial\":[0.5,0.5],\"mechanism\":\"msr\"}");
    CHECK(defaulted.floor == 1e-3);

    CHECK_THROWS_AS(market_config_from_json("{\"rule\":\"brier\"}"), std::runtime_error);
    CHECK_THROWS_AS(market_config_from_json("not json"), std::runtime_error);
    CHECK_THROWS_AS(
        market_config_from_json(
            "{\"rule\":\"brier\",\"initial\":[0.5,0.5],\"mechanism\":\"amm\"}"),
        std::invalid_argument);
}

TEST_SUITE_END();
