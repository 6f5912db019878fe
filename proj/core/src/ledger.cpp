#include "msrlab/ledger.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace msrlab {

std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

void append_array(std::string& out, const Distribution& d) {
    out += '[';
    for (int i = 0; i < d.size(); ++i) {
        if (i) out += ',';
        out += fmt_g17(d[i]);
    }
    out += ']';
}

void append_quoted(std::string& out, const std::string& s) {
    // agent ids are plain identifiers in this lab; escape the basics anyway
    out += '"';
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    out += '"';
}

Distribution dist_from_json(const nlohmann::json& arr, const char* field) {
    if (!arr.is_array())
        throw std::runtime_error(std::string("ledger: field '") + field + "' is not an array");
    std::vector<double> v;
    v.reserve(arr.size());
    for (const auto& x : arr) v.push_back(x.get<double>());
    return Distribution(std::move(v));
}

} // namespace

std::string trade_to_jsonl(const TradeRecord& rec, Mechanism mechanism) {
    std::string out = "{\"agent_id\":";
    append_quoted(out, rec.agent_id);
    out += ",\"report\":";
    append_array(out, rec.report);
    out += ",\"reported_budget\":" + fmt_g17(rec.reported_budget);
    out += ",\"pre_reference\":";
    append_array(out, rec.pre_reference);
    out += ",\"post_reference\":";
    append_array(out, rec.post_reference);
    out += ",\"scale\":" + fmt_g17(rec.scale);
    out += ",\"realized_payoff\":";
    out += rec.realized_payoff ? fmt_g17(*rec.realized_payoff) : "null";
    if (mechanism == Mechanism::ssm) {
        out += ",\"b_prime\":" + fmt_g17(rec.reported_budget);
        out += ",\"lambda\":" + fmt_g17(rec.scale);
    }
    out += '}';
    return out;
}

TradeRecord trade_from_jsonl(const std::string& line, Mechanism mechanism) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("ledger: malformed JSONL line: ") + e.what());
    }
    for (const char* field :
         {"agent_id", "report", "reported_budget", "pre_reference", "post_reference", "scale",
          "realized_payoff"}) {
        if (!j.contains(field))
            throw std::runtime_error(std::string("ledger: missing field '") + field + "'");
    }
    TradeRecord rec{j["agent_id"].get<std::string>(),
                    dist_from_json(j["report"], "report"),
                    j["reported_budget"].get<double>(),
                    dist_from_json(j["pre_reference"], "pre_reference"),
                    dist_from_json(j["post_reference"], "post_reference"),
                    j["scale"].get<double>(),
                    std::nullopt};
    if (!j["realized_payoff"].is_null())
        rec.realized_payoff = j["realized_payoff"].get<double>();
    if (mechanism == Mechanism::ssm) {
        for (const char* field : {"b_prime", "lambda"}) {
            if (!j.contains(field))
                throw std::runtime_error(std::string("ledger: missing field '") + field + "'");
        }
        if (j["b_prime"].get<double>() != rec.reported_budget ||
            j["lambda"].get<double>() != rec.scale)
            throw std::runtime_error("ledger: b_prime/lambda disagree with budget/scale");
    }
    return rec;
}

void write_ledger(std::ostream& os, const MarketState& state) {
    for (const TradeRecord& rec : state.ledger())
        os << trade_to_jsonl(rec, state.mechanism()) << '\n';
}

std::vector<TradeRecord> read_ledger(std::istream& is, Mechanism mechanism) {
    std::vector<TradeRecord> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        out.push_back(trade_from_jsonl(line, mechanism));
    }
    return out;
}

MarketState MarketConfig::open() const {
    return MarketState::create(make_rule(rule_tag, static_cast<int>(initial.size()), floor),
                               Distribution(initial), mechanism);
}

std::string market_config_to_json(const MarketConfig& cfg) {
    std::string out = "{\"rule\":";
    append_quoted(out, cfg.rule_tag);
    out += ",\"floor\":" + fmt_g17(cfg.floor);
    out += ",\"initial\":[";
    for (std::size_t i = 0; i < cfg.initial.size(); ++i) {
        if (i) out += ',';
        out += fmt_g17(cfg.initial[i]);
    }
    out += "],\"mechanism\":\"" + mechanism_tag(cfg.mechanism) + "\"}";
    return out;
}

MarketConfig market_config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("market config: malformed JSON: ") + e.what());
    }
    for (const char* field : {"rule", "initial", "mechanism"}) {
        if (!j.contains(field))
            throw std::runtime_error(std::string("market config: missing field '") + field + "'");
    }
    MarketConfig cfg;
    cfg.rule_tag = j["rule"].get<std::string>();
    cfg.mechanism = mechanism_from_tag(j["mechanism"].get<std::string>());
    if (j.contains("floor")) cfg.floor = j["floor"].get<double>();
    else cfg.floor = cfg.rule_tag == "log" ? 1e-3 : 0.0;
    for (const auto& x : j["initial"]) cfg.initial.push_back(x.get<double>());
    return cfg;
}

} // namespace msrlab
