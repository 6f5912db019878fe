#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "msrlab/market.hpp"

namespace msrlab {

/// Shortest-faithful decimal for a double: 17 significant digits, which
/// always parses back to the identical bit pattern.
std::string fmt_g17(double v);

/// One JSONL ledger line. Unscaled markets carry agent_id, report,
/// reported_budget, pre_reference, post_reference, scale, realized_payoff;
/// scaled markets add b_prime and lambda.
std::string trade_to_jsonl(const TradeRecord& rec, Mechanism mechanism);
TradeRecord trade_from_jsonl(const std::string& line, Mechanism mechanism);

void write_ledger(std::ostream& os, const MarketState& state);
std::vector<TradeRecord> read_ledger(std::istream& is, Mechanism mechanism);

/// Market configuration file: {"rule", "floor", "initial", "mechanism"}.
struct MarketConfig {
    std::string rule_tag;
    double floor = 0.0;
    std::vector<double> initial;
    Mechanism mechanism = Mechanism::msr;

    MarketState open() const;
};

std::string market_config_to_json(const MarketConfig& cfg);
MarketConfig market_config_from_json(const std::string& text);

} // namespace msrlab
