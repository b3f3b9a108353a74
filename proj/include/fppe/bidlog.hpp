#pragma once

#include "fppe/market.hpp"
#include "fppe/solver.hpp"
#include "fppe/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fppe {

struct BidRecord {
    std::string auction_id;
    std::string bidder_id;
    double value = 0.0;
};

/// Reads "auction_id,bidder_id,value" rows after the header line. Blank lines and
/// lines starting with '#' are skipped. Row numbers in ParseError count file
/// lines from 1.
std::vector<BidRecord> parse_bid_log(std::istream& in);
std::vector<BidRecord> read_bid_log(const std::string& path);
void write_bid_log(std::ostream& out, const std::vector<BidRecord>& rows);

/// Heavy-tailed stand-in for historical logs: each auction draws its bidders
/// independently with probability `participation` and lognormal(0, 1) values.
std::vector<BidRecord> generate_bid_log(Index n_auctions, Index n_bidders, double participation,
                                        std::uint64_t seed);

struct CalibrationOptions {
    int tolerance_buyers = 1;
    double c_iota = 1.0;
    int max_doublings = 60;
    int max_bisections = 200;
    /// Return the geometric centre of the widest range of scales that share one
    /// admissible paced count, keeping every buyer clear of the pacing
    /// threshold.
    bool center = true;
    int center_bisections = 20;
    SolveOptions solve;
};

/// Number of buyers with beta_i < 1 - c_iota / sqrt(t).
Index paced_count(const Vector& beta, Index t, double c_iota = 1.0);

/// Scale lambda such that solving with budgets lambda * b leaves a paced-buyer
/// count within the tolerance of target * n. Bisection on log lambda, using
/// that larger budgets never increase the paced count.
double calibrate_budgets(const MarketDefinition& def, const SampledMarket& sample, double target_paced_fraction,
                         const CalibrationOptions& opts = {});

struct IngestedMarket {
    MarketDefinition definition;
    SampledMarket sample;
    std::vector<std::string> bidder_ids;
    std::vector<std::string> auction_ids;
    double budget_scale = 1.0;
};

/// Samples n_auctions distinct auctions (all of them when n_auctions is 0 or
/// too large), merges repeated bidders into one buyer and calibrates budgets
/// proportional to each buyer's aggregate value.
IngestedMarket ingest_bid_log(const std::vector<BidRecord>& rows, Index n_auctions, double target_paced_fraction,
                              std::uint64_t seed, const CalibrationOptions& opts = {});

}  // namespace fppe
