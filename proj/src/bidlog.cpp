#include "fppe/bidlog.hpp"

#include "fppe/debias.hpp"
#include "fppe/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <unordered_map>

namespace fppe {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

std::vector<BidRecord> parse_bid_log(std::istream& in) {
    std::string line;
    std::size_t row = 0;
    bool header_seen = false;
    std::vector<BidRecord> out;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            if (trim(line) != "auction_id,bidder_id,value")
                throw ParseError(row, "expected header auction_id,bidder_id,value");
            continue;
        }
        const auto fields = split_fields(line);
        if (fields.size() != 3) throw ParseError(row, "expected 3 fields, got " + std::to_string(fields.size()));
        if (fields[0].empty()) throw ParseError(row, "missing auction_id");
        if (fields[1].empty()) throw ParseError(row, "missing bidder_id");
        if (fields[2].empty()) throw ParseError(row, "missing value");
        double value = 0.0;
        const char* first = fields[2].data();
        const char* last = first + fields[2].size();
        const auto res = std::from_chars(first, last, value);
        if (res.ec != std::errc() || res.ptr != last || !std::isfinite(value))
            throw ParseError(row, "value is not a finite decimal: '" + fields[2] + "'");
        if (value < 0.0) throw ParseError(row, "negative value");
        out.push_back({fields[0], fields[1], value});
    }
    if (!header_seen) throw ParseError(row, "empty bid log");
    return out;
}

std::vector<BidRecord> read_bid_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open bid log: " + path);
    return parse_bid_log(in);
}

void write_bid_log(std::ostream& out, const std::vector<BidRecord>& rows) {
    out << "auction_id,bidder_id,value\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.17g", r.value);
        out << r.auction_id << ',' << r.bidder_id << ',' << buf << '\n';
    }
}

std::vector<BidRecord> generate_bid_log(Index n_auctions, Index n_bidders, double participation,
                                        std::uint64_t seed) {
    if (n_auctions < 1 || n_bidders < 1) throw InvalidSpecError("bid log needs at least one auction and bidder");
    if (!(participation > 0.0 && participation <= 1.0))
        throw InvalidSpecError("participation must lie in (0, 1]");
    Rng rng = make_rng(seed, {stream::auctions});
    std::bernoulli_distribution joins(participation);
    std::lognormal_distribution<double> value(0.0, 1.0);
    std::uniform_int_distribution<Index> pick(0, n_bidders - 1);
    std::vector<BidRecord> rows;
    for (Index a = 0; a < n_auctions; ++a) {
        const std::string auction = "a" + std::to_string(a);
        bool any = false;
        for (Index i = 0; i < n_bidders; ++i) {
            if (!joins(rng)) continue;
            rows.push_back({auction, "b" + std::to_string(i), value(rng)});
            any = true;
        }
        // Every auction keeps at least one bidder so it survives ingestion.
        if (!any) rows.push_back({auction, "b" + std::to_string(pick(rng)), value(rng)});
    }
    return rows;
}

Index paced_count(const Vector& beta, Index t, double c_iota) {
    return active_mask(beta, t, c_iota).count();
}

namespace {

Index paced_at(const MarketDefinition& def, const SampledMarket& sample, double scale,
               const CalibrationOptions& opts) {
    const PacingSolution sol = solve_finite_eg(sample, scale * def.budgets, opts.solve);
    return paced_count(sol.beta, sample.t(), opts.c_iota);
}

}  // namespace

namespace {

// Range of scales around `scale` that share its paced count. `below` and
// `above` are the nearest probed scales outside the range.
struct Plateau {
    Index count = 0;
    double lo = 0.0, hi = 0.0;
    double below = 0.0, above = 0.0;

    double width() const { return std::log(hi / lo); }
    double center() const { return std::sqrt(lo * hi); }
};

Plateau plateau_at(const MarketDefinition& def, const SampledMarket& sample, double scale, Index count,
                   const CalibrationOptions& opts) {
    auto edge = [&](double factor, double& outside_out) {
        double inside = scale;
        double outside = scale;
        bool left = false;
        for (int k = 0; k < opts.max_doublings; ++k) {
            outside *= factor;
            if (paced_at(def, sample, outside, opts) != count) {
                left = true;
                break;
            }
            inside = outside;
        }
        if (!left) {
            outside_out = 0.0;
            return outside;
        }
        for (int it = 0; it < opts.center_bisections; ++it) {
            const double mid = std::sqrt(inside * outside);
            (paced_at(def, sample, mid, opts) == count ? inside : outside) = mid;
        }
        outside_out = outside;
        return inside;
    };
    Plateau p;
    p.count = count;
    p.lo = edge(0.5, p.below);
    p.hi = edge(2.0, p.above);
    return p;
}

// Among the admissible paced counts, the centre of the widest plateau keeps
// every buyer furthest from the pacing threshold.
double widest_plateau_center(const MarketDefinition& def, const SampledMarket& sample, double scale, Index count,
                             const std::function<bool(Index)>& admissible, const CalibrationOptions& opts) {
    const Plateau start = plateau_at(def, sample, scale, count, opts);
    Plateau best = start;
    for (const bool downward : {true, false}) {
        Plateau cur = start;
        while (true) {
            const double next = downward ? cur.below : cur.above;
            if (next <= 0.0) break;
            const Index c = paced_at(def, sample, next, opts);
            if (!admissible(c)) break;
            cur = plateau_at(def, sample, next, c, opts);
            if (cur.width() > best.width()) best = cur;
        }
    }
    return best.center();
}

}  // namespace

double calibrate_budgets(const MarketDefinition& def, const SampledMarket& sample, double target_paced_fraction,
                         const CalibrationOptions& opts) {
    if (!(target_paced_fraction > 0.0 && target_paced_fraction < 1.0))
        throw DomainError("calibrate_budgets: target fraction must lie in (0, 1)");
    if (opts.tolerance_buyers < 0) throw DomainError("calibrate_budgets: tolerance must be nonnegative");
    const double n = static_cast<double>(def.n_buyers());
    const double target = target_paced_fraction * n;
    const double tol = static_cast<double>(opts.tolerance_buyers);
    // Nobody or everybody paced holds on an unbounded range of scales, so
    // those counts never count as hitting an interior target.
    auto within = [&](Index count) {
        return count > 0 && count < def.n_buyers() && std::abs(static_cast<double>(count) - target) <= tol + 1e-12;
    };
    auto finish = [&](double scale, Index count) {
        return opts.center ? widest_plateau_center(def, sample, scale, count, within, opts) : scale;
    };

    // Larger scales mean fewer paced buyers. Bracket the target from both sides.
    double lo = 1.0, hi = 1.0;
    Index count_lo = paced_at(def, sample, lo, opts);
    if (within(count_lo)) return finish(lo, count_lo);
    Index count_hi = count_lo;
    int steps = 0;
    while (static_cast<double>(count_lo) < target && steps++ < opts.max_doublings) {
        lo *= 0.5;
        count_lo = paced_at(def, sample, lo, opts);
        if (within(count_lo)) return finish(lo, count_lo);
    }
    steps = 0;
    while (static_cast<double>(count_hi) > target && steps++ < opts.max_doublings) {
        hi *= 2.0;
        count_hi = paced_at(def, sample, hi, opts);
        if (within(count_hi)) return finish(hi, count_hi);
    }
    if (static_cast<double>(count_lo) < target || static_cast<double>(count_hi) > target)
        throw CalibrationError("calibrate_budgets: could not bracket the target paced fraction",
                               static_cast<double>(count_lo) / n, static_cast<double>(count_hi) / n);

    // Invariant: count(lo) > target > count(hi).
    for (int it = 0; it < opts.max_bisections; ++it) {
        const double mid = std::sqrt(lo * hi);
        if (!(mid > lo && mid < hi)) break;
        const Index count = paced_at(def, sample, mid, opts);
        if (within(count)) return finish(mid, count);
        if (static_cast<double>(count) > target) {
            lo = mid;
            count_lo = count;
        } else {
            hi = mid;
            count_hi = count;
        }
    }
    throw CalibrationError("calibrate_budgets: paced count jumps over the target", static_cast<double>(count_lo) / n,
                           static_cast<double>(count_hi) / n);
}

IngestedMarket ingest_bid_log(const std::vector<BidRecord>& rows, Index n_auctions, double target_paced_fraction,
                              std::uint64_t seed, const CalibrationOptions& opts) {
    if (rows.empty()) throw InvalidSpecError("ingest_bid_log: empty bid log");

    std::vector<std::string> auctions;
    std::unordered_map<std::string, Index> auction_index;
    for (const auto& r : rows)
        if (auction_index.emplace(r.auction_id, static_cast<Index>(auctions.size())).second)
            auctions.push_back(r.auction_id);

    // Sample auctions without replacement, then restore first-appearance order.
    std::vector<Index> chosen(auctions.size());
    for (std::size_t a = 0; a < chosen.size(); ++a) chosen[a] = static_cast<Index>(a);
    if (n_auctions > 0 && n_auctions < static_cast<Index>(auctions.size())) {
        Rng rng = make_rng(seed, {stream::auctions});
        std::shuffle(chosen.begin(), chosen.end(), rng);
        chosen.resize(static_cast<std::size_t>(n_auctions));
        std::sort(chosen.begin(), chosen.end());
    }
    std::vector<Index> item_of(auctions.size(), -1);
    for (std::size_t k = 0; k < chosen.size(); ++k) item_of[static_cast<std::size_t>(chosen[k])] = static_cast<Index>(k);

    IngestedMarket out;
    std::unordered_map<std::string, Index> bidder_index;
    for (const auto& r : rows) {
        if (item_of[static_cast<std::size_t>(auction_index.at(r.auction_id))] < 0) continue;
        if (bidder_index.emplace(r.bidder_id, static_cast<Index>(out.bidder_ids.size())).second)
            out.bidder_ids.push_back(r.bidder_id);
    }
    for (Index a : chosen) out.auction_ids.push_back(auctions[static_cast<std::size_t>(a)]);

    const Index t = static_cast<Index>(chosen.size());
    const Index n = static_cast<Index>(out.bidder_ids.size());
    ItemMatrix values = ItemMatrix::Zero(t, n);
    for (const auto& r : rows) {
        const Index item = item_of[static_cast<std::size_t>(auction_index.at(r.auction_id))];
        if (item < 0) continue;
        double& cell = values(item, bidder_index.at(r.bidder_id));
        cell = std::max(cell, r.value);  // repeated (auction, bidder) pairs keep the highest bid
    }
    out.sample = make_sample(std::move(values));

    out.definition.K = 1;
    out.definition.submarket_of.assign(static_cast<std::size_t>(n), 0);
    out.definition.budgets = out.sample.values.colwise().sum().transpose() / static_cast<double>(t);
    // Buyers with only zero bids still need a positive budget; they never spend it.
    const double floor = out.definition.budgets.maxCoeff() > 0.0 ? 1e-12 * out.definition.budgets.maxCoeff() : 1.0;
    out.definition.budgets = out.definition.budgets.cwiseMax(floor);
    out.definition.value_model = out.sample;

    out.budget_scale = calibrate_budgets(out.definition, out.sample, target_paced_fraction, opts);
    out.definition.budgets *= out.budget_scale;
    return out;
}

}  // namespace fppe
