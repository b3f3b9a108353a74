#include "fppe/bidlog.hpp"
#include "fppe/experiments.hpp"
#include "fppe/market.hpp"
#include "fppe/rng.hpp"
#include "fppe/solver.hpp"

#include <doctest.h>

#include <sstream>

using namespace fppe;

namespace {

MarketDefinition synthetic(Index n, int K, std::size_t n_good, std::size_t n_bad) {
    MarketDefinition def;
    def.K = K;
    def.submarket_of = block_partition(n, K);
    def.budgets = Vector::Constant(n, 1.0 / static_cast<double>(n));
    SyntheticSpec spec;
    spec.n_good = n_good;
    spec.n_bad = n_bad;
    def.value_model = spec;
    return def;
}

std::vector<BidRecord> parse(const std::string& text) {
    std::istringstream in(text);
    return parse_bid_log(in);
}

}  // namespace

TEST_CASE("synthetic market has the requested shape and contamination level") {
    const SampledMarket m = generate_synthetic_market(synthetic(10, 2, 1000, 500), 7);
    CHECK(m.t() == 1500);
    CHECK(m.n() == 10);
    CHECK(m.alpha == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(m.is_bad.count() == 500);
    CHECK(m.good_count() == 1000);
}

TEST_CASE("good items are valued only inside their submarket") {
    const MarketDefinition def = synthetic(10, 2, 1000, 500);
    const SampledMarket m = generate_synthetic_market(def, 7);
    int per_block[2] = {0, 0};
    for (Index tau = 0; tau < m.t(); ++tau) {
        if (m.is_bad[tau]) {
            // Bad items reach buyers of both blocks.
            CHECK(m.values.row(tau).head(5).maxCoeff() > 0.0);
            CHECK(m.values.row(tau).tail(5).maxCoeff() > 0.0);
            continue;
        }
        const int k = m.submarket_label[static_cast<std::size_t>(tau)];
        ++per_block[k];
        for (Index i = 0; i < 10; ++i)
            if (def.submarket_of[static_cast<std::size_t>(i)] != k) CHECK(m.values(tau, i) == 0.0);
    }
    CHECK(per_block[0] == 500);
    CHECK(per_block[1] == 500);
}

TEST_CASE("remainder good items go to the lowest submarkets") {
    const SampledMarket m = generate_synthetic_market(synthetic(9, 3, 10, 0), 3);
    int per_block[3] = {0, 0, 0};
    for (int k : m.submarket_label) ++per_block[k];
    CHECK(per_block[0] == 4);
    CHECK(per_block[1] == 3);
    CHECK(per_block[2] == 3);
}

TEST_CASE("same spec and seed replay bit for bit") {
    const MarketDefinition def = synthetic(10, 2, 300, 50);
    const SampledMarket a = generate_synthetic_market(def, 11);
    const SampledMarket b = generate_synthetic_market(def, 11);
    CHECK(a.values == b.values);
    CHECK((a.is_bad == b.is_bad).all());
    const SampledMarket c = generate_synthetic_market(def, 12);
    CHECK(a.values != c.values);
}

TEST_CASE("zero good items is an invalid spec") {
    CHECK_THROWS_AS(generate_synthetic_market(synthetic(4, 2, 0, 10), 1), InvalidSpecError);
}

TEST_CASE("bernoulli mixture draws bad items at rate alpha") {
    MarketDefinition def = synthetic(4, 2, 6000, 2000);
    std::get<SyntheticSpec>(def.value_model).mixture = MixtureMode::bernoulli;
    const SampledMarket m = generate_synthetic_market(def, 5);
    CHECK(m.t() == 8000);
    CHECK(static_cast<double>(m.is_bad.count()) / 8000.0 == doctest::Approx(0.25).epsilon(0.1));
}

TEST_CASE("contamination ratio values") {
    CHECK(contamination_ratio_g(false, 0.25) == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK(contamination_ratio_g(true, 0.5) == -2.0);
    CHECK(contamination_ratio_g(false, 0.0) == 1.0);
    CHECK_THROWS_AS(contamination_ratio_g(true, 0.0), DomainError);
}

TEST_CASE("contamination ratio averages to zero on fixed-count samples") {
    for (auto [good, bad] : {std::pair<std::size_t, std::size_t>{1000, 100}, {1000, 500}, {300, 100}}) {
        const SampledMarket m = generate_synthetic_market(synthetic(4, 2, good, bad), 2);
        double sum = 0.0;
        for (Index tau = 0; tau < m.t(); ++tau) sum += contamination_ratio_g(m.is_bad[tau], m.alpha);
        CHECK(std::abs(sum / static_cast<double>(m.t())) < 1e-12);
    }
}

TEST_CASE("bid log ingestion counts buyers and items") {
    const auto rows = parse("auction_id,bidder_id,value\n1,A,2.0\n1,B,1.0\n2,A,3.5\n");
    const IngestedMarket m = ingest_bid_log(rows, 0, 0.5, 1);
    CHECK(m.definition.n_buyers() == 2);
    CHECK(m.sample.t() == 2);
    // Bidder A appears in both auctions and becomes a single buyer.
    CHECK(m.bidder_ids[0] == "A");
    CHECK(m.sample.values(0, 0) == 2.0);
    CHECK(m.sample.values(1, 0) == 3.5);
    CHECK(m.sample.values(1, 1) == 0.0);
}

TEST_CASE("bid log parse errors name the row") {
    try {
        parse("auction_id,bidder_id,value\n1,A,2.0\nx,y,\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.row() == 3);
    }
    CHECK_THROWS_AS(parse("auction_id,bidder_id,value\n1,A,-1\n"), ParseError);
    CHECK_THROWS_AS(parse("auction_id,bidder_id,value\n1,A\n"), ParseError);
    CHECK_THROWS_AS(parse("auction_id,bidder_id,value\n,A,1\n"), ParseError);
    CHECK_THROWS_AS(parse("auction_id,bidder_id,value\n1,A,abc\n"), ParseError);
    CHECK_THROWS_AS(parse("bidder,value\n"), ParseError);
    CHECK_THROWS_AS(parse(""), ParseError);
    CHECK(parse("# generated\nauction_id,bidder_id,value\n\n1,A,1e-3\n").size() == 1);
}

TEST_CASE("bid log round-trips through the writer") {
    const auto rows = generate_bid_log(50, 6, 0.4, 9);
    std::ostringstream out;
    write_bid_log(out, rows);
    const auto back = parse(out.str());
    REQUIRE(back.size() == rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        CHECK(back[r].auction_id == rows[r].auction_id);
        CHECK(back[r].bidder_id == rows[r].bidder_id);
        CHECK(back[r].value == rows[r].value);
    }
}

TEST_CASE("auction sampling keeps the requested count") {
    const auto rows = generate_bid_log(200, 8, 0.5, 4);
    const IngestedMarket m = ingest_bid_log(rows, 60, 0.5, 4);
    CHECK(m.sample.t() == 60);
    CHECK(m.auction_ids.size() == 60);
}

TEST_CASE("very large budgets leave nobody paced") {
    const MarketDefinition def = synthetic(5, 1, 400, 0);
    const SampledMarket s = generate_synthetic_market(def, 3);
    const PacingSolution sol = solve_finite_eg(s, 1e6 * def.budgets);
    CHECK(paced_count(sol.beta, s.t()) == 0);
}

TEST_CASE("doubling budgets never increases the paced count") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        MarketDefinition def = synthetic(5, 1, 200, 0);
        def.budgets = sample_budgets(Distribution::uniform(0.2, 1.8), 5, seed);
        const SampledMarket s = generate_synthetic_market(def, seed);
        Index previous = 5;
        for (double scale = 1.0 / 16.0; scale <= 16.0; scale *= 2.0) {
            const Index count = paced_count(solve_finite_eg(s, scale * def.budgets).beta, s.t());
            CHECK(count <= previous);
            previous = count;
        }
    }
}

TEST_CASE("calibration reaches half the buyers within one") {
    const MarketConfig cfg;
    double scale = 0.0;
    const MarketDefinition def = build_market(cfg, 1, &scale);
    CHECK(scale > 0.0);
    MarketConfig pilot_cfg = cfg;
    const SampledMarket pilot = generate_synthetic_market(
        with_items(def, pilot_cfg, static_cast<std::size_t>(cfg.calibration_items), 0),
        derive_seed(1, {stream::calibration}));
    const Index count = paced_count(solve_finite_eg(pilot, def.budgets).beta, pilot.t());
    CHECK(std::abs(static_cast<double>(count) - 5.0) <= 1.0);
}

TEST_CASE("calibration failure reports both fractions") {
    // A buyer with no values can never be paced, so 100 percent is out of reach.
    MarketDefinition def;
    def.K = 1;
    def.submarket_of = {0, 0};
    def.budgets = Vector::Constant(2, 0.5);
    ItemMatrix v(2, 2);
    v << 1.0, 0.0, 2.0, 0.0;
    const SampledMarket s = make_sample(v);
    CalibrationOptions opts;
    opts.tolerance_buyers = 0;
    opts.max_doublings = 20;
    CHECK_THROWS_AS(calibrate_budgets(def, s, 0.99, opts), CalibrationError);
}
