#include "fppe/abtest.hpp"
#include "fppe/market.hpp"
#include "fppe/rng.hpp"
#include "fppe/solver.hpp"

#include <doctest.h>

#include <string>

using namespace fppe;

namespace {

MarketDefinition small_market(Index n, int K, Vector budgets) {
    MarketDefinition def;
    def.K = K;
    def.submarket_of = block_partition(n, K);
    def.budgets = std::move(budgets);
    def.value_model = SyntheticSpec{};
    return def;
}

ABTestConfig base_config(int K = 2) {
    ABTestConfig cfg;
    cfg.market = small_market(6, K, Vector{{0.05, 0.3, 2.0, 0.08, 0.4, 3.0}});
    cfg.t = 400;
    cfg.alpha = 0.1;
    cfg.seed = 17;
    return cfg;
}

}  // namespace

TEST_CASE("constant values and a null treatment give exactly zero effects") {
    ABTestConfig cfg = base_config();
    auto& spec = std::get<SyntheticSpec>(cfg.market.value_model);
    spec.good_value = Distribution::constant(0.8);
    spec.bad_value = Distribution::constant(0.5);
    const ABTestResult r = run_parallel_abtest(cfg);
    REQUIRE(r.effects.size() == 2);
    for (const SubmarketEffect& e : r.effects) CHECK(e.tau_hat == 0.0);
}

TEST_CASE("equal split arm sizes") {
    ABTestConfig cfg = base_config();
    cfg.t = 1000;
    cfg.alpha = 0.0;
    CHECK(cfg.arm_items(0) == 1000);
    CHECK(cfg.arm_items(1) == 1000);
    const ABTestResult r = run_parallel_abtest(cfg);
    for (const ArmResult& arm : r.arms) {
        CHECK(arm.t == 1000);
        REQUIRE(arm.submarkets.size() == 2);
        for (const ArmSubmarketEstimate& e : arm.submarkets) {
            CHECK(std::isfinite(e.rev_hat));
            CHECK(e.ci.lo <= e.rev_hat);
            CHECK(e.rev_hat <= e.ci.hi);
        }
    }
    cfg.pi0 = 0.3;
    cfg.pi1 = 0.7;
    CHECK(cfg.arm_items(0) == 600);
    CHECK(cfg.arm_items(1) == 1400);
}

TEST_CASE("effects are the exact difference of stored arm revenues") {
    ABTestConfig cfg = base_config();
    cfg.treatment = TreatmentModel::scale(1.2);
    const ABTestResult r = run_parallel_abtest(cfg);
    for (std::size_t k = 0; k < r.effects.size(); ++k) {
        CHECK(r.effects[k].tau_hat == r.arms[1].submarkets[k].rev_hat - r.arms[0].submarkets[k].rev_hat);
        CHECK(r.effects[k].ci.contains(r.effects[k].tau_hat));
    }
}

TEST_CASE("same config and seed give the same result") {
    ABTestConfig cfg = base_config();
    cfg.treatment = TreatmentModel::reshuffle();
    const ABTestResult a = run_parallel_abtest(cfg);
    const ABTestResult b = run_parallel_abtest(cfg);
    for (int w = 0; w < 2; ++w) {
        CHECK(a.arms[static_cast<std::size_t>(w)].beta == b.arms[static_cast<std::size_t>(w)].beta);
        CHECK(a.arms[static_cast<std::size_t>(w)].beta_debiased == b.arms[static_cast<std::size_t>(w)].beta_debiased);
    }
    for (std::size_t k = 0; k < a.effects.size(); ++k) {
        CHECK(a.effects[k].tau_hat == b.effects[k].tau_hat);
        CHECK(a.effects[k].ci.lo == b.effects[k].ci.lo);
        CHECK(a.effects[k].ci.hi == b.effects[k].ci.hi);
    }
    cfg.seed = 18;
    const ABTestResult c = run_parallel_abtest(cfg);
    CHECK(c.effects[0].tau_hat != a.effects[0].tau_hat);
}

TEST_CASE("invalid configurations are rejected") {
    ABTestConfig cfg = base_config();
    cfg.pi0 = 0.6;
    CHECK_THROWS_AS(run_parallel_abtest(cfg), ConfigError);
    cfg = base_config();
    cfg.pi0 = 0.0;
    cfg.pi1 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = base_config();
    cfg.t = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = base_config();
    cfg.treatment = TreatmentModel::scale(-1.0);
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = base_config();
    ItemMatrix v = ItemMatrix::Ones(4, 6);
    cfg.market.value_model = make_sample(v);
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("arm failures name the arm") {
    ABTestConfig cfg = base_config();
    cfg.solve.max_iters = 1;
    try {
        run_parallel_abtest(cfg);
        FAIL("expected a convergence failure");
    } catch (const ConvergenceError& e) {
        CHECK(std::string(e.what()).find("arm 0") != std::string::npos);
    }
}

TEST_CASE("a single submarket is a plain budget-split test") {
    ABTestConfig cfg = base_config(1);
    cfg.treatment = TreatmentModel::scale(1.5);
    const ABTestResult r = run_parallel_abtest(cfg);
    REQUIRE(r.effects.size() == 1);
    CHECK(r.arms[0].t == 200);
    CHECK(r.effects[0].tau_hat > 0.0);
}

TEST_CASE("arm budgets match the unit-supply formulation") {
    ABTestConfig cfg = base_config();
    cfg.pi0 = 0.3;
    cfg.pi1 = 0.7;
    const SampledMarket raw = generate_synthetic_market(cfg.market, 5);
    for (int arm = 0; arm < 2; ++arm) {
        const Index items = cfg.arm_items(arm);
        const ItemMatrix v = raw.values.topRows(std::min(items, raw.t()));
        const double share = arm == 0 ? cfg.pi0 : cfg.pi1;
        const PacingSolution per_item = solve_finite_eg(make_sample(v), cfg.arm_budgets(arm));
        const PacingSolution unit =
            solve_finite_eg(make_sample(v, 1.0), share * static_cast<double>(cfg.t) * cfg.market.budgets *
                                                     (static_cast<double>(v.rows()) / static_cast<double>(items)));
        CHECK((per_item.beta - unit.beta).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("submarket good-item counts add up to the arm draw") {
    ABTestConfig cfg = base_config(3);
    cfg.market = small_market(7, 3, Vector::Constant(7, 0.2));
    for (int arm = 0; arm < 2; ++arm) {
        const Index items = cfg.arm_items(arm);
        const auto n_bad = static_cast<std::size_t>(std::llround(cfg.alpha * static_cast<double>(items)));
        MarketDefinition layout = cfg.market;
        auto& spec = std::get<SyntheticSpec>(layout.value_model);
        spec.n_good = static_cast<std::size_t>(items) - n_bad;
        spec.n_bad = n_bad;
        const SampledMarket s = generate_synthetic_market(layout, derive_seed(cfg.seed, {stream::arm, 1}));
        Index per_block[3] = {0, 0, 0};
        for (Index tau = 0; tau < s.t(); ++tau)
            if (!s.is_bad[tau]) ++per_block[s.submarket_label[static_cast<std::size_t>(tau)]];
        CHECK(per_block[0] + per_block[1] + per_block[2] == s.good_count());
        CHECK(s.good_count() == static_cast<Index>(spec.n_good));
    }
}

TEST_CASE("treatment truth") {
    ABTestConfig cfg = base_config();
    const TreatmentTruth null_truth = treatment_effect_truth(cfg, 4000);
    for (double tau : null_truth.tau) CHECK(tau == 0.0);

    // Small budgets pace everybody, so each arm's revenue is its budget share.
    cfg.market.budgets = Vector::Constant(6, 0.01);
    cfg.treatment = TreatmentModel::scale(1.1);
    const TreatmentTruth truth = treatment_effect_truth(cfg, 20000);
    for (int k = 0; k < 2; ++k) {
        double budget_share = 0.0;
        for (Index i : cfg.market.buyers_in(k)) budget_share += cfg.market.budgets[i] / 2.0;
        for (int w = 0; w < 2; ++w)
            CHECK(std::abs(truth.revenue[static_cast<std::size_t>(w)][static_cast<std::size_t>(k)] - budget_share) <=
                  1e-7 * budget_share);
        CHECK(std::abs(truth.tau[static_cast<std::size_t>(k)]) <= 1e-7 * budget_share);
    }
}

TEST_CASE("custom treatments see the control sample") {
    ABTestConfig cfg = base_config();
    cfg.treatment = TreatmentModel::custom([](const SampledMarket& control, std::uint64_t) {
        return ItemMatrix(control.values * 2.0);
    });
    const ABTestResult r = run_parallel_abtest(cfg);
    CHECK(r.effects.size() == 2);
    cfg.treatment = TreatmentModel::custom({});
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
