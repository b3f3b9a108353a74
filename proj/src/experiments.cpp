#include "fppe/experiments.hpp"

#include "fppe/bidlog.hpp"
#include "fppe/rng.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

namespace fppe {

void RunConfig::validate() const {
    if (replications < 1) throw ConfigError("replications must be at least 1");
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("level must lie in (0, 1)");
    if (bootstrap < 2) throw ConfigError("bootstrap needs at least 2 draws");
    if (t_ref < 1) throw ConfigError("t_ref must be positive");
    if (workers < 1) throw ConfigError("workers must be at least 1");
    if (market.n_buyers < 1 || market.K < 1 || market.K > market.n_buyers)
        throw ConfigError("market needs 1 <= K <= n_buyers");
    if (market.n_good < 1) throw ConfigError("market needs n_good >= 1");
    for (Index t : t_grid)
        if (t < 2) throw ConfigError("t grid entries must be at least 2");
    for (std::size_t i = 1; i < t_grid.size(); ++i)
        if (t_grid[i] <= t_grid[i - 1]) throw ConfigError("t grid must be increasing");
    if (!t_grid.empty() && t_ref < 10 * t_grid.back()) throw ConfigError("t_ref must be at least 10 times the largest t");
    if (!market.budgets.empty() && static_cast<Index>(market.budgets.size()) != market.n_buyers)
        throw ConfigError("explicit budgets must list one entry per buyer");
    for (const auto& a : alpha_grid)
        if (a.n_good < 1) throw ConfigError("alpha grid entries need a positive good count");
    if (convergence_alpha.n_good < 1) throw ConfigError("convergence alpha needs a positive good count");
    if (!(max_failure_fraction >= 0.0 && max_failure_fraction <= 1.0))
        throw ConfigError("max_failure_fraction must lie in [0, 1]");
    if (bid_log.n_auctions < 1 || bid_log.n_bidders < 1) throw ConfigError("bid log needs auctions and bidders");
    if (!(bid_log.participation > 0.0 && bid_log.participation <= 1.0))
        throw ConfigError("bid log participation must lie in (0, 1]");
    if (solve_input.n_auctions < 0) throw ConfigError("solve n_auctions must be nonnegative");
    if (!(solve_input.target_paced_fraction > 0.0 && solve_input.target_paced_fraction < 1.0))
        throw ConfigError("solve target_paced_fraction must lie in (0, 1)");
    for (const auto& row : solve_input.values)
        if (static_cast<Index>(row.size()) != market.n_buyers)
            throw ConfigError("solve values need one entry per buyer in every row");
    try {
        debias.validate();
        market.good_value.validate();
        market.bad_value.validate();
        market.budget_law.validate();
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

ABTestConfig abtest_config(const RunConfig& cfg, const MarketDefinition& market, std::uint64_t seed) {
    ABTestConfig out;
    out.pi0 = cfg.abtest.pi0;
    out.pi1 = cfg.abtest.pi1;
    out.t = cfg.abtest.t;
    out.alpha = cfg.abtest.alpha.alpha();
    out.market = with_items(market, cfg.market, cfg.market.n_good, 0);
    out.treatment = cfg.abtest.treatment;
    out.c = cfg.c();
    out.seed = seed;
    out.debias = cfg.debias;
    out.solve = cfg.solve;
    return out;
}

MarketDefinition with_items(const MarketDefinition& def, const MarketConfig& cfg, std::size_t n_good,
                            std::size_t n_bad) {
    MarketDefinition out = def;
    SyntheticSpec spec;
    spec.n_good = n_good;
    spec.n_bad = n_bad;
    spec.good_value = cfg.good_value;
    spec.bad_value = cfg.bad_value;
    spec.budget_law = cfg.budget_law;
    spec.mixture = cfg.mixture;
    out.value_model = spec;
    return out;
}

MarketDefinition build_market(const MarketConfig& cfg, std::uint64_t seed, double* budget_scale) {
    MarketDefinition def;
    def.K = cfg.K;
    def.submarket_of = block_partition(cfg.n_buyers, cfg.K);
    double scale = 1.0;
    if (!cfg.budgets.empty()) {
        def.budgets = Eigen::Map<const Vector>(cfg.budgets.data(), static_cast<Index>(cfg.budgets.size()));
        def = with_items(def, cfg, cfg.n_good, 0);
        def.validate();
    } else {
        def.budgets = sample_budgets(cfg.budget_law, cfg.n_buyers, derive_seed(seed, {stream::budgets}));
        def = with_items(def, cfg, cfg.n_good, 0);
        def.validate();
        if (cfg.calibrate) {
            MarketConfig pilot_cfg = cfg;
            pilot_cfg.mixture = MixtureMode::fixed_count;
            const SampledMarket pilot = generate_synthetic_market(
                with_items(def, pilot_cfg, static_cast<std::size_t>(cfg.calibration_items), 0),
                derive_seed(seed, {stream::calibration}));
            CalibrationOptions opts;
            opts.tolerance_buyers = cfg.calibration_tolerance_buyers;
            scale = calibrate_budgets(def, pilot, cfg.target_paced_fraction, opts);
            def.budgets *= scale;
        }
    }
    if (budget_scale != nullptr) *budget_scale = scale;
    return def;
}

LimitReference approximate_limit_market(const MarketDefinition& def, const MarketConfig& cfg, double alpha,
                                        Index t_ref, std::uint64_t seed, const SolveOptions& opts,
                                        const LimitReference* good_from) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw DomainError("approximate_limit_market: alpha must lie in [0, 1)");
    MarketConfig ref_cfg = cfg;
    ref_cfg.mixture = MixtureMode::fixed_count;
    const std::uint64_t ref_seed = derive_seed(seed, {stream::reference});
    const std::size_t n_good = static_cast<std::size_t>(t_ref);
    const std::size_t n_bad = static_cast<std::size_t>(std::llround(static_cast<double>(t_ref) * alpha / (1.0 - alpha)));

    LimitReference ref;
    ref.alpha = alpha;
    if (good_from != nullptr) {
        ref.good = good_from->good;
        ref.good_solution = good_from->good_solution;
    } else {
        ref.good = generate_synthetic_market(with_items(def, ref_cfg, n_good, 0), ref_seed);
        ref.good_solution = solve_finite_eg(ref.good, def.budgets, opts);
    }
    if (n_bad == 0) {
        ref.contaminated = ref.good;
        ref.contaminated_solution = ref.good_solution;
    } else {
        // Bad items sit at the tail and values are drawn in item order, so the
        // good rows coincide with the pure batch drawn from the same seed.
        ref.contaminated = generate_synthetic_market(with_items(def, ref_cfg, n_good, n_bad), ref_seed);
        ref.contaminated_solution = solve_finite_eg(ref.contaminated, def.budgets, opts);
    }
    ref.alpha = ref.contaminated.alpha;
    ref.beta_star = ref.good_solution.beta;
    ref.beta_star_alpha = ref.contaminated_solution.beta;
    ref.rev_star = revenue_of(ref.good, ref.good_solution);
    ref.rev_star_alpha = revenue_of(ref.contaminated, ref.contaminated_solution);
    return ref;
}

double normalized_bias(const Vector& estimate, const Vector& truth) {
    if (estimate.size() != truth.size()) throw DomainError("normalized_bias: length mismatch");
    const double norm = truth.norm();
    if (!(norm > 0.0)) throw DomainError("normalized_bias: truth is zero");
    return (estimate - truth).norm() / norm;
}

double normalized_bias(double estimate, double truth) {
    if (truth == 0.0) throw DomainError("normalized_bias: truth is zero");
    return std::abs(estimate / truth - 1.0);
}

ReplicateOutcome run_replicate(const SampledMarket& sample, const Vector& budgets, const RunConfig& cfg,
                               double alpha, std::uint64_t seed) {
    ReplicateOutcome out;
    out.solution = solve_finite_eg(sample, budgets, cfg.solve);
    DebiasConfig dc = cfg.debias;
    dc.alpha = alpha;
    out.debiased = debias(sample, budgets, out.solution, dc);
    InferenceConfig ic;
    ic.c = cfg.c();
    ic.bootstrap_draws = cfg.bootstrap;
    ic.per_coord = cfg.per_coord;
    ic.seed = derive_seed(seed, {stream::bootstrap});
    out.inference = infer(sample, budgets, out.solution, out.debiased, ic);
    return out;
}

ExperimentContext::ExperimentContext(RunConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    market_ = build_market(cfg_.market, cfg_.seed, &budget_scale_);
}

const LimitReference& ExperimentContext::reference(double alpha) {
    auto it = references_.find(alpha);
    if (it != references_.end()) return it->second;
    SolveOptions tight = cfg_.solve;
    tight.tol = std::min(tight.tol, cfg_.reference_tol);
    if (!pure_)
        pure_ = std::make_unique<LimitReference>(
            approximate_limit_market(market_, cfg_.market, 0.0, cfg_.t_ref, cfg_.seed, tight));
    return references_
        .emplace(alpha, approximate_limit_market(market_, cfg_.market, alpha, cfg_.t_ref, cfg_.seed, tight, pure_.get()))
        .first->second;
}

const SurrogateResult& ExperimentContext::surrogate(double alpha) {
    auto it = surrogates_.find(alpha);
    if (it != surrogates_.end()) return it->second;
    const LimitReference& ref = reference(alpha);
    DebiasConfig dc = cfg_.debias;
    dc.alpha = ref.alpha;
    return surrogates_
        .emplace(alpha, debias_surrogate_limit(ref.good, ref.contaminated, ref.contaminated_solution, market_.budgets, dc))
        .first->second;
}

std::vector<BiasRow> run_bias_curve(ExperimentContext& ctx) {
    std::vector<BiasRow> rows;
    for (const AlphaPoint& point : ctx.config().alpha_grid) {
        const double alpha = point.alpha();
        const LimitReference& ref = ctx.reference(alpha);
        const SurrogateResult& sur = ctx.surrogate(alpha);
        BiasRow row;
        row.alpha = alpha;
        row.bias_beta_contaminated = normalized_bias(ref.beta_star_alpha, ref.beta_star);
        row.bias_beta_surrogate = normalized_bias(sur.beta_tilde, ref.beta_star);
        row.bias_rev_contaminated = normalized_bias(ref.rev_star_alpha, ref.rev_star);
        row.bias_rev_surrogate = normalized_bias(sur.rev_tilde, ref.rev_star);
        rows.push_back(row);
    }
    return rows;
}

namespace {

// Runs body(r) for r in [0, count) on up to `workers` threads. Results are
// written by index, so the outcome never depends on scheduling.
template <typename Body>
void for_each_index(int count, int workers, Body&& body) {
    if (workers <= 1 || count <= 1) {
        for (int r = 0; r < count; ++r) body(r);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < std::min(workers, count); ++w)
        pool.emplace_back([&] {
            for (int r = next++; r < count; r = next++) body(r);
        });
    for (auto& th : pool) th.join();
}

}  // namespace

std::vector<CoverageRow> run_coverage(ExperimentContext& ctx) {
    const RunConfig& cfg = ctx.config();
    std::vector<CoverageRow> rows;
    for (const AlphaPoint& point : cfg.alpha_grid) {
        const double alpha = point.alpha();
        const LimitReference& ref = ctx.reference(alpha);
        const SurrogateResult& sur = ctx.surrogate(alpha);
        const MarketDefinition def = with_items(ctx.market(), cfg.market, point.n_good, point.n_bad);

        struct Tally {
            bool ok = false;
            double beta_cov = 0.0, width_a = 0.0, width_b = 0.0, cov_a = 0.0, cov_b = 0.0;
        };
        std::vector<Tally> tallies(static_cast<std::size_t>(cfg.replications));
        for_each_index(cfg.replications, cfg.workers, [&](int r) {
            const std::uint64_t seed = derive_seed(cfg.seed, {stream::replicate, point.n_bad, point.n_good,
                                                              static_cast<std::uint64_t>(r)});
            Tally& tally = tallies[static_cast<std::size_t>(r)];
            try {
                const SampledMarket sample = generate_synthetic_market(def, seed);
                const ReplicateOutcome out = run_replicate(sample, def.budgets, cfg, sample.alpha, seed);
                const BetaConfidence& conf = out.inference.beta;
                double covered = 0.0;
                for (Index i = 0; i < sur.beta_tilde.size(); ++i) covered += conf.covers(i, sur.beta_tilde[i]) ? 1.0 : 0.0;
                tally.beta_cov = covered / static_cast<double>(sur.beta_tilde.size());
                const Interval& a = out.inference.revenue.ci_minmax;
                const Interval& b = out.inference.revenue.ci_bootstrap;
                tally.width_a = a.width() / ref.rev_star_alpha;
                tally.width_b = b.width() / ref.rev_star_alpha;
                tally.cov_a = a.contains(sur.rev_tilde) ? 1.0 : 0.0;
                tally.cov_b = b.contains(sur.rev_tilde) ? 1.0 : 0.0;
                tally.ok = true;
            } catch (const NumericalError&) {
                tally.ok = false;
            }
        });

        CoverageRow row;
        row.alpha_label = point.label();
        row.alpha = alpha;
        int used = 0;
        for (const Tally& tally : tallies) {
            if (!tally.ok) {
                ++row.failed;
                continue;
            }
            ++used;
            row.beta_coverage += tally.beta_cov;
            row.rev_width_analytic += tally.width_a;
            row.rev_width_bootstrap += tally.width_b;
            row.rev_coverage_analytic += tally.cov_a;
            row.rev_coverage_bootstrap += tally.cov_b;
        }
        if (static_cast<double>(row.failed) > cfg.max_failure_fraction * cfg.replications || used == 0)
            throw NumericalError("coverage at alpha " + row.alpha_label + ": " + std::to_string(row.failed) + " of " +
                                 std::to_string(cfg.replications) + " replicates failed");
        const double denom = static_cast<double>(used);
        row.beta_coverage /= denom;
        row.rev_width_analytic /= denom;
        row.rev_width_bootstrap /= denom;
        row.rev_coverage_analytic /= denom;
        row.rev_coverage_bootstrap /= denom;
        rows.push_back(row);
    }
    return rows;
}

std::vector<ConvergenceRow> run_convergence(ExperimentContext& ctx, std::uint64_t sample_seed) {
    const RunConfig& cfg = ctx.config();
    const AlphaPoint& point = cfg.convergence_alpha;
    const double alpha = point.alpha();
    const double truth = ctx.surrogate(alpha).rev_tilde;
    std::vector<ConvergenceRow> rows;
    for (Index t : cfg.t_grid) {
        const std::size_t n_bad = static_cast<std::size_t>(std::llround(alpha * static_cast<double>(t)));
        const std::size_t n_good = static_cast<std::size_t>(t) - n_bad;
        const MarketDefinition def = with_items(ctx.market(), cfg.market, n_good, n_bad);
        const std::uint64_t seed = derive_seed(sample_seed, {stream::replicate, static_cast<std::uint64_t>(t)});
        const SampledMarket sample = generate_synthetic_market(def, seed);
        const ReplicateOutcome out = run_replicate(sample, def.budgets, cfg, sample.alpha, seed);
        ConvergenceRow row;
        row.t = t;
        row.rev_hat = out.inference.revenue.point;
        row.analytic_lo = out.inference.revenue.ci_minmax.lo;
        row.analytic_hi = out.inference.revenue.ci_minmax.hi;
        row.bootstrap_lo = out.inference.revenue.ci_bootstrap.lo;
        row.bootstrap_hi = out.inference.revenue.ci_bootstrap.hi;
        row.truth = truth;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace fppe
