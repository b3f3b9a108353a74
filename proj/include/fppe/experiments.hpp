#pragma once

#include "fppe/abtest.hpp"
#include "fppe/debias.hpp"
#include "fppe/inference.hpp"
#include "fppe/market.hpp"
#include "fppe/solver.hpp"
#include "fppe/types.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace fppe {

/// Buyer population and value laws shared by every experiment.
struct MarketConfig {
    Index n_buyers = 10;
    int K = 2;
    std::size_t n_good = 1000;
    Distribution good_value = Distribution::uniform(0.0, 1.0);
    Distribution bad_value = Distribution::uniform(0.0, 1.0);
    /// Spread-out budgets keep paced and unpaced buyers apart; see README.
    Distribution budget_law = Distribution::lognormal(0.0, 1.0);
    MixtureMode mixture = MixtureMode::fixed_count;
    /// Explicit budgets; when set, no budget draw or calibration happens.
    std::vector<double> budgets;
    bool calibrate = true;
    double target_paced_fraction = 0.5;
    int calibration_tolerance_buyers = 1;
    Index calibration_items = 20000;
};

/// A contamination level given as a bad-item count against the good-item count.
struct AlphaPoint {
    std::size_t n_bad = 0;
    std::size_t n_good = 1000;

    double alpha() const { return static_cast<double>(n_bad) / static_cast<double>(n_bad + n_good); }
    std::string label() const { return std::to_string(n_bad) + "/" + std::to_string(n_bad + n_good); }
};

inline DebiasConfig finite_difference_debias() {
    DebiasConfig c;
    c.hessian_mode = HessianMode::finite_difference;
    return c;
}

/// Budget-split test settings; the market comes from RunConfig::market.
struct ABTestSettings {
    double pi0 = 0.5;
    double pi1 = 0.5;
    Index t = 1000;  ///< impressions per submarket across both arms
    AlphaPoint alpha{100, 1000};
    TreatmentModel treatment;
};

/// Input of a single solve: explicit values, a bid log, or (when both are
/// empty) a synthetic sample of the configured market.
struct SolveSettings {
    std::vector<std::vector<double>> values;  ///< one row per item
    std::string bid_log;
    Index n_auctions = 0;  ///< 0 keeps every auction of the log
    double target_paced_fraction = 0.5;
    AlphaPoint alpha{0, 1000};
};

/// Synthetic bid-log generation.
struct BidLogSettings {
    Index n_auctions = 1000;
    Index n_bidders = 20;
    double participation = 0.3;
};

struct RunConfig {
    std::string experiment = "bias_curve";
    MarketConfig market;
    std::vector<AlphaPoint> alpha_grid{{100, 1000}, {200, 1000}, {300, 1000}, {400, 1000}, {500, 1000}};
    std::vector<Index> t_grid{1000, 5000, 20000};
    /// Contamination level used by the convergence study.
    AlphaPoint convergence_alpha{100, 1000};
    int replications = 100;
    double level = 0.95;
    int bootstrap = 1000;
    Index t_ref = 200000;
    double reference_tol = 1e-9;
    std::uint64_t seed = 1;
    std::string out_dir = ".";
    int workers = 1;
    /// Largest tolerated share of failed replicates.
    double max_failure_fraction = 0.10;

    ABTestSettings abtest;
    SolveSettings solve_input;
    BidLogSettings bid_log;

    DebiasConfig debias = finite_difference_debias();  ///< alpha is filled in per contamination level
    PerCoordQuantile per_coord = PerCoordQuantile::chi_n;
    SolveOptions solve;

    double c() const { return 1.0 - level; }
    void validate() const;
};

/// Buyers, budgets (drawn and calibrated) and the submarket partition.
MarketDefinition build_market(const MarketConfig& cfg, std::uint64_t seed, double* budget_scale = nullptr);

/// Same buyers with a synthetic value model of the given item counts.
MarketDefinition with_items(const MarketDefinition& def, const MarketConfig& cfg, std::size_t n_good,
                            std::size_t n_bad);

/// Large-sample stand-ins for the pure and contaminated limit markets. The
/// contaminated batch reuses the good batch and appends bad items, so both
/// share the same good items.
struct LimitReference {
    double alpha = 0.0;
    SampledMarket good;
    SampledMarket contaminated;
    PacingSolution good_solution;
    PacingSolution contaminated_solution;
    Vector beta_star;
    Vector beta_star_alpha;
    double rev_star = 0.0;
    double rev_star_alpha = 0.0;
};

LimitReference approximate_limit_market(const MarketDefinition& def, const MarketConfig& cfg, double alpha,
                                        Index t_ref, std::uint64_t seed, const SolveOptions& opts,
                                        const LimitReference* good_from = nullptr);

/// Vector form ||estimate - truth||_2 / ||truth||_2.
double normalized_bias(const Vector& estimate, const Vector& truth);
/// Scalar form |estimate / truth - 1|.
double normalized_bias(double estimate, double truth);

struct BiasRow {
    double alpha = 0.0;
    double bias_beta_contaminated = 0.0;
    double bias_beta_surrogate = 0.0;
    double bias_rev_contaminated = 0.0;
    double bias_rev_surrogate = 0.0;
};

struct CoverageRow {
    std::string alpha_label;
    double alpha = 0.0;
    double beta_coverage = 0.0;
    double rev_width_analytic = 0.0;
    double rev_width_bootstrap = 0.0;
    double rev_coverage_analytic = 0.0;
    double rev_coverage_bootstrap = 0.0;
    int failed = 0;
};

struct ConvergenceRow {
    Index t = 0;
    double rev_hat = 0.0;
    double analytic_lo = 0.0;
    double analytic_hi = 0.0;
    double bootstrap_lo = 0.0;
    double bootstrap_hi = 0.0;
    double truth = 0.0;
};

/// Everything one replicate produces on a fresh sample.
struct ReplicateOutcome {
    PacingSolution solution;
    DebiasResult debiased;
    InferenceResult inference;
};

ReplicateOutcome run_replicate(const SampledMarket& sample, const Vector& budgets, const RunConfig& cfg,
                               double alpha, std::uint64_t seed);

/// Holds the market and the cached limit references of one run so several
/// drivers (or several sample seeds) can share them.
class ExperimentContext {
public:
    explicit ExperimentContext(RunConfig cfg);

    const RunConfig& config() const { return cfg_; }
    const MarketDefinition& market() const { return market_; }
    double budget_scale() const { return budget_scale_; }

    const LimitReference& reference(double alpha);
    /// Debiased surrogate of the reference at this contamination level.
    const SurrogateResult& surrogate(double alpha);

private:
    RunConfig cfg_;
    MarketDefinition market_;
    double budget_scale_ = 1.0;
    std::unique_ptr<LimitReference> pure_;
    std::map<double, LimitReference> references_;
    std::map<double, SurrogateResult> surrogates_;
};

std::vector<BiasRow> run_bias_curve(ExperimentContext& ctx);
std::vector<CoverageRow> run_coverage(ExperimentContext& ctx);
/// One row per t for the samples drawn from `sample_seed`.
std::vector<ConvergenceRow> run_convergence(ExperimentContext& ctx, std::uint64_t sample_seed);

/// Test configuration for the run's market and the given seed.
ABTestConfig abtest_config(const RunConfig& cfg, const MarketDefinition& market, std::uint64_t seed);

inline std::vector<BiasRow> run_bias_curve(const RunConfig& cfg) {
    ExperimentContext ctx(cfg);
    return run_bias_curve(ctx);
}
inline std::vector<CoverageRow> run_coverage(const RunConfig& cfg) {
    ExperimentContext ctx(cfg);
    return run_coverage(ctx);
}
inline std::vector<ConvergenceRow> run_convergence(const RunConfig& cfg) {
    ExperimentContext ctx(cfg);
    return run_convergence(ctx, cfg.seed);
}

}  // namespace fppe
