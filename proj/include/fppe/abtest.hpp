#pragma once

#include "fppe/debias.hpp"
#include "fppe/inference.hpp"
#include "fppe/market.hpp"
#include "fppe/solver.hpp"
#include "fppe/types.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace fppe {

/// How treated values v(1) derive from control values v(0). Arms draw their
/// own items, so the model acts on a freshly drawn control sample.
struct TreatmentModel {
    enum class Kind { null, scale, reshuffle, custom };

    /// Replaces the values of a control sample; receives a dedicated seed.
    using Generator = std::function<ItemMatrix(const SampledMarket& control, std::uint64_t seed)>;

    Kind kind = Kind::null;
    double factor = 1.0;  ///< value multiplier of the scale treatment
    Generator generator;

    static TreatmentModel null_effect() { return {}; }
    static TreatmentModel scale(double factor) { return {Kind::scale, factor, {}}; }
    /// Treated values are an independent redraw from the same laws.
    static TreatmentModel reshuffle() { return {Kind::reshuffle, 1.0, {}}; }
    static TreatmentModel custom(Generator g) { return {Kind::custom, 1.0, std::move(g)}; }

    /// Treated version of `control`, keeping its item layout.
    SampledMarket apply(const MarketDefinition& def, const SampledMarket& control, std::uint64_t seed) const;
    void validate() const;
};

struct ABTestConfig {
    double pi0 = 0.5;
    double pi1 = 0.5;
    /// Impressions per submarket summed across both arms.
    Index t = 1000;
    double alpha = 100.0 / 1100.0;
    /// Buyers, budgets and value laws; the value model must be synthetic.
    MarketDefinition market;
    TreatmentModel treatment;
    double c = 0.05;
    std::uint64_t seed = 0;
    DebiasConfig debias;  ///< alpha is overwritten by the field above
    SolveOptions solve;

    /// Items drawn in arm w: floor(pi_w t K).
    Index arm_items(int arm) const;
    /// Arm budgets in the per-item supply 1/t_w normalization.
    Vector arm_budgets(int arm) const;
    void validate() const;
};

struct ArmSubmarketEstimate {
    double rev_hat = 0.0;
    Interval ci;
    double sigma2 = 0.0;  ///< variance of the revenue influence values
};

struct ArmResult {
    Index t = 0;
    Vector budgets;
    Vector beta;           ///< equilibrium multipliers of the arm sample
    Vector beta_debiased;
    SolveDiagnostics diagnostics;
    std::vector<ArmSubmarketEstimate> submarkets;
};

struct SubmarketEffect {
    double tau_hat = 0.0;
    Interval ci;
};

struct ABTestResult {
    std::array<ArmResult, 2> arms;
    std::vector<SubmarketEffect> effects;  ///< one per submarket
};

/// Budget-split test: each arm observes its own contaminated sample, solves,
/// debiases and reports per-submarket revenue; effects are arm differences
/// with variances added across independent arms.
ABTestResult run_parallel_abtest(const ABTestConfig& config);

struct TreatmentTruth {
    std::array<std::vector<double>, 2> revenue;  ///< per arm, per submarket
    std::vector<double> tau;
};

/// Per-submarket limit revenues of both arms from large good-only samples.
TreatmentTruth treatment_effect_truth(const ABTestConfig& config, Index t_ref, const SolveOptions& opts = {});

}  // namespace fppe
