#include "fppe/abtest.hpp"

#include "fppe/revenue.hpp"
#include "fppe/rng.hpp"

#include <cmath>
#include <string>

namespace fppe {

namespace {

const SyntheticSpec& synthetic_spec(const MarketDefinition& def) {
    const auto* spec = std::get_if<SyntheticSpec>(&def.value_model);
    if (spec == nullptr) throw ConfigError("abtest: the market needs a synthetic value model");
    return *spec;
}

MarketDefinition with_counts(const MarketDefinition& def, std::size_t n_good, std::size_t n_bad) {
    MarketDefinition out = def;
    SyntheticSpec spec = synthetic_spec(def);
    spec.n_good = n_good;
    spec.n_bad = n_bad;
    spec.mixture = MixtureMode::fixed_count;
    out.value_model = spec;
    return out;
}

Mask buyers_of(const MarketDefinition& def, int k) {
    Mask m = Mask::Constant(def.n_buyers(), false);
    for (Index i : def.buyers_in(k)) m[i] = true;
    return m;
}

std::string arm_context(int arm) { return "arm " + std::to_string(arm); }

}  // namespace

SampledMarket TreatmentModel::apply(const MarketDefinition& def, const SampledMarket& control,
                                    std::uint64_t seed) const {
    SampledMarket out = control;
    switch (kind) {
        case Kind::null:
            break;
        case Kind::scale:
            out.values *= factor;
            break;
        case Kind::reshuffle: {
            MarketDefinition layout = with_counts(def, static_cast<std::size_t>(control.good_count()),
                                                  static_cast<std::size_t>(control.is_bad.count()));
            out.values = generate_synthetic_market(layout, seed).values;
            break;
        }
        case Kind::custom:
            out.values = generator(control, seed);
            break;
    }
    out.validate();
    return out;
}

void TreatmentModel::validate() const {
    if (kind == Kind::scale && !(factor >= 0.0 && std::isfinite(factor)))
        throw ConfigError("treatment: scale factor must be finite and nonnegative");
    if (kind == Kind::custom && !generator) throw ConfigError("treatment: custom model needs a generator");
}

Index ABTestConfig::arm_items(int arm) const {
    const double share = arm == 0 ? pi0 : pi1;
    return static_cast<Index>(std::floor(share * static_cast<double>(t) * static_cast<double>(market.K)));
}

Vector ABTestConfig::arm_budgets(int arm) const {
    const double share = arm == 0 ? pi0 : pi1;
    // Budgets pi_w t b against unit supply per item, rescaled to supply 1/t_w.
    return market.budgets * (share * static_cast<double>(t) / static_cast<double>(arm_items(arm)));
}

void ABTestConfig::validate() const {
    if (!(pi0 > 0.0 && pi1 > 0.0)) throw ConfigError("abtest: pi0 and pi1 must be positive");
    if (std::abs(pi0 + pi1 - 1.0) > 1e-12) throw ConfigError("abtest: pi0 + pi1 must equal 1");
    market.validate();
    synthetic_spec(market);
    if (t < market.K) throw ConfigError("abtest: t must be at least K");
    if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("abtest: alpha must lie in [0, 1)");
    if (!(c > 0.0 && c < 1.0)) throw ConfigError("abtest: c must lie in (0, 1)");
    for (int arm = 0; arm < 2; ++arm) {
        const Index items = arm_items(arm);
        const auto n_bad = static_cast<Index>(std::llround(alpha * static_cast<double>(items)));
        if (items - n_bad < market.K) throw ConfigError("abtest: an arm draws fewer good items than submarkets");
    }
    treatment.validate();
    debias.validate();
}

ABTestResult run_parallel_abtest(const ABTestConfig& config) {
    config.validate();
    const int K = config.market.K;
    ABTestResult result;
    std::array<std::vector<NormalRevenueCi>, 2> scoped;

    for (int arm = 0; arm < 2; ++arm) {
        const double share = arm == 0 ? config.pi0 : config.pi1;
        const Index items = config.arm_items(arm);
        const auto n_bad = static_cast<std::size_t>(std::llround(config.alpha * static_cast<double>(items)));
        const auto n_good = static_cast<std::size_t>(items) - n_bad;
        const MarketDefinition layout = with_counts(config.market, n_good, n_bad);

        const std::uint64_t arm_seed = derive_seed(config.seed, {stream::arm, static_cast<std::uint64_t>(arm)});
        SampledMarket sample = generate_synthetic_market(layout, arm_seed);
        if (arm == 1) sample = config.treatment.apply(layout, sample, derive_seed(arm_seed, {stream::items}));

        ArmResult& out = result.arms[static_cast<std::size_t>(arm)];
        out.t = items;
        out.budgets = config.arm_budgets(arm);

        PacingSolution solution;
        try {
            solution = solve_finite_eg(sample, out.budgets, config.solve);
        } catch (const ConvergenceError& e) {
            throw ConvergenceError(arm_context(arm) + ": " + e.what(), e.best_beta(), e.residual());
        }
        DebiasConfig dc = config.debias;
        dc.alpha = sample.alpha;
        DebiasResult debiased;
        try {
            debiased = debias(sample, out.budgets, solution, dc);
        } catch (const NumericalError& e) {
            throw NumericalError(arm_context(arm) + ": " + e.what(), e.condition());
        }
        const ItemMatrix d_rows = influence_rows(sample, out.budgets, solution, debiased);

        out.beta = solution.beta;
        out.beta_debiased = debiased.beta_debiased;
        out.diagnostics = solution.diagnostics;
        const double scale = static_cast<double>(items) / (static_cast<double>(K) * share * static_cast<double>(config.t));
        for (int k = 0; k < K; ++k) {
            RevenueScope scope{k, buyers_of(config.market, k), scale};
            NormalRevenueCi ci;
            try {
                ci = rev_ci_normal(sample, debiased.beta_debiased, d_rows, sample.alpha, config.c, scope);
            } catch (const DomainError& e) {
                throw NumericalError(arm_context(arm) + ", submarket " + std::to_string(k) + ": " + e.what());
            }
            ArmSubmarketEstimate est;
            est.rev_hat = revenue_influence(sample, debiased.beta_debiased, d_rows, sample.alpha, scope).point;
            est.ci = ci.interval;
            est.sigma2 = ci.sigma2;
            out.submarkets.push_back(est);
        }
    }

    const double z = normal_quantile(1.0 - 0.5 * config.c);
    const auto& control = result.arms[0];
    const auto& treated = result.arms[1];
    for (int k = 0; k < K; ++k) {
        const auto& e0 = control.submarkets[static_cast<std::size_t>(k)];
        const auto& e1 = treated.submarkets[static_cast<std::size_t>(k)];
        SubmarketEffect effect;
        effect.tau_hat = e1.rev_hat - e0.rev_hat;
        const double var = e0.sigma2 / static_cast<double>(control.t) + e1.sigma2 / static_cast<double>(treated.t);
        const double half = z * std::sqrt(var);
        effect.ci = {effect.tau_hat - half, effect.tau_hat + half};
        result.effects.push_back(effect);
    }
    return result;
}

TreatmentTruth treatment_effect_truth(const ABTestConfig& config, Index t_ref, const SolveOptions& opts) {
    config.validate();
    if (t_ref < config.market.K) throw ConfigError("treatment_effect_truth: t_ref must be at least K");
    const int K = config.market.K;
    const MarketDefinition layout = with_counts(config.market, static_cast<std::size_t>(t_ref), 0);
    // In the limit both arms face budgets b / K against unit total supply.
    const Vector budgets = config.market.budgets / static_cast<double>(K);
    const std::uint64_t ref_seed = derive_seed(config.seed, {stream::reference});

    TreatmentTruth truth;
    for (int arm = 0; arm < 2; ++arm) {
        SampledMarket sample = generate_synthetic_market(layout, ref_seed);
        if (arm == 1) sample = config.treatment.apply(layout, sample, derive_seed(ref_seed, {stream::items}));
        const PacingSolution solution = solve_finite_eg(sample, budgets, opts);
        auto& revenue = truth.revenue[static_cast<std::size_t>(arm)];
        revenue.assign(static_cast<std::size_t>(K), 0.0);
        for (Index tau = 0; tau < sample.t(); ++tau)
            revenue[static_cast<std::size_t>(sample.submarket_label[static_cast<std::size_t>(tau)])] +=
                sample.sigma[tau] * solution.prices[tau];
    }
    for (int k = 0; k < K; ++k)
        truth.tau.push_back(truth.revenue[1][static_cast<std::size_t>(k)] - truth.revenue[0][static_cast<std::size_t>(k)]);
    return truth;
}

}  // namespace fppe
