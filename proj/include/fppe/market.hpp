#pragma once

#include "fppe/rng.hpp"
#include "fppe/types.hpp"

#include <cstdint>
#include <variant>
#include <vector>

namespace fppe {

/// Scalar law used for item values and budgets.
struct Distribution {
    enum class Kind { uniform, lognormal, constant };

    Kind kind = Kind::uniform;
    double a = 0.0;  ///< uniform lower bound, lognormal mu, or the constant
    double b = 1.0;  ///< uniform upper bound or lognormal sigma

    static Distribution uniform(double lo, double hi) { return {Kind::uniform, lo, hi}; }
    static Distribution lognormal(double mu, double s) { return {Kind::lognormal, mu, s}; }
    static Distribution constant(double value) { return {Kind::constant, value, value}; }

    double sample(Rng& rng) const;
    void validate() const;
};

enum class MixtureMode {
    fixed_count,  ///< exactly n_bad bad items
    bernoulli,    ///< each item bad with probability n_bad / (n_good + n_bad)
};

struct SyntheticSpec {
    std::size_t n_good = 1000;
    std::size_t n_bad = 0;
    Distribution good_value = Distribution::uniform(0.0, 1.0);
    Distribution bad_value = Distribution::uniform(0.0, 1.0);
    Distribution budget_law = Distribution::uniform(0.5, 1.5);
    MixtureMode mixture = MixtureMode::fixed_count;

    double alpha() const {
        return static_cast<double>(n_bad) / static_cast<double>(n_good + n_bad);
    }
};

/// A finite batch of items. Row tau of `values` holds v_i(theta^tau).
struct SampledMarket {
    ItemMatrix values;
    Mask is_bad;
    /// Submarket of each good item, -1 for bad or unlabeled items.
    std::vector<int> submarket_label;
    /// Per-item supply, 1/t unless overridden.
    Vector sigma;
    double alpha = 0.0;

    Index t() const { return values.rows(); }
    Index n() const { return values.cols(); }
    Index good_count() const { return t() - is_bad.count(); }

    /// Throws InvalidSpecError when shapes or values are inconsistent.
    void validate() const;
};

/// All-good market with uniform supply 1/t (or `supply` per item when positive).
SampledMarket make_sample(ItemMatrix values, double supply = 0.0);

struct MarketDefinition {
    Vector budgets;
    std::vector<int> submarket_of;  ///< 0-based submarket index per buyer
    int K = 1;
    std::variant<SyntheticSpec, SampledMarket> value_model;

    Index n_buyers() const { return budgets.size(); }
    std::vector<Index> buyers_in(int k) const;
    void validate() const;
};

/// n buyers split into K contiguous blocks; remainder buyers go to the lowest blocks.
std::vector<int> block_partition(Index n, int K);

/// Draws budgets from `law`, scaled by 1/n so they sum to about one unit of supply.
Vector sample_budgets(const Distribution& law, Index n, std::uint64_t seed);

/// Synthetic contaminated sample. Good items are split evenly across the K
/// submarkets (remainder to the lowest indices) and are valued only by that
/// submarket's buyers; bad items are valued by every buyer.
SampledMarket generate_synthetic_market(const MarketDefinition& def, std::uint64_t seed);

/// Radon-Nikodym ratio of (s - s') against the contaminated supply.
inline double contamination_ratio_g(bool is_bad, double alpha) {
    if (is_bad) {
        if (!(alpha > 0.0 && alpha < 1.0))
            throw DomainError("contamination ratio: bad item requires 0 < alpha < 1");
        return -1.0 / alpha;
    }
    if (!(alpha >= 0.0 && alpha < 1.0))
        throw DomainError("contamination ratio: alpha must lie in [0, 1)");
    return 1.0 / (1.0 - alpha);
}

}  // namespace fppe
