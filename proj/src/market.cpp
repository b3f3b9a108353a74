#include "fppe/market.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fppe {

double Distribution::sample(Rng& rng) const {
    switch (kind) {
        case Kind::uniform: return std::uniform_real_distribution<double>(a, b)(rng);
        case Kind::lognormal: return std::lognormal_distribution<double>(a, b)(rng);
        case Kind::constant: return a;
    }
    return a;
}

void Distribution::validate() const {
    switch (kind) {
        case Kind::uniform:
            if (!(a >= 0.0 && b > a)) throw InvalidSpecError("uniform law needs 0 <= lo < hi");
            break;
        case Kind::lognormal:
            if (!(b > 0.0) || !std::isfinite(a)) throw InvalidSpecError("lognormal law needs sigma > 0");
            break;
        case Kind::constant:
            if (!(a >= 0.0) || !std::isfinite(a)) throw InvalidSpecError("constant law needs a finite value >= 0");
            break;
    }
}

void SampledMarket::validate() const {
    const Index items = t();
    if (items < 1 || n() < 1) throw InvalidSpecError("sampled market needs t >= 1 and n >= 1");
    if (is_bad.size() != items || sigma.size() != items ||
        static_cast<Index>(submarket_label.size()) != items)
        throw InvalidSpecError("sampled market: per-item arrays do not match the item count");
    if (!values.allFinite() || (values.array() < 0.0).any())
        throw InvalidSpecError("sampled market: values must be finite and nonnegative");
    if (!(sigma.array() > 0.0).all()) throw InvalidSpecError("sampled market: supply must be positive");
    if (is_bad.any() && !(alpha > 0.0 && alpha < 1.0))
        throw InvalidSpecError("sampled market: bad items require 0 < alpha < 1");
}

SampledMarket make_sample(ItemMatrix values, double supply) {
    SampledMarket m;
    const Index t = values.rows();
    m.values = std::move(values);
    m.is_bad = Mask::Constant(t, false);
    m.submarket_label.assign(static_cast<std::size_t>(t), -1);
    m.sigma = Vector::Constant(t, supply > 0.0 ? supply : 1.0 / static_cast<double>(t));
    m.alpha = 0.0;
    return m;
}

std::vector<Index> MarketDefinition::buyers_in(int k) const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < submarket_of.size(); ++i)
        if (submarket_of[i] == k) out.push_back(static_cast<Index>(i));
    return out;
}

void MarketDefinition::validate() const {
    if (K < 1) throw InvalidSpecError("market definition needs K >= 1");
    if (n_buyers() < 1) throw InvalidSpecError("market definition needs at least one buyer");
    if (!(budgets.array() > 0.0).all() || !budgets.allFinite())
        throw InvalidSpecError("all budgets must be positive and finite");
    if (static_cast<Index>(submarket_of.size()) != n_buyers())
        throw InvalidSpecError("every buyer needs exactly one submarket");
    for (int k : submarket_of)
        if (k < 0 || k >= K) throw InvalidSpecError("submarket index out of range [0, K)");
    if (const auto* spec = std::get_if<SyntheticSpec>(&value_model)) {
        if (spec->n_good == 0) throw InvalidSpecError("synthetic spec needs n_good >= 1");
        spec->good_value.validate();
        spec->bad_value.validate();
        spec->budget_law.validate();
    } else {
        const auto& sample = std::get<SampledMarket>(value_model);
        sample.validate();
        if (sample.n() != n_buyers()) throw InvalidSpecError("value matrix width differs from buyer count");
    }
}

std::vector<int> block_partition(Index n, int K) {
    if (K < 1 || n < K) throw InvalidSpecError("block partition needs 1 <= K <= n");
    std::vector<int> out(static_cast<std::size_t>(n));
    const Index base = n / K;
    const Index extra = n % K;
    Index i = 0;
    for (int k = 0; k < K; ++k) {
        const Index size = base + (k < extra ? 1 : 0);
        for (Index j = 0; j < size; ++j) out[static_cast<std::size_t>(i++)] = k;
    }
    return out;
}

Vector sample_budgets(const Distribution& law, Index n, std::uint64_t seed) {
    law.validate();
    Rng rng = make_rng(seed, {stream::budgets});
    Vector b(n);
    for (Index i = 0; i < n; ++i) b[i] = law.sample(rng) / static_cast<double>(n);
    if (!(b.array() > 0.0).all()) throw InvalidSpecError("budget law produced a nonpositive budget");
    return b;
}

SampledMarket generate_synthetic_market(const MarketDefinition& def, std::uint64_t seed) {
    const auto* spec = std::get_if<SyntheticSpec>(&def.value_model);
    if (spec == nullptr) throw InvalidSpecError("generate_synthetic_market needs a synthetic value model");
    def.validate();

    const Index n = def.n_buyers();
    const Index total = static_cast<Index>(spec->n_good + spec->n_bad);
    const double alpha = spec->alpha();
    Rng rng = make_rng(seed, {stream::items});

    // Item classes first, then values, so the class layout never depends on value draws.
    Mask bad = Mask::Constant(total, false);
    if (spec->mixture == MixtureMode::fixed_count) {
        bad.tail(static_cast<Index>(spec->n_bad)).setConstant(true);
    } else {
        std::bernoulli_distribution coin(alpha);
        for (Index tau = 0; tau < total; ++tau) bad[tau] = coin(rng);
    }

    SampledMarket m;
    m.values = ItemMatrix::Zero(total, n);
    m.is_bad = bad;
    m.submarket_label.assign(static_cast<std::size_t>(total), -1);
    m.sigma = Vector::Constant(total, 1.0 / static_cast<double>(total));
    m.alpha = alpha;

    std::vector<std::vector<Index>> members(static_cast<std::size_t>(def.K));
    for (int k = 0; k < def.K; ++k) members[static_cast<std::size_t>(k)] = def.buyers_in(k);

    const Index good_total = total - bad.count();
    const Index base = good_total / def.K;
    const Index extra = good_total % def.K;
    Index good_seen = 0;
    for (Index tau = 0; tau < total; ++tau) {
        if (bad[tau]) {
            for (Index i = 0; i < n; ++i) m.values(tau, i) = spec->bad_value.sample(rng);
            continue;
        }
        // Even split across submarkets with the remainder going to the lowest indices.
        int k = 0;
        Index boundary = base + (extra > 0 ? 1 : 0);
        while (good_seen >= boundary && k + 1 < def.K) {
            ++k;
            boundary += base + (k < extra ? 1 : 0);
        }
        ++good_seen;
        m.submarket_label[static_cast<std::size_t>(tau)] = k;
        for (Index i : members[static_cast<std::size_t>(k)]) m.values(tau, i) = spec->good_value.sample(rng);
    }
    return m;
}

}  // namespace fppe
