#pragma once

#include "fppe/market.hpp"
#include "fppe/types.hpp"

namespace fppe {

/// Debiased revenue estimate (1/(1-alpha)) sum_tau sigma^tau 1_good(theta^tau) max_i v_i^tau beta_i.
/// With sigma = 1/t this is the plain good-item average scaled by 1/(1-alpha).
double rev_hat(const SampledMarket& sample, const Vector& beta, double alpha);

}  // namespace fppe
