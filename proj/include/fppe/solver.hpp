#pragma once

#include "fppe/market.hpp"
#include "fppe/types.hpp"

#include <algorithm>
#include <limits>

namespace fppe {

struct SolveOptions {
    /// Certificate tolerance: every check_fppe residual must be at or below it.
    double tol = 1e-7;
    int max_iters = 200;
    /// Bids within tie_tol_rel * (highest bid in the market) of the item maximum count as tied.
    double tie_tol_rel = 1e-9;
};

struct SolveDiagnostics {
    int iterations = 0;
    double kkt_residual = std::numeric_limits<double>::infinity();
    bool converged = false;
};

/// A finite first-price pacing equilibrium.
struct PacingSolution {
    Vector beta;
    Vector prices;          ///< p^tau = max_i beta_i v_i^tau
    ItemMatrix allocation;  ///< x_i^tau in [0, 1]
    Vector spend;           ///< sum_tau sigma^tau x_i^tau p^tau
    Vector leftover;        ///< budget minus spend
    double objective = 0.0;
    SolveDiagnostics diagnostics;
};

/// Residuals of the equilibrium conditions. Money-valued residuals are
/// divided by the total budget so the report is invariant to rescaling
/// budgets and supplies together; bid residuals are divided by the highest bid.
struct FppeReport {
    double pricing = 0.0;          ///< |p - max bid|
    double winner_only = 0.0;      ///< bid shortfall of any buyer holding a share
    double budget = 0.0;           ///< spend above budget
    double oversell = 0.0;         ///< sum_i x_i^tau above one
    double clearing = 0.0;         ///< unsold money on items with a positive price
    double complementarity = 0.0;  ///< min(1 - beta_i, leftover_i)
    bool passed = false;

    double max() const {
        return std::max({pricing, winner_only, budget, oversell, clearing, complementarity});
    }
};

/// Dual Eisenberg-Gale objective sum_tau sigma^tau max_i beta_i v_i^tau - sum_i b_i log beta_i.
/// Values of beta above one are accepted (finite differences step past the box).
double eval_dual_objective(const SampledMarket& sample, const Vector& budgets, const Vector& beta);

/// Solves the finite dual EG program and returns a certified equilibrium.
/// Throws ConvergenceError carrying the best iterate when the certificate fails.
PacingSolution solve_finite_eg(const SampledMarket& sample, const Vector& budgets,
                               const SolveOptions& opts = {});

/// First-price allocation for a fixed pacing profile. Unique winners take the
/// whole item; tied items are split by a max-flow pass that fills paced buyers
/// up to their budgets first, then unpaced buyers, and gives any remainder to
/// the smallest tied index. Items whose best bid is within the tie tolerance of
/// zero stay unallocated.
ItemMatrix recover_allocation(const SampledMarket& sample, const Vector& budgets, const Vector& beta,
                              double tie_tol_rel = 1e-9);

/// Prices, spend, leftover and objective for a pacing profile and allocation.
PacingSolution assemble_solution(const SampledMarket& sample, const Vector& budgets, Vector beta,
                                 ItemMatrix allocation);

FppeReport check_fppe(const SampledMarket& sample, const Vector& budgets, const PacingSolution& solution,
                      double tol);

/// Highest minus second-highest paced bid; the second-highest of a single bid is 0.
template <typename DerivedBeta, typename DerivedValues>
typename DerivedBeta::Scalar bidgap(const Eigen::MatrixBase<DerivedBeta>& beta,
                                    const Eigen::MatrixBase<DerivedValues>& values) {
    using Scalar = typename DerivedBeta::Scalar;
    Scalar first = Scalar(0);
    Scalar second = Scalar(0);
    bool seen = false;
    for (Index i = 0; i < beta.size(); ++i) {
        const Scalar bid = beta(i) * values(i);
        if (!seen || bid > first) {
            if (seen) second = first;
            first = bid;
            seen = true;
        } else if (bid > second) {
            second = bid;
        }
    }
    if (beta.size() == 1) second = Scalar(0);
    return first - second;
}

/// Platform revenue sum_tau sigma^tau p^tau.
double revenue_of(const SampledMarket& sample, const PacingSolution& solution);

}  // namespace fppe
