#pragma once

#include "fppe/market.hpp"
#include "fppe/solver.hpp"
#include "fppe/types.hpp"

#include <cmath>

namespace fppe {

enum class HessianMode { finite_difference, diagonal_closed_form };

struct DebiasConfig {
    double alpha = 0.0;
    /// Finite-difference step eps_t = c_eps * t^(-1/4).
    double c_eps = 0.1;
    /// Pacing slack iota_t = c_iota / sqrt(t) used by the active mask.
    double c_iota = 1.0;
    HessianMode hessian_mode = HessianMode::diagonal_closed_form;
    /// Keep only the diagonal of the finite-difference Hessian.
    bool fd_diagonal_only = false;
    /// Largest condition number accepted for the active Hessian block.
    double condition_cap = 1e12;

    double fd_step(Index t) const { return c_eps * std::pow(static_cast<double>(t), -0.25); }
    double slack(Index t) const { return c_iota / std::sqrt(static_cast<double>(t)); }
    void validate() const;
};

struct DebiasResult {
    Matrix hessian;
    Mask mask;
    Matrix masked_pinv;
    Vector delta_hat;
    Vector beta_debiased;
    ItemMatrix subgradients;  ///< mu^tau = (x_i^tau v_i^tau)_i, one row per item
    DebiasConfig config;
};

/// Central second differences of the sample dual objective with step eps
/// along each pair of coordinates, symmetrized.
Matrix estimate_hessian_fd(const SampledMarket& sample, const Vector& budgets, const Vector& beta, double eps,
                           bool diagonal_only = false);

/// Closed-form Hessian Diag(b_i / beta_i^2), valid under a positive expected inverse bid gap.
template <typename DerivedB, typename DerivedBeta>
MatrixT<typename DerivedB::Scalar> hessian_diag(const Eigen::MatrixBase<DerivedB>& budgets,
                                                const Eigen::MatrixBase<DerivedBeta>& beta) {
    if (!(beta.array() > 0).all()) throw DomainError("hessian_diag: beta_i must be positive");
    return (budgets.array() / beta.array().square()).matrix().asDiagonal();
}

/// Buyers considered paced: beta_i < 1 - c_iota / sqrt(t).
template <typename Derived>
Mask active_mask(const Eigen::MatrixBase<Derived>& beta, Index t, double c_iota = 1.0) {
    if (t < 1) throw DomainError("active_mask: t must be positive");
    const double cutoff = 1.0 - c_iota / std::sqrt(static_cast<double>(t));
    return (beta.array() < cutoff);
}

/// Moore-Penrose inverse of P H P for a 0/1 diagonal projector P: the inverse of
/// the masked block embedded at the masked positions, zeros elsewhere.
/// Throws NumericalError when the block is singular or its condition number exceeds the cap.
Matrix masked_pinv(const Matrix& hessian, const Mask& mask, double condition_cap = 1e12);

/// Subgradient rows mu^tau_i = x_i^tau v_i^tau of the per-item max term.
ItemMatrix subgradients(const SampledMarket& sample, const ItemMatrix& allocation);

/// (1/t) sum_tau g(theta^tau) mu^tau with g the contamination ratio.
Vector estimate_delta(const SampledMarket& sample, const ItemMatrix& subgradient_rows, double alpha);

inline Vector estimate_delta_from_allocation(const SampledMarket& sample, const ItemMatrix& allocation,
                                             double alpha) {
    return estimate_delta(sample, subgradients(sample, allocation), alpha);
}

/// beta_hat = beta_gamma - alpha * pinv * delta.
template <typename DerivedBeta, typename DerivedPinv, typename DerivedDelta>
VectorT<typename DerivedBeta::Scalar> debias_beta(const Eigen::MatrixBase<DerivedBeta>& beta_gamma, double alpha,
                                                  const Eigen::MatrixBase<DerivedPinv>& pinv,
                                                  const Eigen::MatrixBase<DerivedDelta>& delta) {
    if (pinv.rows() != beta_gamma.size() || pinv.cols() != delta.size())
        throw DomainError("debias_beta: dimension mismatch");
    return beta_gamma - alpha * (pinv * delta);
}

/// Full plug-in debiasing of a solved contaminated sample.
DebiasResult debias(const SampledMarket& sample, const Vector& budgets, const PacingSolution& solution,
                    const DebiasConfig& config);

/// Limit-market surrogate computed on large reference batches.
struct SurrogateResult {
    Vector beta_star_alpha;  ///< equilibrium of the contaminated reference
    Vector beta_tilde;       ///< first-order debiased multipliers
    double rev_tilde = 0.0;  ///< mean over the good reference of max_i v_i beta_tilde_i
    Mask mask;
    Vector delta;
};

/// The Hessian follows config.hessian_mode; the finite-difference step and the
/// active-mask slack use the size of the contaminated reference.
SurrogateResult debias_surrogate_limit(const SampledMarket& reference_good,
                                       const SampledMarket& reference_contaminated, const Vector& budgets,
                                       const DebiasConfig& config, const SolveOptions& opts = {});

/// Same, reusing an already solved contaminated reference.
SurrogateResult debias_surrogate_limit(const SampledMarket& reference_good,
                                       const SampledMarket& reference_contaminated,
                                       const PacingSolution& contaminated_solution, const Vector& budgets,
                                       const DebiasConfig& config);

}  // namespace fppe
