#pragma once

#include "fppe/debias.hpp"
#include "fppe/market.hpp"
#include "fppe/revenue.hpp"
#include "fppe/types.hpp"

#include <cstdint>

namespace fppe {

/// Influence rows of the debiased multipliers in a general market:
/// row tau = -(1/(1-alpha)) 1_good(theta^tau) pinv mu^tau.
ItemMatrix influence_d1(const SampledMarket& sample, const ItemMatrix& subgradient_rows, const Matrix& masked_pinv,
                        double alpha);

/// Influence rows under the closed-form diagonal Hessian, which adds the
/// fluctuation of the Hessian plug-in: d1 - 2 alpha Diag(beta_i delta_i / b_i) d_alpha
/// with d_alpha row = -pinv mu^tau and delta the contamination direction estimate.
ItemMatrix influence_d2(const ItemMatrix& d1_rows, const Vector& beta, const Vector& delta, const Vector& budgets,
                        double alpha, const Matrix& masked_pinv, const ItemMatrix& subgradient_rows);

enum class CovarianceKind { general, bidgap };

struct CovarianceEstimate {
    Matrix sigma;
    CovarianceKind kind = CovarianceKind::general;
    Index sample_size = 0;
};

/// Centered second moment of the rows with 1/t normalization.
CovarianceEstimate covariance_plugin(const ItemMatrix& rows, CovarianceKind kind = CovarianceKind::general);

/// Regularized lower incomplete gamma P(a, x).
double regularized_gamma_p(double a, double x);
double chi2_cdf(double q, int df);
/// Upper (1-c) quantile of the chi-square law with df degrees of freedom.
double chi2_quantile(int df, double c);
double normal_cdf(double x);
/// Standard normal quantile at probability p.
double normal_quantile(double p);

/// Symmetric PSD square root through the eigendecomposition. Eigenvalues in
/// [-1e-10, 0) are treated as zero; anything more negative throws NumericalError.
Matrix psd_sqrt(const Matrix& sigma);

enum class PerCoordQuantile { chi_n, z };

struct BetaConfidence {
    double level = 0.95;
    double chi = 0.0;  ///< multiplier used for the per-coordinate bounds
    Vector lower;
    Vector upper;
    Vector lower_clamped;  ///< clamped into (0, 1]
    Vector upper_clamped;
    Matrix radius_matrix;  ///< (chi_n / sqrt t) Sigma^(1/2)

    bool covers(Index i, double value) const { return lower[i] <= value && value <= upper[i]; }
};

/// Per-coordinate extremes of the ellipsoid beta_hat + (chi/sqrt t) Sigma^(1/2) B.
/// With PerCoordQuantile::z the multiplier is the two-sided normal quantile instead.
BetaConfidence beta_confidence(const Vector& beta_hat, const CovarianceEstimate& cov, Index t, double c,
                               PerCoordQuantile mode = PerCoordQuantile::chi_n);

/// Lowest multiplier used when clamping candidate profiles into the feasible box.
inline constexpr double beta_floor = 1e-6;

Vector clamp_beta(const Vector& beta);

/// Revenue interval from evaluating the estimate at the clamped coordinate bounds.
Interval rev_ci_minmax(const SampledMarket& sample, const BetaConfidence& conf, double alpha);

/// Parametric bootstrap: draws beta ~ N(beta_hat, Sigma/t), clamps, evaluates the
/// revenue estimate and returns the empirical (c/2, 1-c/2) quantiles.
Interval rev_ci_bootstrap(const Vector& beta_hat, const CovarianceEstimate& cov, Index t,
                          const SampledMarket& sample, double alpha, int B, double c, std::uint64_t seed);

/// Restricts revenue to the good items of one submarket and to a buyer subset.
/// The default scope covers every good item and every buyer.
struct RevenueScope {
    int submarket = -1;
    Mask buyers;        ///< empty means every buyer
    double scale = 1.0; ///< extra factor applied to the estimate and its influence
};

/// Scoped revenue estimate and its uncentered per-item influence values:
/// scale/(1-alpha) (1_scope f(theta, beta) + g^T d(theta)) with g the scoped mean of grad f.
struct RevenueInfluence {
    double point = 0.0;
    Vector rows;
};

RevenueInfluence revenue_influence(const SampledMarket& sample, const Vector& beta_hat, const ItemMatrix& d_rows,
                                   double alpha, const RevenueScope& scope = {});

struct NormalRevenueCi {
    Interval interval;
    double sigma2 = 0.0;  ///< centered second moment of the revenue influence values
};

NormalRevenueCi rev_ci_normal(const SampledMarket& sample, const Vector& beta_hat, const ItemMatrix& d_rows,
                              double alpha, double c, const RevenueScope& scope = {});

struct RevenueEstimate {
    double point = 0.0;
    Interval ci_normal;
    Interval ci_minmax;
    Interval ci_bootstrap;
    double sigma_rev = 0.0;  ///< variance of the revenue influence values
};

struct InferenceConfig {
    double c = 0.05;
    int bootstrap_draws = 1000;
    PerCoordQuantile per_coord = PerCoordQuantile::chi_n;
    std::uint64_t seed = 0;
};

struct InferenceResult {
    CovarianceEstimate covariance;
    ItemMatrix influence;
    BetaConfidence beta;
    RevenueEstimate revenue;
};

/// Influence rows matched to the Hessian mode: d2 for the closed-form diagonal, d1 otherwise.
ItemMatrix influence_rows(const SampledMarket& sample, const Vector& budgets, const PacingSolution& solution,
                          const DebiasResult& debiased);

/// Covariance, beta region and all three revenue intervals for a debiased sample.
InferenceResult infer(const SampledMarket& sample, const Vector& budgets, const PacingSolution& solution,
                      const DebiasResult& debiased, const InferenceConfig& config);

}  // namespace fppe
