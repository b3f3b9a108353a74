#include "fppe/inference.hpp"

#include "fppe/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace fppe {

ItemMatrix influence_d1(const SampledMarket& sample, const ItemMatrix& subgradient_rows, const Matrix& masked_pinv,
                        double alpha) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw DomainError("influence_d1: alpha must lie in [0, 1)");
    if (subgradient_rows.rows() != sample.t() || subgradient_rows.cols() != masked_pinv.rows())
        throw DomainError("influence_d1: dimension mismatch");
    ItemMatrix d = -(subgradient_rows * masked_pinv.transpose()) / (1.0 - alpha);
    for (Index tau = 0; tau < sample.t(); ++tau)
        if (sample.is_bad[tau]) d.row(tau).setZero();
    return d;
}

ItemMatrix influence_d2(const ItemMatrix& d1_rows, const Vector& beta, const Vector& delta, const Vector& budgets,
                        double alpha, const Matrix& masked_pinv, const ItemMatrix& subgradient_rows) {
    const Index n = beta.size();
    if (delta.size() != n || budgets.size() != n || d1_rows.cols() != n || subgradient_rows.rows() != d1_rows.rows())
        throw DomainError("influence_d2: dimension mismatch");
    if (alpha == 0.0) return d1_rows;
    const ItemMatrix d_alpha = -(subgradient_rows * masked_pinv.transpose());
    const Vector weight = (2.0 * alpha * beta.array() * delta.array() / budgets.array()).matrix();
    return d1_rows - d_alpha * weight.asDiagonal();
}

CovarianceEstimate covariance_plugin(const ItemMatrix& rows, CovarianceKind kind) {
    if (rows.rows() < 1) throw DomainError("covariance_plugin: need at least one row");
    CovarianceEstimate out;
    out.kind = kind;
    out.sample_size = rows.rows();
    const Eigen::RowVectorXd mean = rows.colwise().mean();
    const Matrix centered = rows.rowwise() - mean;
    out.sigma = (centered.transpose() * centered) / static_cast<double>(rows.rows());
    out.sigma = (0.5 * (out.sigma + out.sigma.transpose())).eval();
    return out;
}

double regularized_gamma_p(double a, double x) {
    if (!(a > 0.0) || x < 0.0) throw DomainError("regularized_gamma_p: need a > 0 and x >= 0");
    if (x == 0.0) return 0.0;
    const double log_prefix = a * std::log(x) - x - std::lgamma(a);
    constexpr double eps = 1e-16;
    if (x < a + 1.0) {
        double term = 1.0 / a;
        double sum = term;
        for (int k = 1; k < 10000; ++k) {
            term *= x / (a + k);
            sum += term;
            if (std::abs(term) < std::abs(sum) * eps) break;
        }
        return std::min(1.0, sum * std::exp(log_prefix));
    }
    // Continued fraction for the upper tail, modified Lentz.
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int k = 1; k < 10000; ++k) {
        const double an = -k * (k - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < eps) break;
    }
    return std::max(0.0, 1.0 - std::exp(log_prefix) * h);
}

double chi2_cdf(double q, int df) {
    if (df < 1) throw DomainError("chi2_cdf: df must be at least 1");
    if (q <= 0.0) return 0.0;
    return regularized_gamma_p(0.5 * df, 0.5 * q);
}

namespace {

// Bisection on a monotone increasing function; stops at double resolution.
template <typename F>
double invert_increasing(F&& cdf, double target, double lo, double hi) {
    while (cdf(hi) < target) {
        lo = hi;
        hi *= 2.0;
        if (!std::isfinite(hi)) throw NumericalError("quantile bracket overflow", hi);
    }
    for (int it = 0; it < 400; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (cdf(mid) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

double chi2_quantile(int df, double c) {
    if (df < 1) throw DomainError("chi2_quantile: df must be at least 1");
    if (!(c > 0.0 && c < 1.0)) throw DomainError("chi2_quantile: c must lie in (0, 1)");
    return invert_increasing([df](double q) { return chi2_cdf(q, df); }, 1.0 - c, 0.0,
                             std::max(1.0, 2.0 * df));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p must lie in (0, 1)");
    if (p < 0.5) return -normal_quantile(1.0 - p);
    return invert_increasing(normal_cdf, p, 0.0, 8.0);
}

Matrix psd_sqrt(const Matrix& sigma) {
    if (sigma.rows() != sigma.cols()) throw DomainError("psd_sqrt: matrix must be square");
    if (sigma.size() == 0) return sigma;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (sigma + sigma.transpose()));
    Vector ev = eig.eigenvalues();
    const double smallest = ev.minCoeff();
    if (smallest < -1e-10)
        throw NumericalError("covariance is not positive semidefinite (eigenvalue " + std::to_string(smallest) + ")",
                             smallest);
    ev = ev.cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
}

BetaConfidence beta_confidence(const Vector& beta_hat, const CovarianceEstimate& cov, Index t, double c,
                               PerCoordQuantile mode) {
    const Index n = beta_hat.size();
    if (cov.sigma.rows() != n || cov.sigma.cols() != n) throw DomainError("beta_confidence: dimension mismatch");
    if (t < 1) throw DomainError("beta_confidence: t must be positive");
    BetaConfidence out;
    out.level = 1.0 - c;
    const double chi_n = std::sqrt(chi2_quantile(static_cast<int>(n), c));
    out.chi = mode == PerCoordQuantile::chi_n ? chi_n : normal_quantile(1.0 - 0.5 * c);
    const double root_t = std::sqrt(static_cast<double>(t));
    out.radius_matrix = (chi_n / root_t) * psd_sqrt(cov.sigma);
    const Vector half = (out.chi / root_t) * cov.sigma.diagonal().cwiseMax(0.0).cwiseSqrt();
    out.lower = beta_hat - half;
    out.upper = beta_hat + half;
    out.lower_clamped = clamp_beta(out.lower);
    out.upper_clamped = clamp_beta(out.upper);
    return out;
}

Vector clamp_beta(const Vector& beta) { return beta.cwiseMax(beta_floor).cwiseMin(1.0); }

Interval rev_ci_minmax(const SampledMarket& sample, const BetaConfidence& conf, double alpha) {
    return {rev_hat(sample, conf.lower_clamped, alpha), rev_hat(sample, conf.upper_clamped, alpha)};
}

namespace {

// Linear interpolation between order statistics.
double empirical_quantile(std::vector<double> sorted, double p) {
    std::sort(sorted.begin(), sorted.end());
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

Interval rev_ci_bootstrap(const Vector& beta_hat, const CovarianceEstimate& cov, Index t,
                          const SampledMarket& sample, double alpha, int B, double c, std::uint64_t seed) {
    if (B < 2) throw DomainError("rev_ci_bootstrap: need at least two draws");
    if (!(c > 0.0 && c < 1.0)) throw DomainError("rev_ci_bootstrap: c must lie in (0, 1)");
    if (t < 1) throw DomainError("rev_ci_bootstrap: t must be positive");
    const Index n = beta_hat.size();
    const Matrix root = psd_sqrt(cov.sigma) / std::sqrt(static_cast<double>(t));
    Rng rng = make_rng(seed, {stream::bootstrap});
    std::normal_distribution<double> normal;
    std::vector<double> draws(static_cast<std::size_t>(B));
    Vector z(n);
    for (int b = 0; b < B; ++b) {
        for (Index i = 0; i < n; ++i) z[i] = normal(rng);
        draws[static_cast<std::size_t>(b)] = rev_hat(sample, clamp_beta(beta_hat + root * z), alpha);
    }
    return {empirical_quantile(draws, 0.5 * c), empirical_quantile(draws, 1.0 - 0.5 * c)};
}

RevenueInfluence revenue_influence(const SampledMarket& sample, const Vector& beta_hat, const ItemMatrix& d_rows,
                                   double alpha, const RevenueScope& scope) {
    const Index t = sample.t();
    const Index n = sample.n();
    if (beta_hat.size() != n || d_rows.rows() != t || d_rows.cols() != n)
        throw DomainError("revenue_influence: dimension mismatch");
    if (!(alpha >= 0.0 && alpha < 1.0)) throw DomainError("revenue_influence: alpha must lie in [0, 1)");
    const bool all_buyers = scope.buyers.size() == 0;
    if (!all_buyers && scope.buyers.size() != n) throw DomainError("revenue_influence: buyer scope has wrong length");

    Vector f = Vector::Zero(t);
    Vector grad_mean = Vector::Zero(n);
    bool any = false;
    double point = 0.0;
    for (Index tau = 0; tau < t; ++tau) {
        if (sample.is_bad[tau]) continue;
        if (scope.submarket >= 0 && sample.submarket_label[static_cast<std::size_t>(tau)] != scope.submarket)
            continue;
        any = true;
        Index arg = -1;
        double best = 0.0;
        for (Index i = 0; i < n; ++i) {
            if (!all_buyers && !scope.buyers[i]) continue;
            const double bid = sample.values(tau, i) * beta_hat[i];
            if (arg < 0 || bid > best) {
                best = bid;
                arg = i;
            }
        }
        if (arg < 0) continue;
        f[tau] = best;
        point += sample.sigma[tau] * best;
        grad_mean[arg] += sample.values(tau, arg);
    }
    if (!any) throw DomainError("revenue_influence: no good items in scope");
    grad_mean /= static_cast<double>(t);

    const double factor = scope.scale / (1.0 - alpha);
    RevenueInfluence out;
    out.point = factor * point;
    out.rows = factor * (f + d_rows * grad_mean);
    return out;
}

NormalRevenueCi rev_ci_normal(const SampledMarket& sample, const Vector& beta_hat, const ItemMatrix& d_rows,
                              double alpha, double c, const RevenueScope& scope) {
    if (!(c > 0.0 && c < 1.0)) throw DomainError("rev_ci_normal: c must lie in (0, 1)");
    const RevenueInfluence infl = revenue_influence(sample, beta_hat, d_rows, alpha, scope);
    const double t = static_cast<double>(sample.t());
    const Vector centered = infl.rows.array() - infl.rows.mean();
    NormalRevenueCi out;
    out.sigma2 = centered.squaredNorm() / t;
    const double half = normal_quantile(1.0 - 0.5 * c) * std::sqrt(out.sigma2 / t);
    out.interval = {infl.point - half, infl.point + half};
    return out;
}

ItemMatrix influence_rows(const SampledMarket& sample, const Vector& budgets, const PacingSolution& solution,
                          const DebiasResult& debiased) {
    const double alpha = debiased.config.alpha;
    ItemMatrix d1 = influence_d1(sample, debiased.subgradients, debiased.masked_pinv, alpha);
    if (debiased.config.hessian_mode != HessianMode::diagonal_closed_form) return d1;
    return influence_d2(d1, solution.beta, debiased.delta_hat, budgets, alpha, debiased.masked_pinv,
                        debiased.subgradients);
}

InferenceResult infer(const SampledMarket& sample, const Vector& budgets, const PacingSolution& solution,
                      const DebiasResult& debiased, const InferenceConfig& config) {
    const double alpha = debiased.config.alpha;
    const Index t = sample.t();
    InferenceResult out;
    out.influence = influence_rows(sample, budgets, solution, debiased);
    out.covariance = covariance_plugin(out.influence, debiased.config.hessian_mode == HessianMode::diagonal_closed_form
                                                          ? CovarianceKind::bidgap
                                                          : CovarianceKind::general);
    out.beta = beta_confidence(debiased.beta_debiased, out.covariance, t, config.c, config.per_coord);

    const NormalRevenueCi normal = rev_ci_normal(sample, debiased.beta_debiased, out.influence, alpha, config.c);
    out.revenue.point = rev_hat(sample, debiased.beta_debiased, alpha);
    out.revenue.ci_normal = normal.interval;
    out.revenue.sigma_rev = normal.sigma2;
    out.revenue.ci_minmax = rev_ci_minmax(sample, out.beta, alpha);
    out.revenue.ci_bootstrap = rev_ci_bootstrap(debiased.beta_debiased, out.covariance, t, sample, alpha,
                                                config.bootstrap_draws, config.c, config.seed);
    return out;
}

}  // namespace fppe
