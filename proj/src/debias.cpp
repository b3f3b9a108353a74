#include "fppe/debias.hpp"

#include "fppe/revenue.hpp"

#include <Eigen/Eigenvalues>

#include <string>

namespace fppe {

void DebiasConfig::validate() const {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw DomainError("debias: alpha must lie in [0, 1)");
    if (!(c_eps > 0.0)) throw DomainError("debias: c_eps must be positive");
    if (!(c_iota > 0.0)) throw DomainError("debias: c_iota must be positive");
    if (!(condition_cap > 1.0)) throw DomainError("debias: condition cap must exceed 1");
}

Matrix estimate_hessian_fd(const SampledMarket& sample, const Vector& budgets, const Vector& beta, double eps,
                           bool diagonal_only) {
    if (!(eps > 0.0)) throw DomainError("estimate_hessian_fd: eps must be positive");
    const Index n = beta.size();
    auto objective = [&](Index i, double di, Index j, double dj) {
        Vector probe = beta;
        probe[i] += di;
        probe[j] += dj;
        return eval_dual_objective(sample, budgets, probe);
    };
    Matrix h = Matrix::Zero(n, n);
    const double denom = 4.0 * eps * eps;
    for (Index i = 0; i < n; ++i) {
        for (Index j = diagonal_only ? i : 0; j < (diagonal_only ? i + 1 : n); ++j) {
            h(i, j) = (objective(i, eps, j, eps) - objective(i, eps, j, -eps) - objective(i, -eps, j, eps) +
                       objective(i, -eps, j, -eps)) /
                      denom;
        }
    }
    return 0.5 * (h + h.transpose());
}

Matrix masked_pinv(const Matrix& hessian, const Mask& mask, double condition_cap) {
    const Index n = hessian.rows();
    if (hessian.cols() != n || mask.size() != n) throw DomainError("masked_pinv: dimension mismatch");
    Matrix out = Matrix::Zero(n, n);
    std::vector<Index> idx;
    for (Index i = 0; i < n; ++i)
        if (mask[i]) idx.push_back(i);
    const Index k = static_cast<Index>(idx.size());
    if (k == 0) return out;

    Matrix block(k, k);
    for (Index a = 0; a < k; ++a)
        for (Index b = 0; b < k; ++b) block(a, b) = 0.5 * (hessian(idx[a], idx[b]) + hessian(idx[b], idx[a]));

    Eigen::SelfAdjointEigenSolver<Matrix> eig(block);
    const Vector ev = eig.eigenvalues();
    const double largest = ev.cwiseAbs().maxCoeff();
    const double smallest = ev.minCoeff();
    const double condition = smallest > 0.0 ? largest / smallest : std::numeric_limits<double>::infinity();
    if (!(smallest > 0.0) || condition > condition_cap)
        throw NumericalError("masked_pinv: active Hessian block is singular or ill-conditioned (condition " +
                                 std::to_string(condition) + ")",
                             condition);

    Matrix inv = block.llt().solve(Matrix::Identity(k, k));
    inv = (0.5 * (inv + inv.transpose())).eval();
    for (Index a = 0; a < k; ++a)
        for (Index b = 0; b < k; ++b) out(idx[a], idx[b]) = inv(a, b);
    return out;
}

ItemMatrix subgradients(const SampledMarket& sample, const ItemMatrix& allocation) {
    if (allocation.rows() != sample.t() || allocation.cols() != sample.n())
        throw DomainError("subgradients: allocation shape differs from the sample");
    return allocation.cwiseProduct(sample.values);
}

Vector estimate_delta(const SampledMarket& sample, const ItemMatrix& subgradient_rows, double alpha) {
    if (subgradient_rows.rows() != sample.t() || subgradient_rows.cols() != sample.n())
        throw DomainError("estimate_delta: subgradient shape differs from the sample");
    Vector delta = Vector::Zero(sample.n());
    for (Index tau = 0; tau < sample.t(); ++tau)
        delta += contamination_ratio_g(sample.is_bad[tau], alpha) * subgradient_rows.row(tau).transpose();
    return delta / static_cast<double>(sample.t());
}

DebiasResult debias(const SampledMarket& sample, const Vector& budgets, const PacingSolution& solution,
                    const DebiasConfig& config) {
    config.validate();
    const Index t = sample.t();
    DebiasResult r;
    r.config = config;
    r.hessian = config.hessian_mode == HessianMode::diagonal_closed_form
                    ? hessian_diag(budgets, solution.beta)
                    : estimate_hessian_fd(sample, budgets, solution.beta, config.fd_step(t), config.fd_diagonal_only);
    r.mask = active_mask(solution.beta, t, config.c_iota);
    r.masked_pinv = masked_pinv(r.hessian, r.mask, config.condition_cap);
    r.subgradients = subgradients(sample, solution.allocation);
    r.delta_hat = estimate_delta(sample, r.subgradients, config.alpha);
    r.beta_debiased = debias_beta(solution.beta, config.alpha, r.masked_pinv, r.delta_hat);
    return r;
}

SurrogateResult debias_surrogate_limit(const SampledMarket& reference_good,
                                       const SampledMarket& reference_contaminated,
                                       const PacingSolution& contaminated_solution, const Vector& budgets,
                                       const DebiasConfig& config) {
    const DebiasResult d = debias(reference_contaminated, budgets, contaminated_solution, config);
    SurrogateResult r;
    r.beta_star_alpha = contaminated_solution.beta;
    r.mask = d.mask;
    r.delta = d.delta_hat;
    r.beta_tilde = d.beta_debiased;
    r.rev_tilde = rev_hat(reference_good, r.beta_tilde, 0.0);
    return r;
}

SurrogateResult debias_surrogate_limit(const SampledMarket& reference_good,
                                       const SampledMarket& reference_contaminated, const Vector& budgets,
                                       const DebiasConfig& config, const SolveOptions& opts) {
    const PacingSolution sol = solve_finite_eg(reference_contaminated, budgets, opts);
    return debias_surrogate_limit(reference_good, reference_contaminated, sol, budgets, config);
}

}  // namespace fppe
