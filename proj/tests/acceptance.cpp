// Acceptance checks. Run with criterion numbers as arguments (all when none
// are given); prints one PASS/FAIL line per criterion.

#include "fppe/abtest.hpp"
#include "fppe/config.hpp"
#include "fppe/debias.hpp"
#include "fppe/experiments.hpp"
#include "fppe/inference.hpp"
#include "fppe/report.hpp"
#include "fppe/solver.hpp"

#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace fppe;

namespace {

struct Outcome {
    bool passed = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            passed = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
};

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, pattern, a, b, c);
    return buf;
}

double median(std::vector<double> x) {
    std::sort(x.begin(), x.end());
    const std::size_t m = x.size() / 2;
    return x.size() % 2 ? x[m] : 0.5 * (x[m - 1] + x[m]);
}

// The default run shares its market and references between criteria.
ExperimentContext& default_context() {
    static std::unique_ptr<ExperimentContext> ctx = std::make_unique<ExperimentContext>(RunConfig{});
    return *ctx;
}

Outcome solver_oracle() {
    Outcome out;
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> nd(1, 3), td(1, 5);
    double worst = 0.0;
    int misses = 0, below_grid = 0;
    for (int rep = 0; rep < 50; ++rep) {
        const auto inst = oracle::random_instance(rng, nd(rng), td(rng), 0.05, 0.6);
        const PacingSolution sol = solve_finite_eg(inst.sample, inst.budgets);
        const Vector grid = oracle::grid_minimizer(inst.sample, inst.budgets);
        const double gap = (grid - sol.beta).cwiseAbs().maxCoeff();
        worst = std::max(worst, gap);
        if (gap > 2e-3) ++misses;
        // Whether the solver point is at least as good as the best grid point.
        if (oracle::dual_objective(inst.sample.values, inst.sample.sigma, inst.budgets, sol.beta) <=
            oracle::dual_objective(inst.sample.values, inst.sample.sigma, inst.budgets, grid) + 1e-12)
            ++below_grid;
    }
    out.require(worst <= 2e-3, fmt("grid gap %.3g > 2e-3 on %g of 50 instances", worst, misses));
    const std::string objective_note = fmt(", solver objective at or below the grid minimum on %g of 50", below_grid);

    double closed = 0.0;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
        const Index t = 1 + rep % 5;
        ItemMatrix v(t, 1);
        for (Index tau = 0; tau < t; ++tau) v(tau, 0) = 0.1 + u(rng);
        const SampledMarket s = make_sample(v);
        const double spend_at_one = s.sigma.dot(v.col(0));
        const double b = 2.0 * spend_at_one * u(rng) + 1e-3;
        const PacingSolution sol = solve_finite_eg(s, Vector::Constant(1, b));
        closed = std::max(closed, std::abs(sol.beta[0] - std::min(1.0, b / spend_at_one)));
    }
    out.require(closed <= 1e-6, fmt("one-buyer gap %.3g > 1e-6", closed));
    out.detail = fmt("grid gap %.2g, one-buyer gap %.2g", worst, closed) + objective_note +
                 (out.passed ? "" : "; " + out.detail);
    return out;
}

Outcome certificate() {
    Outcome out;
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<int> nd(1, 10), td(1, 2000);
    int failures = 0;
    double worst = 0.0;
    for (int rep = 0; rep < 200; ++rep) {
        const auto inst = oracle::random_instance(rng, nd(rng), td(rng), 0.01, 1.0);
        try {
            const PacingSolution sol = solve_finite_eg(inst.sample, inst.budgets);
            const FppeReport r = check_fppe(inst.sample, inst.budgets, sol, 1e-7);
            worst = std::max(worst, r.max());
            if (!r.passed) ++failures;
        } catch (const NumericalError&) {
            ++failures;
        }
    }
    out.require(failures == 0, std::to_string(failures) + " of 200 failed");
    out.detail = fmt("worst residual %.2g", worst) + (out.passed ? "" : "; " + out.detail);
    return out;
}

Outcome debias_identities() {
    Outcome out;
    std::mt19937_64 rng(303);
    int bitwise = 0, refused = 0;
    for (int rep = 0; rep < 10; ++rep) {
        const auto inst = oracle::random_instance(rng, 5, 400, 0.02, 0.2);
        const PacingSolution sol = solve_finite_eg(inst.sample, inst.budgets);
        for (HessianMode mode : {HessianMode::finite_difference, HessianMode::diagonal_closed_form}) {
            DebiasConfig cfg;
            cfg.hessian_mode = mode;
            try {
                if (debias(inst.sample, inst.budgets, sol, cfg).beta_debiased == sol.beta) ++bitwise;
                else out.require(false, "alpha = 0 moved beta");
            } catch (const NumericalError&) {
                ++refused;  // a singular active block is refused, so there is nothing to compare
            }
        }
    }

    std::normal_distribution<double> z;
    std::bernoulli_distribution coin(0.6);
    double mp = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        const Index n = 1 + rep % 8;
        Matrix a(n, n);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j) a(i, j) = z(rng);
        const Matrix h = a * a.transpose() + 0.5 * Matrix::Identity(n, n);
        Mask m(n);
        for (Index i = 0; i < n; ++i) m[i] = coin(rng);
        const Matrix p = m.cast<double>().matrix().asDiagonal();
        const Matrix php = p * h * p;
        const Matrix pinv = masked_pinv(h, m);
        mp = std::max({mp, (pinv * php * pinv - pinv).cwiseAbs().maxCoeff(),
                       (php * pinv * php - php).cwiseAbs().maxCoeff()});
    }
    out.require(mp <= 1e-8, fmt("Moore-Penrose residual %.3g > 1e-8", mp));

    double min_eig = 0.0;
    const MarketConfig mc;
    const MarketDefinition market = build_market(mc, 5);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const MarketDefinition def = with_items(market, mc, 1000, 100 * (1 + seed % 5));
        const SampledMarket s = generate_synthetic_market(def, seed);
        const PacingSolution sol = solve_finite_eg(s, def.budgets);
        for (HessianMode mode : {HessianMode::finite_difference, HessianMode::diagonal_closed_form}) {
            DebiasConfig cfg;
            cfg.alpha = s.alpha;
            cfg.hessian_mode = mode;
            const DebiasResult d = debias(s, def.budgets, sol, cfg);
            const Matrix sigma = covariance_plugin(influence_rows(s, def.budgets, sol, d)).sigma;
            min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Matrix>(sigma).eigenvalues().minCoeff());
        }
    }
    out.require(min_eig >= -1e-10, fmt("covariance eigenvalue %.3g < -1e-10", min_eig));
    out.require(bitwise > 0, "no alpha = 0 case was debiased");
    out.detail = fmt("%g bitwise cases (%g refused)", bitwise, refused) +
                 fmt(", Moore-Penrose residual %.2g, smallest eigenvalue %.2g", mp, min_eig) +
                 (out.passed ? "" : "; " + out.detail);
    return out;
}

Outcome hessian_cross_check() {
    Outcome out;
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<double> u(0.0, 1.0), beta_law(0.4, 1.0);
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        const Index n = 2 + rep % 5;
        const Index t = 200;
        Vector beta(n), b(n);
        for (Index i = 0; i < n; ++i) {
            beta[i] = beta_law(rng);
            b[i] = 0.1 * u(rng);
        }
        DebiasConfig cfg;
        const double eps = cfg.fd_step(t);
        // Keep only items whose winner leads by more than the probe size.
        ItemMatrix v(t, n);
        for (Index filled = 0; filled < t;) {
            Vector row(n);
            for (Index i = 0; i < n; ++i) row[i] = u(rng);
            if (bidgap(beta, row) > 2.0 * eps) v.row(filled++) = row.transpose();
        }
        const SampledMarket s = make_sample(v);
        const Matrix fd = estimate_hessian_fd(s, b, beta, eps);
        const Matrix diag = hessian_diag(b, beta);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j)
                worst = std::max(worst, std::abs(fd(i, j) - diag(i, j)) / std::sqrt(diag(i, i) * diag(j, j)));
    }
    out.require(worst <= 1e-2, fmt("relative gap %.3g > 1e-2", worst));
    out.detail = fmt("worst relative gap %.2g", worst) + (out.passed ? "" : "; " + out.detail);
    return out;
}

int inversions(const std::vector<double>& x) {
    int count = 0;
    for (std::size_t k = 1; k < x.size(); ++k)
        if (x[k] < x[k - 1]) ++count;
    return count;
}

Outcome bias_reduction() {
    Outcome out;
    const std::vector<BiasRow> rows = run_bias_curve(default_context());
    std::vector<double> beta_bias, rev_bias;
    std::ostringstream detail;
    for (const BiasRow& r : rows) {
        out.require(r.bias_beta_surrogate < r.bias_beta_contaminated, fmt("beta not reduced at alpha %.4f", r.alpha));
        out.require(r.bias_rev_surrogate < r.bias_rev_contaminated, fmt("revenue not reduced at alpha %.4f", r.alpha));
        beta_bias.push_back(r.bias_beta_contaminated);
        rev_bias.push_back(r.bias_rev_contaminated);
        detail << fmt("[%.3f: beta %.4f->%.4f", r.alpha, r.bias_beta_contaminated, r.bias_beta_surrogate)
               << fmt(", rev %.4f->%.4f]", r.bias_rev_contaminated, r.bias_rev_surrogate);
    }
    out.require(rows.size() == 5, "expected five grid points");
    out.require(inversions(beta_bias) <= 1, "contaminated beta bias not monotone");
    out.require(inversions(rev_bias) <= 1, "contaminated revenue bias not monotone");
    out.detail = detail.str() + (out.passed ? "" : "; " + out.detail);
    return out;
}

Outcome coverage() {
    Outcome out;
    const std::vector<CoverageRow> rows = run_coverage(default_context());
    std::ostringstream detail;
    for (const CoverageRow& r : rows) {
        out.require(r.beta_coverage >= 0.90, r.alpha_label + fmt(" beta coverage %.2f < 0.90", r.beta_coverage));
        out.require(r.rev_coverage_analytic >= 0.95,
                    r.alpha_label + fmt(" revenue coverage %.2f < 0.95", r.rev_coverage_analytic));
        out.require(r.rev_width_bootstrap < r.rev_width_analytic, r.alpha_label + " bootstrap not narrower");
        detail << "[" << r.alpha_label
               << fmt(": beta %.2f, rev %.2f, widths %.3f", r.beta_coverage, r.rev_coverage_analytic,
                      r.rev_width_analytic)
               << fmt("/%.3f, failed %g]", r.rev_width_bootstrap, r.failed);
    }
    out.require(rows.size() == 5, "expected five grid points");
    out.detail = detail.str() + (out.passed ? "" : "; " + out.detail);
    return out;
}

Outcome convergence() {
    Outcome out;
    ExperimentContext& ctx = default_context();
    const std::size_t n_t = ctx.config().t_grid.size();
    std::vector<std::vector<double>> analytic(n_t), boot(n_t);
    int analytic_hits = 0, boot_hits = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const std::vector<ConvergenceRow> rows = run_convergence(ctx, seed);
        for (std::size_t k = 0; k < n_t; ++k) {
            analytic[k].push_back(rows[k].analytic_hi - rows[k].analytic_lo);
            boot[k].push_back(rows[k].bootstrap_hi - rows[k].bootstrap_lo);
        }
        const ConvergenceRow& last = rows.back();
        if (last.analytic_lo <= last.truth && last.truth <= last.analytic_hi) ++analytic_hits;
        if (last.bootstrap_lo <= last.truth && last.truth <= last.bootstrap_hi) ++boot_hits;
    }
    std::ostringstream detail;
    for (std::size_t k = 0; k < n_t; ++k) {
        detail << fmt("[t=%g: widths %.4f/%.4f]", static_cast<double>(ctx.config().t_grid[k]), median(analytic[k]),
                      median(boot[k]));
        if (k > 0) {
            out.require(median(analytic[k]) < median(analytic[k - 1]), "analytic width not decreasing");
            out.require(median(boot[k]) < median(boot[k - 1]), "bootstrap width not decreasing");
        }
    }
    out.require(analytic_hits >= 9, "analytic interval misses the truth too often");
    out.require(boot_hits >= 9, "bootstrap interval misses the truth too often");
    out.detail = detail.str() + fmt(" hits %g/%g of 10", analytic_hits, boot_hits) + (out.passed ? "" : "; " + out.detail);
    return out;
}

Outcome abtest_null() {
    Outcome out;
    const RunConfig cfg;
    ExperimentContext& ctx = default_context();
    std::vector<int> hits(static_cast<std::size_t>(ctx.market().K), 0);
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const ABTestResult r = run_parallel_abtest(abtest_config(cfg, ctx.market(), seed));
        for (std::size_t k = 0; k < hits.size(); ++k)
            if (r.effects[k].ci.contains(0.0)) ++hits[k];
    }
    std::ostringstream detail;
    for (std::size_t k = 0; k < hits.size(); ++k) {
        out.require(hits[k] >= 90, "submarket " + std::to_string(k) + " covers zero in " + std::to_string(hits[k]));
        detail << "submarket " << k << ": " << hits[k] << "/100 ";
    }

    // Same buyers and budgets; the arms' value laws come from the run config.
    RunConfig flat = cfg;
    flat.market.good_value = Distribution::constant(0.7);
    flat.market.bad_value = Distribution::constant(0.4);
    // Every item is an exact tie, where second differences straddle the kink;
    // the closed-form Hessian stays well defined.
    flat.debias.hessian_mode = HessianMode::diagonal_closed_form;
    int exact = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const ABTestResult r = run_parallel_abtest(abtest_config(flat, ctx.market(), seed));
        bool zero = true;
        for (const SubmarketEffect& e : r.effects) zero = zero && e.tau_hat == 0.0;
        if (zero) ++exact;
    }
    out.require(exact == 10, "constant values gave a nonzero effect");
    detail << "constant-value runs exact zero: " << exact << "/10";
    out.detail = detail.str() + (out.passed ? "" : "; " + out.detail);
    return out;
}

Outcome reference_consistency() {
    Outcome out;
    ExperimentContext& ctx = default_context();
    const RunConfig& cfg = ctx.config();
    SolveOptions tight = cfg.solve;
    tight.tol = std::min(tight.tol, cfg.reference_tol);
    const LimitReference& base = ctx.reference(0.0);
    const LimitReference twice =
        approximate_limit_market(ctx.market(), cfg.market, 0.0, 2 * cfg.t_ref, cfg.seed, tight);
    const double gap = (base.beta_star - twice.beta_star).cwiseAbs().maxCoeff();
    out.require(gap < 1e-2, fmt("gap %.3g >= 1e-2", gap));
    out.detail = fmt("max gap %.2g", gap) + (out.passed ? "" : "; " + out.detail);
    return out;
}

std::string render(const Table& table, const RunConfig& cfg) {
    std::ostringstream s;
    write_table(s, table, OutputFormat::csv, {config_hash(cfg), cfg.seed});
    return s.str();
}

Outcome determinism() {
    Outcome out;
    RunConfig cfg = parse_run_config(R"({
      "market": {"n_buyers": 6, "K": 2, "n_good": 400, "calibration_items": 4000},
      "alpha_grid": ["40/440", "80/480"], "convergence_alpha": "40/440", "t_grid": [200, 800],
      "replications": 5, "bootstrap": 200, "t_ref": 20000, "abtest": {"t": 400}})");
    cfg.seed = 9;
    const std::vector<std::pair<std::string, std::function<Table()>>> runs = {
        {"bias_curve", [&] { return bias_table(run_bias_curve(cfg)); }},
        {"coverage", [&] { return coverage_table(run_coverage(cfg)); }},
        {"convergence", [&] { return convergence_table(run_convergence(cfg)); }},
        {"abtest",
         [&] {
             return abtest_table(run_parallel_abtest(abtest_config(cfg, build_market(cfg.market, cfg.seed), cfg.seed)));
         }},
    };
    for (const auto& [name, run] : runs) {
        const std::string first = render(run(), cfg);
        const std::string second = render(run(), cfg);
        out.require(first == second, name + " output differs between runs");
        out.require(first.size() > 100, name + " output is empty");
    }
    out.detail = out.passed ? "bias_curve, coverage, convergence, abtest reruns identical" : out.detail;
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"solver matches the grid oracle", solver_oracle},
        {"every solve carries an equilibrium certificate", certificate},
        {"debiasing identities", debias_identities},
        {"closed-form and finite-difference Hessians agree", hessian_cross_check},
        {"debiasing reduces bias along the alpha grid", bias_reduction},
        {"interval coverage", coverage},
        {"intervals shrink toward the truth", convergence},
        {"A/B null calibration", abtest_null},
        {"reference size self-consistency", reference_consistency},
        {"byte-identical reruns", determinism},
    };
    std::vector<int> selected;
    for (int a = 1; a < argc; ++a) selected.push_back(std::atoi(argv[a]));
    if (selected.empty())
        for (int k = 1; k <= static_cast<int>(criteria.size()); ++k) selected.push_back(k);

    bool all = true;
    for (int k : selected) {
        if (k < 1 || k > static_cast<int>(criteria.size())) {
            std::printf("criterion %d: unknown\n", k);
            return 2;
        }
        const auto& [name, check] = criteria[static_cast<std::size_t>(k - 1)];
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o.passed = false;
            o.detail = std::string("threw: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("criterion %d (%s): %s in %.1f s: %s\n", k, name, o.passed ? "PASS" : "FAIL", secs,
                    o.detail.c_str());
        std::fflush(stdout);
        all = all && o.passed;
    }
    return all ? 0 : 1;
}
