#include "fppe/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <queue>
#include <vector>

namespace fppe {

namespace {

// Dinic max-flow on real capacities. Tied items are usually few, so the graph
// stays small; fully degenerate markets (constant values) still run fine.
class MaxFlow {
public:
    explicit MaxFlow(int nodes) : adj_(static_cast<std::size_t>(nodes)) {}

    int add_edge(int from, int to, double cap) {
        adj_[from].push_back({to, static_cast<int>(adj_[to].size()), cap});
        adj_[to].push_back({from, static_cast<int>(adj_[from].size()) - 1, 0.0});
        return static_cast<int>(adj_[from].size()) - 1;
    }

    void set_capacity(int from, int edge, double cap) { adj_[from][edge].cap = cap; }

    double flow_on(int from, int edge) const {
        const Edge& e = adj_[from][edge];
        return adj_[e.to][e.rev].cap;
    }

    double run(int source, int sink, double eps) {
        double total = 0.0;
        eps_ = eps;
        while (bfs(source, sink)) {
            iter_.assign(adj_.size(), 0);
            while (true) {
                const double f = dfs(source, sink, std::numeric_limits<double>::infinity());
                if (f <= eps_) break;
                total += f;
            }
        }
        return total;
    }

private:
    struct Edge {
        int to;
        int rev;
        double cap;
    };

    bool bfs(int source, int sink) {
        level_.assign(adj_.size(), -1);
        std::queue<int> q;
        level_[source] = 0;
        q.push(source);
        while (!q.empty()) {
            const int v = q.front();
            q.pop();
            for (const Edge& e : adj_[v]) {
                if (e.cap > eps_ && level_[e.to] < 0) {
                    level_[e.to] = level_[v] + 1;
                    q.push(e.to);
                }
            }
        }
        return level_[sink] >= 0;
    }

    double dfs(int v, int sink, double pushed) {
        if (v == sink) return pushed;
        for (int& i = iter_[v]; i < static_cast<int>(adj_[v].size()); ++i) {
            Edge& e = adj_[v][i];
            if (e.cap > eps_ && level_[e.to] == level_[v] + 1) {
                const double d = dfs(e.to, sink, std::min(pushed, e.cap));
                if (d > eps_) {
                    e.cap -= d;
                    adj_[e.to][e.rev].cap += d;
                    return d;
                }
            }
        }
        return 0.0;
    }

    std::vector<std::vector<Edge>> adj_;
    std::vector<int> level_;
    std::vector<int> iter_;
    double eps_ = 0.0;
};

Vector max_bids(const ItemMatrix& values, const Vector& beta) {
    Vector p(values.rows());
    for (Index tau = 0; tau < values.rows(); ++tau)
        p[tau] = (values.row(tau).transpose().array() * beta.array()).maxCoeff();
    return p;
}

struct IpmResult {
    Vector beta;
    Vector nu;
    ItemMatrix lam;  ///< column 0 for p >= 0, column i + 1 for buyer i
    int iterations = 0;
    double residual = 0.0;
};

// Primal-dual interior point (Mehrotra predictor-corrector) for
//   min_{beta, p}  sum_tau sigma_tau p_tau - sum_i b_i log beta_i
//   s.t. p_tau >= beta_i v_i^tau  (v_i^tau > 0),  p_tau >= 0,  beta_i <= cap.
// The multiplier of p_tau >= beta_i v_i^tau is sigma_tau x_i^tau. The Newton
// system is reduced to an n x n SPD matrix by eliminating the item prices.
// Inputs are pre-scaled so values lie in [0, 1] and budgets sum to about one.
// The careful variant keeps the centering target from outrunning the dual
// residual, which avoids stalling on the boundary in degenerate markets.
IpmResult interior_point(const ItemMatrix& v, const Vector& sigma, const Vector& b, double cap, int max_iters,
                         bool careful) {
    const Index t = v.rows();
    const Index n = v.cols();
    const Index width = n + 1;  // column 0 is p_tau >= 0

    Vector beta = Vector::Constant(n, 0.5 * std::min(cap, 1.0));
    Vector p(t);
    ItemMatrix lam = ItemMatrix::Zero(t, width);
    Index m = n + t;
    for (Index tau = 0; tau < t; ++tau) {
        double best = 0.0;
        Index active = 0;
        for (Index i = 0; i < n; ++i) {
            if (v(tau, i) > 0.0) {
                best = std::max(best, beta[i] * v(tau, i));
                ++active;
            }
        }
        p[tau] = 1.5 * best + 1e-3;
        const double share = sigma[tau] / static_cast<double>(active + 1);
        lam(tau, 0) = share;
        for (Index i = 0; i < n; ++i)
            if (v(tau, i) > 0.0) lam(tau, i + 1) = share;
        m += active;
    }
    Vector nu = b;

    const double sigma_max = sigma.maxCoeff();
    const double b_max = b.maxCoeff();

    Vector dbeta(n), dp(t), dnu(n);
    Vector dbeta_aff(n), dp_aff(t), dnu_aff(n);
    Vector S(t), g(t);
    Matrix M(n, n);
    Vector rhs(n);
    std::vector<double> D(static_cast<std::size_t>(width)), s(static_cast<std::size_t>(width)),
        c(static_cast<std::size_t>(width));

    auto slack = [&](Index tau, Index j, const Vector& bt, const Vector& pr) {
        return j == 0 ? pr[tau] : pr[tau] - bt[j - 1] * v(tau, j - 1);
    };

    IpmResult result;
    // Targets c_j for the complementarity products; the predictor uses 0, the
    // corrector uses sigma*mu minus the second-order term of the predictor.
    auto newton = [&](double target_mu, bool corrector, Vector& out_beta, Vector& out_p, Vector& out_nu) {
        M.setZero();
        rhs.setZero();
        for (Index i = 0; i < n; ++i) {
            const double u = cap - beta[i];
            double cnu = target_mu;
            if (corrector) cnu -= dnu_aff[i] * (-dbeta_aff[i]);
            M(i, i) += b[i] / (beta[i] * beta[i]) + nu[i] / u;
            rhs[i] += b[i] / beta[i] - cnu / u;
        }
        for (Index tau = 0; tau < t; ++tau) {
            double total = 0.0;
            double q = 0.0;
            Index jmax = 0;
            for (Index j = 0; j < width; ++j) {
                const std::size_t js = static_cast<std::size_t>(j);
                if (j > 0 && v(tau, j - 1) <= 0.0) {
                    D[js] = 0.0;
                    continue;
                }
                s[js] = slack(tau, j, beta, p);
                D[js] = lam(tau, j) / s[js];
                double cj = target_mu;
                if (corrector) {
                    const double ds = j == 0 ? dp_aff[tau] : dp_aff[tau] - v(tau, j - 1) * dbeta_aff[j - 1];
                    const double dl = -lam(tau, j) - D[js] * ds;
                    cj -= dl * ds;
                }
                c[js] = cj;
                total += D[js];
                q += cj / s[js];
                if (D[js] > D[static_cast<std::size_t>(jmax)]) jmax = j;
            }
            double rest = 0.0;  // sum of D excluding the largest, free of cancellation
            for (Index j = 0; j < width; ++j)
                if (j != jmax) rest += D[static_cast<std::size_t>(j)];
            S[tau] = total;
            g[tau] = sigma[tau] - q;
            for (Index i = 0; i < n; ++i) {
                const std::size_t is = static_cast<std::size_t>(i + 1);
                if (D[is] == 0.0) continue;
                const double vi = v(tau, i);
                const double others = (i + 1 == jmax) ? rest : total - D[is];
                M(i, i) += D[is] * vi * vi * others / total;
                const double wi = D[is] * vi;
                rhs[i] -= vi * c[is] / s[is] + wi * g[tau] / total;
                for (Index k = i + 1; k < n; ++k) {
                    const std::size_t ks = static_cast<std::size_t>(k + 1);
                    if (D[ks] == 0.0) continue;
                    const double off = wi * D[ks] * v(tau, k) / total;
                    M(i, k) -= off;
                    M(k, i) -= off;
                }
            }
        }
        Eigen::LDLT<Matrix> ldlt(M);
        out_beta = ldlt.solve(rhs);
        for (Index tau = 0; tau < t; ++tau) {
            double w_dot = 0.0;
            for (Index i = 0; i < n; ++i) {
                if (v(tau, i) <= 0.0) continue;
                const double si = slack(tau, i + 1, beta, p);
                w_dot += lam(tau, i + 1) / si * v(tau, i) * out_beta[i];
            }
            out_p[tau] = (w_dot - g[tau]) / S[tau];
        }
        for (Index i = 0; i < n; ++i) {
            const double u = cap - beta[i];
            double cnu = target_mu;
            if (corrector) cnu -= dnu_aff[i] * (-dbeta_aff[i]);
            out_nu[i] = cnu / u - nu[i] + nu[i] / u * out_beta[i];
        }
    };

    // Largest step keeping every slack and multiplier strictly positive.
    auto max_step = [&](const Vector& db, const Vector& dpr, const Vector& dn) {
        double step = 1.0;
        auto limit = [&step](double x, double dx) {
            if (dx < 0.0) step = std::min(step, -x / dx);
        };
        for (Index i = 0; i < n; ++i) {
            limit(beta[i], db[i]);
            limit(cap - beta[i], -db[i]);
            limit(nu[i], dn[i]);
        }
        for (Index tau = 0; tau < t; ++tau) {
            for (Index j = 0; j < width; ++j) {
                if (j > 0 && v(tau, j - 1) <= 0.0) continue;
                const double sj = slack(tau, j, beta, p);
                const double ds = j == 0 ? dpr[tau] : dpr[tau] - v(tau, j - 1) * db[j - 1];
                limit(sj, ds);
            }
        }
        return step;
    };

    auto dual_step = [&](const Vector& db, const Vector& dpr, const Vector& dn, double target_mu, bool corrector,
                         double step_cap) {
        double step = step_cap;
        for (Index i = 0; i < n; ++i)
            if (dn[i] < 0.0) step = std::min(step, -nu[i] / dn[i]);
        for (Index tau = 0; tau < t; ++tau) {
            for (Index j = 0; j < width; ++j) {
                if (j > 0 && v(tau, j - 1) <= 0.0) continue;
                const double sj = slack(tau, j, beta, p);
                const double ds = j == 0 ? dpr[tau] : dpr[tau] - v(tau, j - 1) * db[j - 1];
                double cj = target_mu;
                if (corrector) {
                    const double ds_aff = j == 0 ? dp_aff[tau] : dp_aff[tau] - v(tau, j - 1) * dbeta_aff[j - 1];
                    cj -= (-lam(tau, j) - lam(tau, j) / sj * ds_aff) * ds_aff;
                }
                const double dl = cj / sj - lam(tau, j) - lam(tau, j) / sj * ds;
                if (dl < 0.0) step = std::min(step, -lam(tau, j) / dl);
            }
        }
        return step;
    };

    for (int it = 0; it < max_iters; ++it) {
        double gap = 0.0;
        double rp = 0.0;
        Vector rb = -b.cwiseQuotient(beta) + nu;
        for (Index tau = 0; tau < t; ++tau) {
            double row = 0.0;
            for (Index j = 0; j < width; ++j) {
                if (j > 0 && v(tau, j - 1) <= 0.0) continue;
                row += lam(tau, j);
                gap += lam(tau, j) * slack(tau, j, beta, p);
                if (j > 0) rb[j - 1] += lam(tau, j) * v(tau, j - 1);
            }
            rp = std::max(rp, std::abs(sigma[tau] - row) / sigma_max);
        }
        for (Index i = 0; i < n; ++i) gap += nu[i] * (cap - beta[i]);
        result.iterations = it;
        result.residual = std::max({rp, rb.cwiseAbs().maxCoeff() / b_max, gap});
        const double rb_max = rb.cwiseAbs().maxCoeff() / b_max;
        if (gap < 1e-15 || (gap < 1e-13 && rp < 1e-10 && rb_max < 1e-10)) break;

        const double mu = gap / static_cast<double>(m);
        newton(0.0, false, dbeta_aff, dp_aff, dnu_aff);
        double a_aff = std::min(max_step(dbeta_aff, dp_aff, dnu_aff),
                                dual_step(dbeta_aff, dp_aff, dnu_aff, 0.0, false, 1.0));
        double gap_aff = 0.0;
        for (Index i = 0; i < n; ++i)
            gap_aff += (nu[i] + a_aff * dnu_aff[i]) * (cap - beta[i] - a_aff * dbeta_aff[i]);
        for (Index tau = 0; tau < t; ++tau) {
            for (Index j = 0; j < width; ++j) {
                if (j > 0 && v(tau, j - 1) <= 0.0) continue;
                const double sj = slack(tau, j, beta, p);
                const double ds = j == 0 ? dp_aff[tau] : dp_aff[tau] - v(tau, j - 1) * dbeta_aff[j - 1];
                const double dl = -lam(tau, j) - lam(tau, j) / sj * ds;
                gap_aff += (lam(tau, j) + a_aff * dl) * (sj + a_aff * ds);
            }
        }
        double centering = std::pow(std::max(gap_aff, 0.0) / gap, 3.0);
        if (careful) {
            centering = std::max(centering, std::min(0.5, rb_max));
            // A short affine step makes the second-order term unreliable.
            if (a_aff < 0.1) {
                dbeta_aff.setZero();
                dp_aff.setZero();
                dnu_aff.setZero();
            }
        }
        const double target = centering * mu;

        newton(target, true, dbeta, dp, dnu);
        const double a_primal = max_step(dbeta, dp, dnu);
        const double step = 0.99 * std::min(a_primal, dual_step(dbeta, dp, dnu, target, true, 1.0 / 0.99));
        const double a = std::min(1.0, step);
        if (!dbeta.allFinite() || !dp.allFinite() || !dnu.allFinite() || !(a > 0.0)) break;

        // Dual update needs the pre-step slacks.
        for (Index tau = 0; tau < t; ++tau) {
            for (Index j = 0; j < width; ++j) {
                if (j > 0 && v(tau, j - 1) <= 0.0) continue;
                const double sj = slack(tau, j, beta, p);
                const double ds = j == 0 ? dp[tau] : dp[tau] - v(tau, j - 1) * dbeta[j - 1];
                const double ds_aff = j == 0 ? dp_aff[tau] : dp_aff[tau] - v(tau, j - 1) * dbeta_aff[j - 1];
                const double cj = target - (-lam(tau, j) - lam(tau, j) / sj * ds_aff) * ds_aff;
                const double dl = cj / sj - lam(tau, j) - lam(tau, j) / sj * ds;
                lam(tau, j) += a * dl;
            }
        }
        beta += a * dbeta;
        p += a * dp;
        nu += a * dnu;
    }
    result.beta = beta;
    result.nu = nu;
    result.lam = std::move(lam);
    return result;
}

// Buyers sharing an item at the optimum bid exactly the same on it, so their
// multipliers are linked by value ratios. The interior point only gets these
// ties to about the square root of its gap; rebuilding each linked group from
// one common scale restores them to round-off.
Vector polish_ties(const ItemMatrix& v, const Vector& sigma, const ItemMatrix& lam, const std::vector<Index>& live,
                   Vector beta, double share_tol) {
    const Index n = beta.size();
    std::vector<std::vector<std::pair<Index, double>>> adj(static_cast<std::size_t>(n));
    std::vector<Index> sharing;
    for (Index tau = 0; tau < v.rows(); ++tau) {
        sharing.clear();
        for (std::size_t k = 0; k < live.size(); ++k)
            if (lam(tau, static_cast<Index>(k) + 1) > share_tol * sigma[tau]) sharing.push_back(live[k]);
        for (std::size_t e = 1; e < sharing.size(); ++e) {
            const Index a = sharing.front();
            const Index b = sharing[e];
            const double log_ratio = std::log(v(tau, a)) - std::log(v(tau, b));  // beta_b = beta_a * v_a / v_b
            adj[static_cast<std::size_t>(a)].push_back({b, log_ratio});
            adj[static_cast<std::size_t>(b)].push_back({a, -log_ratio});
        }
    }
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<double> offset(static_cast<std::size_t>(n), 0.0);
    for (Index root = 0; root < n; ++root) {
        if (seen[static_cast<std::size_t>(root)] || adj[static_cast<std::size_t>(root)].empty()) continue;
        std::vector<Index> group{root};
        seen[static_cast<std::size_t>(root)] = 1;
        for (std::size_t head = 0; head < group.size(); ++head) {
            const Index a = group[head];
            for (const auto& [b, log_ratio] : adj[static_cast<std::size_t>(a)]) {
                if (seen[static_cast<std::size_t>(b)]) continue;  // spanning tree only
                seen[static_cast<std::size_t>(b)] = 1;
                offset[static_cast<std::size_t>(b)] = offset[static_cast<std::size_t>(a)] + log_ratio;
                group.push_back(b);
            }
        }
        double scale = 0.0;
        double top = -std::numeric_limits<double>::infinity();
        double pinned = std::numeric_limits<double>::infinity();
        for (Index k : group) {
            const double off = offset[static_cast<std::size_t>(k)];
            scale += std::log(beta[k]) - off;
            top = std::max(top, off);
            if (beta[k] == 1.0) pinned = std::min(pinned, -off);
        }
        scale /= static_cast<double>(group.size());
        scale = std::min({scale, pinned, -top});
        for (Index k : group) beta[k] = std::exp(scale + offset[static_cast<std::size_t>(k)]);
    }
    return beta;
}

}  // namespace

double eval_dual_objective(const SampledMarket& sample, const Vector& budgets, const Vector& beta) {
    if (beta.size() != sample.n() || budgets.size() != sample.n())
        throw DomainError("dual objective: dimension mismatch");
    if (!(beta.array() > 0.0).all()) throw DomainError("dual objective: every beta_i must be positive");
    double value = 0.0;
    for (Index tau = 0; tau < sample.t(); ++tau)
        value += sample.sigma[tau] * (sample.values.row(tau).transpose().array() * beta.array()).maxCoeff();
    return value - (budgets.array() * beta.array().log()).sum();
}

ItemMatrix recover_allocation(const SampledMarket& sample, const Vector& budgets, const Vector& beta,
                              double tie_tol_rel) {
    const Index t = sample.t();
    const Index n = sample.n();
    const Vector p = max_bids(sample.values, beta);
    // Ties are judged against the going bid level, which tracks the budgets.
    const double tie_abs = tie_tol_rel * p.maxCoeff();

    ItemMatrix x = ItemMatrix::Zero(t, n);
    Vector fixed = Vector::Zero(n);
    std::vector<Index> tied_items;
    std::vector<std::vector<Index>> tied_buyers;
    for (Index tau = 0; tau < t; ++tau) {
        if (p[tau] <= tie_abs) continue;
        std::vector<Index> winners;
        for (Index i = 0; i < n; ++i)
            if (p[tau] - beta[i] * sample.values(tau, i) <= tie_abs) winners.push_back(i);
        if (winners.size() == 1) {
            x(tau, winners.front()) = 1.0;
            fixed[winners.front()] += sample.sigma[tau] * p[tau];
        } else {
            tied_items.push_back(tau);
            tied_buyers.push_back(std::move(winners));
        }
    }
    if (tied_items.empty()) return x;

    // Nodes: 0 source, 1 sink, items, then buyers.
    const int items = static_cast<int>(tied_items.size());
    const int source = 0;
    const int sink = 1;
    auto item_node = [](int k) { return 2 + k; };
    auto buyer_node = [items](Index i) { return 2 + items + static_cast<int>(i); };
    MaxFlow flow(2 + items + static_cast<int>(n));

    double money = 0.0;
    std::vector<int> source_edges(static_cast<std::size_t>(items));
    std::vector<std::vector<int>> item_edges(static_cast<std::size_t>(items));
    for (int k = 0; k < items; ++k) {
        const Index tau = tied_items[static_cast<std::size_t>(k)];
        const double mass = sample.sigma[tau] * p[tau];
        money += mass;
        source_edges[static_cast<std::size_t>(k)] = flow.add_edge(source, item_node(k), mass);
        for (Index i : tied_buyers[static_cast<std::size_t>(k)])
            item_edges[static_cast<std::size_t>(k)].push_back(
                flow.add_edge(item_node(k), buyer_node(i), std::numeric_limits<double>::infinity()));
    }
    std::vector<int> sink_edges(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) sink_edges[static_cast<std::size_t>(i)] = flow.add_edge(buyer_node(i), sink, 0.0);

    const double eps = 1e-15 * std::max(money, budgets.sum());
    // Paced buyers are filled toward their budgets first, then unpaced ones absorb the rest.
    for (Index i = 0; i < n; ++i)
        if (beta[i] < 1.0)
            flow.set_capacity(buyer_node(i), sink_edges[static_cast<std::size_t>(i)],
                              std::max(0.0, budgets[i] - fixed[i]));
    flow.run(source, sink, eps);
    for (Index i = 0; i < n; ++i)
        if (!(beta[i] < 1.0))
            flow.set_capacity(buyer_node(i), sink_edges[static_cast<std::size_t>(i)],
                              std::max(0.0, budgets[i] - fixed[i]));
    flow.run(source, sink, eps);

    for (int k = 0; k < items; ++k) {
        const Index tau = tied_items[static_cast<std::size_t>(k)];
        const double mass = sample.sigma[tau] * p[tau];
        const auto& buyers = tied_buyers[static_cast<std::size_t>(k)];
        double assigned = 0.0;
        for (std::size_t e = 0; e < buyers.size(); ++e) {
            const double f = flow.flow_on(item_node(k), item_edges[static_cast<std::size_t>(k)][e]);
            const double share = std::clamp(f / mass, 0.0, 1.0);
            x(tau, buyers[e]) = share;
            assigned += share;
        }
        if (assigned < 1.0) x(tau, buyers.front()) += 1.0 - assigned;
    }
    return x;
}

PacingSolution assemble_solution(const SampledMarket& sample, const Vector& budgets, Vector beta,
                                 ItemMatrix allocation) {
    PacingSolution sol;
    sol.prices = max_bids(sample.values, beta);
    const double tie_abs = 1e-9 * sol.prices.maxCoeff();
    for (Index tau = 0; tau < sample.t(); ++tau)
        if (sol.prices[tau] <= tie_abs && allocation.row(tau).sum() == 0.0) sol.prices[tau] = 0.0;
    sol.spend = Vector::Zero(sample.n());
    for (Index tau = 0; tau < sample.t(); ++tau)
        sol.spend += sample.sigma[tau] * sol.prices[tau] * allocation.row(tau).transpose();
    sol.leftover = budgets - sol.spend;
    sol.objective = eval_dual_objective(sample, budgets, beta);
    sol.beta = std::move(beta);
    sol.allocation = std::move(allocation);
    return sol;
}

FppeReport check_fppe(const SampledMarket& sample, const Vector& budgets, const PacingSolution& solution,
                      double tol) {
    FppeReport r;
    const Index t = sample.t();
    const Index n = sample.n();
    const Vector& beta = solution.beta;
    // Price errors are measured against the top bid, so tiny budgets get no slack.
    const double bid_scale = std::max(max_bids(sample.values, beta).maxCoeff(), std::numeric_limits<double>::min());
    const double money = budgets.sum();
    const ItemMatrix& x = solution.allocation;

    Vector spend = Vector::Zero(n);
    for (Index tau = 0; tau < t; ++tau) {
        const double best = (sample.values.row(tau).transpose().array() * beta.array()).maxCoeff();
        const double price = solution.prices[tau];
        // A zero price on an item nobody bids on is the unallocated convention.
        if (!(price == 0.0 && best <= tol * bid_scale))
            r.pricing = std::max(r.pricing, std::abs(price - best) / bid_scale);
        double sold = 0.0;
        for (Index i = 0; i < n; ++i) {
            const double share = x(tau, i);
            if (share < 0.0) r.oversell = std::max(r.oversell, -share);
            if (share > 0.0) {
                r.winner_only = std::max(r.winner_only, (best - beta[i] * sample.values(tau, i)) / bid_scale);
                spend[i] += sample.sigma[tau] * share * price;
            }
            sold += share;
        }
        r.oversell = std::max(r.oversell, sold - 1.0);
        if (price > tol * bid_scale)
            r.clearing = std::max(r.clearing, sample.sigma[tau] * price * (1.0 - sold) / money);
    }
    for (Index i = 0; i < n; ++i) {
        const double left = (budgets[i] - spend[i]) / money;
        r.budget = std::max(r.budget, -left);
        r.complementarity = std::max(r.complementarity, std::min(1.0 - beta[i], left));
    }
    r.passed = r.max() <= tol;
    return r;
}

PacingSolution solve_finite_eg(const SampledMarket& sample, const Vector& budgets, const SolveOptions& opts) {
    sample.validate();
    if (budgets.size() != sample.n()) throw DomainError("solve: budget vector length differs from buyer count");
    if (!(budgets.array() > 0.0).all()) throw DomainError("solve: budgets must be positive");

    const Index n = sample.n();
    const double vmax = sample.values.maxCoeff();
    if (!(vmax > 0.0)) {
        // Nobody values anything: no pacing, no spend.
        PacingSolution sol = assemble_solution(sample, budgets, Vector::Ones(n), ItemMatrix::Zero(sample.t(), n));
        sol.diagnostics = {0, 0.0, true};
        return sol;
    }

    // Same minimizer after scaling values to [0, 1] and money to unit total.
    const double money = budgets.sum();
    const ItemMatrix v = sample.values / vmax;
    const Vector sigma = sample.sigma / money;
    const Vector b = budgets / (vmax * money);

    // Buyers with no positive value sit at beta = 1 and drop out of the program.
    std::vector<Index> live;
    for (Index i = 0; i < n; ++i)
        if (v.col(i).maxCoeff() > 0.0) live.push_back(i);
    ItemMatrix v_live(v.rows(), static_cast<Index>(live.size()));
    Vector b_live(static_cast<Index>(live.size()));
    for (std::size_t k = 0; k < live.size(); ++k) {
        v_live.col(static_cast<Index>(k)) = v.col(live[k]);
        b_live[static_cast<Index>(k)] = b[live[k]];
    }

    // Small budgets put every multiplier far below one. Measuring them in units
    // of the all-paced level keeps the barrier well scaled; the bound moves to 1 / unit.
    double spendable = 0.0;
    for (Index tau = 0; tau < v_live.rows(); ++tau)
        if (v_live.cols() > 0) spendable += sigma[tau] * v_live.row(tau).maxCoeff();
    const double unit = spendable > 0.0 ? std::min(1.0, b_live.sum() / spendable) : 1.0;
    const ItemMatrix v_unit = v_live * unit;

    PacingSolution best;
    double best_residual = std::numeric_limits<double>::infinity();
    // Returns true once a candidate passes the certificate; it is left in best.
    auto attempt = [&](const IpmResult& ipm) {
        Vector beta = Vector::Ones(n);
        for (std::size_t k = 0; k < live.size(); ++k) {
            const Index kk = static_cast<Index>(k);
            const double u = 1.0 / unit - ipm.beta[kk];
            // Upper bound is active when its multiplier dominates the slack.
            beta[live[k]] = (ipm.nu[kk] / b_live[kk] > u) ? 1.0 : std::min(1.0, unit * ipm.beta[kk]);
        }

        // Candidates in order of preference: tie-polished multipliers, then the raw
        // iterate with progressively wider tie tolerances (never above the certificate tolerance).
        Vector polished = Vector::Ones(n);
        {
            Vector live_beta(static_cast<Index>(live.size()));
            for (std::size_t k = 0; k < live.size(); ++k) live_beta[static_cast<Index>(k)] = beta[live[k]];
            std::vector<Index> local(live.size());
            for (std::size_t k = 0; k < live.size(); ++k) local[k] = static_cast<Index>(k);
            const Vector tied = polish_ties(v_live, sigma, ipm.lam, local, live_beta, 1e-6);
            // Rebuilding along tie chains can leave round-off just below the bound.
            for (std::size_t k = 0; k < live.size(); ++k) {
                const double value = tied[static_cast<Index>(k)];
                polished[live[k]] = value > 1.0 - 1e-12 ? 1.0 : value;
            }
        }
        struct Candidate {
            const Vector* beta;
            double tie_tol_rel;
        };
        // Buyers left with clear leftover budget are unpaced; push the ones the
        // iterate left just short of the bound onto it.
        auto snap_unpaced = [&](const Vector& from) {
            const PacingSolution trial =
                assemble_solution(sample, budgets, from, recover_allocation(sample, budgets, from, opts.tie_tol_rel));
            Vector out = from;
            for (Index i = 0; i < n; ++i)
                if (1.0 - out[i] < 1e-6 && trial.leftover[i] > 1e-3 * budgets[i]) out[i] = 1.0;
            return out;
        };
        const Vector snapped_polished = snap_unpaced(polished);
        const Vector snapped = snap_unpaced(beta);
        std::vector<Candidate> candidates{{&polished, opts.tie_tol_rel},
                                          {&snapped_polished, opts.tie_tol_rel},
                                          {&beta, opts.tie_tol_rel},
                                          {&snapped, opts.tie_tol_rel}};
        for (double wider = opts.tie_tol_rel * 10.0; wider <= opts.tol; wider *= 10.0) candidates.push_back({&beta, wider});

        for (const Candidate& cand : candidates) {
            PacingSolution sol = assemble_solution(sample, budgets, *cand.beta,
                                                   recover_allocation(sample, budgets, *cand.beta, cand.tie_tol_rel));
            const FppeReport report = check_fppe(sample, budgets, sol, opts.tol);
            sol.diagnostics.iterations = ipm.iterations;
            sol.diagnostics.kkt_residual = report.max();
            sol.diagnostics.converged = report.passed;
            if (report.passed || report.max() < best_residual) {
                best_residual = report.max();
                best = std::move(sol);
            }
            if (report.passed) return true;
        }
        return false;
    };
    if (attempt(interior_point(v_unit, sigma, b_live, 1.0 / unit, opts.max_iters, false))) return best;
    if (attempt(interior_point(v_unit, sigma, b_live, 1.0 / unit, opts.max_iters, true))) return best;
    char detail[64];
    std::snprintf(detail, sizeof detail, " (residual %.3g)", best_residual);
    throw ConvergenceError(std::string("solve_finite_eg: equilibrium certificate failed") + detail,
                           best.beta, best_residual);
}

double revenue_of(const SampledMarket& sample, const PacingSolution& solution) {
    return sample.sigma.dot(solution.prices);
}

}  // namespace fppe
