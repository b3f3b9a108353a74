#include "fppe/revenue.hpp"

namespace fppe {

double rev_hat(const SampledMarket& sample, const Vector& beta, double alpha) {
    if (beta.size() != sample.n()) throw DomainError("rev_hat: beta length differs from buyer count");
    if (!(alpha >= 0.0 && alpha < 1.0)) throw DomainError("rev_hat: alpha must lie in [0, 1)");
    if (sample.is_bad.all()) throw DomainError("rev_hat: the sample has no good items");
    double total = 0.0;
    for (Index tau = 0; tau < sample.t(); ++tau) {
        if (sample.is_bad[tau]) continue;
        total += sample.sigma[tau] * (sample.values.row(tau).transpose().cwiseProduct(beta)).maxCoeff();
    }
    return total / (1.0 - alpha);
}

}  // namespace fppe
