#include "fppe/report.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <ostream>

namespace fppe {

namespace {

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string format_cell(const Table::Cell& cell) {
    if (const auto* d = std::get_if<double>(&cell)) return format_double(*d);
    if (const auto* i = std::get_if<long long>(&cell)) return std::to_string(*i);
    return std::get<std::string>(cell);
}

nlohmann::json json_cell(const Table::Cell& cell) {
    if (const auto* d = std::get_if<double>(&cell)) {
        if (!std::isfinite(*d)) return nullptr;
        return *d;
    }
    if (const auto* i = std::get_if<long long>(&cell)) return *i;
    return std::get<std::string>(cell);
}

}  // namespace

std::string Provenance::comment() const { return "config_hash=" + config_hash + " seed=" + std::to_string(seed); }

void write_table(std::ostream& out, const Table& table, OutputFormat format, const Provenance& provenance) {
    for (const auto& row : table.rows)
        if (row.size() != table.columns.size()) throw DomainError("write_table: row width differs from header");
    if (format == OutputFormat::csv) {
        out << "# " << provenance.comment() << '\n';
        for (std::size_t c = 0; c < table.columns.size(); ++c) out << (c ? "," : "") << table.columns[c];
        out << '\n';
        for (const auto& row : table.rows) {
            for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << format_cell(row[c]);
            out << '\n';
        }
        return;
    }
    nlohmann::ordered_json doc;
    doc["comment"] = provenance.comment();
    doc["config_hash"] = provenance.config_hash;
    doc["seed"] = provenance.seed;
    doc["columns"] = table.columns;
    doc["rows"] = nlohmann::ordered_json::array();
    for (const auto& row : table.rows) {
        nlohmann::ordered_json obj = nlohmann::ordered_json::object();
        for (std::size_t c = 0; c < row.size(); ++c) obj[table.columns[c]] = json_cell(row[c]);
        doc["rows"].push_back(obj);
    }
    out << doc.dump(2) << '\n';
}

Table bias_table(const std::vector<BiasRow>& rows) {
    Table t{{"alpha", "bias_beta_contaminated", "bias_beta_surrogate", "bias_rev_contaminated", "bias_rev_surrogate"},
            {}};
    for (const auto& r : rows)
        t.rows.push_back({r.alpha, r.bias_beta_contaminated, r.bias_beta_surrogate, r.bias_rev_contaminated,
                          r.bias_rev_surrogate});
    return t;
}

Table coverage_table(const std::vector<CoverageRow>& rows) {
    Table t{{"alpha", "beta_coverage", "rev_width_analytic", "rev_width_bootstrap", "rev_coverage_analytic",
             "rev_coverage_bootstrap"},
            {}};
    for (const auto& r : rows)
        t.rows.push_back({r.alpha_label, r.beta_coverage, r.rev_width_analytic, r.rev_width_bootstrap,
                          r.rev_coverage_analytic, r.rev_coverage_bootstrap});
    return t;
}

Table convergence_table(const std::vector<ConvergenceRow>& rows) {
    Table t{{"t", "rev_hat", "analytic_lo", "analytic_hi", "bootstrap_lo", "bootstrap_hi", "truth"}, {}};
    for (const auto& r : rows)
        t.rows.push_back({static_cast<long long>(r.t), r.rev_hat, r.analytic_lo, r.analytic_hi, r.bootstrap_lo,
                          r.bootstrap_hi, r.truth});
    return t;
}

Table abtest_table(const ABTestResult& result) {
    Table t{{"submarket", "arm", "rev_hat", "ci_lo", "ci_hi", "tau_hat", "tau_ci_lo", "tau_ci_hi"}, {}};
    for (std::size_t k = 0; k < result.effects.size(); ++k) {
        const SubmarketEffect& e = result.effects[k];
        for (int arm = 0; arm < 2; ++arm) {
            const ArmSubmarketEstimate& est = result.arms[static_cast<std::size_t>(arm)].submarkets[k];
            t.rows.push_back({static_cast<long long>(k), static_cast<long long>(arm), est.rev_hat, est.ci.lo,
                              est.ci.hi, e.tau_hat, e.ci.lo, e.ci.hi});
        }
    }
    return t;
}

Table solution_table(const PacingSolution& solution) {
    Table t{{"buyer", "beta", "spend", "leftover"}, {}};
    for (Index i = 0; i < solution.beta.size(); ++i)
        t.rows.push_back({static_cast<long long>(i), solution.beta[i], solution.spend[i], solution.leftover[i]});
    return t;
}

}  // namespace fppe
