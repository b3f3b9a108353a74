#pragma once

#include "fppe/abtest.hpp"
#include "fppe/experiments.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

namespace fppe {

enum class OutputFormat { csv, json };

/// A result table with fixed column names; cells are numbers or text.
struct Table {
    using Cell = std::variant<double, long long, std::string>;

    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
};

/// Identifies the run that produced an output file.
struct Provenance {
    std::string config_hash;
    std::uint64_t seed = 0;

    std::string comment() const;
};

/// CSV gets a leading "# config_hash=... seed=..." line, then the header row.
/// JSON carries the same information in "comment", "config_hash" and "seed".
/// Doubles are printed with 17 significant digits so output round-trips.
void write_table(std::ostream& out, const Table& table, OutputFormat format, const Provenance& provenance);

Table bias_table(const std::vector<BiasRow>& rows);
Table coverage_table(const std::vector<CoverageRow>& rows);
Table convergence_table(const std::vector<ConvergenceRow>& rows);
Table abtest_table(const ABTestResult& result);
/// One row per buyer: buyer, beta, spend, leftover.
Table solution_table(const PacingSolution& solution);

}  // namespace fppe
