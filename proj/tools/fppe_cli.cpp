#include "fppe/abtest.hpp"
#include "fppe/bidlog.hpp"
#include "fppe/config.hpp"
#include "fppe/experiments.hpp"
#include "fppe/report.hpp"
#include "fppe/rng.hpp"
#include "fppe/solver.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

using namespace fppe;

namespace {

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string format = "csv";
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config, "JSON run file");
    cmd->add_option("--seed", flags.seed, "master seed (overrides the run file)");
    cmd->add_option("--out-dir", flags.out_dir, "output directory (overrides the run file)");
    cmd->add_option("--format", flags.format, "output format")->check(CLI::IsMember({"csv", "json"}));
}

RunConfig resolve(const CommonFlags& flags, const std::string& experiment) {
    RunConfig cfg = flags.config.empty() ? RunConfig{} : load_run_config(flags.config);
    cfg.experiment = experiment;
    if (flags.seed) cfg.seed = *flags.seed;
    if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
    cfg.validate();
    return cfg;
}

OutputFormat format_of(const CommonFlags& flags) {
    return flags.format == "json" ? OutputFormat::json : OutputFormat::csv;
}

std::string emit(const RunConfig& cfg, const CommonFlags& flags, const std::string& stem, const Table& table) {
    std::filesystem::create_directories(cfg.out_dir);
    const OutputFormat format = format_of(flags);
    const std::filesystem::path path =
        std::filesystem::path(cfg.out_dir) / (stem + (format == OutputFormat::csv ? ".csv" : ".json"));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write output file: " + path.string());
    write_table(out, table, format, {config_hash(cfg), cfg.seed});
    if (!out) throw ConfigError("failed while writing: " + path.string());
    std::printf("wrote %s\n", path.string().c_str());
    return path.string();
}

std::string join(const Vector& v) {
    std::string s;
    char buf[40];
    for (Index i = 0; i < v.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.10g", v[i]);
        s += (i ? "," : "") + std::string(buf);
    }
    return s;
}

int run_solve(const CommonFlags& flags) {
    const RunConfig cfg = resolve(flags, "solve");
    const SolveSettings& in = cfg.solve_input;
    SampledMarket sample;
    Vector budgets;
    if (!in.values.empty()) {
        ItemMatrix values(static_cast<Index>(in.values.size()), cfg.market.n_buyers);
        for (std::size_t tau = 0; tau < in.values.size(); ++tau)
            for (Index i = 0; i < cfg.market.n_buyers; ++i)
                values(static_cast<Index>(tau), i) = in.values[tau][static_cast<std::size_t>(i)];
        sample = make_sample(std::move(values));
        budgets = build_market(cfg.market, cfg.seed).budgets;
    } else if (!in.bid_log.empty()) {
        const IngestedMarket m =
            ingest_bid_log(read_bid_log(in.bid_log), in.n_auctions, in.target_paced_fraction, cfg.seed);
        sample = m.sample;
        budgets = m.definition.budgets;
    } else {
        const MarketDefinition market = build_market(cfg.market, cfg.seed);
        const MarketDefinition def = with_items(market, cfg.market, in.alpha.n_good, in.alpha.n_bad);
        sample = generate_synthetic_market(def, derive_seed(cfg.seed, {stream::items}));
        budgets = def.budgets;
    }
    const PacingSolution solution = solve_finite_eg(sample, budgets, cfg.solve);
    std::printf("beta=%s\nrevenue=%.10g\n", join(solution.beta).c_str(), revenue_of(sample, solution));
    emit(cfg, flags, "solve", solution_table(solution));
    return 0;
}

int run_bias(const CommonFlags& flags) {
    const RunConfig cfg = resolve(flags, "bias_curve");
    emit(cfg, flags, "bias_curve", bias_table(run_bias_curve(cfg)));
    return 0;
}

int run_cov(const CommonFlags& flags) {
    const RunConfig cfg = resolve(flags, "coverage");
    emit(cfg, flags, "coverage", coverage_table(run_coverage(cfg)));
    return 0;
}

int run_conv(const CommonFlags& flags) {
    const RunConfig cfg = resolve(flags, "convergence");
    emit(cfg, flags, "convergence", convergence_table(run_convergence(cfg)));
    return 0;
}

int run_ab(const CommonFlags& flags) {
    const RunConfig cfg = resolve(flags, "abtest");
    const MarketDefinition market = build_market(cfg.market, cfg.seed);
    emit(cfg, flags, "abtest", abtest_table(run_parallel_abtest(abtest_config(cfg, market, cfg.seed))));
    return 0;
}

int run_gen(const CommonFlags& flags) {
    const RunConfig cfg = resolve(flags, "gen_biddata");
    const auto rows = generate_bid_log(cfg.bid_log.n_auctions, cfg.bid_log.n_bidders, cfg.bid_log.participation,
                                       cfg.seed);
    Table table{{"auction_id", "bidder_id", "value"}, {}};
    for (const auto& r : rows) table.rows.push_back({r.auction_id, r.bidder_id, r.value});
    emit(cfg, flags, "bid_log", table);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"First-price pacing equilibria: solve, debias and run the synthetic studies"};
    app.require_subcommand(1);
    CommonFlags flags;
    struct Command {
        const char* name;
        const char* help;
        int (*run)(const CommonFlags&);
    };
    const Command commands[] = {
        {"solve", "solve one market and print beta and revenue", run_solve},
        {"bias-curve", "normalized bias of contaminated and debiased limits over the alpha grid", run_bias},
        {"coverage", "Monte Carlo coverage of beta and revenue intervals", run_cov},
        {"convergence", "revenue intervals along the t grid for one seed", run_conv},
        {"abtest", "budget-split A/B test with per-submarket effects", run_ab},
        {"gen-biddata", "write a synthetic heavy-tailed bid log", run_gen},
    };
    for (const Command& c : commands) add_common(app.add_subcommand(c.name, c.help), flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        for (const Command& c : commands)
            if (app.got_subcommand(c.name)) return c.run(flags);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const ParseError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 1;
    } catch (const InvalidSpecError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const DomainError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "output error: " << e.what() << '\n';
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
