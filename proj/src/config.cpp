#include "fppe/config.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace fppe {

namespace {

using json = nlohmann::json;

// Walks one JSON object, remembering the path for error messages and
// rejecting keys nobody asked for.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_, "expected an object");
    }

    ~Reader() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) fail(at(it.key()), "unknown key");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    const json& get(const std::string& key) { return j_.at(key); }
    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void number(const std::string& key, double& out) {
        if (!has(key)) return;
        const json& v = get(key);
        if (!v.is_number()) fail(at(key), "expected a number");
        out = v.get<double>();
        if (!std::isfinite(out)) fail(at(key), "expected a finite number");
    }

    template <typename Int>
    void integer(const std::string& key, Int& out) {
        if (!has(key)) return;
        const json& v = get(key);
        if (v.is_number_unsigned()) {
            out = static_cast<Int>(v.get<std::uint64_t>());
        } else if (v.is_number_integer()) {
            out = static_cast<Int>(v.get<std::int64_t>());
        } else {
            fail(at(key), "expected an integer");
        }
    }

    void boolean(const std::string& key, bool& out) {
        if (!has(key)) return;
        if (!get(key).is_boolean()) fail(at(key), "expected true or false");
        out = get(key).get<bool>();
    }

    void string(const std::string& key, std::string& out) {
        if (!has(key)) return;
        if (!get(key).is_string()) fail(at(key), "expected a string");
        out = get(key).get<std::string>();
    }

    template <typename Enum>
    void choice(const std::string& key, Enum& out, const std::map<std::string, Enum>& names) {
        std::string name;
        string(key, name);
        if (!has(key)) return;
        const auto it = names.find(name);
        if (it == names.end()) fail(at(key), "unknown value '" + name + "'");
        out = it->second;
    }

    [[noreturn]] static void fail(const std::string& where, const std::string& what) {
        throw ConfigError("config " + where + ": " + what);
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

const std::map<std::string, MixtureMode> mixture_names{{"fixed_count", MixtureMode::fixed_count},
                                                       {"bernoulli", MixtureMode::bernoulli}};
const std::map<std::string, HessianMode> hessian_names{{"finite_difference", HessianMode::finite_difference},
                                                       {"diagonal_closed_form", HessianMode::diagonal_closed_form}};
const std::map<std::string, PerCoordQuantile> quantile_names{{"chi_n", PerCoordQuantile::chi_n},
                                                             {"z", PerCoordQuantile::z}};
const std::set<std::string> experiment_names{"solve", "bias_curve", "coverage", "convergence", "abtest",
                                             "gen_biddata"};

template <typename Enum>
std::string name_of(Enum value, const std::map<std::string, Enum>& names) {
    for (const auto& [name, v] : names)
        if (v == value) return name;
    return {};
}

Distribution read_distribution(const json& j, const std::string& path) {
    Reader r(j, path);
    std::string law;
    r.string("law", law);
    Distribution d;
    if (law == "uniform") {
        double lo = 0.0, hi = 1.0;
        r.number("lo", lo);
        r.number("hi", hi);
        d = Distribution::uniform(lo, hi);
    } else if (law == "lognormal") {
        double mu = 0.0, sigma = 1.0;
        r.number("mu", mu);
        r.number("sigma", sigma);
        d = Distribution::lognormal(mu, sigma);
    } else if (law == "constant") {
        double value = 1.0;
        r.number("value", value);
        d = Distribution::constant(value);
    } else {
        Reader::fail(r.at("law"), "expected uniform, lognormal or constant");
    }
    try {
        d.validate();
    } catch (const Error& e) {
        Reader::fail(path, e.what());
    }
    return d;
}

json write_distribution(const Distribution& d) {
    switch (d.kind) {
        case Distribution::Kind::uniform:
            return {{"law", "uniform"}, {"lo", d.a}, {"hi", d.b}};
        case Distribution::Kind::lognormal:
            return {{"law", "lognormal"}, {"mu", d.a}, {"sigma", d.b}};
        case Distribution::Kind::constant:
            break;
    }
    return {{"law", "constant"}, {"value", d.a}};
}

// "n_bad/total" labels, {"n_bad", "n_good"} objects, or a plain fraction
// converted against the market's good-item count.
AlphaPoint read_alpha(const json& j, const std::string& path, std::size_t n_good) {
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        unsigned long long bad = 0, total = 0;
        char tail = 0;
        if (std::sscanf(s.c_str(), "%llu/%llu%c", &bad, &total, &tail) != 2 || total <= bad)
            Reader::fail(path, "expected a label like \"100/1100\"");
        return {static_cast<std::size_t>(bad), static_cast<std::size_t>(total - bad)};
    }
    if (j.is_number()) {
        const double a = j.get<double>();
        if (!(a >= 0.0 && a < 1.0)) Reader::fail(path, "alpha must lie in [0, 1)");
        const auto bad = static_cast<std::size_t>(std::llround(a * static_cast<double>(n_good) / (1.0 - a)));
        return {bad, n_good};
    }
    Reader r(j, path);
    AlphaPoint p;
    r.integer("n_bad", p.n_bad);
    r.integer("n_good", p.n_good);
    if (p.n_good < 1) Reader::fail(path, "n_good must be positive");
    return p;
}

void read_market(const json& j, MarketConfig& m) {
    Reader r(j, "market");
    r.integer("n_buyers", m.n_buyers);
    r.integer("K", m.K);
    r.integer("n_good", m.n_good);
    if (r.has("good_value")) m.good_value = read_distribution(r.get("good_value"), r.at("good_value"));
    if (r.has("bad_value")) m.bad_value = read_distribution(r.get("bad_value"), r.at("bad_value"));
    if (r.has("budget_law")) m.budget_law = read_distribution(r.get("budget_law"), r.at("budget_law"));
    r.choice("mixture", m.mixture, mixture_names);
    if (r.has("budgets")) {
        const json& b = r.get("budgets");
        if (!b.is_array()) Reader::fail(r.at("budgets"), "expected an array of numbers");
        m.budgets.clear();
        for (const auto& x : b) {
            if (!x.is_number() || !(x.get<double>() > 0.0)) Reader::fail(r.at("budgets"), "budgets must be positive");
            m.budgets.push_back(x.get<double>());
        }
    }
    r.boolean("calibrate", m.calibrate);
    r.number("target_paced_fraction", m.target_paced_fraction);
    r.integer("calibration_tolerance_buyers", m.calibration_tolerance_buyers);
    r.integer("calibration_items", m.calibration_items);
    if (m.calibrate && !(m.target_paced_fraction > 0.0 && m.target_paced_fraction < 1.0))
        Reader::fail(r.at("target_paced_fraction"), "must lie in (0, 1)");
    if (m.calibration_tolerance_buyers < 0) Reader::fail(r.at("calibration_tolerance_buyers"), "must be nonnegative");
    if (m.calibration_items < 1) Reader::fail(r.at("calibration_items"), "must be positive");
}

void read_debias(const json& j, DebiasConfig& d) {
    Reader r(j, "debias");
    r.number("c_eps", d.c_eps);
    r.number("c_iota", d.c_iota);
    r.choice("hessian_mode", d.hessian_mode, hessian_names);
    r.boolean("fd_diagonal_only", d.fd_diagonal_only);
    r.number("condition_cap", d.condition_cap);
}

void read_solve_options(const json& j, SolveOptions& s) {
    Reader r(j, "solve");
    r.number("tol", s.tol);
    r.integer("max_iters", s.max_iters);
    r.number("tie_tol_rel", s.tie_tol_rel);
    if (!(s.tol > 0.0)) Reader::fail(r.at("tol"), "must be positive");
    if (s.max_iters < 1) Reader::fail(r.at("max_iters"), "must be positive");
    if (!(s.tie_tol_rel > 0.0)) Reader::fail(r.at("tie_tol_rel"), "must be positive");
}

void read_treatment(const json& j, TreatmentModel& t) {
    Reader r(j, "abtest.treatment");
    std::string kind = "null";
    r.string("kind", kind);
    double factor = 1.0;
    r.number("factor", factor);
    if (kind == "null") {
        t = TreatmentModel::null_effect();
    } else if (kind == "scale") {
        t = TreatmentModel::scale(factor);
    } else if (kind == "reshuffle") {
        t = TreatmentModel::reshuffle();
    } else {
        Reader::fail(r.at("kind"), "expected null, scale or reshuffle");
    }
}

void read_abtest(const json& j, ABTestSettings& a, std::size_t n_good) {
    Reader r(j, "abtest");
    r.number("pi0", a.pi0);
    r.number("pi1", a.pi1);
    r.integer("t", a.t);
    if (r.has("alpha")) a.alpha = read_alpha(r.get("alpha"), r.at("alpha"), n_good);
    if (r.has("treatment")) read_treatment(r.get("treatment"), a.treatment);
    if (!(a.pi0 > 0.0 && a.pi1 > 0.0)) Reader::fail("abtest", "pi0 and pi1 must be positive");
    if (std::abs(a.pi0 + a.pi1 - 1.0) > 1e-12) Reader::fail("abtest", "pi0 + pi1 must equal 1");
}

void read_solve_input(const json& j, SolveSettings& s, std::size_t n_good) {
    Reader r(j, "solve_input");
    if (r.has("values")) {
        const json& v = r.get("values");
        if (!v.is_array()) Reader::fail(r.at("values"), "expected an array of rows");
        s.values.clear();
        for (const auto& row : v) {
            if (!row.is_array()) Reader::fail(r.at("values"), "expected an array of rows");
            std::vector<double> out;
            for (const auto& x : row) {
                if (!x.is_number() || !(x.get<double>() >= 0.0)) Reader::fail(r.at("values"), "values must be >= 0");
                out.push_back(x.get<double>());
            }
            s.values.push_back(std::move(out));
        }
    }
    r.string("bid_log", s.bid_log);
    r.integer("n_auctions", s.n_auctions);
    r.number("target_paced_fraction", s.target_paced_fraction);
    if (r.has("alpha")) s.alpha = read_alpha(r.get("alpha"), r.at("alpha"), n_good);
}

void read_bid_log(const json& j, BidLogSettings& b) {
    Reader r(j, "bid_log");
    r.integer("n_auctions", b.n_auctions);
    r.integer("n_bidders", b.n_bidders);
    r.number("participation", b.participation);
}

std::string alpha_label(const AlphaPoint& p) { return p.label(); }

json to_json(const RunConfig& c) {
    json market = {{"n_buyers", c.market.n_buyers},
                   {"K", c.market.K},
                   {"n_good", c.market.n_good},
                   {"good_value", write_distribution(c.market.good_value)},
                   {"bad_value", write_distribution(c.market.bad_value)},
                   {"budget_law", write_distribution(c.market.budget_law)},
                   {"mixture", name_of(c.market.mixture, mixture_names)},
                   {"budgets", c.market.budgets},
                   {"calibrate", c.market.calibrate},
                   {"target_paced_fraction", c.market.target_paced_fraction},
                   {"calibration_tolerance_buyers", c.market.calibration_tolerance_buyers},
                   {"calibration_items", c.market.calibration_items}};
    json alphas = json::array();
    for (const auto& a : c.alpha_grid) alphas.push_back(alpha_label(a));
    std::string treatment = "null";
    if (c.abtest.treatment.kind == TreatmentModel::Kind::scale) treatment = "scale";
    if (c.abtest.treatment.kind == TreatmentModel::Kind::reshuffle) treatment = "reshuffle";
    if (c.abtest.treatment.kind == TreatmentModel::Kind::custom) treatment = "custom";
    return {{"experiment", c.experiment},
            {"market", market},
            {"alpha_grid", alphas},
            {"t_grid", c.t_grid},
            {"convergence_alpha", alpha_label(c.convergence_alpha)},
            {"replications", c.replications},
            {"level", c.level},
            {"bootstrap", c.bootstrap},
            {"t_ref", c.t_ref},
            {"reference_tol", c.reference_tol},
            {"workers", c.workers},
            {"max_failure_fraction", c.max_failure_fraction},
            {"abtest",
             {{"pi0", c.abtest.pi0},
              {"pi1", c.abtest.pi1},
              {"t", c.abtest.t},
              {"alpha", alpha_label(c.abtest.alpha)},
              {"treatment", {{"kind", treatment}, {"factor", c.abtest.treatment.factor}}}}},
            {"solve_input",
             {{"values", c.solve_input.values},
              {"bid_log", c.solve_input.bid_log},
              {"n_auctions", c.solve_input.n_auctions},
              {"target_paced_fraction", c.solve_input.target_paced_fraction},
              {"alpha", alpha_label(c.solve_input.alpha)}}},
            {"bid_log",
             {{"n_auctions", c.bid_log.n_auctions},
              {"n_bidders", c.bid_log.n_bidders},
              {"participation", c.bid_log.participation}}},
            {"debias",
             {{"c_eps", c.debias.c_eps},
              {"c_iota", c.debias.c_iota},
              {"hessian_mode", name_of(c.debias.hessian_mode, hessian_names)},
              {"fd_diagonal_only", c.debias.fd_diagonal_only},
              {"condition_cap", c.debias.condition_cap}}},
            {"per_coord", name_of(c.per_coord, quantile_names)},
            {"solve",
             {{"tol", c.solve.tol}, {"max_iters", c.solve.max_iters}, {"tie_tol_rel", c.solve.tie_tol_rel}}}};
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c;
    {
        Reader r(j, "");
        r.string("experiment", c.experiment);
        if (!experiment_names.count(c.experiment)) Reader::fail("experiment", "unknown kind '" + c.experiment + "'");
        // The market goes first: fractional alphas convert against its good-item count.
        if (r.has("market")) read_market(r.get("market"), c.market);
        if (r.has("alpha_grid")) {
            const json& a = r.get("alpha_grid");
            if (!a.is_array() || a.empty()) Reader::fail("alpha_grid", "expected a nonempty array");
            c.alpha_grid.clear();
            for (const auto& x : a) c.alpha_grid.push_back(read_alpha(x, "alpha_grid", c.market.n_good));
        }
        if (r.has("t_grid")) {
            const json& t = r.get("t_grid");
            if (!t.is_array()) Reader::fail("t_grid", "expected an array of integers");
            c.t_grid.clear();
            for (const auto& x : t) {
                if (!x.is_number_integer()) Reader::fail("t_grid", "expected an array of integers");
                c.t_grid.push_back(x.get<Index>());
            }
        }
        if (r.has("convergence_alpha"))
            c.convergence_alpha = read_alpha(r.get("convergence_alpha"), "convergence_alpha", c.market.n_good);
        r.integer("replications", c.replications);
        r.number("level", c.level);
        r.integer("bootstrap", c.bootstrap);
        r.integer("t_ref", c.t_ref);
        r.number("reference_tol", c.reference_tol);
        r.integer("seed", c.seed);
        r.string("out_dir", c.out_dir);
        r.integer("workers", c.workers);
        r.number("max_failure_fraction", c.max_failure_fraction);
        if (r.has("abtest")) read_abtest(r.get("abtest"), c.abtest, c.market.n_good);
        if (r.has("solve_input")) read_solve_input(r.get("solve_input"), c.solve_input, c.market.n_good);
        if (r.has("bid_log")) read_bid_log(r.get("bid_log"), c.bid_log);
        if (r.has("debias")) read_debias(r.get("debias"), c.debias);
        r.choice("per_coord", c.per_coord, quantile_names);
        if (r.has("solve")) read_solve_options(r.get("solve"), c.solve);
    }
    c.validate();
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return parse_run_config(text.str());
}

std::string canonical_config(const RunConfig& cfg) { return to_json(cfg).dump(); }

std::string config_hash(const RunConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical_config(cfg)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace fppe
