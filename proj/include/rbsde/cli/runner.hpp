#pragma once

#include "rbsde/cli/config.hpp"
#include "rbsde/rbsde.hpp"

#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace rbsde::cli {

using Cell = std::variant<double, std::int64_t, std::string>;

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
};

/// An assertion-class check; any failing check makes the run exit nonzero.
struct Check {
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
    bool passed = true;
};

struct RunReport {
    std::string command;
    Table table;
    std::vector<Check> checks;
    json details = json::object();

    bool passed() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }
};

inline std::string format_cell(const Cell& c) {
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, double>) return fmt::format("{:.17g}", x);
            else if constexpr (std::is_same_v<T, std::int64_t>) return fmt::format("{}", x);
            else return x;
        },
        c);
}

inline std::string to_csv(const Table& t) {
    std::string out;
    for (std::size_t j = 0; j < t.columns.size(); ++j) out += (j ? "," : "") + t.columns[j];
    out += '\n';
    for (const auto& row : t.rows) {
        for (std::size_t j = 0; j < row.size(); ++j) out += (j ? "," : "") + format_cell(row[j]);
        out += '\n';
    }
    return out;
}

inline json to_json(const ExperimentConfig& cfg, const RunReport& r) {
    json rows = json::array();
    for (const auto& row : r.table.rows) {
        json obj = json::object();
        for (std::size_t j = 0; j < row.size(); ++j)
            std::visit([&](const auto& x) { obj[r.table.columns[j]] = x; }, row[j]);
        rows.push_back(std::move(obj));
    }
    json checks = json::array();
    for (const auto& c : r.checks)
        checks.push_back({{"name", c.name}, {"value", c.value}, {"tolerance", c.tolerance}, {"passed", c.passed}});
    return {{"command", r.command}, {"config", cfg.echo},   {"columns", r.table.columns}, {"rows", rows},
            {"checks", checks},     {"passed", r.passed()}, {"details", r.details}};
}

namespace detail {

inline Check at_most(std::string name, double value, double tol) {
    return {std::move(name), value, tol, value <= tol};
}

inline std::int64_t as_int(std::size_t x) { return static_cast<std::int64_t>(x); }

struct Instance {
    Lattice lat;
    Obstacle xi;
    Driver driver;
};

inline Instance materialize(const ExperimentConfig& cfg) {
    const auto wrap = [](const char* path, auto&& make) {
        try {
            return make();
        } catch (const Error& e) {
            if (e.code() != ErrorCode::InvalidSpec) throw;
            throw Error(ErrorCode::ConfigInvalid, std::string(path) + ": " + e.what());
        }
    };
    Lattice lat = wrap("/lattice", [&] { return build_lattice(cfg.lattice); });
    Obstacle xi = wrap("/obstacle", [&] { return build_obstacle(lat, cfg.obstacle, cfg.run.seed); });
    Driver driver = wrap("/driver", [&] { return make_driver(cfg.driver.name, cfg.driver.params, lat); });
    return {std::move(lat), std::move(xi), std::move(driver)};
}

inline PicardOptions picard_options(const RunSpec& run) {
    PicardOptions opt;
    opt.beta = run.beta;
    opt.epsilon = run.picard_epsilon;
    opt.tol = run.picard_tol;
    opt.max_iter = run.max_iter;
    return opt;
}

inline std::vector<NodeId> selected_nodes(const Lattice& lat, const RunSpec& run) {
    std::vector<NodeId> out;
    if (run.nodes.empty()) {
        for (std::size_t i = 0; i < lat.size(); ++i)
            if (!lat.is_leaf(node_id(i))) out.push_back(node_id(i));
        return out;
    }
    for (auto i : run.nodes) {
        if (i >= lat.size()) throw Error(ErrorCode::ConfigInvalid, "/run/nodes: node " + std::to_string(i) + " does not exist");
        out.push_back(node_id(i));
    }
    return out;
}

inline json diagnostics_json(const PicardDiagnostics& d) {
    return {{"beta", d.beta},
            {"epsilon", d.epsilon},
            {"iterates", d.iterates},
            {"measured_ratio", d.measured_ratio},
            {"c_k", d.c_k},
            {"theoretical_factor_c0", d.theoretical_factor_c0},
            {"converged", d.converged},
            {"iterations_used", d.iterations_used}};
}

inline json skorokhod_json(const SkorokhodReport& s) {
    return {{"a_residual", s.a_residual},
            {"c_residual", s.c_residual},
            {"floor_violation", s.floor_violation},
            {"dynamics_residual", s.dynamics_residual},
            {"right_jump_residual", s.right_jump_residual},
            {"terminal_residual", s.terminal_residual},
            {"martingale_residual", s.martingale_residual},
            {"sign_violation", s.sign_violation}};
}

// --------------------------------------------------------------------------

inline RunReport run_solve(const ExperimentConfig& cfg, const Instance& in) {
    const auto& lat = in.lat;
    const auto res = solve_picard(lat, in.driver, in.xi, picard_options(cfg.run));
    const auto& s = res.solution;
    RunReport r;
    r.table.columns = {"node", "step", "time", "parent", "mark", "xi_v", "xi_vplus", "Y_v", "Y_vplus", "Z", "A",
                       "C_jump", "M_incr"};
    for (const auto& m : lat.marks().marks()) r.table.columns.push_back("psi_" + m.label);
    for (std::size_t i = 0; i < lat.size(); ++i) {
        const NodeId n = node_id(i);
        const auto& nd = lat.node(n);
        std::vector<Cell> row{as_int(i),
                              as_int(nd.step),
                              lat.time(n),
                              i == 0 ? std::int64_t{-1} : as_int(index(nd.parent)),
                              nd.mark < 0 ? std::string("-") : lat.marks()[static_cast<std::size_t>(nd.mark)].label,
                              in.xi.process.v[i],
                              in.xi.process.vplus[i],
                              s.Y.v[i],
                              s.Y.vplus[i],
                              s.Z[i],
                              s.A_incr[i],
                              s.C_jump[i],
                              s.M_incr[i]};
        for (std::size_t u = 0; u < lat.mark_count(); ++u) row.emplace_back(s.psi(n, u));
        r.table.rows.push_back(std::move(row));
    }
    const auto sk = check_solution(lat, res.driver_values, in.xi, s);
    r.checks.push_back(at_most("skorokhod_worst", sk.worst(), cfg.run.tolerance));
    r.checks.push_back({"picard_converged", static_cast<double>(res.diagnostics.iterations_used), 0.0,
                        res.diagnostics.converged});
    r.details = {{"skorokhod", skorokhod_json(sk)},
                 {"picard", diagnostics_json(res.diagnostics)},
                 {"rusc_violations", in.xi.rusc_violations.size()}};
    return r;
}

inline RunReport run_oracle(const ExperimentConfig& cfg, const Instance& in) {
    const auto& lat = in.lat;
    const auto res = solve_picard(lat, in.driver, in.xi, picard_options(cfg.run));
    RunReport r;
    r.table.columns = {"node", "step", "policies", "snell", "oracle", "abs_diff", "status"};
    double worst = 0.0;
    std::size_t evaluated = 0;
    for (NodeId n : selected_nodes(lat, cfg.run)) {
        const auto policies = count_policies(lat, n, kDefaultPolicyLimit + 1);
        const double snell = res.solution.Y.v[index(n)];
        if (policies > kDefaultPolicyLimit) {
            r.table.rows.push_back({as_int(index(n)), as_int(lat.step(n)), static_cast<std::int64_t>(policies), snell,
                                    std::string(""), std::string(""), std::string("skipped")});
            continue;
        }
        const double oracle = oracle_value(lat, res.driver_values, in.xi, n);
        const double diff = std::abs(snell - oracle);
        worst = std::max(worst, diff);
        ++evaluated;
        r.table.rows.push_back({as_int(index(n)), as_int(lat.step(n)), static_cast<std::int64_t>(policies), snell,
                                oracle, diff, std::string("ok")});
    }
    r.checks.push_back(at_most("max_abs_diff", worst, cfg.run.tolerance));
    r.checks.push_back({"nodes_evaluated", static_cast<double>(evaluated), 1.0, evaluated > 0});
    r.details = {{"driver_frozen", in.driver.frozen}};
    return r;
}

inline RunReport run_penalize(const ExperimentConfig& cfg, const Instance& in) {
    const auto res = solve_picard(in.lat, in.driver, in.xi, picard_options(cfg.run));
    RunReport r;
    r.table.columns = {"n", "y_gap", "a_gap", "c_gap"};
    std::vector<ConvergenceRow> rows;
    bool monotone = true;
    std::string problem;
    try {
        rows = convergence_table(in.lat, res.driver_values, in.xi, cfg.run.n_list);
    } catch (const ReportedError<std::vector<ConvergenceRow>>& e) {
        rows = e.report();
        monotone = false;
        problem = e.what();
    }
    for (const auto& row : rows) r.table.rows.push_back({row.n, row.y_gap, row.a_gap, row.c_gap});
    r.checks.push_back({"monotone", monotone ? 0.0 : 1.0, 0.0, monotone});
    r.details = {{"problem", problem}};
    return r;
}

inline RunReport run_stop(const ExperimentConfig& cfg, const Instance& in) {
    const auto& lat = in.lat;
    const auto res = solve_picard(lat, in.driver, in.xi, picard_options(cfg.run));
    RunReport r;
    r.table.columns = {"kind",     "node",       "epsilon",      "y_start",         "value_at_tau",
                       "gap",      "empirical_c", "asserted",    "holds",           "mean_time",
                       "p_stop_at", "p_stop_after", "p_terminal"};
    const auto nodes = selected_nodes(lat, cfg.run);
    std::size_t failures = 0;
    double worst_c = 0.0;
    for (NodeId n : nodes)
        for (double eps : cfg.run.epsilons) {
            const auto e = check_epsilon_optimality(lat, in.driver, in.xi, res.solution, n, eps);
            failures += e.holds ? 0 : 1;
            worst_c = std::max(worst_c, e.empirical_c);
            r.table.rows.push_back({std::string("epsilon"), as_int(e.node), e.epsilon, e.y_start, e.value_at_tau,
                                    e.gap, e.empirical_c, std::int64_t{e.asserted}, std::int64_t{e.holds},
                                    e.tau.mean_time, e.tau.prob_stop_at, e.tau.prob_stop_after, e.tau.prob_terminal});
        }
    std::size_t lusc_skipped = 0;
    double worst_star = 0.0;
    for (NodeId n : nodes) {
        try {
            const auto [tau, o] = optimal_time_lusc(lat, in.driver, in.xi, res.solution, n);
            worst_star = std::max(worst_star, o.abs_error);
            r.table.rows.push_back({std::string("tau_star"), as_int(o.node), 0.0, o.y_start, o.value_at_tau,
                                    o.y_start - o.value_at_tau, 0.0, std::int64_t{1}, std::int64_t{o.holds},
                                    o.tau.mean_time, o.tau.prob_stop_at, o.tau.prob_stop_after, o.tau.prob_terminal});
        } catch (const Error& e) {
            if (e.code() != ErrorCode::LuscViolated) throw;
            ++lusc_skipped;
        }
    }
    r.checks.push_back({"epsilon_bound_failures", static_cast<double>(failures), 0.0, failures == 0});
    r.checks.push_back(at_most("tau_star_abs_error", worst_star, kOptimalTolerance));
    r.details = {{"driver_frozen", in.driver.frozen},
                 {"worst_empirical_c", worst_c},
                 {"tau_star_skipped_lusc", lusc_skipped}};
    return r;
}

inline RunReport run_risk(const ExperimentConfig& cfg, const Instance& in) {
    const auto& lat = in.lat;
    const Obstacle second = cfg.run.second_obstacle ? build_obstacle(lat, *cfg.run.second_obstacle, cfg.run.seed + 1)
                                                    : shifted(lat, in.xi, cfg.run.lift);
    const auto p = risk_measure_paired(lat, in.driver, in.xi, second, picard_options(cfg.run), cfg.run.tolerance);
    RunReport r;
    r.table.columns = {"node", "step", "v1", "v2", "Y1", "Y2"};
    double sign_error = 0.0;
    for (std::size_t i = 0; i < lat.size(); ++i) {
        sign_error = std::max({sign_error, std::abs(p.first.v[i] + p.first.solution.Y.v[i]),
                               std::abs(p.second.v[i] + p.second.solution.Y.v[i])});
        r.table.rows.push_back({as_int(i), as_int(lat.step(node_id(i))), p.first.v[i], p.second.v[i],
                                p.first.solution.Y.v[i], p.second.solution.Y.v[i]});
    }
    r.checks.push_back(at_most("v_plus_Y", sign_error, 0.0));
    r.checks.push_back({"order_violations", static_cast<double>(p.violations), 0.0, p.violations == 0});
    r.details = {{"obstacles_ordered", p.obstacles_ordered}, {"worst_violation", p.worst_violation}};
    return r;
}

inline RunReport run_glcheck(const ExperimentConfig& cfg, const Instance& in) {
    const auto& lat = in.lat;
    const auto res = solve_picard(lat, in.driver, in.xi, picard_options(cfg.run));
    const auto dec = from_solution(lat, res.driver_values, res.solution);
    RunReport r;
    r.table.columns = {"beta", "t_index", "paths", "max_abs_error", "max_rel_error", "worst_node", "passed"};
    double worst = 0.0;
    for (double beta : cfg.run.betas)
        for (std::size_t k = 0; k <= lat.steps(); ++k) {
            GlReport g;
            try {
                g = verify_formula(lat, dec, beta, k);
            } catch (const ReportedError<GlReport>& e) {
                g = e.report();
            }
            worst = std::max(worst, g.max_rel_error);
            r.table.rows.push_back({beta, as_int(k), as_int(g.paths), g.max_abs_error, g.max_rel_error,
                                    as_int(g.worst_node), std::int64_t{g.passed}});
        }
    r.checks.push_back(at_most("max_rel_error", worst, kFormulaTolerance));
    return r;
}

/// Randomized property suite. Each instance draws its own lattice, obstacle and
/// frozen driver from a generator seeded by (seed, instance index).
inline RunReport run_sweep(const ExperimentConfig& cfg) {
    RunReport r;
    r.table.columns = {"instance", "steps", "marks", "nodes", "oracle_diff", "skorokhod", "orthogonality",
                       "gl_rel_error"};
    double oracle_worst = 0.0, sk_worst = 0.0, orth_worst = 0.0, gl_worst = 0.0;
    for (std::size_t k = 0; k < cfg.run.instances; ++k) {
        std::seed_seq seq{static_cast<std::uint32_t>(cfg.run.seed), static_cast<std::uint32_t>(cfg.run.seed >> 32),
                          static_cast<std::uint32_t>(k)};
        std::mt19937_64 rng(seq);
        const Lattice lat(random_lattice_spec(rng, cfg.run.max_steps));
        const auto xi = random_obstacle(lat, rng);
        const auto f = random_frozen_driver(lat, rng);
        const auto sol = solve_frozen(lat, f, xi);

        double oracle_diff = 0.0;
        for (std::size_t i = 0; i < lat.size(); ++i) {
            const NodeId n = node_id(i);
            if (lat.is_leaf(n) || count_policies(lat, n, kDefaultPolicyLimit + 1) > kDefaultPolicyLimit) continue;
            oracle_diff = std::max(oracle_diff, std::abs(sol.Y.v[i] - oracle_value(lat, f, xi, n)));
        }
        const auto sk = check_solution(lat, f, xi, sol);
        const auto dec = from_solution(lat, f, sol);
        double gl = 0.0;
        for (double beta : cfg.run.betas)
            for (std::size_t t = 0; t <= lat.steps(); ++t) {
                try {
                    gl = std::max(gl, verify_formula(lat, dec, beta, t).max_rel_error);
                } catch (const ReportedError<GlReport>& e) {
                    gl = std::max(gl, e.report().max_rel_error);
                }
            }
        oracle_worst = std::max(oracle_worst, oracle_diff);
        sk_worst = std::max(sk_worst, sk.worst());
        orth_worst = std::max(orth_worst, sk.martingale_residual);
        gl_worst = std::max(gl_worst, gl);
        r.table.rows.push_back({as_int(k), as_int(lat.steps()), as_int(lat.mark_count()), as_int(lat.size()),
                                oracle_diff, sk.worst(), sk.martingale_residual, gl});
    }
    r.checks.push_back(at_most("oracle_diff", oracle_worst, cfg.run.tolerance));
    r.checks.push_back(at_most("skorokhod", sk_worst, cfg.run.tolerance));
    r.checks.push_back(at_most("orthogonality", orth_worst, cfg.run.tolerance));
    r.checks.push_back(at_most("gl_rel_error", gl_worst, kFormulaTolerance));
    return r;
}

}  // namespace detail

/// Validates the config and builds every object it describes without solving.
inline void check_config(const ExperimentConfig& cfg) {
    if (cfg.run.command != "sweep") detail::materialize(cfg);
}

inline RunReport run(const ExperimentConfig& cfg) {
    RunReport r;
    if (cfg.run.command == "sweep") {
        r = detail::run_sweep(cfg);
    } else {
        const auto in = detail::materialize(cfg);
        const auto& c = cfg.run.command;
        if (c == "solve") r = detail::run_solve(cfg, in);
        else if (c == "oracle") r = detail::run_oracle(cfg, in);
        else if (c == "penalize") r = detail::run_penalize(cfg, in);
        else if (c == "stop") r = detail::run_stop(cfg, in);
        else if (c == "risk") r = detail::run_risk(cfg, in);
        else if (c == "glcheck") r = detail::run_glcheck(cfg, in);
        else throw Error(ErrorCode::ConfigInvalid, "/run/command: unknown command '" + c + "'");
    }
    r.command = cfg.run.command;
    return r;
}

/// Writes <dir>/<prefix>.csv and <dir>/<prefix>.json.
inline void write_outputs(const ExperimentConfig& cfg, const RunReport& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream(dir / (cfg.prefix + ".csv"), std::ios::binary) << to_csv(r.table);
    std::ofstream(dir / (cfg.prefix + ".json"), std::ios::binary) << to_json(cfg, r).dump(2) << '\n';
}

}  // namespace rbsde::cli
