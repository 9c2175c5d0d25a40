#pragma once

#include "rbsde/optional_process.hpp"
#include "rbsde/snell_mertens.hpp"

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace rbsde {

/// Penalized approximation at level n. The penalty K^n = n ∫ (Y^n - ξ)^- ds is
/// applied in two stages per node: against ξ.vplus on the open interval
/// (mass K_A, tending to A) and then against ξ.v at the node itself (mass K_C,
/// tending to the right jump of C).
struct PenalizedSolution {
    double n = 0.0;
    OptionalProcess Y;
    NodeField K_A;
    NodeField K_C;
    NodeField K_total;  ///< Σ (K_A + K_C) along the path, stored at leaves
};

/// Root of y = base + c (y - floor)^- , i.e. base if base >= floor, otherwise
/// (base + c floor) / (1 + c).
inline double penalized_step(double base, double floor, double c) noexcept {
    return base >= floor ? base : (base + c * floor) / (1.0 + c);
}

inline PenalizedSolution solve_penalized(const Lattice& lat, std::span<const double> f,
                                         const Obstacle& xi, double n) {
    if (!(n > 0.0)) throw Error(ErrorCode::InvalidSpec, "penalty level must be positive");
    PenalizedSolution s{n, OptionalProcess(lat.size()), NodeField(lat.size(), 0.0),
                        NodeField(lat.size(), 0.0), NodeField(lat.size(), 0.0)};
    const auto [leaf_first, leaf_last] = lat.leaves();
    for (std::size_t i = leaf_first; i < leaf_last; ++i) {
        s.Y.v[i] = xi.process.v[i];
        s.Y.vplus[i] = xi.process.v[i];
    }
    std::vector<double> next;
    for (std::size_t k = lat.steps(); k-- > 0;) {
        const auto [first, last] = lat.level(k);
        const double c = n * lat.dt(k);
        for (std::size_t i = first; i < last; ++i) {
            const NodeId node = node_id(i);
            next.resize(lat.branch_count(node));
            for (std::size_t b = 0; b < next.size(); ++b) next[b] = s.Y.v[index(lat.child(node, b))];
            const double cont = lat.cond_expect(node, next) + f[i] * lat.dt(k);
            const double yp = penalized_step(cont, xi.process.vplus[i], c);
            const double y = penalized_step(yp, xi.process.v[i], c);
            s.Y.vplus[i] = yp;
            s.Y.v[i] = y;
            s.K_A[i] = yp - cont;
            s.K_C[i] = y - yp;
        }
    }
    for (std::size_t i = leaf_first; i < leaf_last; ++i) {
        double total = 0.0;
        for (NodeId m = lat.parent(node_id(i));; m = lat.parent(m)) {
            total += s.K_A[index(m)] + s.K_C[index(m)];
            if (m == lat.root()) break;
        }
        s.K_total[i] = total;
    }
    return s;
}

struct ConvergenceRow {
    double n = 0.0;
    double y_gap = 0.0;  ///< |||Y - Y^n|||_0
    double a_gap = 0.0;  ///< max_node |K_A - A_incr|
    double c_gap = 0.0;  ///< max_node |K_C - C_jump|
};

inline constexpr double kMonotoneTolerance = 1e-12;

/// Gaps between the penalized solutions and the reflected solution for an
/// increasing list of penalty levels. Throws MonotonicityViolated (carrying
/// the table) if Y^n fails to increase towards Y or the gap grows.
inline std::vector<ConvergenceRow> convergence_table(const Lattice& lat, std::span<const double> f,
                                                     const Obstacle& xi, std::span<const double> n_list) {
    for (std::size_t j = 1; j < n_list.size(); ++j)
        if (!(n_list[j] > n_list[j - 1]))
            throw Error(ErrorCode::InvalidSpec, "penalty levels must be strictly increasing");
    const auto ref = solve_frozen(lat, f, xi);

    std::vector<ConvergenceRow> rows;
    std::string problem;
    OptionalProcess previous;
    for (std::size_t j = 0; j < n_list.size(); ++j) {
        const auto pen = solve_penalized(lat, f, xi, n_list[j]);
        ConvergenceRow row{n_list[j]};
        row.y_gap = std::sqrt(sup_norm_beta(lat, ref.Y - pen.Y, 0.0));
        for (std::size_t i = 0; i < lat.size(); ++i) {
            if (lat.is_leaf(node_id(i))) continue;
            row.a_gap = std::max(row.a_gap, std::abs(pen.K_A[i] - ref.A_incr[i]));
            row.c_gap = std::max(row.c_gap, std::abs(pen.K_C[i] - ref.C_jump[i]));
        }
        for (std::size_t i = 0; i < lat.size() && problem.empty(); ++i) {
            if (pen.Y.v[i] > ref.Y.v[i] + kMonotoneTolerance || pen.Y.vplus[i] > ref.Y.vplus[i] + kMonotoneTolerance)
                problem = "Y^n exceeds Y at node " + std::to_string(i);
            else if (j > 0 && (previous.v[i] > pen.Y.v[i] + kMonotoneTolerance ||
                               previous.vplus[i] > pen.Y.vplus[i] + kMonotoneTolerance))
                problem = "Y^n decreases in n at node " + std::to_string(i);
        }
        if (problem.empty() && !rows.empty() && row.y_gap > rows.back().y_gap + kMonotoneTolerance)
            problem = "gap grows between n = " + std::to_string(rows.back().n) + " and n = " +
                      std::to_string(row.n);
        rows.push_back(row);
        previous = pen.Y;
    }
    if (!problem.empty())
        throw ReportedError<std::vector<ConvergenceRow>>(ErrorCode::MonotonicityViolated, problem, rows);
    return rows;
}

}  // namespace rbsde
