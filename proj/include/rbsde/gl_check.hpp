#pragma once

#include "rbsde/lattice.hpp"
#include "rbsde/optional_process.hpp"
#include "rbsde/snell_mertens.hpp"

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace rbsde {

/// Y = Y0 + N + A + B on the lattice.
///   N: martingale, jumps at grid times (increment stored on the node it arrives at)
///   A: right-continuous finite variation, increment over (t_k, t_{k+1}] stored at the node of t_k
///   B: left-continuous purely discontinuous, right jump at t_k stored at the node of t_k
/// Every discrete martingale is purely discontinuous, so <N^c> vanishes and the
/// Brownian quadratic variation enters through the left-jump squares.
struct LadlagDecomposition {
    double y0 = 0.0;
    NodeField N_incr;
    NodeField A_incr;
    NodeField B_jump;

    LadlagDecomposition() = default;
    explicit LadlagDecomposition(std::size_t nodes)
        : N_incr(nodes, 0.0), A_incr(nodes, 0.0), B_jump(nodes, 0.0) {}
};

/// Walks the increments from the root: Y(t+) = Y(t) + B, Y(child) = Y(t+) + A + N.
inline OptionalProcess reconstruct(const Lattice& lat, const LadlagDecomposition& dec) {
    OptionalProcess y(lat.size());
    for (std::size_t i = 0; i < lat.size(); ++i) {
        const NodeId n = node_id(i);
        if (i == 0) {
            y.v[i] = dec.y0;
        } else {
            const auto p = index(lat.parent(n));
            y.v[i] = y.vplus[p] + dec.A_incr[p] + dec.N_incr[i];
        }
        y.vplus[i] = lat.is_leaf(n) ? y.v[i] : y.v[i] + dec.B_jump[i];
    }
    return y;
}

inline constexpr double kReconstructionTolerance = 1e-12;

/// Semimartingale decomposition of a solution: N from (Z, ψ, M), A = -∫f - A_sol, B = -C.
inline LadlagDecomposition from_solution(const Lattice& lat, std::span<const double> f,
                                         const RbsdeSolution& sol) {
    LadlagDecomposition dec(lat.size());
    dec.y0 = sol.Y.v[0];
    for (std::size_t i = 0; i < lat.size(); ++i) {
        const NodeId n = node_id(i);
        if (lat.is_leaf(n)) continue;
        dec.A_incr[i] = -f[i] * lat.dt(lat.step(n)) - sol.A_incr[i];
        dec.B_jump[i] = -sol.C_jump[i];
        for (std::size_t b = 0; b < lat.branch_count(n); ++b)
            dec.N_incr[index(lat.child(n, b))] = martingale_increment(lat, sol, n, b);
    }
    const auto y = reconstruct(lat, dec);
    for (std::size_t i = 0; i < lat.size(); ++i) {
        const double scale = std::max(1.0, std::abs(sol.Y.v[i]));
        const double err = std::max(std::abs(y.v[i] - sol.Y.v[i]), std::abs(y.vplus[i] - sol.Y.vplus[i]));
        if (err > kReconstructionTolerance * scale)
            throw Error(ErrorCode::ReconstructionFailed,
                        "node " + std::to_string(i) + " off by " + std::to_string(err));
    }
    return dec;
}

struct GlReport {
    double beta = 0.0;
    std::size_t t_index = 0;
    std::size_t paths = 0;
    double max_abs_error = 0.0;
    double max_rel_error = 0.0;  ///< |LHS - RHS| / (1 + |LHS|)
    std::size_t worst_node = 0;  ///< end node of the worst path
    double worst_lhs = 0.0;
    double worst_rhs = 0.0;
    bool passed = true;
};

inline constexpr double kFormulaTolerance = 1e-10;

/// Pathwise check of
///   e^{βt} Y_t² = Y_0² + ∫β e^{βs} Y_s² ds + 2∫ e^{βs} Y_{s-} d(A+N)_s
///               + Σ_{0<s<=t} e^{βs} (ΔY_s)² + 2∫ e^{βs} Y_s dB_{s+} + Σ_{0<=s<t} e^{βs} (Δ_+Y_s)²
/// on every root-to-level path ending at grid index `t_index`. Throws
/// FormulaViolated (with the report) if some path misses by more than
/// 1e-10 (1 + |LHS|).
inline GlReport verify_formula(const Lattice& lat, const LadlagDecomposition& dec, double beta,
                               std::size_t t_index) {
    if (t_index > lat.steps()) throw Error(ErrorCode::InvalidSpec, "time index beyond the horizon");
    const auto y = reconstruct(lat, dec);
    NodeField rhs(lat.size(), 0.0);
    rhs[0] = dec.y0 * dec.y0;
    const auto [first, last] = lat.level(t_index);
    for (std::size_t i = 0; i < first; ++i) {
        const NodeId n = node_id(i);
        const std::size_t k = lat.step(n);
        const double e0 = std::exp(beta * lat.time_at(k));
        const double e1 = std::exp(beta * lat.time_at(k + 1));
        const double yv = y.v[i], yp = y.vplus[i];
        // right jump at t_k and the ds-integral over (t_k, t_{k+1})
        const double at_node = 2.0 * e0 * yv * dec.B_jump[i] + e0 * (yp - yv) * (yp - yv) +
                               yp * yp * (e1 - e0);
        for (std::size_t b = 0; b < lat.branch_count(n); ++b) {
            const auto c = index(lat.child(n, b));
            const double left_jump = y.v[c] - yp;
            rhs[c] = rhs[i] + at_node + 2.0 * e1 * yp * (dec.A_incr[i] + dec.N_incr[c]) +
                     e1 * left_jump * left_jump;
        }
    }

    GlReport r;
    r.beta = beta;
    r.t_index = t_index;
    const double et = std::exp(beta * lat.time_at(t_index));
    for (std::size_t i = first; i < last; ++i) {
        const double lhs = et * y.v[i] * y.v[i];
        double err = std::abs(lhs - rhs[i]);
        double rel = err / (1.0 + std::abs(lhs));
        if (std::isnan(rel)) err = rel = std::numeric_limits<double>::infinity();
        ++r.paths;
        if (rel >= r.max_rel_error) {
            r.max_rel_error = rel;
            r.worst_node = i;
            r.worst_lhs = lhs;
            r.worst_rhs = rhs[i];
        }
        r.max_abs_error = std::max(r.max_abs_error, err);
    }
    r.passed = r.max_rel_error <= kFormulaTolerance;
    if (!r.passed)
        throw ReportedError<GlReport>(ErrorCode::FormulaViolated,
                                      "path to node " + std::to_string(r.worst_node) + ": lhs " +
                                          std::to_string(r.worst_lhs) + " vs rhs " + std::to_string(r.worst_rhs),
                                      r);
    return r;
}

}  // namespace rbsde
