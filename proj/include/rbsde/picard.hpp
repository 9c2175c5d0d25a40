#pragma once

#include "rbsde/driver.hpp"
#include "rbsde/optional_process.hpp"
#include "rbsde/snell_mertens.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace rbsde {

/// Argument of the Picard map: the (y, z, ψ) processes the driver is frozen at.
struct PicardIterate {
    OptionalProcess y;
    NodeField z;
    MarkField psi;

    static PicardIterate constant(const Lattice& lat, double y0 = 0.0, double z0 = 0.0, double psi0 = 0.0) {
        PicardIterate it{OptionalProcess(lat.size(), y0), NodeField(lat.size(), z0),
                         MarkField(lat.size(), lat.mark_count())};
        for (double& p : it.psi.raw()) p = psi0;
        return it;
    }

    static PicardIterate from(const RbsdeSolution& sol) { return {sol.Y, sol.Z, sol.psi}; }
};

/// f_n = f(t_n, y(t_n+), z_n, ψ_n). The driver acts on (t_k, t_{k+1}], where y
/// equals its right limit at t_k.
inline NodeField freeze_driver(const Lattice& lat, const Driver& driver, const PicardIterate& at) {
    NodeField f(lat.size(), 0.0);
    for (std::size_t i = 0; i < lat.size(); ++i) {
        const NodeId n = node_id(i);
        if (lat.is_leaf(n)) continue;
        f[i] = driver(n, lat.time(n), at.y.vplus[i], at.z[i], at.psi.at(n));
    }
    return f;
}

/// |||Δy|||²_β + ‖Δz‖²_β + ‖Δψ‖²_{L²,β_π}
inline double combined_distance(const Lattice& lat, const PicardIterate& a, const PicardIterate& b,
                                double beta) {
    const auto dy = a.y - b.y;
    NodeField dz(lat.size());
    MarkField dpsi(lat.size(), lat.mark_count());
    for (std::size_t i = 0; i < lat.size(); ++i) dz[i] = a.z[i] - b.z[i];
    for (std::size_t j = 0; j < dpsi.raw().size(); ++j) dpsi.raw()[j] = a.psi.raw()[j] - b.psi.raw()[j];
    return sup_norm_beta(lat, dy, beta) + h2_norm_beta(lat, dz, beta) + lpi_norm_beta(lat, dpsi, beta);
}

struct PicardOptions {
    double beta = 25.0;
    /// ε in β >= 1/ε²; defaults to 1/sqrt(β) when unset.
    std::optional<double> epsilon;
    double tol = 1e-10;
    std::size_t max_iter = 200;
    std::optional<PicardIterate> initial;
};

struct PicardDiagnostics {
    double beta = 0.0;
    double epsilon = 0.0;
    std::vector<double> iterates;  ///< d_i = distance(Φ(x_{i-1}), x_{i-1})
    double measured_ratio = 0.0;   ///< max_i d_{i+1} / d_i over d_i > 0
    /// C_K = 3K², from (a+b+c)² <= 3(a²+b²+c²) applied to the Lipschitz bound.
    double c_k = 0.0;
    /// ε² C_K (5 + 16c²)(T+1) evaluated at c = 0, i.e. a lower bound of the
    /// contraction factor; the universal constant c is not known.
    double theoretical_factor_c0 = 0.0;
    bool converged = false;
    std::size_t iterations_used = 0;
};

struct PicardResult {
    RbsdeSolution solution;
    NodeField driver_values;  ///< driver frozen at the returned solution's input iterate
    PicardDiagnostics diagnostics;
};

/// Banach fixed-point iteration x_{i} = Φ(x_{i-1}), where Φ freezes the driver at
/// x_{i-1} and solves the resulting reflected equation by Snell induction.
inline PicardResult solve_picard(const Lattice& lat, const Driver& driver, const Obstacle& xi,
                                 const PicardOptions& opt = {}) {
    if (!(opt.tol > 0.0)) throw Error(ErrorCode::InvalidSpec, "Picard tolerance must be positive");
    PicardDiagnostics diag;
    diag.beta = opt.beta;
    diag.epsilon = opt.epsilon.value_or(opt.beta > 0.0 ? 1.0 / std::sqrt(opt.beta)
                                                       : std::numeric_limits<double>::infinity());
    diag.c_k = 3.0 * driver.lipschitz * driver.lipschitz;
    diag.theoretical_factor_c0 = diag.epsilon * diag.epsilon * diag.c_k * 5.0 * (lat.horizon() + 1.0);

    PicardIterate current = opt.initial.value_or(PicardIterate::constant(lat));
    PicardResult result;
    for (std::size_t i = 1; i <= opt.max_iter; ++i) {
        auto f = freeze_driver(lat, driver, current);
        auto sol = solve_frozen(lat, f, xi);
        auto next = PicardIterate::from(sol);
        const double d = combined_distance(lat, next, current, opt.beta);
        if (!diag.iterates.empty() && diag.iterates.back() > 0.0)
            diag.measured_ratio = std::max(diag.measured_ratio, d / diag.iterates.back());
        diag.iterates.push_back(d);
        diag.iterations_used = i;
        result.solution = std::move(sol);
        result.driver_values = std::move(f);
        current = std::move(next);
        if (d <= opt.tol) {
            diag.converged = true;
            break;
        }
    }
    result.diagnostics = diag;
    if (!diag.converged)
        throw ReportedError<PicardDiagnostics>(
            ErrorCode::NoConvergence,
            "no fixed point within " + std::to_string(opt.max_iter) + " iterations (last distance " +
                std::to_string(diag.iterates.empty() ? 0.0 : diag.iterates.back()) + ")",
            diag);
    return result;
}

/// Driver values f(t, Y, Z, ψ) evaluated at a solution itself. At a fixed point
/// these coincide with the values the solution was computed with.
inline NodeField driver_at_solution(const Lattice& lat, const Driver& driver, const RbsdeSolution& sol) {
    return freeze_driver(lat, driver, PicardIterate::from(sol));
}

// ---------------------------------------------------------------------------
// A-priori estimate for two frozen drivers sharing an obstacle.
// ---------------------------------------------------------------------------

struct AprioriReport {
    double beta = 0.0;
    double epsilon = 0.0;
    double z_part = 0.0;    ///< ‖Z¹ - Z²‖²_β
    double m_part = 0.0;    ///< ‖M¹ - M²‖²_{M²_β}
    double psi_part = 0.0;  ///< ‖ψ¹ - ψ²‖²_{L²,β_π}
    double lhs = 0.0;
    double rhs = 0.0;            ///< ε² ‖f¹ - f²‖²_β
    double y_sup_sq = 0.0;       ///< |||Y¹ - Y²|||²_β
    double implied_bdg = std::numeric_limits<double>::quiet_NaN();  ///< |||Ỹ|||² / (4ε²‖f̃‖²)
    bool holds = true;
};

/// Solves both equations and compares the two sides of the constant-free bound
///   ‖Z̃‖²_β + ‖M̃‖²_{M²_β} + ‖ψ̃‖²_{L²,β_π} <= ε² ‖f̃‖²_β,  β = 1/ε² + margin.
/// Throws EstimateViolated (carrying the report) when it fails.
inline AprioriReport apriori_check(const Lattice& lat, std::span<const double> f1,
                                   std::span<const double> f2, const Obstacle& xi, double epsilon,
                                   double margin = 1.0) {
    if (!(epsilon > 0.0) || !(margin > 0.0))
        throw Error(ErrorCode::InvalidSpec, "epsilon and margin must be positive");
    AprioriReport r;
    r.epsilon = epsilon;
    r.beta = 1.0 / (epsilon * epsilon) + margin;

    const auto s1 = solve_frozen(lat, f1, xi);
    const auto s2 = solve_frozen(lat, f2, xi);
    NodeField dz(lat.size()), dm(lat.size()), df(lat.size());
    MarkField dpsi(lat.size(), lat.mark_count());
    for (std::size_t i = 0; i < lat.size(); ++i) {
        dz[i] = s1.Z[i] - s2.Z[i];
        dm[i] = s1.M_incr[i] - s2.M_incr[i];
        df[i] = lat.is_leaf(node_id(i)) ? 0.0 : f1[i] - f2[i];
    }
    for (std::size_t j = 0; j < dpsi.raw().size(); ++j) dpsi.raw()[j] = s1.psi.raw()[j] - s2.psi.raw()[j];

    r.z_part = h2_norm_beta(lat, dz, r.beta);
    r.m_part = m2_norm_beta(lat, dm, r.beta);
    r.psi_part = lpi_norm_beta(lat, dpsi, r.beta);
    r.lhs = r.z_part + r.m_part + r.psi_part;
    const double f_norm = h2_norm_beta(lat, df, r.beta);
    r.rhs = epsilon * epsilon * f_norm;
    r.y_sup_sq = sup_norm_beta(lat, s1.Y - s2.Y, r.beta);
    if (f_norm > 0.0) r.implied_bdg = r.y_sup_sq / (4.0 * epsilon * epsilon * f_norm);

    r.holds = r.lhs <= r.rhs * (1.0 + 1e-12) + 1e-300;
    if (!r.holds)
        throw ReportedError<AprioriReport>(ErrorCode::EstimateViolated,
                                           "lhs " + std::to_string(r.lhs) + " exceeds rhs " +
                                               std::to_string(r.rhs),
                                           r);
    return r;
}

}  // namespace rbsde
