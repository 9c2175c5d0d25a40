#pragma once

#include "rbsde/lattice.hpp"
#include "rbsde/optional_process.hpp"
#include "rbsde/representation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace rbsde {

/// Full solution (Y, Z, ψ, M, A, C) of the reflected equation on a lattice.
///
/// Conventions, for a node n at t_k with child c:
///   Y.v(c)  = Y.vplus(n) - f(n) Δt_k - A_incr(n) + ΔN(c)
///   Y.v(n)  = Y.vplus(n) + C_jump(n)
///   ΔN(c)   = Z(n) ΔW_c + Σ_u ψ(n,u) Δπ̃_c(u) + M_incr(c)
/// A_incr(n) is the increment of the predictable process over (t_k, t_{k+1}] and
/// is F_{t_k}-measurable; C_jump(n) is the right jump of C at t_k. On a grid the
/// continuous part of A vanishes, so only its jumps carry a Skorokhod condition.
struct RbsdeSolution {
    OptionalProcess Y;
    NodeField Z;
    MarkField psi;
    NodeField M_incr;  ///< orthogonal martingale increment arriving at each node
    NodeField A_incr;
    NodeField C_jump;

    RbsdeSolution() = default;
    explicit RbsdeSolution(const Lattice& lat)
        : Y(lat.size()),
          Z(lat.size(), 0.0),
          psi(lat.size(), lat.mark_count()),
          M_incr(lat.size(), 0.0),
          A_incr(lat.size(), 0.0),
          C_jump(lat.size(), 0.0) {}
};

/// Residuals of the solution conditions. All entries are maxima over nodes.
struct SkorokhodReport {
    double a_residual = 0.0;       ///< |(Y.vplus - ξ.vplus) A_incr|
    double c_residual = 0.0;       ///< |(Y.v - ξ.v) C_jump|
    double floor_violation = 0.0;  ///< (ξ - Y)^+ on both sides
    double dynamics_residual = 0.0;
    double right_jump_residual = 0.0;
    double terminal_residual = 0.0;
    double martingale_residual = 0.0;  ///< orthogonality of M to 1, ΔW, Δπ̃
    double sign_violation = 0.0;       ///< negative A or C increments

    double worst() const noexcept {
        return std::max({a_residual, c_residual, floor_violation, dynamics_residual,
                         right_jump_residual, terminal_residual, martingale_residual,
                         sign_violation});
    }
    bool ok(double tol) const noexcept { return worst() <= tol; }
};

inline double positive_part(double x) noexcept { return x > 0.0 ? x : 0.0; }

/// Backward Snell induction with the Mertens split for a driver frozen to one
/// value per node (leaf entries are ignored).
inline RbsdeSolution solve_frozen(const Lattice& lat, std::span<const double> f, const Obstacle& xi) {
    RbsdeSolution sol(lat);
    const auto [leaf_first, leaf_last] = lat.leaves();
    for (std::size_t i = leaf_first; i < leaf_last; ++i) {
        sol.Y.v[i] = xi.process.v[i];
        sol.Y.vplus[i] = xi.process.v[i];
    }

    std::vector<double> next, incr;
    for (std::size_t k = lat.steps(); k-- > 0;) {
        const auto [first, last] = lat.level(k);
        const double h = lat.dt(k);
        for (std::size_t i = first; i < last; ++i) {
            const NodeId n = node_id(i);
            const std::size_t nb = lat.branch_count(n);
            next.resize(nb);
            for (std::size_t b = 0; b < nb; ++b) next[b] = sol.Y.v[index(lat.child(n, b))];
            const double mean = lat.cond_expect(n, next);
            const double cont = mean + f[i] * h;

            const double xi_plus = xi.process.vplus[i];
            const double xi_now = xi.process.v[i];
            sol.A_incr[i] = positive_part(xi_plus - cont);
            sol.Y.vplus[i] = std::max(xi_plus, cont);
            sol.C_jump[i] = positive_part(xi_now - sol.Y.vplus[i]);
            sol.Y.v[i] = std::max(xi_now, sol.Y.vplus[i]);

            incr.resize(nb);
            for (std::size_t b = 0; b < nb; ++b) incr[b] = next[b] - mean;
            const auto rep = represent(lat, n, incr);
            sol.Z[i] = rep.z;
            std::copy(rep.psi.begin(), rep.psi.end(), sol.psi.at(n).begin());
            for (std::size_t b = 0; b < nb; ++b) sol.M_incr[index(lat.child(n, b))] = rep.residual[b];
        }
    }
    return sol;
}

/// ΔN(c) = Z ΔW + Σ ψ Δπ̃ + ΔM recombined from the stored components.
inline double martingale_increment(const Lattice& lat, const RbsdeSolution& sol, NodeId n,
                                   std::size_t branch) {
    const NodeId c = lat.child(n, branch);
    double dn = sol.Z[index(n)] * lat.node(c).dw + sol.M_incr[index(c)];
    for (std::size_t u = 0; u < lat.mark_count(); ++u)
        dn += sol.psi(n, u) * lat.compensated_jump_increment(n, branch, u);
    return dn;
}

inline SkorokhodReport check_solution(const Lattice& lat, std::span<const double> f,
                                      const Obstacle& xi, const RbsdeSolution& sol) {
    SkorokhodReport r;
    std::vector<double> resid;
    for (std::size_t i = 0; i < lat.size(); ++i) {
        const NodeId n = node_id(i);
        const double y = sol.Y.v[i], yp = sol.Y.vplus[i];
        const double x = xi.process.v[i], xp = xi.process.vplus[i];
        r.floor_violation = std::max(r.floor_violation, positive_part(x - y));
        if (lat.is_leaf(n)) {
            r.terminal_residual = std::max(r.terminal_residual, std::abs(y - x));
            continue;
        }
        r.floor_violation = std::max(r.floor_violation, positive_part(xp - yp));
        r.a_residual = std::max(r.a_residual, std::abs((yp - xp) * sol.A_incr[i]));
        r.c_residual = std::max(r.c_residual, std::abs((y - x) * sol.C_jump[i]));
        r.right_jump_residual = std::max(r.right_jump_residual, std::abs(y - yp - sol.C_jump[i]));
        r.sign_violation =
            std::max({r.sign_violation, positive_part(-sol.A_incr[i]), positive_part(-sol.C_jump[i])});

        const double drift = yp - f[i] * lat.dt(lat.step(n)) - sol.A_incr[i];
        const std::size_t nb = lat.branch_count(n);
        resid.resize(nb);
        for (std::size_t b = 0; b < nb; ++b) {
            const NodeId c = lat.child(n, b);
            const double predicted = drift + martingale_increment(lat, sol, n, b);
            r.dynamics_residual = std::max(r.dynamics_residual, std::abs(sol.Y.v[index(c)] - predicted));
            resid[b] = sol.M_incr[index(c)];
        }
        r.martingale_residual = std::max(r.martingale_residual, orthogonality_defect(lat, n, resid));
    }
    return r;
}

// ---------------------------------------------------------------------------
// Stopping times
// ---------------------------------------------------------------------------

enum class StopDecision : std::uint8_t {
    continue_on,
    stop_at,     ///< stop at t, collecting the value
    stop_after,  ///< stop just after t, collecting the right limit
};

/// Adapted stop/continue rule, one decision per node. Along a path from the
/// starting node the stopping point is the first node whose decision is not
/// `continue_on`. Leaves always stop at T.
struct StoppingTime {
    std::vector<StopDecision> decision;

    StopDecision at(NodeId n) const { return decision[index(n)]; }
};

inline StoppingTime terminal_stopping_time(const Lattice& lat) {
    StoppingTime tau{std::vector<StopDecision>(lat.size(), StopDecision::continue_on)};
    const auto [first, last] = lat.leaves();
    for (std::size_t i = first; i < last; ++i) tau.decision[i] = StopDecision::stop_at;
    return tau;
}

/// Throws InvalidStoppingTime if some path from `from` runs past T.
inline void validate_stopping_time(const Lattice& lat, const StoppingTime& tau, NodeId from) {
    if (tau.decision.size() != lat.size())
        throw Error(ErrorCode::InvalidStoppingTime, "decision vector does not cover the lattice");
    std::vector<NodeId> stack{from};
    while (!stack.empty()) {
        const NodeId n = stack.back();
        stack.pop_back();
        const auto d = tau.at(n);
        if (lat.is_leaf(n)) {
            if (d != StopDecision::stop_at)
                throw Error(ErrorCode::InvalidStoppingTime,
                            "leaf " + std::to_string(index(n)) + " must stop at T");
            continue;
        }
        if (d != StopDecision::continue_on) continue;
        for (std::size_t b = 0; b < lat.branch_count(n); ++b) stack.push_back(lat.child(n, b));
    }
}

/// E[ξ at the stopping point + Σ f Δt before it | F_from] for a frozen driver.
inline double stopped_value(const Lattice& lat, std::span<const double> f, const Obstacle& xi,
                            const StoppingTime& tau, NodeId from) {
    validate_stopping_time(lat, tau, from);
    const std::function<double(NodeId)> value = [&](NodeId n) -> double {
        switch (tau.at(n)) {
            case StopDecision::stop_at: return xi.value(n);
            case StopDecision::stop_after: return xi.right_limit(n);
            case StopDecision::continue_on: break;
        }
        double s = 0.0;
        const auto kids = lat.children(n);
        for (std::size_t b = 0; b < kids.size(); ++b) s += kids[b].prob * value(lat.child(n, b));
        return s + f[index(n)] * lat.dt(lat.step(n));
    };
    return value(from);
}

/// Number of two-sided stopping times on the subtree of `from`, saturated at `cap`.
inline std::uint64_t count_policies(const Lattice& lat, NodeId from, std::uint64_t cap) {
    if (lat.is_leaf(from)) return 1;
    std::uint64_t product = 1;
    for (std::size_t b = 0; b < lat.branch_count(from); ++b) {
        const std::uint64_t c = count_policies(lat, lat.child(from, b), cap);
        if (c > cap || product > cap / c) return cap + 1;
        product *= c;
    }
    return product + 2 > cap ? cap + 1 : product + 2;
}

inline constexpr std::uint64_t kDefaultPolicyLimit = 100'000'000;

namespace detail {

/// Values of every stopping policy on the subtree of `n`, measured from `n`.
inline std::vector<double> policy_values(const Lattice& lat, std::span<const double> f,
                                         const Obstacle& xi, NodeId n) {
    if (lat.is_leaf(n)) return {xi.value(n)};
    const auto kids = lat.children(n);
    std::vector<std::vector<double>> lists;
    lists.reserve(kids.size());
    std::size_t total = 1;
    for (std::size_t b = 0; b < kids.size(); ++b) {
        lists.push_back(policy_values(lat, f, xi, lat.child(n, b)));
        total *= lists.back().size();
    }
    std::vector<double> out;
    out.reserve(total + 2);
    out.push_back(xi.value(n));
    out.push_back(xi.right_limit(n));
    const double drift = f[index(n)] * lat.dt(lat.step(n));
    const std::function<void(std::size_t, double)> expand = [&](std::size_t j, double partial) {
        if (j == lists.size()) {
            out.push_back(partial + drift);
            return;
        }
        for (double v : lists[j]) expand(j + 1, partial + kids[j].prob * v);
    };
    expand(0, 0.0);
    return out;
}

}  // namespace detail

/// Best expected stopped reward from `from`, obtained by evaluating every
/// two-sided stopping time on its subtree one by one.
inline double oracle_value(const Lattice& lat, std::span<const double> f, const Obstacle& xi,
                           NodeId from, std::uint64_t max_policies = kDefaultPolicyLimit) {
    const auto count = count_policies(lat, from, max_policies);
    if (count > max_policies)
        throw Error(ErrorCode::TooManyPolicies,
                    "subtree of node " + std::to_string(index(from)) + " has more than " +
                        std::to_string(max_policies) + " stopping policies");
    if (lat.is_leaf(from)) return xi.value(from);

    const auto kids = lat.children(from);
    std::vector<std::vector<double>> lists;
    for (std::size_t b = 0; b < kids.size(); ++b)
        lists.push_back(detail::policy_values(lat, f, xi, lat.child(from, b)));

    double best = std::max(xi.value(from), xi.right_limit(from));
    const double drift = f[index(from)] * lat.dt(lat.step(from));
    // The top-level product is streamed; it can be far larger than any child list.
    const std::function<void(std::size_t, double)> expand = [&](std::size_t j, double partial) {
        if (j == lists.size()) {
            best = std::max(best, partial + drift);
            return;
        }
        for (double v : lists[j]) expand(j + 1, partial + kids[j].prob * v);
    };
    expand(0, 0.0);
    return best;
}

/// Every two-sided stopping time on the subtree of `from`, materialised.
/// Meant for small trees; throws TooManyPolicies beyond `limit`.
inline std::vector<StoppingTime> enumerate_stopping_times(const Lattice& lat, NodeId from,
                                                          std::uint64_t limit = 100'000) {
    const auto count = count_policies(lat, from, limit);
    if (count > limit)
        throw Error(ErrorCode::TooManyPolicies,
                    "more than " + std::to_string(limit) + " stopping times to enumerate");

    using Assignment = std::vector<std::pair<NodeId, StopDecision>>;
    const std::function<std::vector<Assignment>(NodeId)> policies = [&](NodeId n) {
        if (lat.is_leaf(n)) return std::vector<Assignment>{{{n, StopDecision::stop_at}}};
        std::vector<Assignment> out{{{n, StopDecision::stop_at}}, {{n, StopDecision::stop_after}}};
        std::vector<Assignment> partial{{{n, StopDecision::continue_on}}};
        for (std::size_t b = 0; b < lat.branch_count(n); ++b) {
            const auto sub = policies(lat.child(n, b));
            std::vector<Assignment> grown;
            grown.reserve(partial.size() * sub.size());
            for (const auto& p : partial)
                for (const auto& s : sub) {
                    auto a = p;
                    a.insert(a.end(), s.begin(), s.end());
                    grown.push_back(std::move(a));
                }
            partial = std::move(grown);
        }
        out.insert(out.end(), partial.begin(), partial.end());
        return out;
    };

    std::vector<StoppingTime> out;
    for (const auto& a : policies(from)) {
        auto tau = terminal_stopping_time(lat);
        for (const auto& [n, d] : a) tau.decision[index(n)] = d;
        out.push_back(std::move(tau));
    }
    return out;
}

}  // namespace rbsde
