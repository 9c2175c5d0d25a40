#pragma once

#include "rbsde/lattice.hpp"

#include <cmath>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace rbsde {

/// Adapted làdlàg process on a lattice: the value at each grid time and the
/// right limit held on the open interval up to the next grid time. Along a
/// branch, the left limit at a child is the parent's right limit.
struct OptionalProcess {
    NodeField v;
    NodeField vplus;

    OptionalProcess() = default;
    explicit OptionalProcess(std::size_t nodes, double fill = 0.0) : v(nodes, fill), vplus(nodes, fill) {}

    std::size_t size() const noexcept { return v.size(); }
    double value(NodeId n) const { return v[index(n)]; }
    double right_limit(NodeId n) const { return vplus[index(n)]; }
    /// Right jump φ(t+) - φ(t).
    double right_jump(NodeId n) const { return vplus[index(n)] - v[index(n)]; }
};

inline OptionalProcess operator-(const OptionalProcess& a, const OptionalProcess& b) {
    OptionalProcess out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out.v[i] = a.v[i] - b.v[i];
        out.vplus[i] = a.vplus[i] - b.vplus[i];
    }
    return out;
}

/// Lower barrier. Leaves hold the terminal value on both sides. Nodes with an
/// upward right jump (v < vplus) break right upper-semicontinuity and are
/// listed in `rusc_violations` instead of being rejected.
struct Obstacle {
    OptionalProcess process;
    std::vector<NodeId> rusc_violations;

    double value(NodeId n) const { return process.value(n); }
    double right_limit(NodeId n) const { return process.right_limit(n); }
    bool is_rusc() const noexcept { return rusc_violations.empty(); }
};

using ObstacleBuilder = std::function<std::pair<double, double>(NodeId)>;
using TerminalBuilder = std::function<double(NodeId)>;

inline Obstacle make_obstacle(const Lattice& lat, const ObstacleBuilder& builder,
                              const TerminalBuilder& terminal) {
    Obstacle ob{OptionalProcess(lat.size()), {}};
    for (std::size_t i = 0; i < lat.size(); ++i) {
        const NodeId n = node_id(i);
        if (lat.is_leaf(n)) {
            const double xi_T = terminal(n);
            ob.process.v[i] = xi_T;
            ob.process.vplus[i] = xi_T;
            continue;
        }
        const auto [value, right] = builder(n);
        ob.process.v[i] = value;
        ob.process.vplus[i] = right;
        if (value < right) ob.rusc_violations.push_back(n);
    }
    return ob;
}

/// Obstacle from a fully specified process; leaf right limits are overwritten
/// with the leaf values.
inline Obstacle make_obstacle(const Lattice& lat, OptionalProcess process) {
    return make_obstacle(
        lat, [&](NodeId n) { return std::pair{process.value(n), process.right_limit(n)}; },
        [&](NodeId n) { return process.value(n); });
}

// ---------------------------------------------------------------------------
// Weighted norms. Every quantity is an exact finite sum over the tree; the
// squared norms are returned.
// ---------------------------------------------------------------------------

/// ∫_{t_k}^{t_{k+1}} e^{βs} ds in closed form.
inline double interval_weight(const Lattice& lat, std::size_t k, double beta) {
    if (beta == 0.0) return lat.dt(k);
    return (std::exp(beta * lat.time_at(k + 1)) - std::exp(beta * lat.time_at(k))) / beta;
}

struct NormReport {
    double beta = 0.0;
    double sup_norm_sq = 0.0;
    double h2_norm_sq = 0.0;
    double lpi_norm_sq = 0.0;
    double m2_norm_sq = 0.0;
};

/// E[max over the path of e^{βt} max(φ(t)^2, φ(t+)^2)]. Leaves contribute only
/// their value; the right limit at T lies outside the horizon.
inline double sup_norm_beta(const Lattice& lat, const OptionalProcess& phi, double beta) {
    NodeField running(lat.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < lat.size(); ++i) {
        const NodeId n = node_id(i);
        const double w = std::exp(beta * lat.time(n));
        double local = phi.v[i] * phi.v[i];
        if (!lat.is_leaf(n)) local = std::max(local, phi.vplus[i] * phi.vplus[i]);
        const double prev = i == 0 ? 0.0 : running[index(lat.parent(n))];
        running[i] = std::max(prev, w * local);
        if (lat.is_leaf(n)) total += lat.path_probability(n) * running[i];
    }
    return total;
}

/// E[Σ_k φ_k^2 ∫_{t_k}^{t_{k+1}} e^{βs} ds] for an integrand held constant on
/// each interval (one value per internal node).
inline double h2_norm_beta(const Lattice& lat, std::span<const double> integrand, double beta) {
    std::vector<double> w(lat.steps());
    for (std::size_t k = 0; k < lat.steps(); ++k) w[k] = interval_weight(lat, k, beta);
    double total = 0.0;
    for (std::size_t i = 0; i < lat.size(); ++i) {
        const NodeId n = node_id(i);
        if (lat.is_leaf(n)) continue;
        total += lat.path_probability(n) * w[lat.step(n)] * integrand[i] * integrand[i];
    }
    return total;
}

/// ‖φ‖²_β of a làdlàg process: on each open interval the process equals its right limit.
inline double h2_norm_beta(const Lattice& lat, const OptionalProcess& phi, double beta) {
    return h2_norm_beta(lat, std::span<const double>(phi.vplus), beta);
}

/// E[Σ_k e^{βt_k} Σ_u ψ_k(u)^2 μ(u) Δt_k].
inline double lpi_norm_beta(const Lattice& lat, const MarkField& psi, double beta) {
    double total = 0.0;
    for (std::size_t i = 0; i < lat.size(); ++i) {
        const NodeId n = node_id(i);
        if (lat.is_leaf(n)) continue;
        const auto k = lat.step(n);
        double s = 0.0;
        for (std::size_t u = 0; u < lat.mark_count(); ++u)
            s += psi(n, u) * psi(n, u) * lat.marks().intensity(u);
        total += lat.path_probability(n) * std::exp(beta * lat.time_at(k)) * s * lat.dt(k);
    }
    return total;
}

/// E[Σ_k e^{βt_{k+1}} (ΔM_{k+1})^2], with increments stored on the node they arrive at.
inline double m2_norm_beta(const Lattice& lat, std::span<const double> increments, double beta) {
    double total = 0.0;
    for (std::size_t i = 1; i < lat.size(); ++i) {
        const NodeId n = node_id(i);
        total += lat.path_probability(n) * std::exp(beta * lat.time(n)) * increments[i] * increments[i];
    }
    return total;
}

}  // namespace rbsde
