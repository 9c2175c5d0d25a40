#pragma once

#include "rbsde/error.hpp"
#include "rbsde/lattice.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rbsde {

/// Generator f(ω, t, y, z, ψ) of the equation. The node stands for ω and fixes
/// the time; ψ is the vector of jump integrands, one per mark. `lipschitz` is
/// the declared constant K in
///   |f(y,z,ψ) - f(y',z',ψ')| <= K (|y-y'| + |z-z'| + ‖ψ-ψ'‖_{L²(μ)}).
struct Driver {
    using Fn = std::function<double(NodeId, double t, double y, double z, std::span<const double> psi)>;

    std::string label;
    double lipschitz = 0.0;
    Fn eval;
    /// True when eval ignores (y, z, ψ).
    bool frozen = false;

    double operator()(NodeId n, double t, double y, double z, std::span<const double> psi) const {
        return eval(n, t, y, z, psi);
    }
};

inline Driver zero_driver() {
    return {"zero", 0.0, [](NodeId, double, double, double, std::span<const double>) { return 0.0; }, true};
}

inline Driver constant_driver(double c) {
    return {"constant", 0.0, [c](NodeId, double, double, double, std::span<const double>) { return c; },
            true};
}

/// Driver frozen to one value per node, f(t, ω).
inline Driver frozen_driver(NodeField values, std::string label = "frozen") {
    return {std::move(label), 0.0,
            [values = std::move(values)](NodeId n, double, double, double, std::span<const double>) {
                return values[index(n)];
            },
            true};
}

/// f = -ρ y + a z + b Σ_u ψ(u) μ(u) + c.
inline Driver linear_driver(const Lattice& lat, double rho, double a, double b, double c = 0.0) {
    std::vector<double> mu;
    double mass = 0.0;
    for (const auto& m : lat.marks().marks()) {
        mu.push_back(m.intensity);
        mass += m.intensity;
    }
    // |Σ ψ μ| <= ‖ψ‖_{L²(μ)} sqrt(μ(U)) by Cauchy-Schwarz
    const double k = std::abs(rho) + std::abs(a) + std::abs(b) * std::sqrt(mass);
    return {"linear", k,
            [=](NodeId, double, double y, double z, std::span<const double> psi) {
                double jump = 0.0;
                for (std::size_t u = 0; u < psi.size(); ++u) jump += psi[u] * mu[u];
                return -rho * y + a * z + b * jump + c;
            },
            rho == 0.0 && a == 0.0 && (b == 0.0 || mass == 0.0)};
}

/// f = κ sin(y) + c.
inline Driver sine_driver(double kappa, double c = 0.0) {
    return {"sine", std::abs(kappa),
            [=](NodeId, double, double y, double, std::span<const double>) {
                return kappa * std::sin(y) + c;
            },
            kappa == 0.0};
}

using DriverParams = std::map<std::string, double>;

/// Registry of named drivers: zero, constant{c}, linear{rho,a,b,c}, sine{kappa,c}.
inline Driver make_driver(std::string_view name, const DriverParams& params, const Lattice& lat) {
    const auto get = [&](const char* key) {
        auto it = params.find(key);
        return it == params.end() ? 0.0 : it->second;
    };
    const auto allow = [&](std::initializer_list<std::string_view> keys) {
        for (const auto& [k, v] : params) {
            bool known = false;
            for (auto key : keys) known = known || k == key;
            if (!known)
                throw Error(ErrorCode::InvalidSpec,
                            "driver '" + std::string(name) + "' has no parameter '" + k + "'");
            if (!std::isfinite(v))
                throw Error(ErrorCode::InvalidSpec, "driver parameter '" + k + "' is not finite");
        }
    };
    if (name == "zero") {
        allow({});
        return zero_driver();
    }
    if (name == "constant") {
        allow({"c"});
        return constant_driver(get("c"));
    }
    if (name == "linear") {
        allow({"rho", "a", "b", "c"});
        return linear_driver(lat, get("rho"), get("a"), get("b"), get("c"));
    }
    if (name == "sine") {
        allow({"kappa", "c"});
        return sine_driver(get("kappa"), get("c"));
    }
    throw Error(ErrorCode::InvalidSpec, "unknown driver '" + std::string(name) + "'");
}

/// Largest observed |Δf| / (|Δy| + |Δz| + ‖Δψ‖_{L²(μ)}) over random probes.
/// A value above `lipschitz` disproves the declared constant.
inline double lipschitz_probe(const Driver& f, const Lattice& lat, std::mt19937_64& rng,
                              std::size_t probes = 1000, double scale = 5.0) {
    std::uniform_real_distribution<double> unif(-scale, scale);
    std::uniform_int_distribution<std::size_t> pick(0, lat.size() - 1);
    const std::size_t m = lat.mark_count();
    std::vector<double> p1(m), p2(m);
    double worst = 0.0;
    for (std::size_t i = 0; i < probes; ++i) {
        const NodeId n = node_id(pick(rng));
        const double t = lat.time(n);
        const double y1 = unif(rng), y2 = unif(rng), z1 = unif(rng), z2 = unif(rng);
        double dpsi = 0.0;
        for (std::size_t u = 0; u < m; ++u) {
            p1[u] = unif(rng);
            p2[u] = unif(rng);
            dpsi += (p1[u] - p2[u]) * (p1[u] - p2[u]) * lat.marks().intensity(u);
        }
        const double denom = std::abs(y1 - y2) + std::abs(z1 - z2) + std::sqrt(dpsi);
        if (denom == 0.0) continue;
        worst = std::max(worst, std::abs(f(n, t, y1, z1, p1) - f(n, t, y2, z2, p2)) / denom);
    }
    return worst;
}

}  // namespace rbsde
