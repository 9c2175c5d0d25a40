#pragma once

#include "rbsde/error.hpp"
#include "rbsde/lattice.hpp"
#include "rbsde/optional_process.hpp"
#include "rbsde/random_instances.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace rbsde {

/// Declarative obstacle description, as read from an experiment config.
///
///   constant  {value}
///   step      {base, jump, drop}, times: grid indices with a downward right jump
///             of size `jump`; from grid index `drop_at` on, the level falls by `drop`
///   put       {strike, spot, sigma, geometric}: (strike - X)^+
///   path_max  {strike, spot, sigma, geometric}: (max_{s<=t} X_s - strike)^+
///   digital   {barrier, payoff, spot, sigma, geometric}: payoff 1{X >= barrier} at t,
///             payoff 1{X > barrier} just after t
///   random    {low, high, jump_probability, max_jump, upward, left_usc}
///   explicit  node_values: one (v, vplus) pair per node in breadth-first order
///
/// X = spot + sigma W + Σ mark sizes, or spot exp(sigma W - sigma² t / 2 + Σ sizes) when geometric = 1.
struct ObstacleSpec {
    std::string builder = "constant";
    std::map<std::string, double> params;
    std::vector<std::size_t> times;
    std::vector<std::pair<double, double>> node_values;
};

namespace detail {

inline double param(const ObstacleSpec& spec, const char* key, double fallback) {
    auto it = spec.params.find(key);
    return it == spec.params.end() ? fallback : it->second;
}

inline void allow_params(const ObstacleSpec& spec, std::initializer_list<std::string_view> keys) {
    for (const auto& [k, v] : spec.params) {
        if (std::find(keys.begin(), keys.end(), k) == keys.end())
            throw Error(ErrorCode::InvalidSpec, "obstacle '" + spec.builder + "' has no parameter '" + k + "'");
        if (!std::isfinite(v)) throw Error(ErrorCode::InvalidSpec, "obstacle parameter '" + k + "' is not finite");
    }
}

inline double state(const Lattice& lat, NodeId n, double spot, double sigma, bool geometric) {
    const auto& nd = lat.node(n);
    if (geometric) return spot * std::exp(sigma * nd.brownian - 0.5 * sigma * sigma * lat.time(n) + nd.jump_sum);
    return spot + sigma * nd.brownian + nd.jump_sum;
}

}  // namespace detail

inline Obstacle build_obstacle(const Lattice& lat, const ObstacleSpec& spec, std::uint64_t seed = 0) {
    using detail::param;
    const auto same_both_sides = [&](auto level) {
        return make_obstacle(
            lat, [&](NodeId n) { return std::pair{level(n), level(n)}; }, [&](NodeId n) { return level(n); });
    };
    const double spot = param(spec, "spot", 1.0);
    const double sigma = param(spec, "sigma", 0.2);
    const bool geometric = param(spec, "geometric", 0.0) != 0.0;

    if (spec.builder == "constant") {
        detail::allow_params(spec, {"value"});
        const double c = param(spec, "value", 0.0);
        return same_both_sides([c](NodeId) { return c; });
    }
    if (spec.builder == "step") {
        detail::allow_params(spec, {"base", "jump", "drop", "drop_at"});
        const double base = param(spec, "base", 0.0), jump = param(spec, "jump", 1.0);
        const double drop = param(spec, "drop", 0.0);
        const double drop_at = param(spec, "drop_at", static_cast<double>(lat.steps() + 1));
        for (auto k : spec.times)
            if (k >= lat.steps())
                throw Error(ErrorCode::InvalidSpec, "step obstacle: jump time index must be below the horizon");
        const auto level = [&](NodeId n) {
            return static_cast<double>(lat.step(n)) >= drop_at ? base - drop : base;
        };
        return make_obstacle(
            lat,
            [&](NodeId n) {
                const bool jumps = std::find(spec.times.begin(), spec.times.end(), lat.step(n)) != spec.times.end();
                return std::pair{level(n) + (jumps ? jump : 0.0), level(n)};
            },
            level);
    }
    if (spec.builder == "put") {
        detail::allow_params(spec, {"strike", "spot", "sigma", "geometric"});
        const double strike = param(spec, "strike", 1.0);
        return same_both_sides([&](NodeId n) {
            return std::max(strike - detail::state(lat, n, spot, sigma, geometric), 0.0);
        });
    }
    if (spec.builder == "path_max") {
        detail::allow_params(spec, {"strike", "spot", "sigma", "geometric"});
        const double strike = param(spec, "strike", 1.0);
        NodeField running(lat.size());
        for (std::size_t i = 0; i < lat.size(); ++i) {
            const double x = detail::state(lat, node_id(i), spot, sigma, geometric);
            running[i] = i == 0 ? x : std::max(x, running[index(lat.parent(node_id(i)))]);
        }
        return same_both_sides([&](NodeId n) { return std::max(running[index(n)] - strike, 0.0); });
    }
    if (spec.builder == "digital") {
        detail::allow_params(spec, {"barrier", "payoff", "spot", "sigma", "geometric"});
        const double barrier = param(spec, "barrier", 1.0), payoff = param(spec, "payoff", 1.0);
        const auto x = [&](NodeId n) { return detail::state(lat, n, spot, sigma, geometric); };
        return make_obstacle(
            lat,
            [&](NodeId n) {
                return std::pair{x(n) >= barrier ? payoff : 0.0, x(n) > barrier ? payoff : 0.0};
            },
            [&](NodeId n) { return x(n) >= barrier ? payoff : 0.0; });
    }
    if (spec.builder == "random") {
        detail::allow_params(spec, {"low", "high", "jump_probability", "max_jump", "upward", "left_usc"});
        RandomObstacleOptions opt;
        opt.low = param(spec, "low", opt.low);
        opt.high = param(spec, "high", opt.high);
        opt.jump_probability = param(spec, "jump_probability", opt.jump_probability);
        opt.max_jump = param(spec, "max_jump", opt.max_jump);
        opt.upward_jumps = param(spec, "upward", 0.0) != 0.0;
        opt.left_usc = param(spec, "left_usc", 0.0) != 0.0;
        if (!(opt.low <= opt.high) || opt.jump_probability < 0.0 || opt.jump_probability > 1.0 || opt.max_jump < 0.0)
            throw Error(ErrorCode::InvalidSpec, "random obstacle: inconsistent parameters");
        std::mt19937_64 rng(seed);
        return random_obstacle(lat, rng, opt);
    }
    if (spec.builder == "explicit") {
        detail::allow_params(spec, {});
        if (spec.node_values.size() != lat.size())
            throw Error(ErrorCode::InvalidSpec, "explicit obstacle needs " + std::to_string(lat.size()) +
                                                    " node values, got " + std::to_string(spec.node_values.size()));
        return make_obstacle(
            lat, [&](NodeId n) { return spec.node_values[index(n)]; },
            [&](NodeId n) { return spec.node_values[index(n)].first; });
    }
    throw Error(ErrorCode::InvalidSpec, "unknown obstacle builder '" + spec.builder + "'");
}

/// Same obstacle lifted by `delta` on both sides.
inline Obstacle shifted(const Lattice& lat, const Obstacle& xi, double delta) {
    OptionalProcess p = xi.process;
    for (auto& x : p.v) x += delta;
    for (auto& x : p.vplus) x += delta;
    return make_obstacle(lat, std::move(p));
}

}  // namespace rbsde
