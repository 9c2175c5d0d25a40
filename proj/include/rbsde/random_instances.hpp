#pragma once

#include "rbsde/lattice.hpp"
#include "rbsde/optional_process.hpp"

#include <algorithm>
#include <random>
#include <vector>

namespace rbsde {

struct RandomObstacleOptions {
    double low = -1.0;
    double high = 1.0;
    double jump_probability = 0.4;  ///< chance of a right jump at an internal node
    double max_jump = 1.0;
    bool upward_jumps = false;  ///< produce r.u.s.c. violations instead of downward jumps
    /// Keep every right limit at or below the highest child value, so the
    /// barrier never drops on all branches at once.
    bool left_usc = false;
};

/// Obstacle with independent uniform levels and random right jumps.
inline Obstacle random_obstacle(const Lattice& lat, std::mt19937_64& rng,
                                const RandomObstacleOptions& opt = {}) {
    std::uniform_real_distribution<double> level(opt.low, opt.high);
    std::uniform_real_distribution<double> jump(0.0, opt.max_jump);
    std::bernoulli_distribution has_jump(opt.jump_probability);
    OptionalProcess p(lat.size());
    for (std::size_t i = 0; i < lat.size(); ++i) {
        p.vplus[i] = level(rng);
        p.v[i] = p.vplus[i];
        if (!lat.is_leaf(node_id(i)) && has_jump(rng))
            p.v[i] += opt.upward_jumps ? -jump(rng) : jump(rng);
    }
    if (opt.left_usc) {
        for (std::size_t i = lat.size(); i-- > 0;) {
            const NodeId n = node_id(i);
            if (lat.is_leaf(n)) continue;
            double highest = p.v[index(lat.child(n, 0))];
            for (std::size_t b = 1; b < lat.branch_count(n); ++b)
                highest = std::max(highest, p.v[index(lat.child(n, b))]);
            if (highest < p.vplus[i]) {
                p.v[i] -= p.vplus[i] - highest;
                p.vplus[i] = highest;
            }
        }
    }
    return make_obstacle(lat, std::move(p));
}

/// Frozen driver with one uniform value per internal node.
inline NodeField random_frozen_driver(const Lattice& lat, std::mt19937_64& rng, double amplitude = 1.0) {
    std::uniform_real_distribution<double> unif(-amplitude, amplitude);
    NodeField f(lat.size(), 0.0);
    for (std::size_t i = 0; i < lat.size(); ++i)
        if (!lat.is_leaf(node_id(i))) f[i] = unif(rng);
    return f;
}

/// Small lattice drawn from {binary, binary + one mark} with 1..max_steps steps.
inline LatticeSpec random_lattice_spec(std::mt19937_64& rng, std::size_t max_steps = 3,
                                       bool allow_trinomial = false) {
    std::uniform_int_distribution<std::size_t> steps(1, max_steps);
    std::bernoulli_distribution with_mark(0.5);
    std::uniform_real_distribution<double> intensity(0.1, 0.8);
    LatticeSpec spec;
    spec.steps = steps(rng);
    spec.horizon = 1.0;
    if (allow_trinomial && std::bernoulli_distribution(0.3)(rng)) spec.brownian = BrownianScheme::trinomial;
    if (with_mark(rng)) spec.marks = MarkSpace({{"u", 0.5, intensity(rng)}});
    return spec;
}

}  // namespace rbsde
