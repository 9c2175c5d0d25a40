#include "support/generators.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace rbsde;
using rbsde::testing::rng_for;

namespace {

Lattice binary(std::size_t steps) {
    LatticeSpec spec;
    spec.steps = steps;
    return Lattice(spec);
}

LadlagDecomposition random_decomposition(const Lattice& lat, std::mt19937_64& rng) {
    using rbsde::testing::uniform;
    LadlagDecomposition dec(lat.size());
    dec.y0 = uniform(rng, -2.0, 2.0);
    std::vector<double> incr;
    for (std::size_t i = 0; i < lat.size(); ++i) {
        const NodeId n = node_id(i);
        if (lat.is_leaf(n)) continue;
        dec.A_incr[i] = uniform(rng, -1.0, 1.0);
        dec.B_jump[i] = std::bernoulli_distribution(0.5)(rng) ? uniform(rng, -1.0, 1.0) : 0.0;
        incr.resize(lat.branch_count(n));
        for (double& x : incr) x = uniform(rng, -1.0, 1.0);
        const double mean = lat.cond_expect(n, incr);
        for (std::size_t b = 0; b < incr.size(); ++b) dec.N_incr[index(lat.child(n, b))] = incr[b] - mean;
    }
    return dec;
}

}  // namespace

TEST(Decomposition, ZeroSolutionGivesZeroParts) {
    const auto lat = binary(2);
    const auto xi = make_obstacle(
        lat, [](NodeId) { return std::pair{0.0, 0.0}; }, [](NodeId) { return 0.0; });
    const NodeField f(lat.size(), 0.0);
    const auto dec = from_solution(lat, f, solve_frozen(lat, f, xi));
    EXPECT_EQ(dec.y0, 0.0);
    for (std::size_t i = 0; i < lat.size(); ++i) {
        EXPECT_EQ(dec.N_incr[i], 0.0);
        EXPECT_EQ(dec.A_incr[i], 0.0);
        EXPECT_EQ(dec.B_jump[i], 0.0);
    }
}

TEST(Decomposition, ReconstructsASolvedInstance) {
    auto rng = rng_for(801, 0);
    LatticeSpec spec;
    spec.steps = 2;
    spec.marks = MarkSpace({{"u", 0.5, 0.3}});
    const Lattice lat(spec);
    const auto xi = random_obstacle(lat, rng);
    const auto f = random_frozen_driver(lat, rng);
    const auto sol = solve_frozen(lat, f, xi);
    const auto y = reconstruct(lat, from_solution(lat, f, sol));
    for (std::size_t i = 0; i < lat.size(); ++i) {
        EXPECT_NEAR(y.v[i], sol.Y.v[i], 1e-13);
        EXPECT_NEAR(y.vplus[i], sol.Y.vplus[i], 1e-13);
    }
}

TEST(Decomposition, CorruptedIntegrandIsDetected) {
    auto rng = rng_for(802, 0);
    const auto inst = rbsde::testing::frozen_instance(rng, 2);
    auto sol = solve_frozen(inst.lat, inst.f, inst.xi);
    sol.Z[0] += 0.5;
    try {
        from_solution(inst.lat, inst.f, sol);
        FAIL() << "expected ReconstructionFailed";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ReconstructionFailed);
    }
}

TEST(Formula, ConstantProcess) {
    const auto lat = binary(3);
    LadlagDecomposition dec(lat.size());
    dec.y0 = 1.3;
    for (double beta : {0.0, 1.0, 5.0})
        for (std::size_t k = 0; k <= lat.steps(); ++k) {
            const auto r = verify_formula(lat, dec, beta, k);
            const double c2 = 1.3 * 1.3;
            EXPECT_NEAR(r.worst_rhs, c2 + c2 * (std::exp(beta * lat.time_at(k)) - 1.0), 1e-12);
        }
}

TEST(Formula, PureRightJumpByHand) {
    const auto lat = binary(1);
    LadlagDecomposition dec(lat.size());
    dec.y0 = 2.0;
    dec.B_jump[0] = -1.0;
    const auto r = verify_formula(lat, dec, 0.0, 1);
    // 4 + 2·2·(−1) + (−1)² = 1
    EXPECT_EQ(r.worst_lhs, 1.0);
    EXPECT_EQ(r.worst_rhs, 1.0);
    EXPECT_TRUE(r.passed);
}

TEST(Formula, BrokenDecompositionIsCaught) {
    // a non-finite increment must fail the check rather than compare as equal
    const auto lat = binary(2);
    LadlagDecomposition dec(lat.size());
    dec.y0 = 1.0;
    dec.A_incr[0] = std::nan("");
    try {
        verify_formula(lat, dec, 1.0, 2);
        FAIL() << "expected FormulaViolated";
    } catch (const ReportedError<GlReport>& e) {
        EXPECT_EQ(e.code(), ErrorCode::FormulaViolated);
    }
}

// ---------------------------------------------------------------------------

TEST(FormulaProperty, HoldsOnSolvedInstances) {
    for (std::uint64_t k = 0; k < 100; ++k) {
        auto rng = rng_for(803, k);
        const Lattice lat(random_lattice_spec(rng, 4, true));
        const auto xi = random_obstacle(lat, rng);
        const auto f = random_frozen_driver(lat, rng);
        const auto dec = from_solution(lat, f, solve_frozen(lat, f, xi));
        for (double beta : {0.0, 1.0, 5.0})
            for (std::size_t t = 0; t <= lat.steps(); ++t)
                EXPECT_NO_THROW(verify_formula(lat, dec, beta, t)) << "instance " << k;
    }
}

TEST(FormulaProperty, HoldsOnRandomDecompositions) {
    for (std::uint64_t k = 0; k < 100; ++k) {
        auto rng = rng_for(804, k);
        const Lattice lat(rbsde::testing::any_lattice_spec(rng, 4));
        const auto dec = random_decomposition(lat, rng);
        for (double beta : {0.0, 1.0, 5.0})
            for (std::size_t t = 0; t <= lat.steps(); ++t)
                EXPECT_LE(verify_formula(lat, dec, beta, t).max_rel_error, kFormulaTolerance);
    }
}

TEST(FormulaProperty, WithoutJumpsAndWeightsItTelescopes) {
    auto rng = rng_for(805, 0);
    const auto lat = binary(3);
    auto dec = random_decomposition(lat, rng);
    for (double& b : dec.B_jump) b = 0.0;
    const auto y = reconstruct(lat, dec);
    const auto r = verify_formula(lat, dec, 0.0, 3);
    // Y_T² - Y_0² = Σ (2 Y_{k} ΔY_{k+1} + ΔY²) along each path
    const auto [first, last] = lat.leaves();
    for (std::size_t l = first; l < last; ++l) {
        double s = dec.y0 * dec.y0;
        const auto path = lat.path_to(node_id(l));
        for (std::size_t j = 1; j < path.size(); ++j) {
            const double a = y.v[index(path[j - 1])], b = y.v[index(path[j])];
            s += 2 * a * (b - a) + (b - a) * (b - a);
        }
        EXPECT_NEAR(s, y.v[l] * y.v[l], 1e-12);
    }
    EXPECT_TRUE(r.passed);
}
