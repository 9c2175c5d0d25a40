#include "support/generators.hpp"

#include <gtest/gtest.h>

#include <array>

using namespace rbsde;
using rbsde::testing::rng_for;

namespace {

LatticeSpec one_step(double mu = -1.0) {
    LatticeSpec spec;
    spec.steps = 1;
    spec.horizon = 1.0;
    if (mu >= 0.0) spec.marks = MarkSpace({{"u", 1.0, mu}});
    return spec;
}

}  // namespace

TEST(Lattice, OneStepBinaryHasTwoHalfBranches) {
    const Lattice lat(one_step());
    ASSERT_EQ(lat.branch_count(lat.root()), 2u);
    const auto kids = lat.children(lat.root());
    EXPECT_DOUBLE_EQ(kids[0].prob, 0.5);
    EXPECT_DOUBLE_EQ(kids[1].prob, 0.5);
    EXPECT_DOUBLE_EQ(std::abs(kids[0].dw), 1.0);
    EXPECT_DOUBLE_EQ(kids[0].dw + kids[1].dw, 0.0);
}

TEST(Lattice, OneMarkSplitsIntoFourBranches) {
    const Lattice lat(one_step(0.2));
    const auto kids = lat.children(lat.root());
    ASSERT_EQ(kids.size(), 4u);
    const std::array<double, 4> probs{0.4, 0.4, 0.1, 0.1};
    const std::array<int, 4> marks{kNoJump, kNoJump, 0, 0};
    for (std::size_t b = 0; b < 4; ++b) {
        EXPECT_NEAR(kids[b].prob, probs[b], 1e-15) << "branch " << b;
        EXPECT_EQ(kids[b].mark, marks[b]) << "branch " << b;
    }
}

TEST(Lattice, MomentConditionsSolvedByHandMatchTheBuild) {
    // Four unknown probabilities with p1 = p2, p3 = p4 (symmetry in dW) and
    // p3 + p4 = mu dt, p1 + p2 + p3 + p4 = 1 give (1 - mu dt)/2 and mu dt/2.
    const double mu = 0.2, dt = 1.0;
    const Lattice lat(one_step(mu));
    const auto kids = lat.children(lat.root());
    EXPECT_NEAR(kids[0].prob, (1 - mu * dt) / 2, 1e-15);
    EXPECT_NEAR(kids[2].prob, mu * dt / 2, 1e-15);
    EXPECT_LE(lat.check_invariants().worst(), 1e-12);
}

TEST(Lattice, TwoStepBinaryHasSevenNodes) {
    LatticeSpec spec;
    spec.steps = 2;
    const Lattice lat(spec);
    EXPECT_EQ(lat.size(), 7u);
    EXPECT_EQ(lat.level(1), (std::pair<std::size_t, std::size_t>{1, 3}));
    EXPECT_EQ(lat.leaves(), (std::pair<std::size_t, std::size_t>{3, 7}));
}

TEST(Lattice, TrinomialBranchesMatchMoments) {
    LatticeSpec spec;
    spec.steps = 1;
    spec.horizon = 0.5;
    spec.brownian = BrownianScheme::trinomial;
    const Lattice lat(spec);
    const auto kids = lat.children(lat.root());
    ASSERT_EQ(kids.size(), 3u);
    double mean = 0.0, var = 0.0;
    for (const auto& k : kids) {
        mean += k.prob * k.dw;
        var += k.prob * k.dw * k.dw;
    }
    EXPECT_NEAR(mean, 0.0, 1e-15);
    EXPECT_NEAR(var, 0.5, 1e-15);
}

TEST(Lattice, RejectsInvalidSpecs) {
    const auto code_of = [](const LatticeSpec& s) {
        try {
            Lattice lat(s);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::FormulaViolated;  // sentinel: nothing thrown
    };
    LatticeSpec zero_steps;
    zero_steps.steps = 0;
    EXPECT_EQ(code_of(zero_steps), ErrorCode::InvalidSpec);

    LatticeSpec bad_horizon;
    bad_horizon.horizon = -1.0;
    EXPECT_EQ(code_of(bad_horizon), ErrorCode::InvalidSpec);

    EXPECT_EQ(code_of(one_step(1.0)), ErrorCode::InvalidSpec);  // mu dt = 1

    LatticeSpec unsorted;
    unsorted.steps = 2;
    unsorted.times = {0.0, 0.7, 0.5};
    EXPECT_EQ(code_of(unsorted), ErrorCode::InvalidSpec);

    EXPECT_THROW(MarkSpace({{"u", 1.0, -0.1}}), Error);
    EXPECT_THROW(MarkSpace({{"u", 1.0, 0.1}, {"u", 2.0, 0.1}}), Error);
}

TEST(Lattice, ZeroIntensityMarkAddsNoBranch) {
    const Lattice lat(one_step(0.0));
    EXPECT_EQ(lat.branch_count(lat.root()), 2u);
    EXPECT_DOUBLE_EQ(lat.compensated_jump_increment(lat.root(), 0, "u"), 0.0);
}

TEST(CondExpect, HandSums) {
    const Lattice bin(one_step());
    EXPECT_DOUBLE_EQ(bin.cond_expect(bin.root(), std::array{3.0, 1.0}), 2.0);

    const Lattice jump(one_step(0.2));
    EXPECT_NEAR(jump.cond_expect(jump.root(), std::array{1.0, 1.0, 1.0, 1.0}), 1.0, 1e-15);
    EXPECT_NEAR(jump.cond_expect(jump.root(), std::array{2.0, 0.0, 5.0, 5.0}), 1.8, 1e-15);
}

TEST(CondExpect, WrongArityIsMissingBranchValue) {
    const Lattice lat(one_step(0.2));
    try {
        lat.cond_expect(lat.root(), std::array{1.0, 2.0});
        FAIL() << "expected MissingBranchValue";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingBranchValue);
    }
}

TEST(CompensatedJump, DefinitionAndCompensator) {
    const Lattice lat(one_step(0.2));
    EXPECT_NEAR(lat.compensated_jump_increment(lat.root(), 0, "u"), -0.2, 1e-15);
    EXPECT_NEAR(lat.compensated_jump_increment(lat.root(), 2, "u"), 0.8, 1e-15);
    std::array<double, 4> incr{};
    for (std::size_t b = 0; b < 4; ++b) incr[b] = lat.compensated_jump_increment(lat.root(), b, 0);
    EXPECT_NEAR(lat.cond_expect(lat.root(), incr), 0.0, 1e-15);
    try {
        lat.compensated_jump_increment(lat.root(), 0, "v");
        FAIL() << "expected UnknownMark";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnknownMark);
    }
}

// ---------------------------------------------------------------------------
// Properties over random lattices
// ---------------------------------------------------------------------------

TEST(LatticeProperty, IncrementsAreCenteredAtEveryNode) {
    for (std::uint64_t k = 0; k < 200; ++k) {
        auto rng = rng_for(101, k);
        const Lattice lat(rbsde::testing::any_lattice_spec(rng));
        for (std::size_t i = 0; i < lat.size(); ++i) {
            const NodeId n = node_id(i);
            if (lat.is_leaf(n)) continue;
            std::vector<double> dw;
            for (const auto& c : lat.children(n)) dw.push_back(c.dw);
            EXPECT_NEAR(lat.cond_expect(n, dw), 0.0, 1e-14);
            for (std::size_t u = 0; u < lat.mark_count(); ++u) {
                std::vector<double> jt;
                for (std::size_t b = 0; b < lat.branch_count(n); ++b)
                    jt.push_back(lat.compensated_jump_increment(n, b, u));
                EXPECT_NEAR(lat.cond_expect(n, jt), 0.0, 1e-14) << "instance " << k << " node " << i;
            }
        }
        EXPECT_LE(lat.check_invariants().worst(), 1e-12);
    }
}

TEST(LatticeProperty, TowerPropertyMatchesDirectLeafSum) {
    for (std::uint64_t k = 0; k < 200; ++k) {
        auto rng = rng_for(102, k);
        const Lattice lat(rbsde::testing::any_lattice_spec(rng));
        NodeField x(lat.size(), 0.0);
        const auto [first, last] = lat.leaves();
        for (std::size_t i = first; i < last; ++i) x[i] = rbsde::testing::uniform(rng, -3.0, 3.0);
        for (std::size_t i = first; i-- > 0;) {
            std::vector<double> vals;
            for (std::size_t b = 0; b < lat.branch_count(node_id(i)); ++b)
                vals.push_back(x[index(lat.child(node_id(i), b))]);
            x[i] = lat.cond_expect(node_id(i), vals);
        }
        const double direct = rbsde::testing::leaf_expectation(lat, [&](NodeId n) { return x[index(n)]; });
        EXPECT_NEAR(x[0], direct, 1e-13) << "instance " << k;
    }
}

TEST(LatticeProperty, LeafProbabilitiesSumToOne) {
    for (std::uint64_t k = 0; k < 200; ++k) {
        auto rng = rng_for(103, k);
        const Lattice lat(rbsde::testing::any_lattice_spec(rng));
        double total = 0.0;
        const auto [first, last] = lat.leaves();
        for (std::size_t i = first; i < last; ++i) total += lat.path_probability(node_id(i));
        EXPECT_NEAR(total, 1.0, 1e-14);
    }
}

TEST(LatticeProperty, PathsWalkBackToTheRoot) {
    auto rng = rng_for(104, 0);
    const Lattice lat(rbsde::testing::any_lattice_spec(rng, 4));
    for (std::size_t i = 0; i < lat.size(); ++i) {
        const auto path = lat.path_to(node_id(i));
        ASSERT_EQ(path.front(), lat.root());
        ASSERT_EQ(path.back(), node_id(i));
        for (std::size_t j = 1; j < path.size(); ++j) EXPECT_EQ(lat.parent(path[j]), path[j - 1]);
    }
}
