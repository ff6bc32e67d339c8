#include <random>

#include <gtest/gtest.h>

#include "exo/evaluation.hpp"
#include "exo/fabrication.hpp"
#include "support/oracles.hpp"

using namespace exo;

TEST(Machining, Examples) {
    EXPECT_EQ(machining_time(SectionParams{0.1, 0.1, 1}, 0, 0), 0.0);
    EXPECT_NEAR(machining_time(SectionParams{0.1, 0.1, 1}, 1, 2), 0.26, 1e-12);

    const SectionParams one{0.2, 0.1, 1}, two{0.2, 0.1, 2};
    const double joints_one = machining_time(one, 0, 7), joints_two = machining_time(two, 0, 7);
    EXPECT_NEAR(joints_two / joints_one, 1.1, 1e-12);
}

TEST(Complexity, Examples) {
    const ReferenceValues refs{200.0, 10.0};
    const FabricationWeights w{0.5, 0.5};
    EXPECT_DOUBLE_EQ(fabrication_complexity(200.0, 10.0, refs, w), 1.0);
    EXPECT_DOUBLE_EQ(fabrication_complexity(0.0, 0.0, refs, w), 0.0);
    EXPECT_NEAR(fabrication_complexity(0.8 * 200.0, 0.4 * 10.0, refs, w), 0.6, 1e-15);
    EXPECT_THROW(fabrication_complexity(1.0, 1.0, ReferenceValues{0.0, 1.0}, w), NonPositiveReference);
}

TEST(Complexity, BoundedAndMonotone) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const ReferenceValues refs{1234.0, 56.0};
    const FabricationWeights w{0.5, 0.5};
    for (int i = 0; i < 1000; ++i) {
        const double m = u(rng) * refs.m_ref, t = u(rng) * refs.t_ref;
        const double fc = fabrication_complexity(m, t, refs, w);
        ASSERT_GE(fc, 0.0);
        ASSERT_LE(fc, 1.0);
        const double m2 = m + u(rng) * (refs.m_ref - m), t2 = t + u(rng) * (refs.t_ref - t);
        ASSERT_GE(fabrication_complexity(m2, t, refs, w), fc);
        ASSERT_GE(fabrication_complexity(m, t2, refs, w), fc);
    }
}

TEST(References, DegenerateBoundsGiveSingleConfiguration) {
    DesignBounds b;
    b.depth_min = b.depth_max = 0.2;
    b.width_min = b.width_max = 0.1;
    b.laminations_min = b.laminations_max = 3;
    b.offset_max = 0.0;
    const GridParams grid{2, 2, 3.0};
    const auto refs = compute_reference_values(b, grid);
    const auto c = initial_configuration(grid, {0.2, 0.1, 3});
    const auto g = generate_facade(c);
    EXPECT_NEAR(refs.m_ref, structural_mass(g, c.section, {}), 1e-9);
    EXPECT_NEAR(refs.t_ref, machining_time(c, g), 1e-12);
}

TEST(References, WiderBoundsNeverShrinkReference) {
    DesignBounds b;
    const GridParams grid{2, 2, 3.0};
    double last = 0.0;
    for (double w = 0.1; w <= 0.5; w += 0.05) {
        b.width_max = w;
        const double m = compute_reference_values(b, grid).m_ref;
        EXPECT_GE(m, last);
        last = m;
    }
}

// The 1x1 grid has two free nodes; the four corners of the offset box are
// enumerated directly.
TEST(References, OneByOneMatchesCornerEnumeration) {
    const DesignBounds b;
    const GridParams grid{1, 1, 3.0};
    const SectionParams biggest{b.depth_max, b.width_max, b.laminations_max};
    double best = 0.0;
    for (int sa : {-1, 1})
        for (int sb : {-1, 1}) {
            DesignConfiguration c{grid, biggest, {}};
            c.node_offsets[2] = Offset::from_metres(sa * b.offset_max);
            c.node_offsets[3] = Offset::from_metres(sb * b.offset_max);
            best = std::max(best, structural_mass(generate_facade(c), biggest, {}));
        }
    const auto refs = compute_reference_values(b, grid);
    EXPECT_NEAR(refs.m_ref, best, 1e-9 * best);
    EXPECT_NEAR(refs.m_ref, 1278.0272649962651, 1e-6);  // regression constant for the default bounds
}

// Every admissible configuration stays under the references, so FC <= 1.
TEST(References, BoundAllValidConfigurations) {
    std::mt19937_64 rng(31);
    const EvaluationModel model;
    const GridParams grid{3, 3, 3.0};
    const auto refs = compute_reference_values(model.bounds, grid);
    for (int i = 0; i < 300; ++i) {
        auto c = oracle::random_valid_config(rng, grid, model.bounds, 1.0);
        const auto fast = evaluate_fast(c, model, refs);
        ASSERT_LE(fast.c7_complexity, 1.0 + 1e-12);
        ASSERT_GE(fast.c7_complexity, 0.0);
    }
}
