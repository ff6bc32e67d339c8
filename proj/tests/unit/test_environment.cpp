#include <gtest/gtest.h>

#include "exo/environment.hpp"

using namespace exo;

namespace {

ClimateProfile one_month(double hdd, double cdd, double irr) {
    ClimateProfile c;
    c.months[0] = {hdd, cdd, irr};
    return c;
}

}  // namespace

TEST(Energy, FullShadingKillsSolar) {
    const BuildingSpec b;
    const auto d = annual_demand(b, ClimateProfile::synthetic_cold_climate(), 1.0);
    EXPECT_EQ(d.solar, 0.0);
    double losses = 0.0;
    for (const auto& m : ClimateProfile::synthetic_cold_climate().months)
        losses += b.u_value_envelope * b.facade_area * m.heating_degree_days * 24.0 / 1000.0;
    EXPECT_NEAR(d.heating, losses, 1e-9);
}

TEST(Energy, HandComputedHeating) {
    BuildingSpec b;
    b.u_value_envelope = 0.3;
    b.facade_area = 100.0;
    const auto d = annual_demand(b, one_month(5000, 0, 0), 0.0);
    EXPECT_NEAR(d.heating, 3600.0, 1e-9);
    EXPECT_EQ(d.cooling, 0.0);
    EXPECT_EQ(d.solar, 0.0);
}

TEST(Energy, EmptyClimate) {
    const auto d = annual_demand(BuildingSpec{}, ClimateProfile{}, 0.3);
    EXPECT_EQ(d.heating, 0.0);
    EXPECT_EQ(d.cooling, 0.0);
    EXPECT_EQ(d.solar, 0.0);
}

TEST(Energy, EmbodiedAnnualisation) {
    BuildingSpec b;
    b.annual_electricity_base = 0.0;
    b.annual_dhw = 0.0;
    b.lifespan_years = 50.0;
    PriceBook p{0, 0, 0, 0};
    MaterialSpec mat;
    mat.embodied_carbon_factor = 1.0;
    const auto e = environment_from_demand(annual_demand(b, one_month(3000, 50, 80), 0.2), 1000.0, b, p, mat);
    EXPECT_EQ(e.c4_operational_cost, 0.0);
    EXPECT_NEAR(e.c5_carbon, 20.0, 1e-12);
}

TEST(Energy, ZeroDemandLeavesEmbodiedOnly) {
    BuildingSpec b;
    b.annual_electricity_base = 0.0;
    b.annual_dhw = 0.0;
    const MaterialSpec mat;
    const auto e = environment_from_demand(AnnualDemand{}, 640.0, b, PriceBook{}, mat);
    EXPECT_EQ(e.c4_operational_cost, 0.0);
    EXPECT_NEAR(e.c5_carbon, 640.0 * mat.embodied_carbon_factor / b.lifespan_years, 1e-12);
}

TEST(Energy, MoreShadingLessSolar) {
    const BuildingSpec b;
    const auto climate = ClimateProfile::synthetic_cold_climate();
    for (double s = 0.05; s <= 0.45; s += 0.05) {
        const auto lo = annual_demand(b, climate, s), hi = annual_demand(b, climate, 2.0 * s);
        EXPECT_LT(hi.solar, lo.solar);
    }
}

TEST(Energy, MonthlyBreakdownSumsToAnnual) {
    const auto d = annual_demand(BuildingSpec{}, ClimateProfile::synthetic_cold_climate(), 0.25);
    double h = 0, c = 0, s = 0;
    for (const auto& m : d.monthly) {
        h += m.heating;
        c += m.cooling;
        s += m.solar;
        EXPECT_GE(m.heating, 0.0);
    }
    EXPECT_DOUBLE_EQ(h, d.heating);
    EXPECT_DOUBLE_EQ(c, d.cooling);
    EXPECT_DOUBLE_EQ(s, d.solar);
}

TEST(Energy, ConfigurationEntryPoint) {
    const auto c = initial_configuration({4, 4, 3.0});
    const auto e = evaluate_environment(c, 500.0, BuildingSpec{}, ClimateProfile::synthetic_cold_climate(), PriceBook{},
                                        MaterialSpec{});
    EXPECT_GT(e.c4_operational_cost, 0.0);
    EXPECT_GT(e.c5_carbon, 0.0);
    EXPECT_GT(e.c6_solar_gain, 0.0);
}
