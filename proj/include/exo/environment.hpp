#pragma once

// Single-zone monthly degree-day energy balance for the building behind the
// exoskeleton. The exoskeleton enters only through the shading it casts on
// the glazing and through its embodied carbon.

#include <algorithm>
#include <array>

#include "exo/facade_model.hpp"
#include "exo/structural.hpp"

namespace exo {

struct MonthClimate {
    double heating_degree_days = 0.0;  // K*day
    double cooling_degree_days = 0.0;  // K*day
    double facade_irradiation = 0.0;   // kWh/m^2 on the facade plane
};

struct ClimateProfile {
    std::array<MonthClimate, 12> months{};

    // Synthetic heating-dominated profile for a cold continental year
    // (south-facing vertical surface). Not measured data.
    static ClimateProfile synthetic_cold_climate() {
        ClimateProfile c;
        const double hdd[12] = {780, 650, 600, 420, 250, 110, 50, 60, 200, 380, 580, 740};
        const double cdd[12] = {0, 0, 0, 0, 0, 10, 40, 35, 0, 0, 0, 0};
        const double irr[12] = {95, 105, 115, 95, 85, 75, 85, 100, 110, 110, 90, 80};
        for (int m = 0; m < 12; ++m) c.months[m] = {hdd[m], cdd[m], irr[m]};
        return c;
    }
};

struct BuildingSpec {
    double facade_area = 144.0;              // m^2
    double glazing_ratio = 0.4;
    double u_value_envelope = 1.2;           // W/m^2K
    double shgc = 0.5;
    double heating_efficiency = 0.9;
    double cooling_cop = 3.0;
    double annual_electricity_base = 8000.0; // kWh
    double annual_dhw = 3000.0;              // kWh
    double lifespan_years = 50.0;
};

struct PriceBook {
    double heat_price = 0.05;   // CAD/kWh
    double elec_price = 0.15;   // CAD/kWh
    double heat_carbon = 0.18;  // kg CO2/kWh
    double elec_carbon = 0.50;  // kg CO2/kWh
};

struct EnergyModelConstants {
    double utilization = 0.8;    // share of solar gain offsetting heating losses
    double overheat_share = 0.3; // share of solar gain adding to cooling in cooling months
};

struct EnvironmentalMetrics {
    double c4_operational_cost = 0.0;  // CAD/year
    double c5_carbon = 0.0;            // kg CO2/year
    double c6_solar_gain = 0.0;        // kWh/year
};

struct MonthlyDemand {
    double heating = 0.0;  // kWh
    double cooling = 0.0;  // kWh
    double solar = 0.0;    // kWh
};

struct AnnualDemand {
    double heating = 0.0;
    double cooling = 0.0;
    double solar = 0.0;
    std::array<MonthlyDemand, 12> monthly{};
};

inline AnnualDemand annual_demand(const BuildingSpec& b, const ClimateProfile& climate, double shading,
                                  const EnergyModelConstants& k = {}) {
    AnnualDemand out;
    const double ua = b.u_value_envelope * b.facade_area;  // W/K
    const double aperture = b.facade_area * b.glazing_ratio * b.shgc * (1.0 - shading);
    for (std::size_t m = 0; m < 12; ++m) {
        const auto& mc = climate.months[m];
        MonthlyDemand d;
        d.solar = mc.facade_irradiation * aperture;
        const double losses = ua * mc.heating_degree_days * 24.0 / 1000.0;
        d.heating = std::max(0.0, losses - k.utilization * d.solar);
        if (mc.cooling_degree_days > 0.0)
            d.cooling = mc.cooling_degree_days * 24.0 / 1000.0 * ua + k.overheat_share * d.solar;
        out.monthly[m] = d;
        out.heating += d.heating;
        out.cooling += d.cooling;
        out.solar += d.solar;
    }
    return out;
}

inline EnvironmentalMetrics environment_from_demand(const AnnualDemand& d, double c3_mass, const BuildingSpec& b,
                                                    const PriceBook& p, const MaterialSpec& mat) {
    const double heat_input = d.heating / b.heating_efficiency;
    const double electricity = d.cooling / b.cooling_cop + b.annual_electricity_base + b.annual_dhw;
    EnvironmentalMetrics out;
    out.c4_operational_cost = heat_input * p.heat_price + electricity * p.elec_price;
    out.c5_carbon = heat_input * p.heat_carbon + electricity * p.elec_carbon +
                    c3_mass * mat.embodied_carbon_factor / b.lifespan_years;
    out.c6_solar_gain = d.solar;
    return out;
}

/// C4-C6 for a configuration whose C3 is already known.
inline EnvironmentalMetrics evaluate_environment(const DesignConfiguration& config, double c3_mass,
                                                 const BuildingSpec& b, const ClimateProfile& climate,
                                                 const PriceBook& prices, const MaterialSpec& mat,
                                                 const EnergyModelConstants& k = {}) {
    const AnnualDemand d = annual_demand(b, climate, shading_fraction(config), k);
    return environment_from_demand(d, c3_mass, b, prices, mat);
}

}  // namespace exo
