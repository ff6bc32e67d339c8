#pragma once

// Assembles the seven metrics for one configuration, split into the cheap
// stage (mass, fabrication complexity, shading) and the expensive stage
// (truss analysis and energy balance).

#include "exo/environment.hpp"
#include "exo/fabrication.hpp"
#include "exo/facade_model.hpp"
#include "exo/feedback.hpp"
#include "exo/structural.hpp"

namespace exo {

struct EvaluationModel {
    GridParams grid;
    SectionParams initial_section;
    DesignBounds bounds;
    MaterialSpec material;
    StructuralSettings structural;
    BuildingSpec building;
    ClimateProfile climate = ClimateProfile::synthetic_cold_climate();
    PriceBook prices;
    EnergyModelConstants energy;
    FabricationConstants fabrication;
    FabricationWeights weights;
    double epsilon = kDefaultNeutralBand;

    ReferenceValues reference_values() const {
        return compute_reference_values(bounds, grid, material, structural, fabrication);
    }
};

struct FastEvaluation {
    double c3_mass = 0.0;
    double c7_complexity = 0.0;
    double shading = 0.0;
};

struct FullEvaluation {
    MetricVector metrics;
    double shading = 0.0;
    AnnualDemand demand;
};

// Which metrics the fast stage produces.
inline MetricMask fast_metric_mask() { return MetricMask{}.set(2).set(6); }

inline FastEvaluation evaluate_fast(const DesignConfiguration& config, const EvaluationModel& model,
                                    const ReferenceValues& refs) {
    const FacadeGraph g = generate_facade(config);
    FastEvaluation out;
    out.c3_mass = structural_mass(g, config.section, model.material, model.structural);
    const double t = machining_time(config, g, model.fabrication);
    out.c7_complexity = fabrication_complexity(out.c3_mass, t, refs, model.weights);
    out.shading = shading_fraction(config);
    return out;
}

/// `prev` supplies the slots the fast stage does not compute.
inline MetricVector merge_fast(const MetricVector& prev, const FastEvaluation& fast) {
    MetricVector v = prev;
    v[2] = fast.c3_mass;
    v[6] = fast.c7_complexity;
    return v;
}

inline FullEvaluation evaluate_full(const DesignConfiguration& config, const EvaluationModel& model,
                                    const ReferenceValues& refs) {
    const FacadeGraph g = generate_facade(config);
    const StructuralMetrics s = evaluate_structure(
        g, config.section, model.material, default_load_cases(config, g, model.material, model.structural),
        model.structural);
    const double t = machining_time(config, g, model.fabrication);

    FullEvaluation out;
    out.shading = shading_fraction(config);
    out.demand = annual_demand(model.building, model.climate, out.shading, model.energy);
    const EnvironmentalMetrics e =
        environment_from_demand(out.demand, s.c3_mass, model.building, model.prices, model.material);
    out.metrics.values = {s.c1_max_displacement, s.c2_elastic_energy, s.c3_mass,  e.c4_operational_cost,
                          e.c5_carbon,           e.c6_solar_gain,     fabrication_complexity(s.c3_mass, t, refs, model.weights)};
    return out;
}

}  // namespace exo
