#pragma once

// Fabrication complexity: a weighted sum of material consumption and
// machining time, each normalized by its largest value over the design space.

#include <cmath>
#include <vector>

#include "exo/errors.hpp"
#include "exo/facade_model.hpp"
#include "exo/structural.hpp"

namespace exo {

struct FabricationWeights {
    double omega_m = 0.5;
    double omega_t = 0.5;
};

// Synthetic shop constants for the machining-time model.
struct FabricationConstants {
    double t_setup = 0.05;          // h per member
    double cut_time_per_m2 = 0.5;   // h per m^2 of cut section
    double t_joint = 0.1;           // h per joint
    double lamination_step = 0.1;   // joint-time increase per extra lamination
};

struct ReferenceValues {
    double m_ref = 1.0;  // kg
    double t_ref = 1.0;  // h
};

/// Setup per member, two end cuts per member, and joint work that grows with
/// the lamination count. Every node is a joint.
inline double machining_time(const SectionParams& section, std::size_t member_count, std::size_t joint_count,
                             const FabricationConstants& k = {}) {
    const double lamination_factor = 1.0 + k.lamination_step * (section.laminations - 1);
    const double members = static_cast<double>(member_count);
    return members * k.t_setup + members * k.cut_time_per_m2 * 2.0 * section.area() +
           static_cast<double>(joint_count) * k.t_joint * lamination_factor;
}

inline double machining_time(const DesignConfiguration& config, const FacadeGraph& graph,
                             const FabricationConstants& k = {}) {
    return machining_time(config.section, graph.members.size(), graph.nodes.size(), k);
}

inline double fabrication_complexity(double m, double t, const ReferenceValues& refs, const FabricationWeights& w) {
    if (!(refs.m_ref > 0.0) || !(refs.t_ref > 0.0))
        throw NonPositiveReference("reference values must be strictly positive");
    return w.omega_m * (m / refs.m_ref) + w.omega_t * (t / refs.t_ref);
}

namespace detail {

// Largest total member length with every free node at +/- max offset. Total
// length is convex in the offsets, so the maximum over the box is attained at
// a vertex. Exhaustive (Gray-code walk) up to 22 free nodes; beyond that a
// single-flip local search from the alternating pattern.
inline double max_total_length(const GridParams& grid, double offset_max) {
    DesignConfiguration flat{grid, {}, {}};
    const FacadeGraph g = generate_facade(flat);
    std::vector<NodeId> free;
    for (const auto& n : g.nodes)
        if (!g.is_support(n.id)) free.push_back(n.id);
    if (offset_max <= 0.0 || free.empty()) return g.total_length();

    std::vector<double> y(g.nodes.size(), 0.0);
    std::vector<std::vector<std::size_t>> incident(g.nodes.size());
    for (std::size_t i = 0; i < g.members.size(); ++i) {
        incident[g.members[i].node_a].push_back(i);
        incident[g.members[i].node_b].push_back(i);
    }
    auto length_of = [&](std::size_t i) {
        const auto& m = g.members[i];
        Vec3 d = g.nodes[m.node_b].position - g.nodes[m.node_a].position;
        d.y = y[m.node_b] - y[m.node_a];
        return norm(d);
    };
    auto total = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < g.members.size(); ++i) s += length_of(i);
        return s;
    };
    auto flip_delta = [&](NodeId id) {
        double before = 0.0, after = 0.0;
        for (auto i : incident[id]) before += length_of(i);
        y[id] = -y[id];
        for (auto i : incident[id]) after += length_of(i);
        return after - before;
    };

    for (NodeId id : free) y[id] = offset_max;
    if (free.size() <= 22) {
        // The global sign flip is a symmetry, so the first free node stays fixed.
        double current = total();
        double best = current;
        const std::size_t k = free.size() - 1;
        const std::uint64_t steps = std::uint64_t{1} << k;
        for (std::uint64_t i = 1; i < steps; ++i) {
            const int bit = __builtin_ctzll(i);
            current += flip_delta(free[static_cast<std::size_t>(bit) + 1]);
            best = std::max(best, current);
        }
        return best;
    }

    for (NodeId id : free) {
        const int row = id / (grid.bays_x + 1);
        const int col = id % (grid.bays_x + 1);
        y[id] = ((row + col) % 2 == 0) ? offset_max : -offset_max;
    }
    double current = total();
    for (bool improved = true; improved;) {
        improved = false;
        for (NodeId id : free) {
            const double d = flip_delta(id);
            if (d > 1e-12) {
                current += d;
                improved = true;
            } else {
                y[id] = -y[id];
            }
        }
    }
    return current;
}

}  // namespace detail

/// Material and machining-time maxima over the admissible design space for a
/// fixed grid: largest section, most laminations, offsets at the extremes that
/// maximize member length. Computed once per session.
inline ReferenceValues compute_reference_values(const DesignBounds& bounds, const GridParams& grid,
                                                const MaterialSpec& mat = {}, const StructuralSettings& st = {},
                                                const FabricationConstants& k = {}) {
    const SectionParams biggest{bounds.depth_max, bounds.width_max, bounds.laminations_max};
    const double length = detail::max_total_length(grid, bounds.offset_max);
    ReferenceValues refs;
    refs.m_ref = mat.density * mass_area(biggest, st) * length;
    const auto members = static_cast<std::size_t>((grid.bays_z + 1) * grid.bays_x + grid.bays_z * (grid.bays_x + 1) +
                                                  2 * grid.bays_x * grid.bays_z);
    refs.t_ref = machining_time(biggest, members, static_cast<std::size_t>(grid.node_count()), k);
    return refs;
}

}  // namespace exo
