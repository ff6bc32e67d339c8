#pragma once

// Linear-elastic 3D truss analysis of the exoskeleton. Members are axial bars;
// every non-support node is also tied back to the host building by an axial
// anchor along the facade normal, which is what gives a flat facade its
// out-of-plane stiffness.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "exo/errors.hpp"
#include "exo/facade_model.hpp"

namespace exo {

struct MaterialSpec {
    double youngs_modulus = 1.1e7;        // kN/m^2
    double density = 470.0;               // kg/m^3
    double strength = 2.4e4;              // kN/m^2, carried but not checked
    double embodied_carbon_factor = 0.5;  // kg CO2 / kg
    double cost_per_kg = 1.5;             // CAD / kg
};

struct StructuralSettings {
    double glue_penalty = 0.01;   // stiffness loss (and glue mass) per extra lamination
    double wind_pressure = 1.0;   // kN/m^2 on tributary area, +y
    double gravity = 9.81;        // m/s^2
    double anchor_area = 2.0e-4;  // m^2 cross-section of each tie-back anchor; 0 disables anchors
    double anchor_standoff = 1.0; // m from the facade plane to the host wall
};

struct LoadCase {
    std::string name;
    std::map<NodeId, Vec3> nodal_loads;  // kN
};

struct DisplacementField {
    std::string load_case;
    std::vector<Vec3> displacements;  // m, indexed by node id
};

struct StructuralMetrics {
    double c1_max_displacement = 0.0;  // cm
    double c2_elastic_energy = 0.0;    // kNm
    double c3_mass = 0.0;              // kg
};

/// Axial stiffness area after glue-line losses.
inline double effective_area(const SectionParams& s, const StructuralSettings& st = {}) {
    return s.area() * (1.0 - st.glue_penalty * (s.laminations - 1));
}

/// Area that carries mass: timber plus glue lines.
inline double mass_area(const SectionParams& s, const StructuralSettings& st = {}) {
    return s.area() * (1.0 + st.glue_penalty * (s.laminations - 1));
}

inline double structural_mass(const FacadeGraph& g, const SectionParams& s, const MaterialSpec& mat,
                              const StructuralSettings& st = {}) {
    return mat.density * mass_area(s, st) * g.total_length();
}

/// Full 3n x 3n stiffness matrix, support rows included. Anchor springs sit on
/// the y DOF of every non-support node.
inline Eigen::MatrixXd assemble_stiffness(const FacadeGraph& g, const SectionParams& s, const MaterialSpec& mat,
                                          const StructuralSettings& st = {}) {
    const auto n = static_cast<Eigen::Index>(g.nodes.size());
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(3 * n, 3 * n);
    const double ea = mat.youngs_modulus * effective_area(s, st);

    for (const auto& m : g.members) {
        const Vec3 d = g.nodes[m.node_b].position - g.nodes[m.node_a].position;
        const double len = norm(d);
        if (!(len > 0.0)) throw SingularSystem("zero-length member " + std::to_string(m.id));
        const Eigen::Vector3d e(d.x / len, d.y / len, d.z / len);
        const Eigen::Matrix3d kl = (ea / len) * (e * e.transpose());
        const Eigen::Index a = 3 * m.node_a;
        const Eigen::Index b = 3 * m.node_b;
        k.block<3, 3>(a, a) += kl;
        k.block<3, 3>(b, b) += kl;
        k.block<3, 3>(a, b) -= kl;
        k.block<3, 3>(b, a) -= kl;
    }

    if (st.anchor_area > 0.0) {
        const double ea_anchor = mat.youngs_modulus * st.anchor_area;
        for (const auto& node : g.nodes) {
            if (g.is_support(node.id)) continue;
            const double len = st.anchor_standoff + node.position.y;
            if (!(len > 0.0)) throw SingularSystem("anchor of node " + std::to_string(node.id) + " has no length");
            k(3 * node.id + 1, 3 * node.id + 1) += ea_anchor / len;
        }
    }
    return k;
}

inline Eigen::VectorXd load_vector(const FacadeGraph& g, const LoadCase& load) {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(3 * static_cast<Eigen::Index>(g.nodes.size()));
    for (const auto& [id, force] : load.nodal_loads) {
        if (!g.has_node(id)) throw UnknownNode("load on unknown node " + std::to_string(id));
        f(3 * id) += force.x;
        f(3 * id + 1) += force.y;
        f(3 * id + 2) += force.z;
    }
    return f;
}

/// Solve K u = f with supports eliminated. DOFs that no member or anchor
/// touches are dropped when unloaded (a planar truss has no out-of-plane
/// stiffness); loading one is a mechanism.
inline DisplacementField solve_displacements(const FacadeGraph& g, const SectionParams& s, const MaterialSpec& mat,
                                             const LoadCase& load, const StructuralSettings& st = {}) {
    if (g.supports.empty()) throw SingularSystem("no supports");
    const Eigen::MatrixXd k = assemble_stiffness(g, s, mat, st);
    const Eigen::VectorXd f = load_vector(g, load);

    std::vector<Eigen::Index> free;
    for (const auto& node : g.nodes) {
        if (g.is_support(node.id)) continue;
        for (int c = 0; c < 3; ++c) {
            const Eigen::Index dof = 3 * node.id + c;
            if (k(dof, dof) > 0.0) {
                free.push_back(dof);
            } else if (f(dof) != 0.0) {
                throw SingularSystem("load on unrestrained DOF " + std::to_string(dof));
            }
        }
    }

    DisplacementField out{load.name, std::vector<Vec3>(g.nodes.size())};
    if (free.empty()) return out;

    const auto nf = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd kff(nf, nf);
    Eigen::VectorXd ff(nf);
    for (Eigen::Index i = 0; i < nf; ++i) {
        ff(i) = f(free[i]);
        for (Eigen::Index j = 0; j < nf; ++j) kff(i, j) = k(free[i], free[j]);
    }

    const Eigen::LDLT<Eigen::MatrixXd> ldlt(kff);
    if (ldlt.info() != Eigen::Success) throw SingularSystem("factorization failed");
    const Eigen::VectorXd d = ldlt.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    if (!(d.minCoeff() > 1e-12 * dmax)) throw SingularSystem("stiffness matrix is singular (mechanism)");

    Eigen::VectorXd u = ldlt.solve(ff);
    const double fnorm = ff.norm();
    for (int pass = 0; pass < 3; ++pass) {
        const Eigen::VectorXd r = ff - kff * u;
        if (r.norm() <= 1e-8 * fnorm) break;
        u += ldlt.solve(r);
    }
    if (!u.allFinite()) throw NonFinite("non-finite displacement");
    if ((ff - kff * u).norm() > 1e-8 * fnorm) throw SingularSystem("residual above tolerance (ill-conditioned)");

    for (Eigen::Index i = 0; i < nf; ++i) {
        const auto node = static_cast<std::size_t>(free[i] / 3);
        const auto comp = free[i] % 3;
        double& slot = comp == 0 ? out.displacements[node].x
                     : comp == 1 ? out.displacements[node].y
                                 : out.displacements[node].z;
        slot = u(i);
    }
    return out;
}

/// Sum over nodes of f . u (kNm).
inline double external_work(const LoadCase& load, const DisplacementField& field) {
    double w = 0.0;
    for (const auto& [id, force] : load.nodal_loads) w += dot(force, field.displacements[static_cast<std::size_t>(id)]);
    return w;
}

/// Axial force per member, tension positive (kN).
inline std::vector<double> member_axial_forces(const FacadeGraph& g, const SectionParams& s, const MaterialSpec& mat,
                                               const DisplacementField& field, const StructuralSettings& st = {}) {
    const double ea = mat.youngs_modulus * effective_area(s, st);
    std::vector<double> forces;
    forces.reserve(g.members.size());
    for (const auto& m : g.members) {
        const Vec3 d = g.nodes[m.node_b].position - g.nodes[m.node_a].position;
        const double len = norm(d);
        const Vec3 du = field.displacements[m.node_b] - field.displacements[m.node_a];
        forces.push_back(ea / len * dot(d, du) / len);
    }
    return forces;
}

/// Self-weight (-z) and uniform wind pressure (+y) on the tributary frontal
/// area. Support nodes carry no load.
inline std::vector<LoadCase> default_load_cases(const DesignConfiguration& config, const FacadeGraph& g,
                                                const MaterialSpec& mat, const StructuralSettings& st = {}) {
    LoadCase gravity{"LC1-gravity", {}};
    const double line_weight = mat.density * mass_area(config.section, st) * st.gravity / 1000.0;  // kN/m
    for (const auto& m : g.members) {
        const double half = 0.5 * line_weight * g.member_length(m);
        for (NodeId id : {m.node_a, m.node_b}) {
            if (g.is_support(id)) continue;
            gravity.nodal_loads[id].z -= half;
        }
    }

    // The lattice stands off the host wall, so wind acts on the members' own
    // frontal area; each end node takes half of every incident member.
    LoadCase wind{"LC2-wind", {}};
    for (const auto& m : g.members) {
        const double half = 0.5 * st.wind_pressure * g.member_length(m) * config.section.width;
        for (NodeId id : {m.node_a, m.node_b}) {
            if (g.is_support(id)) continue;
            wind.nodal_loads[id].y += half;
        }
    }
    return {gravity, wind};
}

/// C1: worst key-point displacement norm over all cases (cm). C2: worst-case
/// external work (kNm). C3: total member mass (kg).
inline StructuralMetrics evaluate_structure(const FacadeGraph& g, const SectionParams& section, const MaterialSpec& mat,
                                            const std::vector<LoadCase>& loads, const StructuralSettings& st = {}) {
    StructuralMetrics out;
    out.c3_mass = structural_mass(g, section, mat, st);
    for (const auto& lc : loads) {
        const DisplacementField u = solve_displacements(g, section, mat, lc, st);
        for (NodeId key : g.key_points)
            out.c1_max_displacement = std::max(out.c1_max_displacement, 100.0 * norm(u.displacements[key]));
        out.c2_elastic_energy = std::max(out.c2_elastic_energy, external_work(lc, u));
    }
    return out;
}

inline StructuralMetrics evaluate_structure(const DesignConfiguration& config, const MaterialSpec& mat,
                                            const std::vector<LoadCase>& loads, const StructuralSettings& st = {}) {
    return evaluate_structure(generate_facade(config), config.section, mat, loads, st);
}

inline StructuralMetrics evaluate_structure(const DesignConfiguration& config, const MaterialSpec& mat,
                                            const StructuralSettings& st = {}) {
    const FacadeGraph g = generate_facade(config);
    return evaluate_structure(config, mat, default_load_cases(config, g, mat, st), st);
}

}  // namespace exo
