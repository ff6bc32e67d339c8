#pragma once

// Server configuration file: a single JSON object. Every key is optional and
// falls back to the built-in default; unknown keys are rejected so typos do
// not silently fall back. See config/default.json for the full key set.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "exo/errors.hpp"
#include "exo/evaluation.hpp"

namespace exo {

struct AgentEditModel {
    double section_edit_probability = 0.25;
    double max_node_delta = 0.1;      // m
    double section_step = 0.02;       // m
};

struct ServerConfig {
    EvaluationModel model;
    AgentEditModel agent;
    int port = 7447;
    std::string log_dir = "logs";
    double edit_step = 0.05;  // m per scroll tick, advertised to clients
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    std::set<std::string> known(keys.begin(), keys.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

}  // namespace detail

inline ServerConfig parse_config(const nlohmann::json& j) {
    using detail::read;
    using detail::reject_unknown;
    ServerConfig c;
    auto& m = c.model;
    reject_unknown(j, "config",
                   {"port", "log_dir", "edit_step", "epsilon", "grid", "initial_section", "bounds", "material",
                    "structural", "building", "climate", "prices", "energy_model", "fabrication", "agent"});
    read(j, "port", c.port, "config");
    read(j, "log_dir", c.log_dir, "config");
    read(j, "edit_step", c.edit_step, "config");
    read(j, "epsilon", m.epsilon, "config");

    if (auto it = j.find("grid"); it != j.end()) {
        reject_unknown(*it, "grid", {"bays_x", "bays_z", "module_size"});
        read(*it, "bays_x", m.grid.bays_x, "grid");
        read(*it, "bays_z", m.grid.bays_z, "grid");
        read(*it, "module_size", m.grid.module_size, "grid");
    }
    if (auto it = j.find("initial_section"); it != j.end()) {
        reject_unknown(*it, "initial_section", {"depth", "width", "laminations"});
        read(*it, "depth", m.initial_section.depth, "initial_section");
        read(*it, "width", m.initial_section.width, "initial_section");
        read(*it, "laminations", m.initial_section.laminations, "initial_section");
    }
    if (auto it = j.find("bounds"); it != j.end()) {
        auto& b = m.bounds;
        reject_unknown(*it, "bounds",
                       {"bays_min", "bays_max", "module_min", "module_max", "depth_min", "depth_max", "width_min",
                        "width_max", "laminations_min", "laminations_max", "offset_max"});
        read(*it, "bays_min", b.bays_min, "bounds");
        read(*it, "bays_max", b.bays_max, "bounds");
        read(*it, "module_min", b.module_min, "bounds");
        read(*it, "module_max", b.module_max, "bounds");
        read(*it, "depth_min", b.depth_min, "bounds");
        read(*it, "depth_max", b.depth_max, "bounds");
        read(*it, "width_min", b.width_min, "bounds");
        read(*it, "width_max", b.width_max, "bounds");
        read(*it, "laminations_min", b.laminations_min, "bounds");
        read(*it, "laminations_max", b.laminations_max, "bounds");
        read(*it, "offset_max", b.offset_max, "bounds");
    }
    if (auto it = j.find("material"); it != j.end()) {
        reject_unknown(*it, "material",
                       {"youngs_modulus", "density", "strength", "embodied_carbon_factor", "cost_per_kg"});
        read(*it, "youngs_modulus", m.material.youngs_modulus, "material");
        read(*it, "density", m.material.density, "material");
        read(*it, "strength", m.material.strength, "material");
        read(*it, "embodied_carbon_factor", m.material.embodied_carbon_factor, "material");
        read(*it, "cost_per_kg", m.material.cost_per_kg, "material");
    }
    if (auto it = j.find("structural"); it != j.end()) {
        reject_unknown(*it, "structural",
                       {"glue_penalty", "wind_pressure", "gravity", "anchor_area", "anchor_standoff"});
        read(*it, "glue_penalty", m.structural.glue_penalty, "structural");
        read(*it, "wind_pressure", m.structural.wind_pressure, "structural");
        read(*it, "gravity", m.structural.gravity, "structural");
        read(*it, "anchor_area", m.structural.anchor_area, "structural");
        read(*it, "anchor_standoff", m.structural.anchor_standoff, "structural");
    }
    // facade_area defaults to the grid's own area.
    m.building.facade_area = m.grid.facade_area();
    if (auto it = j.find("building"); it != j.end()) {
        auto& b = m.building;
        reject_unknown(*it, "building",
                       {"facade_area", "glazing_ratio", "u_value_envelope", "shgc", "heating_efficiency",
                        "cooling_cop", "annual_electricity_base", "annual_dhw", "lifespan_years"});
        read(*it, "facade_area", b.facade_area, "building");
        read(*it, "glazing_ratio", b.glazing_ratio, "building");
        read(*it, "u_value_envelope", b.u_value_envelope, "building");
        read(*it, "shgc", b.shgc, "building");
        read(*it, "heating_efficiency", b.heating_efficiency, "building");
        read(*it, "cooling_cop", b.cooling_cop, "building");
        read(*it, "annual_electricity_base", b.annual_electricity_base, "building");
        read(*it, "annual_dhw", b.annual_dhw, "building");
        read(*it, "lifespan_years", b.lifespan_years, "building");
    }
    if (auto it = j.find("climate"); it != j.end()) {
        reject_unknown(*it, "climate", {"months"});
        const auto& months = it->at("months");
        if (!months.is_array() || months.size() != 12) throw ConfigError("climate.months needs 12 entries");
        for (std::size_t i = 0; i < 12; ++i) {
            const auto& e = months[i];
            const std::string where = "climate.months[" + std::to_string(i) + "]";
            reject_unknown(e, where, {"hdd", "cdd", "irradiation"});
            auto& mc = m.climate.months[i];
            read(e, "hdd", mc.heating_degree_days, where);
            read(e, "cdd", mc.cooling_degree_days, where);
            read(e, "irradiation", mc.facade_irradiation, where);
            if (mc.heating_degree_days < 0 || mc.cooling_degree_days < 0 || mc.facade_irradiation < 0)
                throw ConfigError(where + " must be non-negative");
        }
    }
    if (auto it = j.find("prices"); it != j.end()) {
        reject_unknown(*it, "prices", {"heat_price", "elec_price", "heat_carbon", "elec_carbon"});
        read(*it, "heat_price", m.prices.heat_price, "prices");
        read(*it, "elec_price", m.prices.elec_price, "prices");
        read(*it, "heat_carbon", m.prices.heat_carbon, "prices");
        read(*it, "elec_carbon", m.prices.elec_carbon, "prices");
    }
    if (auto it = j.find("energy_model"); it != j.end()) {
        reject_unknown(*it, "energy_model", {"utilization", "overheat_share"});
        read(*it, "utilization", m.energy.utilization, "energy_model");
        read(*it, "overheat_share", m.energy.overheat_share, "energy_model");
    }
    if (auto it = j.find("fabrication"); it != j.end()) {
        reject_unknown(*it, "fabrication",
                       {"t_setup", "cut_time_per_m2", "t_joint", "lamination_step", "omega_m", "omega_t"});
        read(*it, "t_setup", m.fabrication.t_setup, "fabrication");
        read(*it, "cut_time_per_m2", m.fabrication.cut_time_per_m2, "fabrication");
        read(*it, "t_joint", m.fabrication.t_joint, "fabrication");
        read(*it, "lamination_step", m.fabrication.lamination_step, "fabrication");
        read(*it, "omega_m", m.weights.omega_m, "fabrication");
        read(*it, "omega_t", m.weights.omega_t, "fabrication");
        if (std::fabs(m.weights.omega_m + m.weights.omega_t - 1.0) > 1e-9)
            throw ConfigError("fabrication weights must sum to 1");
    }
    if (auto it = j.find("agent"); it != j.end()) {
        reject_unknown(*it, "agent", {"section_edit_probability", "max_node_delta", "section_step"});
        read(*it, "section_edit_probability", c.agent.section_edit_probability, "agent");
        read(*it, "max_node_delta", c.agent.max_node_delta, "agent");
        read(*it, "section_step", c.agent.section_step, "agent");
    }

    if (m.grid.bays_x < 1 || m.grid.bays_z < 1 || !(m.grid.module_size > 0)) throw ConfigError("invalid grid");
    if (!(m.epsilon > 0)) throw ConfigError("epsilon must be positive");
    if (!(m.material.youngs_modulus > 0 && m.material.density > 0 && m.material.strength > 0 &&
          m.material.embodied_carbon_factor > 0 && m.material.cost_per_kg > 0))
        throw ConfigError("material values must be strictly positive");
    return c;
}

inline ServerConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_config(j);
}

}  // namespace exo
