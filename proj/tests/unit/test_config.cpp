#include <fstream>

#include <gtest/gtest.h>

#include "exo/config.hpp"
#include "support/temp_dir.hpp"

using namespace exo;
using nlohmann::json;

TEST(Config, EmptyObjectGivesDefaults) {
    const auto c = parse_config(json::object());
    EXPECT_EQ(c.port, 7447);
    EXPECT_EQ(c.model.grid.bays_x, 4);
    EXPECT_EQ(c.model.grid.bays_z, 4);
    EXPECT_EQ(c.model.grid.module_size, 3.0);
    EXPECT_EQ(c.model.building.facade_area, 144.0);
    EXPECT_EQ(c.edit_step, 0.05);
}

// The shipped file spells out the defaults, so both routes evaluate alike.
TEST(Config, ShippedDefaultMatchesBuiltIn) {
    const auto file = load_config(std::filesystem::path(EXO_SOURCE_DIR) / "config" / "default.json");
    const auto built = parse_config(json::object());
    const auto c = initial_configuration(built.model.grid, built.model.initial_section);
    EXPECT_EQ(initial_configuration(file.model.grid, file.model.initial_section), c);
    const auto a = evaluate_full(c, file.model, file.model.reference_values());
    const auto b = evaluate_full(c, built.model, built.model.reference_values());
    EXPECT_EQ(a.metrics, b.metrics);
    EXPECT_EQ(file.agent.section_edit_probability, built.agent.section_edit_probability);
}

TEST(Config, FacadeAreaFollowsGridUnlessGiven) {
    const auto c = parse_config(json{{"grid", {{"bays_x", 2}, {"bays_z", 3}, {"module_size", 2.0}}}});
    EXPECT_EQ(c.model.building.facade_area, 24.0);
    const auto d = parse_config(json{{"building", {{"facade_area", 50.0}}}});
    EXPECT_EQ(d.model.building.facade_area, 50.0);
}

TEST(Config, RejectsUnknownAndInvalid) {
    EXPECT_THROW(parse_config(json{{"prot", 1}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"grid", {{"bays", 3}}}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"grid", {{"bays_x", 0}}}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"port", "x"}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"epsilon", 0.0}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"material", {{"density", -1.0}}}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"fabrication", {{"omega_m", 0.7}}}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"climate", {{"months", json::array()}}}}), ConfigError);
    EXPECT_THROW(parse_config(json::array()), ConfigError);
}

TEST(Config, LoadErrors) {
    support::TempDir dir("cfg");
    EXPECT_THROW(load_config(dir / "absent.json"), ConfigError);
    std::ofstream(dir / "bad.json") << "{ \"port\": ";
    EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
}
