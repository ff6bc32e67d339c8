#pragma once

// Parametric exoskeleton facade: a rectangular grid of modules braced by both
// diagonals in every cell. Nodes can be pushed or pulled along the facade
// normal (y); everything else about the geometry follows from the grid.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "exo/errors.hpp"

namespace exo {

using NodeId = std::int32_t;
using MemberId = std::int32_t;

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
    friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

// Out-of-plane node offset, held as an integer number of micrometres so that
// an edit followed by its inverse lands on exactly the same value.
class Offset {
public:
    constexpr Offset() = default;
    static constexpr Offset from_micrometres(std::int64_t um) { return Offset(um); }
    static Offset from_metres(double m) { return Offset(std::llround(m * 1e6)); }

    constexpr std::int64_t micrometres() const { return um_; }
    double metres() const { return static_cast<double>(um_) / 1e6; }

    friend constexpr Offset operator+(Offset a, Offset b) { return Offset(a.um_ + b.um_); }
    friend constexpr Offset operator-(Offset a, Offset b) { return Offset(a.um_ - b.um_); }
    constexpr Offset operator-() const { return Offset(-um_); }
    friend constexpr auto operator<=>(const Offset&, const Offset&) = default;

private:
    constexpr explicit Offset(std::int64_t um) : um_(um) {}
    std::int64_t um_ = 0;
};

struct GridParams {
    int bays_x = 4;
    int bays_z = 4;
    double module_size = 3.0;  // m, edge length of one square module

    double facade_width() const { return bays_x * module_size; }
    double facade_height() const { return bays_z * module_size; }
    double facade_area() const { return facade_width() * facade_height(); }
    int node_count() const { return (bays_x + 1) * (bays_z + 1); }

    friend bool operator==(const GridParams&, const GridParams&) = default;
};

struct SectionParams {
    double depth = 0.20;  // m
    double width = 0.12;  // m
    int laminations = 4;

    double area() const { return depth * width; }

    friend bool operator==(const SectionParams&, const SectionParams&) = default;
};

// Admissible parameter ranges. Defaults are plausible glulam values.
struct DesignBounds {
    int bays_min = 1;
    int bays_max = 12;
    double module_min = 1.5;
    double module_max = 6.0;
    double depth_min = 0.06;
    double depth_max = 0.40;
    double width_min = 0.06;
    double width_max = 0.30;
    int laminations_min = 1;
    int laminations_max = 10;
    double offset_max = 0.5;

    Offset offset_limit() const { return Offset::from_metres(offset_max); }
};

struct DesignConfiguration {
    GridParams grid;
    SectionParams section;
    // Only non-zero offsets are stored; absent means 0.
    std::map<NodeId, Offset> node_offsets;

    Offset offset_of(NodeId id) const {
        auto it = node_offsets.find(id);
        return it == node_offsets.end() ? Offset{} : it->second;
    }

    friend bool operator==(const DesignConfiguration&, const DesignConfiguration&) = default;
};

struct Node {
    NodeId id;
    Vec3 position;
};

struct Member {
    MemberId id;
    NodeId node_a;
    NodeId node_b;
};

struct FacadeGraph {
    std::vector<Node> nodes;
    std::vector<Member> members;
    std::vector<NodeId> supports;    // sorted
    std::vector<NodeId> key_points;  // sorted

    bool is_support(NodeId id) const {
        return std::binary_search(supports.begin(), supports.end(), id);
    }
    bool has_node(NodeId id) const {
        return id >= 0 && static_cast<std::size_t>(id) < nodes.size();
    }
    double member_length(const Member& m) const {
        return norm(nodes[m.node_b].position - nodes[m.node_a].position);
    }
    double total_length() const {
        double sum = 0.0;
        for (const auto& m : members) sum += member_length(m);
        return sum;
    }
};

struct Violation {
    std::string field;
    double bound;
    double actual;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool valid() const { return violations.empty(); }
};

namespace detail {

inline bool grid_ok(const GridParams& g) {
    return g.bays_x >= 1 && g.bays_z >= 1 && g.module_size > 0.0 && std::isfinite(g.module_size);
}

inline NodeId node_at(const GridParams& g, int row, int col) {
    return static_cast<NodeId>(row * (g.bays_x + 1) + col);
}

}  // namespace detail

/// Node ids are row-major from the bottom-left corner; row 0 is the support
/// row. Members are emitted horizontals first, then verticals, then the two
/// diagonals of every cell, each group row-major.
inline FacadeGraph generate_facade(const GridParams& grid, const DesignConfiguration& config) {
    if (!detail::grid_ok(grid)) throw InvalidGrid("grid needs bays >= 1 and module_size > 0");

    FacadeGraph g;
    const int cols = grid.bays_x + 1;
    const int rows = grid.bays_z + 1;
    g.nodes.reserve(static_cast<std::size_t>(cols * rows));
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const NodeId id = detail::node_at(grid, r, c);
            g.nodes.push_back({id, {c * grid.module_size, 0.0, r * grid.module_size}});
        }
    }
    for (const auto& [id, dy] : config.node_offsets) {
        if (!g.has_node(id)) throw InvalidGrid("offset on unknown node " + std::to_string(id));
        g.nodes[static_cast<std::size_t>(id)].position.y = dy.metres();
    }

    MemberId next = 0;
    auto add = [&](NodeId a, NodeId b) { g.members.push_back({next++, a, b}); };
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < grid.bays_x; ++c) add(detail::node_at(grid, r, c), detail::node_at(grid, r, c + 1));
    for (int r = 0; r < grid.bays_z; ++r)
        for (int c = 0; c < cols; ++c) add(detail::node_at(grid, r, c), detail::node_at(grid, r + 1, c));
    for (int r = 0; r < grid.bays_z; ++r) {
        for (int c = 0; c < grid.bays_x; ++c) {
            add(detail::node_at(grid, r, c), detail::node_at(grid, r + 1, c + 1));
            add(detail::node_at(grid, r, c + 1), detail::node_at(grid, r + 1, c));
        }
    }

    for (int c = 0; c < cols; ++c) g.supports.push_back(detail::node_at(grid, 0, c));

    // Key points: both ends of the top row plus the whole mid-height row.
    const int mid_row = (grid.bays_z + 1) / 2;
    std::vector<NodeId> keys = {detail::node_at(grid, grid.bays_z, 0), detail::node_at(grid, grid.bays_z, grid.bays_x)};
    for (int c = 0; c < cols; ++c) keys.push_back(detail::node_at(grid, mid_row, c));
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    g.key_points = std::move(keys);
    return g;
}

inline FacadeGraph generate_facade(const DesignConfiguration& config) {
    return generate_facade(config.grid, config);
}

inline ValidationReport validate(const DesignConfiguration& config, const DesignBounds& b) {
    ValidationReport rep;
    auto check_range = [&](const std::string& field, double v, double lo, double hi) {
        if (!(v >= lo)) rep.violations.push_back({field, lo, v});
        else if (!(v <= hi)) rep.violations.push_back({field, hi, v});
    };
    const auto& g = config.grid;
    check_range("grid.bays_x", g.bays_x, b.bays_min, b.bays_max);
    check_range("grid.bays_z", g.bays_z, b.bays_min, b.bays_max);
    check_range("grid.module_size", g.module_size, b.module_min, b.module_max);
    check_range("section.depth", config.section.depth, b.depth_min, b.depth_max);
    check_range("section.width", config.section.width, b.width_min, b.width_max);
    check_range("section.laminations", config.section.laminations, b.laminations_min, b.laminations_max);

    const Offset limit = b.offset_limit();
    const bool grid_valid = detail::grid_ok(g);
    for (const auto& [id, dy] : config.node_offsets) {
        const std::string field = "node_offsets[" + std::to_string(id) + "]";
        if (!grid_valid || id < 0 || id >= g.node_count()) {
            rep.violations.push_back({field, static_cast<double>(g.node_count() - 1), static_cast<double>(id)});
        } else if (id <= g.bays_x) {  // support row
            rep.violations.push_back({field, 0.0, dy.metres()});
        } else if (dy > limit || dy < -limit) {
            rep.violations.push_back({field, b.offset_max, dy.metres()});
        }
    }
    return rep;
}

/// Apply a push/pull edit to one node. The result is not snapped.
inline DesignConfiguration apply_node_edit(const DesignConfiguration& config, NodeId node, Offset delta) {
    if (!detail::grid_ok(config.grid) || node < 0 || node >= config.grid.node_count())
        throw UnknownNode("no node " + std::to_string(node));
    if (node <= config.grid.bays_x) throw SupportNodeImmutable("node " + std::to_string(node) + " is a support");

    DesignConfiguration out = config;
    const Offset next = out.offset_of(node) + delta;
    if (next.micrometres() == 0) out.node_offsets.erase(node);
    else out.node_offsets[node] = next;
    return out;
}

namespace detail {

// Closest admissible value of a continuous field. In the normalized metric
// the box projection is per-coordinate, so a clamp is the exact nearest point.
inline double clamp_field(double v, double lo, double hi) {
    if (std::isnan(v)) return lo;
    return std::clamp(v, lo, hi);
}

}  // namespace detail

/// Nearest integer with halves going down, then clamped into [lo, hi].
inline int nearest_count(double v, int lo, int hi) {
    if (std::isnan(v)) return lo;
    double r = std::ceil(v - 0.5);
    r = std::clamp(r, static_cast<double>(lo), static_cast<double>(hi));
    return static_cast<int>(r);
}

struct SnapResult {
    DesignConfiguration config;
    bool snapped = false;
};

/// Replace an invalid configuration with the nearest valid one. Total and
/// idempotent; a valid configuration comes back untouched.
inline SnapResult snap_to_valid(const DesignConfiguration& config, const DesignBounds& b) {
    SnapResult res{config, false};
    auto& c = res.config;

    c.grid.bays_x = std::clamp(c.grid.bays_x, b.bays_min, b.bays_max);
    c.grid.bays_z = std::clamp(c.grid.bays_z, b.bays_min, b.bays_max);
    c.grid.module_size = detail::clamp_field(c.grid.module_size, b.module_min, b.module_max);
    c.section.depth = detail::clamp_field(c.section.depth, b.depth_min, b.depth_max);
    c.section.width = detail::clamp_field(c.section.width, b.width_min, b.width_max);
    c.section.laminations = std::clamp(c.section.laminations, b.laminations_min, b.laminations_max);

    const Offset limit = b.offset_limit();
    for (auto it = c.node_offsets.begin(); it != c.node_offsets.end();) {
        const NodeId id = it->first;
        if (id <= c.grid.bays_x || id >= c.grid.node_count() || it->second.micrometres() == 0) {
            it = c.node_offsets.erase(it);
            continue;
        }
        it->second = std::clamp(it->second, -limit, limit);
        ++it;
    }
    res.snapped = !(c == config);
    return res;
}

/// Fraction of the facade area covered by member frontal area, capped at 1.
inline double shading_fraction(const DesignConfiguration& config) {
    const FacadeGraph g = generate_facade(config);
    const double covered = g.total_length() * config.section.width;
    return std::min(1.0, covered / config.grid.facade_area());
}

/// Stable 64-bit FNV-1a digest of the configuration, as 16 hex digits.
inline std::string config_hash(const DesignConfiguration& config) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xffU;
            h *= 1099511628211ULL;
        }
    };
    auto bits = [](double d) {
        std::uint64_t u;
        static_assert(sizeof(u) == sizeof(d));
        std::memcpy(&u, &d, sizeof(d));
        return u;
    };
    mix(static_cast<std::uint64_t>(config.grid.bays_x));
    mix(static_cast<std::uint64_t>(config.grid.bays_z));
    mix(bits(config.grid.module_size));
    mix(bits(config.section.depth));
    mix(bits(config.section.width));
    mix(static_cast<std::uint64_t>(config.section.laminations));
    for (const auto& [id, dy] : config.node_offsets) {
        mix(static_cast<std::uint64_t>(id));
        mix(static_cast<std::uint64_t>(dy.micrometres()));
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Flat grid with the default section, the starting point of every task.
inline DesignConfiguration initial_configuration(const GridParams& grid, const SectionParams& section = {}) {
    return DesignConfiguration{grid, section, {}};
}

}  // namespace exo
